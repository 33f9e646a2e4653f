import torch

from driftbandit.utils import DTYPE


def vec(*values):
    return torch.tensor(values, dtype=DTYPE)


def mat(rows):
    return torch.tensor(rows, dtype=DTYPE)
