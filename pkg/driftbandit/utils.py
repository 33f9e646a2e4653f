import math
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import torch

from driftbandit.errors import (
    DimensionMismatchError,
    InvalidPosteriorError,
    NonFiniteValueError,
)

DTYPE = torch.float64
_MASK64 = (1 << 64) - 1

# Substream labels shared by policies, environments and the harness.
EXPLORE_LABEL = 0
ARM_LABEL = 1
RESAMPLE_LABEL = 2
STATE_LABEL = 3
PARAMS_LABEL = 4


class RandomStream:
    """Deterministic random stream addressed by ``(master_seed, stream_path)``.

    The path labels are mixed into the seed with ``numpy.random.SeedSequence``
    and drawn with the counter-based Philox generator, so two streams with the
    same address replay the same draws and distinct addresses are independent.
    """

    def __init__(self, master_seed: int, stream_path: Iterable[int] = ()):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_path = tuple(int(label) & _MASK64 for label in stream_path)
        seed_seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.stream_path)
        self.generator = np.random.Generator(np.random.Philox(seed_seq))

    def __repr__(self):
        return f"RandomStream(master_seed={self.master_seed}, stream_path={list(self.stream_path)})"

    def child(self, *labels: int) -> "RandomStream":
        return RandomStream(self.master_seed, self.stream_path + tuple(labels))

    def uniform(self, size=None):
        if size is None:
            return float(self.generator.random())
        return torch.from_numpy(self.generator.random(size)).to(DTYPE)

    def normal(self, size) -> torch.Tensor:
        return torch.from_numpy(self.generator.standard_normal(size)).to(DTYPE)

    def gamma(self, shape: float) -> float:
        return float(self.generator.standard_gamma(shape))

    def inverse_gamma(self, alpha: float, beta: float) -> float:
        # IG(alpha, beta) is beta / Gamma(alpha, 1)
        return beta / self.gamma(alpha)

    def integers(self, high: int) -> int:
        return int(self.generator.integers(high))

    def multinomial(self, n: int, pvals: Sequence[float]) -> np.ndarray:
        return self.generator.multinomial(n, pvals)


def derive_stream(master_seed: int, labels: Iterable[int] = ()) -> RandomStream:
    return RandomStream(master_seed, labels)


def as_tensor(values, dtype=DTYPE) -> torch.Tensor:
    if isinstance(values, torch.Tensor):
        return values.to(dtype)
    return torch.as_tensor(values, dtype=dtype)


def context_vector(values, d: Optional[int] = None) -> torch.Tensor:
    """Validate and convert ``values`` into a finite 1-d float64 context."""
    x = as_tensor(values).reshape(-1)
    if d is not None and x.shape[0] != d:
        raise DimensionMismatchError(d, x.shape[0])
    if not torch.isfinite(x).all():
        raise NonFiniteValueError(f"Context contains non-finite entries: {x.tolist()}")
    return x


def check_finite_reward(r) -> float:
    r = float(r)
    if not math.isfinite(r):
        raise NonFiniteValueError(f"Reward must be finite, got {r}")
    return r


def symmetrize(matrix: torch.Tensor) -> torch.Tensor:
    return 0.5 * (matrix + matrix.transpose(-1, -2))


def argmax_with_ties(ids: Sequence[str], scores: Sequence[float]) -> Tuple[str, float]:
    """Return ``(id, score)`` of the best score; ties go to the smallest id."""
    best_id, best_score = None, -math.inf
    for arm_id, score in zip(ids, scores):
        score = float(score)
        if best_id is None or score > best_score or (score == best_score and arm_id < best_id):
            best_id, best_score = arm_id, score
    return best_id, best_score


def gaussian_factor(cov: torch.Tensor, tol: float = 1e-10) -> torch.Tensor:
    """``F`` with ``F F^T = cov`` for a symmetric positive semi-definite ``cov``."""
    eigvals, eigvecs = torch.linalg.eigh(symmetrize(cov))
    scale = max(1.0, float(eigvals.abs().max()))
    if float(eigvals.min()) < -tol * scale:
        raise InvalidPosteriorError(f"Covariance is not positive semi-definite (min eigenvalue {float(eigvals.min()):.3e})")
    return eigvecs * eigvals.clamp(min=0.0).sqrt()


def gaussian_draw(mean: torch.Tensor, cov: torch.Tensor, rng: RandomStream, tol: float = 1e-10,
                  factor: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Draw from N(mean, cov); pass a precomputed ``gaussian_factor(cov)`` to skip the decomposition."""
    if factor is None:
        factor = gaussian_factor(cov, tol)
    return mean + factor @ rng.normal(mean.shape[0])


def sigmoid(value) -> float:
    return float(torch.sigmoid(as_tensor(value)))
