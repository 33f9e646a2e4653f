"""Normal-Inverse-Gamma posterior for one arm's linear reward model.

The model is ``r = x^T w + e`` with ``e ~ N(0, sigma^2)`` and the conjugate prior

    sigma^2 ~ IG(alpha, beta),    w | sigma^2 ~ N(mu_w, sigma^2 * Sigma_w).

The posterior keeps the precision ``Sigma_w^{-1}`` and updates it with a
rank-one term per observation; ``Sigma_w`` is solved on demand.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import torch

from driftbandit.errors import DimensionMismatchError, InvalidPosteriorError, SingularMatrixError
from driftbandit.utils import DTYPE, RandomStream, as_tensor, check_finite_reward, context_vector, symmetrize

UCB_VARIANCE_FORMS = ("paper", "covariance")


@dataclass(frozen=True, eq=False)
class NigPosterior:
    mu_w: torch.Tensor
    precision: torch.Tensor
    alpha: float
    beta: float
    _sigma_w: Optional[torch.Tensor] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        d = self.mu_w.shape[0]
        if self.precision.shape != (d, d):
            raise DimensionMismatchError((d, d), tuple(self.precision.shape), what="precision")
        if not self.alpha > 0 or not self.beta > 0:
            raise InvalidPosteriorError(f"alpha and beta must be positive, got alpha={self.alpha}, beta={self.beta}")

    @classmethod
    def prior(cls, d: int, q0: float = 1.0, alpha0: float = 2.0, beta0: float = 2.0) -> "NigPosterior":
        """Prior with mu_w = 0 and Sigma_w = q0^{-1} I."""
        if not q0 > 0:
            raise InvalidPosteriorError(f"Invalid prior precision q0: {q0}")
        return cls(torch.zeros(d, dtype=DTYPE), q0 * torch.eye(d, dtype=DTYPE), float(alpha0), float(beta0))

    @classmethod
    def from_moments(cls, mu_w, sigma_w, alpha: float, beta: float) -> "NigPosterior":
        mu_w = as_tensor(mu_w).reshape(-1)
        sigma_w = as_tensor(sigma_w).reshape(mu_w.shape[0], mu_w.shape[0])
        validate_covariance(sigma_w, strict=True)
        return cls(mu_w, symmetrize(torch.cholesky_inverse(torch.linalg.cholesky(sigma_w))), float(alpha), float(beta), sigma_w)

    @property
    def d(self) -> int:
        return self.mu_w.shape[0]

    @property
    def sigma_w(self) -> torch.Tensor:
        if self._sigma_w is None:
            object.__setattr__(self, "_sigma_w", symmetrize(torch.cholesky_inverse(_cholesky(self.precision))))
        return self._sigma_w

    @property
    def noise_variance(self) -> float:
        """Posterior mean of sigma^2, beta / (alpha - 1); requires alpha > 1."""
        if self.alpha <= 1:
            raise InvalidPosteriorError(f"Plug-in noise variance needs alpha > 1, got alpha={self.alpha}")
        return self.beta / (self.alpha - 1.0)

    def predict(self, x) -> float:
        return float(as_tensor(x) @ self.mu_w)


def _cholesky(matrix: torch.Tensor) -> torch.Tensor:
    factor, info = torch.linalg.cholesky_ex(matrix)
    if int(info) != 0:
        raise SingularMatrixError("Matrix is not positive definite")
    return factor


def validate_covariance(matrix: torch.Tensor, strict: bool = True, tol: float = 1e-10) -> None:
    if not torch.allclose(matrix, matrix.T, atol=tol, rtol=0.0):
        raise InvalidPosteriorError("Covariance matrix is not symmetric")
    smallest = float(torch.linalg.eigvalsh(symmetrize(matrix)).min())
    if (strict and smallest <= 0) or smallest < -tol:
        raise InvalidPosteriorError(f"Covariance matrix is not positive definite (min eigenvalue {smallest:.3e})")


def nig_update(post: NigPosterior, x, r) -> NigPosterior:
    """Conjugate update with one observation ``(x, r)``.

    Sigma' = (Sigma^{-1} + x x^T)^{-1}
    mu'    = Sigma' (Sigma^{-1} mu + x r)
    alpha' = alpha + 1/2
    beta'  = beta + (r^2 + mu^T Sigma^{-1} mu - mu'^T Sigma'^{-1} mu') / 2
    """
    x = context_vector(x, post.d)
    r = check_finite_reward(r)

    info = post.precision @ post.mu_w
    precision = symmetrize(post.precision + torch.outer(x, x))
    new_info = info + x * r
    mu_w = torch.cholesky_solve(new_info.unsqueeze(-1), _cholesky(precision)).squeeze(-1)

    beta = post.beta + 0.5 * (r * r + float(info @ post.mu_w) - float(new_info @ mu_w))
    return NigPosterior(mu_w, precision, post.alpha + 0.5, beta)


def nig_sample(post: NigPosterior, rng: RandomStream) -> Tuple[float, torch.Tensor]:
    """Draw ``sigma^2 ~ IG(alpha, beta)`` and ``w ~ N(mu_w, sigma^2 Sigma_w)``."""
    sigma2 = rng.inverse_gamma(post.alpha, post.beta)
    factor = _cholesky(post.precision)
    z = rng.normal(post.d).unsqueeze(-1)
    # precision = L L^T, so L^{-T} z has covariance Sigma_w
    offset = torch.linalg.solve_triangular(factor.T, z, upper=True).squeeze(-1)
    return sigma2, post.mu_w + math.sqrt(sigma2) * offset


def linucb_score(post: NigPosterior, x, lambda_: float, variance_form: str = "paper") -> float:
    """x^T mu_w + (lambda / sigma) * sqrt(x^T M x) with plug-in sigma^2 = beta / (alpha - 1).

    ``M`` is ``Sigma_w^{-1}`` for ``variance_form="paper"`` and ``Sigma_w`` for
    ``variance_form="covariance"``.
    """
    if lambda_ < 0:
        raise ValueError(f"Invalid lambda: {lambda_}")
    x = context_vector(x, post.d)
    sigma = math.sqrt(post.noise_variance)
    mean = float(x @ post.mu_w)
    if lambda_ == 0:
        return mean
    matrix = _variance_matrix(post, variance_form)
    return mean + (lambda_ / sigma) * math.sqrt(max(float(x @ matrix @ x), 0.0))


def _variance_matrix(post: NigPosterior, variance_form: str) -> torch.Tensor:
    if variance_form == "paper":
        return post.precision
    if variance_form == "covariance":
        return post.sigma_w
    raise ValueError(f"Invalid ucb_variance_form {variance_form!r}, expected one of {UCB_VARIANCE_FORMS}")
