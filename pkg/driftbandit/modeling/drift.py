"""Context-drift model: per-arm particle sets learned with resample-propagate.

Each arm's reward is ``y = x^T (c_w + theta * eta_t) + e`` where ``eta_t``
follows a standard Gaussian random walk.  A particle carries sampled values
``(sigma2, c_w, theta, eta)`` plus the sufficient statistics of the joint
parameter posterior (a 2d-dimensional NIG over ``nu = (c_w, theta)``) and the
Kalman statistics ``(mu_eta, Sigma_eta)`` of the latent state.
"""
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import torch
from torch.distributions import Normal

from driftbandit.errors import (
    EmptyArmPoolError,
    InvalidPosteriorError,
    ModelCollapseError,
    SingularMatrixError,
)
from driftbandit.modeling.bandit import ArmId, BanditPolicy, Interaction
from driftbandit.modeling.nig import UCB_VARIANCE_FORMS, NigPosterior, nig_sample, nig_update
from driftbandit.utils import (
    ARM_LABEL,
    DTYPE,
    PARAMS_LABEL,
    RESAMPLE_LABEL,
    STATE_LABEL,
    RandomStream,
    argmax_with_ties,
    check_finite_reward,
    context_vector,
    derive_stream,
    gaussian_draw,
    gaussian_factor,
    symmetrize,
)

DRIFT_KINDS = ("tvucb", "tvtp")
INIT_LABEL = 13


@dataclass(eq=False)
class Particle:
    sigma2: float
    c_w: torch.Tensor
    theta: torch.Tensor
    eta: torch.Tensor
    params: NigPosterior
    mu_eta: torch.Tensor
    sigma_eta: torch.Tensor

    @property
    def d(self) -> int:
        return self.c_w.shape[0]

    @property
    def mu_nu(self) -> torch.Tensor:
        return self.params.mu_w

    @property
    def sigma_nu(self) -> torch.Tensor:
        return self.params.sigma_w

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def beta(self) -> float:
        return self.params.beta

    def copy(self) -> "Particle":
        # shallow: tensors are replaced, never mutated in place
        return dataclasses.replace(self)


@dataclass(eq=False)
class ParticleSet:
    arm: ArmId
    particles: List[Particle]
    _summary: Optional["ArmSummary"] = field(default=None, init=False, repr=False)

    @property
    def p(self) -> int:
        return len(self.particles)

    @property
    def summary(self) -> "ArmSummary":
        # particles are never mutated once the set is built
        if self._summary is None:
            self._summary = summarize(self)
        return self._summary

    def summarized(self) -> "ParticleSet":
        self.summary
        return self


def init_particle(d: int, rng: RandomStream, q0: float = 1.0, alpha0: float = 2.0, beta0: float = 2.0) -> Particle:
    """Particle drawn from the prior: mu = 0, Sigma = q0^{-1} I (2d), mu_eta = 0, Sigma_eta = I."""
    params = NigPosterior.prior(2 * d, q0=q0, alpha0=alpha0, beta0=beta0)
    sigma2, nu = nig_sample(params, rng.child(PARAMS_LABEL))
    mu_eta = torch.zeros(d, dtype=DTYPE)
    sigma_eta = torch.eye(d, dtype=DTYPE)
    eta = gaussian_draw(mu_eta, sigma_eta, rng.child(STATE_LABEL))
    return Particle(sigma2, nu[:d], nu[d:], eta, params, mu_eta, sigma_eta)


def init_particle_set(arm: ArmId, p: int, d: int, rng: RandomStream, **prior) -> ParticleSet:
    if p < 1:
        raise ValueError(f"Invalid particle count: {p}")
    return ParticleSet(arm, [init_particle(d, rng.child(i), **prior) for i in range(p)]).summarized()


def _predictive(pt: Particle, x: torch.Tensor) -> Tuple[float, float, torch.Tensor]:
    """Predictive mean m, variance Q and ``(I + Sigma_eta)(x * theta)`` for one particle."""
    u = x * pt.theta
    spread = (torch.eye(pt.d, dtype=DTYPE) + pt.sigma_eta) @ u
    m = float(x @ (pt.c_w + pt.theta * pt.mu_eta))
    q = pt.sigma2 + float(u @ spread)
    if not q > 0:
        raise InvalidPosteriorError(f"Predictive variance must be positive, got Q={q}")
    return m, q, spread


def particle_weight(pt: Particle, x, r) -> float:
    """Unnormalized weight: the density N(r; m, Q)."""
    x = context_vector(x, pt.d)
    r = check_finite_reward(r)
    m, q, _ = _predictive(pt, x)
    log_density = Normal(torch.tensor(m, dtype=DTYPE), torch.tensor(math.sqrt(q), dtype=DTYPE)).log_prob(torch.tensor(r, dtype=DTYPE))
    return float(log_density.exp())


def normalize_weights(weights: Sequence[float]) -> List[float]:
    total = math.fsum(weights)
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise ValueError(f"Weights must be finite and non-negative, got {list(weights)}")
    if total <= 0:
        raise ModelCollapseError("All particle weights are zero")
    return [w / total for w in weights]


def resample(pset: ParticleSet, weights: Sequence[float], rng: RandomStream) -> ParticleSet:
    """Multinomial resampling with replacement; keeps the set size at p."""
    if len(weights) != pset.p:
        raise ValueError(f"Expected {pset.p} weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise ValueError(f"Weights must be non-negative, got {list(weights)}")
    total = math.fsum(weights)
    if total == 0:
        raise ModelCollapseError(f"All particle weights are zero for arm {pset.arm!r}")
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"Weights must sum to 1, got {total}")

    counts = rng.multinomial(pset.p, [w / total for w in weights])
    particles = []
    for index, count in enumerate(counts):
        particles.extend(pset.particles[index].copy() for _ in range(int(count)))
    return ParticleSet(pset.arm, particles)


def kalman_state_update(pt: Particle, x, r) -> Tuple[torch.Tensor, torch.Tensor]:
    """Kalman correction of the random-walk state statistics.

    G = (I + Sigma_eta)(theta * x) / Q
    mu_eta'    = mu_eta + G (r - x^T (c_w + theta * mu_eta))
    Sigma_eta' = Sigma_eta + I - G Q G^T
    """
    x = context_vector(x, pt.d)
    r = check_finite_reward(r)
    m, q, spread = _predictive(pt, x)
    gain = spread / q
    mu_eta = pt.mu_eta + gain * (r - m)
    sigma_eta = pt.sigma_eta + torch.eye(pt.d, dtype=DTYPE) - q * torch.outer(gain, gain)
    return mu_eta, symmetrize(sigma_eta)


def sample_state(pt: Particle, rng: RandomStream) -> torch.Tensor:
    pt.eta = gaussian_draw(pt.mu_eta, pt.sigma_eta, rng)
    return pt.eta


def param_update(pt: Particle, x, r) -> Particle:
    """Conjugate update of the parameter statistics with regressor z = (x, x * eta)."""
    x = context_vector(x, pt.d)
    z = torch.cat([x, x * pt.eta])
    return dataclasses.replace(pt, params=nig_update(pt.params, z, r))


def sample_params(pt: Particle, rng: RandomStream) -> Particle:
    sigma2, nu = nig_sample(pt.params, rng)
    return dataclasses.replace(pt, sigma2=sigma2, c_w=nu[:pt.d], theta=nu[pt.d:])


def _w_posteriors(particles: Sequence[Particle]) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batched per-particle ``(mu_w, Sigma_w)`` plus the particles' sigma2, stacked along dim 0."""
    d = particles[0].d
    s2 = torch.tensor([pt.sigma2 for pt in particles], dtype=DTYPE)
    mu = torch.stack([pt.mu_nu for pt in particles])
    sigma = torch.stack([pt.sigma_nu for pt in particles])
    mu_eta = torch.stack([pt.mu_eta for pt in particles]).unsqueeze(-1)
    sigma_eta = torch.stack([pt.sigma_eta for pt in particles])
    mu_c, mu_theta = mu[:, :d], mu[:, d:].unsqueeze(-1)
    sigma_c, sigma_theta = sigma[:, :d, :d], sigma[:, d:, d:]

    scaled_theta = s2.view(-1, 1, 1) * sigma_theta
    blend = sigma_eta + scaled_theta
    try:
        mu_w = mu_c + torch.linalg.solve(blend, sigma_eta @ mu_theta + scaled_theta @ mu_eta).squeeze(-1)
        # B A^{-1} computed as (A^{-T} B^T)^T
        tail = torch.linalg.solve(blend.transpose(-1, -2), (scaled_theta @ sigma_eta).transpose(-1, -2))
        tail = tail.transpose(-1, -2)
    except torch.linalg.LinAlgError as e:
        raise SingularMatrixError(f"Sigma_eta + sigma2 * Sigma_theta is singular: {e}") from e
    return mu_w, symmetrize(s2.view(-1, 1, 1) * sigma_c + tail), s2


def per_particle_w_posterior(pt: Particle) -> Tuple[torch.Tensor, torch.Tensor]:
    """Mean and covariance of ``w = c_w + theta * eta`` within one particle.

    mu_w    = mu_c + (Sigma_eta + s2 Sigma_theta)^{-1} (Sigma_eta mu_theta + s2 Sigma_theta mu_eta)
    Sigma_w = s2 Sigma_c + s2 Sigma_theta Sigma_eta (Sigma_eta + s2 Sigma_theta)^{-1}
    """
    mu_w, sigma_w, _ = _w_posteriors([pt])
    return mu_w[0], sigma_w[0]


@dataclass(frozen=True, eq=False)
class ArmSummary:
    """Aggregated posterior of one arm, shared by every score until the arm is updated."""

    mu_bar: torch.Tensor
    sigma_bar: torch.Tensor
    noise: float
    cholesky: Optional[torch.Tensor]
    draw_factor: Optional[torch.Tensor]

    def precision_quad(self, x: torch.Tensor) -> float:
        """x^T Sigma_bar^{-1} x."""
        if self.cholesky is not None:
            half = torch.linalg.solve_triangular(self.cholesky, x.unsqueeze(-1), upper=False)
            return float((half * half).sum())
        return float(x @ torch.linalg.solve(self.sigma_bar, x))


def summarize(pset: ParticleSet) -> ArmSummary:
    if pset.p == 0:
        raise EmptyArmPoolError(f"Particle set for arm {pset.arm!r} is empty")
    mu_w, sigma_w, s2 = _w_posteriors(pset.particles)
    sigma_bar = symmetrize((s2.view(-1, 1, 1) * sigma_w).sum(dim=0) / pset.p ** 2)
    noise = math.fsum(pt.sigma2 for pt in pset.particles) / pset.p ** 2
    factor, info = torch.linalg.cholesky_ex(sigma_bar)
    try:
        draw_factor = gaussian_factor(sigma_bar)
    except InvalidPosteriorError:
        # left to gaussian_draw to report if the arm is ever sampled
        draw_factor = None
    return ArmSummary(mu_w.mean(dim=0), sigma_bar, noise, factor if int(info) == 0 else None, draw_factor)


def aggregate_posterior(pset: ParticleSet) -> Tuple[torch.Tensor, torch.Tensor]:
    """mu_bar = mean of per-particle mu_w; Sigma_bar = (1/p^2) sum sigma2_i Sigma_w_i."""
    summary = pset.summary
    return summary.mu_bar, summary.sigma_bar


def tvucb_score(pset: ParticleSet, x, lambda_: float, variance_form: str = "paper") -> float:
    summary = pset.summary
    x = context_vector(x, summary.mu_bar.shape[0])
    mean = float(x @ summary.mu_bar)
    if variance_form == "paper":
        try:
            quad = summary.precision_quad(x)
        except torch.linalg.LinAlgError as e:
            raise SingularMatrixError(f"Aggregated covariance of arm {pset.arm!r} is singular: {e}") from e
    elif variance_form == "covariance":
        quad = float(x @ summary.sigma_bar @ x)
    else:
        raise ValueError(f"Invalid ucb_variance_form {variance_form!r}, expected one of {UCB_VARIANCE_FORMS}")
    return mean + lambda_ * math.sqrt(max(quad + summary.noise, 0.0))


def tvtp_score(pset: ParticleSet, x, rng: RandomStream) -> float:
    summary = pset.summary
    x = context_vector(x, summary.mu_bar.shape[0])
    return float(x @ gaussian_draw(summary.mu_bar, summary.sigma_bar, rng, factor=summary.draw_factor))


def tv_select(kind: str, sets: Mapping[ArmId, ParticleSet], x, lambda_: float, rng: RandomStream,
              variance_form: str = "paper") -> ArmId:
    if kind not in DRIFT_KINDS:
        raise ValueError(f"Invalid drift policy kind {kind!r}, expected one of {DRIFT_KINDS}")
    if not sets:
        raise EmptyArmPoolError("Cannot select from an empty arm pool")
    ids = sorted(sets)
    scores = []
    for index, arm in enumerate(ids):
        if kind == "tvtp":
            scores.append(tvtp_score(sets[arm], x, rng.child(ARM_LABEL, index)))
        else:
            scores.append(tvucb_score(sets[arm], x, lambda_, variance_form))
    arm, _ = argmax_with_ties(ids, scores)
    return arm


def drift_update(pset: ParticleSet, x, r, rng: RandomStream) -> ParticleSet:
    """One resample-propagate step for the pulled arm.

    weight -> resample -> Kalman state statistics -> sample eta
           -> parameter statistics -> sample (sigma2, c_w, theta)
    """
    x = context_vector(x, pset.particles[0].d if pset.particles else None)
    r = check_finite_reward(r)
    weights = normalize_weights([particle_weight(pt, x, r) for pt in pset.particles])
    resampled = resample(pset, weights, rng.child(RESAMPLE_LABEL))

    particles = []
    for index, pt in enumerate(resampled.particles):
        mu_eta, sigma_eta = kalman_state_update(pt, x, r)
        pt = dataclasses.replace(pt, mu_eta=mu_eta, sigma_eta=sigma_eta)
        sample_state(pt, rng.child(STATE_LABEL, index))
        pt = param_update(pt, x, r)
        particles.append(sample_params(pt, rng.child(PARAMS_LABEL, index)))
    return ParticleSet(pset.arm, particles).summarized()


@dataclass(frozen=True)
class DriftPolicyConfig:
    kind: str = "tvucb"
    particles: int = 5
    lambda_: float = 0.5
    q0: float = 1.0
    alpha0: float = 2.0
    beta0: float = 2.0
    ucb_variance_form: str = "paper"

    def __post_init__(self):
        if self.kind not in DRIFT_KINDS:
            raise ValueError(f"Invalid drift policy kind {self.kind!r}, expected one of {DRIFT_KINDS}")
        if self.particles < 1:
            raise ValueError(f"Invalid particle count: {self.particles}")
        if not 0.0 <= self.lambda_:
            raise ValueError(f"Invalid lambda value: {self.lambda_}")
        if not 0.0 < self.q0:
            raise ValueError(f"Invalid q0 value: {self.q0}")
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ValueError(f"Invalid prior: alpha0={self.alpha0}, beta0={self.beta0}")
        if self.ucb_variance_form not in UCB_VARIANCE_FORMS:
            raise ValueError(f"Invalid ucb_variance_form {self.ucb_variance_form!r}")


class DriftPolicy(BanditPolicy):
    """TVUCB / TVTP over per-arm particle sets."""

    def __init__(self, arms: Sequence[ArmId], d: int, config: Optional[DriftPolicyConfig] = None, seed: int = 0):
        super().__init__(arms, d, seed=seed)
        self.config = config or DriftPolicyConfig()
        self.name = self.config.kind
        prior = dict(q0=self.config.q0, alpha0=self.config.alpha0, beta0=self.config.beta0)
        self.sets: Dict[ArmId, ParticleSet] = {
            arm: init_particle_set(arm, self.config.particles, self.d, derive_stream(self.seed, [INIT_LABEL, index]), **prior)
            for index, arm in enumerate(self.arms)
        }

    def select(self, context, rng: Optional[RandomStream] = None) -> ArmId:
        return tv_select(self.config.kind, self.sets, context_vector(context, self.d), self.config.lambda_,
                         self._select_stream(rng), self.config.ucb_variance_form)

    def update(self, interaction: Interaction, rng: Optional[RandomStream] = None) -> None:
        self.arm_index(interaction.chosen)
        rng = self._update_stream(rng)
        pset = drift_update(self.sets[interaction.chosen], interaction.context, interaction.reward, rng)
        self._record(interaction)
        self.sets[interaction.chosen] = pset
