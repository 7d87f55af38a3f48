"""Sequential Monte Carlo refinement of a deviation estimate.

Particles random-walk inside the deviation box and are reweighted each step
by the Gaussian likelihood of the full cable-length residual vector; the
weighted mean is the running estimate.  Systematic resampling fires only
when the effective sample size drops below a configured fraction of the
ensemble, which keeps the particle spread useful between collapses.
"""

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from armcal.kinematics import DHTable
from armcal.objective import MeasurementSet, fitness, residuals, residuals_batch

__all__ = [
    "DegenerateWeightsError",
    "PFConfig",
    "PFResult",
    "ParticleEnsemble",
    "effective_sample_size",
    "estimate",
    "estimate_r_sigma",
    "init_particles",
    "normalize_weights",
    "pf_run",
    "propagate",
    "resample",
    "weight_particles",
    "write_pf_trace",
]

# consecutive all-zero-weight steps tolerated before the run aborts
MAX_DEGENERATE_STEPS = 3


class DegenerateWeightsError(RuntimeError):
    """Particle weights collapsed to zero and could not be normalized."""


@dataclass
class PFConfig:
    """Ensemble size, random-walk scales, and the measurement-noise scale.

    bounds : (dim, 2) per-coordinate box the particles are clamped to.
    process_sigma : per-step random-walk std, scalar or per-coordinate;
        None derives 0.01 x half-width per coordinate.
    init_spread : std of the initial cloud around the center; None derives
        3 x process_sigma.
    r_sigma : residual noise scale in the Gaussian weight; None estimates a
        robust scale from the residuals at the center point at run start.
    ess_threshold : resample when ESS < ess_threshold * n_particles.
    """

    bounds: np.ndarray
    n_particles: int = 500
    n_steps: int = 50
    process_sigma: float | np.ndarray | None = None
    init_spread: float | np.ndarray | None = None
    r_sigma: float | None = None
    ess_threshold: float = 0.5
    seed: int | None = None

    def __post_init__(self):
        bounds = np.array(self.bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] < 1:
            raise ValueError(f"bounds must have shape (dim, 2), got {bounds.shape}")
        if not np.all(np.isfinite(bounds)) or not np.all(bounds[:, 0] < bounds[:, 1]):
            raise ValueError("bounds must be finite with lower < upper")
        bounds.flags.writeable = False
        self.bounds = bounds
        if self.n_particles < 2:
            raise ValueError(f"n_particles must be >= 2, got {self.n_particles}")
        if self.n_steps < 0:
            raise ValueError(f"n_steps must be >= 0, got {self.n_steps}")
        if not (0.0 < self.ess_threshold <= 1.0):
            raise ValueError(f"ess_threshold must lie in (0, 1], got {self.ess_threshold}")
        for name in ("process_sigma", "init_spread"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=float)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if self.r_sigma is not None and not (np.isfinite(self.r_sigma) and self.r_sigma > 0):
            raise ValueError(f"r_sigma must be positive, got {self.r_sigma}")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.bounds[:, 1] - self.bounds[:, 0])

    def resolved_process_sigma(self) -> np.ndarray:
        if self.process_sigma is None:
            return 0.01 * self.half_width
        return np.broadcast_to(np.asarray(self.process_sigma, dtype=float), (self.dim,)).copy()

    def resolved_init_spread(self) -> np.ndarray:
        if self.init_spread is None:
            return 3.0 * self.resolved_process_sigma()
        return np.broadcast_to(np.asarray(self.init_spread, dtype=float), (self.dim,)).copy()

    def clamp(self, particles: np.ndarray) -> np.ndarray:
        return np.clip(particles, self.bounds[:, 0], self.bounds[:, 1])


@dataclass
class ParticleEnsemble:
    """Particle rows with matching normalized (or uniform) weights."""

    particles: np.ndarray
    weights: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        particles = np.asarray(self.particles, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if particles.ndim != 2 or particles.shape[0] < 1:
            raise ValueError(f"particles must be 2-D, got shape {particles.shape}")
        if weights.shape != (particles.shape[0],):
            raise ValueError(
                f"weights must have shape ({particles.shape[0]},), got {weights.shape}"
            )
        if np.any(weights < 0):
            raise ValueError("weights must be non-negative")
        self.particles = particles
        self.weights = weights

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]


@dataclass
class PFResult:
    w_est: np.ndarray
    ess_trace: np.ndarray
    fitness_trace: np.ndarray
    degenerate_steps: int = 0
    resample_count: int = 0


def init_particles(center, cfg: PFConfig, rng: np.random.Generator) -> ParticleEnsemble:
    """Gaussian cloud around the center, clamped to bounds, uniform weights."""
    center = np.asarray(center, dtype=float)
    if center.shape != (cfg.dim,):
        raise ValueError(f"center must have shape ({cfg.dim},), got {center.shape}")
    spread = cfg.resolved_init_spread()
    particles = center[None, :] + rng.standard_normal((cfg.n_particles, cfg.dim)) * spread
    return ParticleEnsemble(
        particles=cfg.clamp(particles),
        weights=np.full(cfg.n_particles, 1.0 / cfg.n_particles),
    )


def propagate(ens: ParticleEnsemble, cfg: PFConfig, rng: np.random.Generator) -> ParticleEnsemble:
    """Add the random-walk perturbation and clamp; weights are untouched."""
    sigma = cfg.resolved_process_sigma()
    moved = ens.particles + rng.standard_normal(ens.particles.shape) * sigma
    return ParticleEnsemble(cfg.clamp(moved), ens.weights.copy(), ens.degenerate)


def weight_particles(
    ens: ParticleEnsemble, ms: MeasurementSet, table: DHTable, cfg: PFConfig
) -> ParticleEnsemble:
    """Gaussian residual likelihood per particle, normalized.

    The unnormalized log-weight of particle i is -0.5 * sum_j r_ij^2 /
    r_sigma^2; exponentiation shifts by the max log-weight first.  If every
    weight still collapses to zero the ensemble falls back to uniform
    weights and is flagged degenerate.
    """
    if cfg.r_sigma is None:
        raise ValueError("cfg.r_sigma must be resolved before weighting (see pf_run)")
    r = residuals_batch(ms, table, ens.particles)
    sum_sq = np.einsum("ij,ij->i", r, r)
    with np.errstate(divide="ignore"):  # r_sigma^2 may underflow; handled below
        log_w = -0.5 * sum_sq / (cfg.r_sigma * cfg.r_sigma)
    top = log_w.max()
    if not math.isfinite(top):
        n = ens.n_particles
        return ParticleEnsemble(ens.particles, np.full(n, 1.0 / n), degenerate=True)
    weights = np.exp(log_w - top)
    return normalize_weights(ParticleEnsemble(ens.particles, weights))


def normalize_weights(ens: ParticleEnsemble) -> ParticleEnsemble:
    """Scale weights to sum to one; an all-zero vector is a degeneracy error."""
    total = float(ens.weights.sum())
    if not math.isfinite(total) or total <= 0.0:
        raise DegenerateWeightsError(f"weight sum is {total}; cannot normalize")
    return ParticleEnsemble(ens.particles, ens.weights / total, ens.degenerate)


def estimate(ens: ParticleEnsemble) -> np.ndarray:
    """Weighted mean of the ensemble."""
    return ens.weights @ ens.particles


def effective_sample_size(weights: np.ndarray) -> float:
    """1 / sum of squared normalized weights."""
    weights = np.asarray(weights, dtype=float)
    return float(1.0 / np.sum(weights * weights))


def resample(ens: ParticleEnsemble, cfg: PFConfig, rng: np.random.Generator) -> ParticleEnsemble:
    """Systematic resampling, gated on effective sample size.

    Triggers exactly when ESS < ess_threshold * n_particles; stratified
    offsets come from a single uniform draw.  Weights reset to uniform.
    """
    n = ens.n_particles
    ess = effective_sample_size(ens.weights)
    if ess >= cfg.ess_threshold * n:
        return ens
    u = rng.uniform()
    positions = (np.arange(n) + u) / n
    idx = np.searchsorted(np.cumsum(ens.weights), positions)
    idx = np.minimum(idx, n - 1)
    return ParticleEnsemble(ens.particles[idx].copy(), np.full(n, 1.0 / n))


def estimate_r_sigma(ms: MeasurementSet, table: DHTable, center) -> float:
    """Robust residual scale at a point: 1.4826 x median absolute deviation.

    Floored at 1e-9 so noiseless data cannot zero the likelihood scale.
    """
    r = residuals(ms, table, center)
    mad = float(np.median(np.abs(r - np.median(r))))
    return max(1.4826 * mad, 1e-9)


def pf_run(center, ms: MeasurementSet, table: DHTable, cfg: PFConfig) -> PFResult:
    """Full filter run around a center estimate.

    Each step: propagate -> weight -> record the weighted-mean estimate, its
    fitness and the ESS -> maybe resample.  More than MAX_DEGENERATE_STEPS
    consecutive degenerate weightings abort with a diagnostic.  The traces
    have one entry per step; with n_steps=0 the estimate is the initial
    cloud's mean.
    """
    center = np.asarray(center, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    if cfg.r_sigma is None:
        cfg = replace(cfg, r_sigma=estimate_r_sigma(ms, table, center))

    ens = init_particles(center, cfg, rng)
    w_est = estimate(ens)
    ess_trace: list[float] = []
    fitness_trace: list[float] = []
    consecutive = 0
    degenerate_total = 0
    resamples = 0
    for _ in range(cfg.n_steps):
        ens = propagate(ens, cfg, rng)
        ens = weight_particles(ens, ms, table, cfg)
        if ens.degenerate:
            consecutive += 1
            degenerate_total += 1
            if consecutive > MAX_DEGENERATE_STEPS:
                raise DegenerateWeightsError(
                    f"particle weights degenerate for {consecutive} consecutive steps; "
                    f"r_sigma={cfg.r_sigma:g} is too small for the residual scale or the "
                    f"ensemble left the data support"
                )
        else:
            consecutive = 0
        w_est = estimate(ens)
        ess_trace.append(effective_sample_size(ens.weights))
        fitness_trace.append(fitness(ms, table, w_est))
        before = ens
        ens = resample(ens, cfg, rng)
        if ens is not before:
            resamples += 1
    return PFResult(
        w_est=w_est,
        ess_trace=np.array(ess_trace),
        fitness_trace=np.array(fitness_trace),
        degenerate_steps=degenerate_total,
        resample_count=resamples,
    )


def write_pf_trace(result: PFResult, path) -> None:
    """Write the filter trace as ``step,ess,fitness_of_estimate`` CSV."""
    lines = ["step,ess,fitness_of_estimate"]
    for i, (ess, fit) in enumerate(zip(result.ess_trace, result.fitness_trace)):
        lines.append(f"{i},{repr(float(ess))},{repr(float(fit))}")
    Path(path).write_text("\n".join(lines) + "\n")
