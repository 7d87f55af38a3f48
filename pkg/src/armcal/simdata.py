"""Synthetic calibration scenarios: a demo arm, random parameter deviations,
random joint configurations, and noisy cable-length measurements.

Measurement noise is Gaussian with an optional heavy-tail mixture: each
sample is, with the configured probability, drawn at ``outlier_scale`` times
the base sigma.  All randomness flows from the scenario seed, so a scenario
reproduces bitwise.
"""

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from armcal.kinematics import DHTable, end_positions_batch, read_dh_file
from armcal.objective import MeasurementSet

__all__ = [
    "DEFAULT_ANCHOR_MM",
    "NoiseModel",
    "ScenarioConfig",
    "demo_table",
    "resolve_joint_limits",
    "sample_joint_configs",
    "simulate_measurements",
    "synth_deviation",
]

# draw-wire anchor in the base frame; off-axis so that no deviation block is
# systematically invisible to the distance measurement
DEFAULT_ANCHOR_MM = (1100.0, 500.0, -250.0)

_DEFAULT_JOINT_LIMIT_RAD = 2.0


def demo_table() -> DHTable:
    """Packaged 6R demo arm (mid-size industrial geometry)."""
    ref = resources.files("armcal").joinpath("data/demo6r.dh")
    with resources.as_file(ref) as path:
        return read_dh_file(path)


@dataclass(frozen=True)
class NoiseModel:
    """Scale-mixture measurement noise, mm.

    sigma : base standard deviation; 0 disables noise entirely.
    outlier_rate : probability in [0, 1) that a sample is an outlier.
    outlier_scale : sigma multiplier for outlier samples, >= 1.
    """

    sigma: float = 0.1
    outlier_rate: float = 0.0
    outlier_scale: float = 10.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not (0.0 <= self.outlier_rate < 1.0):
            raise ValueError(f"outlier_rate must lie in [0, 1), got {self.outlier_rate}")
        if not (np.isfinite(self.outlier_scale) and self.outlier_scale >= 1.0):
            raise ValueError(f"outlier_scale must be >= 1, got {self.outlier_scale}")

    def mixture_variance(self) -> float:
        """Variance of one noise draw under the mixture."""
        s2 = self.sigma * self.sigma
        return s2 * (1.0 - self.outlier_rate) + s2 * self.outlier_rate * self.outlier_scale**2


@dataclass
class ScenarioConfig:
    """One synthetic calibration scenario.

    joint_limits : (joints, 2) sampling ranges, rad; None means +-2.0 rad for
        every joint of whatever table the scenario is run against.
    scale_* : half-width of the uniform distribution each deviation block is
        drawn from (mm for a/d, rad for alpha/theta).
    """

    n_points: int = 120
    joint_limits: np.ndarray | None = None
    anchor_mm: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_ANCHOR_MM))
    scale_alpha_rad: float = 0.005
    scale_a_mm: float = 0.5
    scale_d_mm: float = 0.5
    scale_theta_rad: float = 0.005
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int | None = None

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError(f"n_points must be >= 1, got {self.n_points}")
        anchor = np.array(self.anchor_mm, dtype=float)
        if anchor.shape != (3,) or not np.all(np.isfinite(anchor)):
            raise ValueError(f"anchor_mm must be 3 finite values, got {self.anchor_mm}")
        self.anchor_mm = anchor
        if self.joint_limits is not None:
            limits = np.array(self.joint_limits, dtype=float)
            if limits.ndim != 2 or limits.shape[1] != 2:
                raise ValueError(f"joint_limits must have shape (joints, 2), got {limits.shape}")
            if not np.all(np.isfinite(limits)) or np.any(limits[:, 0] > limits[:, 1]):
                raise ValueError("joint_limits must be finite with lower <= upper")
            self.joint_limits = limits
        for name in ("scale_alpha_rad", "scale_a_mm", "scale_d_mm", "scale_theta_rad"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be >= 0, got {value}")


def resolve_joint_limits(cfg: ScenarioConfig, n_joints: int) -> np.ndarray:
    """Scenario limits, or the +-2.0 rad default, checked against the joint count."""
    if cfg.joint_limits is None:
        return np.tile([-_DEFAULT_JOINT_LIMIT_RAD, _DEFAULT_JOINT_LIMIT_RAD], (n_joints, 1))
    if cfg.joint_limits.shape[0] != n_joints:
        raise ValueError(
            f"joint_limits cover {cfg.joint_limits.shape[0]} joints, table has {n_joints}"
        )
    return cfg.joint_limits


def synth_deviation(cfg: ScenarioConfig, n_joints: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform deviation draw per block, in the (dalpha | da | dd | dtheta) layout."""
    scales = [cfg.scale_alpha_rad, cfg.scale_a_mm, cfg.scale_d_mm, cfg.scale_theta_rad]
    blocks = [rng.uniform(-s, s, size=n_joints) for s in scales]
    return np.concatenate(blocks)


def sample_joint_configs(cfg: ScenarioConfig, n_joints: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform joint configurations within the per-joint limits, (n_points, joints)."""
    limits = resolve_joint_limits(cfg, n_joints)
    return rng.uniform(limits[:, 0], limits[:, 1], size=(cfg.n_points, n_joints))


def simulate_measurements(table: DHTable, cfg: ScenarioConfig, rng: np.random.Generator | None = None):
    """Generate one dataset; returns (MeasurementSet, true deviation).

    Draw order is fixed (deviation, configurations, outlier mask, noise), so
    an identical config yields a bitwise-identical dataset.  The true
    deviation and scenario seed are recorded on the dataset.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    truth = synth_deviation(cfg, table.n_joints, rng)
    qs = sample_joint_configs(cfg, table.n_joints, rng)
    positions = end_positions_batch(table, qs, truth[None, :])[0]
    clean = np.linalg.norm(positions - cfg.anchor_mm[None, :], axis=1)
    outlier = rng.random(cfg.n_points) < cfg.noise.outlier_rate
    sigma = np.where(outlier, cfg.noise.outlier_scale * cfg.noise.sigma, cfg.noise.sigma)
    lengths = clean + rng.standard_normal(cfg.n_points) * sigma
    ms = MeasurementSet(
        qs=qs,
        lengths=lengths,
        anchor_nominal=cfg.anchor_mm,
        seed=cfg.seed,
        truth=truth,
    )
    return ms, truth
