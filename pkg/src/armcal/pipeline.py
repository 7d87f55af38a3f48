"""End-to-end calibration runs: seeded train/test split, method dispatch,
before/after metrics, and serializable reports.

Methods: ``bas`` and ``cibas`` search the deviation box directly; ``pf``
runs the particle filter around the zero deviation; ``pf-cibas`` runs the
cubic search first and then refines its estimate with the particle filter.
Every stage is compared against its starting point on the training fitness,
so a run can never report a deviation worse than doing nothing.
"""

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from armcal.kinematics import DHTable, deviation_size, zero_deviation
from armcal.objective import MeasurementSet, Metrics, fitness, metrics, residuals
from armcal.optimizer import SearchConfig, optimize
from armcal.particle_filter import PFConfig, pf_run

__all__ = [
    "METHODS",
    "CalibrationConfig",
    "CalibrationReport",
    "ComparisonResult",
    "calibrate",
    "compare",
    "deviation_bounds",
    "split_indices",
    "summary_row",
    "write_summary_csv",
]

METHODS = ("bas", "cibas", "pf", "pf-cibas")

SUMMARY_COLUMNS = ("method", "rmse_mm", "std_mm", "max_mm", "evals", "wall_s")


@dataclass
class CalibrationConfig:
    """Everything a calibration run needs besides the data and the table.

    The search box is a per-block symmetric interval around zero; train_frac
    picks the seeded-shuffle split.  Search and filter fields mirror
    SearchConfig / PFConfig and are documented there.
    """

    seed: int | None = None
    train_frac: float = 2.0 / 3.0
    bound_alpha_rad: float = 0.02
    bound_a_mm: float = 2.0
    bound_d_mm: float = 2.0
    bound_theta_rad: float = 0.02
    identify_anchor: bool = False
    anchor_bound_mm: float = 5.0
    # search stage
    delta0: float = 0.1
    mu: float = 0.997
    m0_ratio: float = 0.5
    max_iters: int = 2500
    fitness_tol: float | None = None
    stall_iters: int | None = None
    restarts: int = 0
    # particle-filter stage
    n_particles: int = 500
    pf_steps: int = 50
    process_sigma_frac: float = 0.01
    init_spread_factor: float = 3.0
    r_sigma: float | None = None
    ess_threshold: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.train_frac < 1.0):
            raise ValueError(f"train_frac must lie in (0, 1), got {self.train_frac}")
        for name in ("bound_alpha_rad", "bound_a_mm", "bound_d_mm", "bound_theta_rad",
                     "anchor_bound_mm", "process_sigma_frac", "init_spread_factor"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")

    def snapshot(self) -> dict:
        return asdict(self)


def deviation_bounds(cfg: CalibrationConfig, n_joints: int) -> np.ndarray:
    """Symmetric per-coordinate box in the (dalpha | da | dd | dtheta) layout."""
    half = np.concatenate(
        [
            np.full(n_joints, cfg.bound_alpha_rad),
            np.full(n_joints, cfg.bound_a_mm),
            np.full(n_joints, cfg.bound_d_mm),
            np.full(n_joints, cfg.bound_theta_rad),
        ]
    )
    if cfg.identify_anchor:
        half = np.concatenate([half, np.full(3, cfg.anchor_bound_mm)])
    return np.stack([-half, half], axis=1)


def split_indices(n: int, train_frac: float, rng: np.random.Generator):
    """Seeded-shuffle split; both index arrays come back sorted."""
    n_train = int(round(n * train_frac))
    n_train = min(max(n_train, 1), n - 1)
    perm = rng.permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


@dataclass
class CalibrationReport:
    """Result of one calibration run; serializes losslessly to JSON."""

    method: str
    w_est: np.ndarray
    metrics_before: dict[str, Metrics]
    metrics_after: dict[str, Metrics]
    train_indices: np.ndarray
    test_indices: np.ndarray
    eval_count: int
    wall_time_s: float
    seed: int | None
    config: dict
    traces: dict = field(default_factory=dict)
    pf_stage_rejected: bool = False

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "w_est": [float(v) for v in self.w_est],
            "metrics_before": {k: asdict(m) for k, m in self.metrics_before.items()},
            "metrics_after": {k: asdict(m) for k, m in self.metrics_after.items()},
            "train_indices": [int(i) for i in self.train_indices],
            "test_indices": [int(i) for i in self.test_indices],
            "eval_count": int(self.eval_count),
            "wall_time_s": float(self.wall_time_s),
            "seed": self.seed,
            "config": self.config,
            "traces": self.traces,
            "pf_stage_rejected": bool(self.pf_stage_rejected),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationReport":
        return cls(
            method=data["method"],
            w_est=np.array(data["w_est"], dtype=float),
            metrics_before={k: Metrics(**m) for k, m in data["metrics_before"].items()},
            metrics_after={k: Metrics(**m) for k, m in data["metrics_after"].items()},
            train_indices=np.array(data["train_indices"], dtype=int),
            test_indices=np.array(data["test_indices"], dtype=int),
            eval_count=int(data["eval_count"]),
            wall_time_s=float(data["wall_time_s"]),
            seed=data["seed"],
            config=data["config"],
            traces=data["traces"],
            pf_stage_rejected=bool(data["pf_stage_rejected"]),
        )

    def to_json(self, omit_timing: bool = False) -> str:
        """JSON text; ``omit_timing`` zeroes the wall clock so reruns of the
        same seed/config produce byte-identical files."""
        data = self.to_dict()
        if omit_timing:
            data["wall_time_s"] = 0.0
        return json.dumps(data, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "CalibrationReport":
        return cls.from_dict(json.loads(text))

    def save(self, path, omit_timing: bool = False) -> None:
        Path(path).write_text(self.to_json(omit_timing=omit_timing) + "\n")

    @classmethod
    def load(cls, path) -> "CalibrationReport":
        return cls.from_json(Path(path).read_text())


def _split_metrics(ms: MeasurementSet, table: DHTable, w, train_idx, test_idx):
    r = residuals(ms, table, w)
    return {
        "train": metrics(r[train_idx]),
        "test": metrics(r[test_idx]),
    }


def calibrate(method: str, ms: MeasurementSet, table: DHTable, cfg: CalibrationConfig) -> CalibrationReport:
    """Run one method end to end and report before/after accuracy.

    The split, the search and the filter each draw from an independent
    substream of ``cfg.seed``, so two methods under the same seed see the
    identical split and their stages are reproducible.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}: expected one of {METHODS}")
    if ms.joint_count != table.n_joints:
        raise ValueError(
            f"dataset has {ms.joint_count} joints but table has {table.n_joints}"
        )
    if ms.n_samples < 10:
        raise ValueError(f"dataset too small to split: {ms.n_samples} samples < 10")

    split_seed, search_seed, pf_seed = (
        int(s) for s in np.random.SeedSequence(cfg.seed).generate_state(3, dtype=np.uint64)
    )
    train_idx, test_idx = split_indices(
        ms.n_samples, cfg.train_frac, np.random.default_rng(split_seed)
    )
    train = ms.subset(train_idx)
    bounds = deviation_bounds(cfg, table.n_joints)
    dim = deviation_size(table.n_joints, cfg.identify_anchor)
    w0 = zero_deviation(table.n_joints, cfg.identify_anchor)

    def train_fitness(w):
        return fitness(train, table, w)

    metrics_before = _split_metrics(ms, table, w0, train_idx, test_idx)

    t_start = time.perf_counter()
    traces: dict = {}
    pf_stage_rejected = False
    eval_count = 0

    if method in ("bas", "cibas"):
        search_cfg = SearchConfig(
            bounds=bounds,
            delta0=cfg.delta0,
            mu=cfg.mu,
            m0_ratio=cfg.m0_ratio,
            max_iters=cfg.max_iters,
            fitness_tol=cfg.fitness_tol,
            stall_iters=cfg.stall_iters,
            restarts=cfg.restarts,
            seed=search_seed,
        )
        result = optimize(method, search_cfg, train_fitness, w0)
        w_est = result.best_w
        eval_count = result.eval_count
        traces["search"] = [[int(i), float(f), int(e)] for i, f, e in result.trace]
    else:
        if method == "pf-cibas":
            search_cfg = SearchConfig(
                bounds=bounds,
                delta0=cfg.delta0,
                mu=cfg.mu,
                m0_ratio=cfg.m0_ratio,
                max_iters=cfg.max_iters,
                fitness_tol=cfg.fitness_tol,
                stall_iters=cfg.stall_iters,
                restarts=cfg.restarts,
                seed=search_seed,
            )
            stage1 = optimize("cibas", search_cfg, train_fitness, w0)
            center = stage1.best_w
            center_f = stage1.best_f
            eval_count = stage1.eval_count
            traces["search"] = [[int(i), float(f), int(e)] for i, f, e in stage1.trace]
        else:
            center = w0
            center_f = train_fitness(w0)
            eval_count = 1

        pf_cfg = PFConfig(
            bounds=bounds,
            n_particles=cfg.n_particles,
            n_steps=cfg.pf_steps,
            process_sigma=cfg.process_sigma_frac * 0.5 * (bounds[:, 1] - bounds[:, 0]),
            init_spread=None,
            r_sigma=cfg.r_sigma,
            ess_threshold=cfg.ess_threshold,
            seed=pf_seed,
        )
        pf_result = pf_run(center, train, table, pf_cfg)
        eval_count += cfg.n_particles * cfg.pf_steps + len(pf_result.fitness_trace)
        traces["pf_ess"] = [float(v) for v in pf_result.ess_trace]
        traces["pf_fitness"] = [float(v) for v in pf_result.fitness_trace]
        # keep the filter's answer only if it does not degrade the train fit
        pf_f = train_fitness(pf_result.w_est)
        eval_count += 1
        if pf_f > center_f:
            w_est = center
            pf_stage_rejected = True
        else:
            w_est = pf_result.w_est

    wall = time.perf_counter() - t_start
    if w_est.shape != (dim,):
        raise RuntimeError(f"estimate has shape {w_est.shape}, expected ({dim},)")
    metrics_after = _split_metrics(ms, table, w_est, train_idx, test_idx)

    return CalibrationReport(
        method=method,
        w_est=np.asarray(w_est, dtype=float),
        metrics_before=metrics_before,
        metrics_after=metrics_after,
        train_indices=train_idx,
        test_indices=test_idx,
        eval_count=eval_count,
        wall_time_s=wall,
        seed=cfg.seed,
        config=cfg.snapshot(),
        traces=traces,
        pf_stage_rejected=pf_stage_rejected,
    )


def summary_row(report: CalibrationReport) -> dict:
    """Held-out accuracy row for the comparison table."""
    after = report.metrics_after["test"]
    return {
        "method": report.method,
        "rmse_mm": after.rmse_mm,
        "std_mm": after.std_mm,
        "max_mm": after.max_mm,
        "evals": report.eval_count,
        "wall_s": report.wall_time_s,
    }


@dataclass
class ComparisonResult:
    """Per-method reports plus the summary table; failures keep their message."""

    reports: dict
    table: list
    errors: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.errors)


def compare(methods, ms: MeasurementSet, table: DHTable, cfg) -> ComparisonResult:
    """Run several methods on the identical split and paired seeds.

    ``cfg`` is either one CalibrationConfig shared by all methods or a dict
    keyed by method.  One method failing is recorded and does not abort the
    others.
    """
    methods = list(methods)
    if not methods:
        raise ValueError("methods must be non-empty")
    reports: dict = {}
    errors: dict = {}
    rows: list = []
    for method in methods:
        try:
            method_cfg = cfg[method] if isinstance(cfg, dict) else cfg
            report = calibrate(method, ms, table, method_cfg)
        except Exception as exc:  # noqa: BLE001 - failures belong in the table
            reports[method] = None
            errors[method] = str(exc)
            rows.append({"method": method, "error": str(exc)})
            continue
        reports[method] = report
        rows.append(summary_row(report))
    return ComparisonResult(reports=reports, table=rows, errors=errors)


def write_summary_csv(rows, path, omit_timing: bool = False) -> None:
    """Write comparison rows with the fixed column set."""
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        if "error" in row:
            lines.append(f"{row['method']},error: {row['error']},,,,")
            continue
        wall = 0.0 if omit_timing else row["wall_s"]
        lines.append(
            ",".join(
                [
                    str(row["method"]),
                    repr(float(row["rmse_mm"])),
                    repr(float(row["std_mm"])),
                    repr(float(row["max_mm"])),
                    str(int(row["evals"])),
                    repr(float(wall)),
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
