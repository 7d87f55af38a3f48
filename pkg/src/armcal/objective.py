"""Cable-length residuals, the mean-squared-residual fitness, and accuracy
metrics, plus measurement dataset file I/O.

A measurement pairs a joint configuration with the cable length read by a
draw-wire sensor anchored at a fixed point.  The model predicts that length
as the Euclidean distance between the deviated arm's end position and the
anchor; calibration minimizes the mean squared difference.
"""

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from armcal.kinematics import DHTable, end_positions_batch

__all__ = [
    "MeasurementSet",
    "Metrics",
    "fitness",
    "fitness_batch",
    "metrics",
    "nominal_cable_length",
    "read_dataset",
    "residuals",
    "residuals_batch",
    "write_dataset",
]


@dataclass(frozen=True)
class MeasurementSet:
    """Joint configurations with measured cable lengths from a fixed anchor.

    qs : (n, joints) joint angles, rad.
    lengths : (n,) measured cable lengths, mm; positive and finite.
    anchor_nominal : (3,) nominal anchor position in the base frame, mm.
    seed, truth : generator seed and generating deviation when synthetic.
    """

    qs: np.ndarray
    lengths: np.ndarray
    anchor_nominal: np.ndarray
    seed: int | None = None
    truth: np.ndarray | None = None

    def __post_init__(self):
        qs = np.array(self.qs, dtype=float)
        lengths = np.array(self.lengths, dtype=float)
        anchor = np.array(self.anchor_nominal, dtype=float)
        if qs.ndim != 2 or qs.shape[0] < 1 or qs.shape[1] < 1:
            raise ValueError(f"qs must have shape (n, joints), got {qs.shape}")
        if lengths.shape != (qs.shape[0],):
            raise ValueError(
                f"lengths must have shape ({qs.shape[0]},), got {lengths.shape}"
            )
        if anchor.shape != (3,):
            raise ValueError(f"anchor must have shape (3,), got {anchor.shape}")
        if not np.all(np.isfinite(qs)) or not np.all(np.isfinite(anchor)):
            raise ValueError("joint angles and anchor must be finite")
        if not np.all(np.isfinite(lengths)) or np.any(lengths <= 0):
            raise ValueError("measured lengths must be positive and finite")
        truth = self.truth
        if truth is not None:
            truth = np.array(truth, dtype=float)
            j = qs.shape[1]
            if truth.shape not in ((4 * j,), (4 * j + 3,)):
                raise ValueError(f"truth must have length {4 * j} or {4 * j + 3}")
            truth.flags.writeable = False
        for arr in (qs, lengths, anchor):
            arr.flags.writeable = False
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "anchor_nominal", anchor)
        object.__setattr__(self, "truth", truth)

    @property
    def n_samples(self) -> int:
        return self.qs.shape[0]

    @property
    def joint_count(self) -> int:
        return self.qs.shape[1]

    def subset(self, idx) -> "MeasurementSet":
        """Row-indexed subset sharing the anchor and metadata."""
        return replace(self, qs=self.qs[idx], lengths=self.lengths[idx])


@dataclass(frozen=True)
class Metrics:
    """Residual summary in mm.

    ``std_mm`` is the mean absolute residual, reported under the
    conventional "Std" heading of calibration accuracy tables.
    """

    rmse_mm: float
    std_mm: float
    max_mm: float


def nominal_cable_length(position, anchor) -> float:
    """Euclidean distance from an end position to the anchor, mm."""
    position = np.asarray(position, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if position.shape != (3,) or anchor.shape != (3,):
        raise ValueError("position and anchor must have shape (3,)")
    if not (np.all(np.isfinite(position)) and np.all(np.isfinite(anchor))):
        raise ValueError("position and anchor must be finite")
    return float(np.linalg.norm(position - anchor))


def _check_joint_match(ms: MeasurementSet, table: DHTable) -> None:
    if ms.joint_count != table.n_joints:
        raise ValueError(
            f"dataset has {ms.joint_count} joints but table has {table.n_joints}"
        )


def residuals_batch(ms: MeasurementSet, table: DHTable, W) -> np.ndarray:
    """Residual matrix (N, n): measured minus predicted length per deviation row.

    Rows of W may carry a trailing anchor offset, which shifts the effective
    anchor for that row.
    """
    _check_joint_match(ms, table)
    W = np.asarray(W, dtype=float)
    if W.ndim != 2:
        raise ValueError(f"W must be 2-D, got shape {W.shape}")
    k = 4 * table.n_joints
    P = end_positions_batch(table, ms.qs, W)  # (N, n, 3); validates W width
    anchors = np.broadcast_to(ms.anchor_nominal, (W.shape[0], 3)).copy()
    if W.shape[1] == k + 3:
        anchors += W[:, k:]
    predicted = np.linalg.norm(P - anchors[:, None, :], axis=2)
    return ms.lengths[None, :] - predicted


def residuals(ms: MeasurementSet, table: DHTable, w) -> np.ndarray:
    """Residual vector (n,) for a single deviation vector."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise ValueError(f"w must be 1-D, got shape {w.shape}")
    return residuals_batch(ms, table, w[None, :])[0]


def fitness(ms: MeasurementSet, table: DHTable, w) -> float:
    """Mean squared residual, mm^2; the quantity the search minimizes."""
    r = residuals(ms, table, w)
    return float(np.mean(r * r))


def fitness_batch(ms: MeasurementSet, table: DHTable, W) -> np.ndarray:
    """Mean squared residual per row of W."""
    r = residuals_batch(ms, table, W)
    return np.mean(r * r, axis=1)


def metrics(residual_vector) -> Metrics:
    """Max / mean-absolute / RMS summary of a residual vector."""
    r = np.asarray(residual_vector, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError(f"residual vector must be 1-D and non-empty, got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals must be finite")
    abs_r = np.abs(r)
    return Metrics(
        rmse_mm=float(np.sqrt(np.mean(r * r))),
        std_mm=float(np.mean(abs_r)),
        max_mm=float(abs_r.max()),
    )


def write_dataset(ms: MeasurementSet, path) -> None:
    """Write a dataset CSV with metadata comments and round-trip precision.

    Layout: ``# anchor_mm: x y z`` (plus optional ``# seed:`` / ``# truth:``
    lines), then a ``q1,...,qJ,L_mm`` header and one row per sample.
    """
    lines = ["# anchor_mm: " + " ".join(repr(float(v)) for v in ms.anchor_nominal)]
    if ms.seed is not None:
        lines.append(f"# seed: {int(ms.seed)}")
    if ms.truth is not None:
        lines.append("# truth: " + " ".join(repr(float(v)) for v in ms.truth))
    lines.append(",".join(f"q{i + 1}" for i in range(ms.joint_count)) + ",L_mm")
    for q, length in zip(ms.qs, ms.lengths):
        lines.append(",".join(repr(float(v)) for v in q) + "," + repr(float(length)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path) -> MeasurementSet:
    """Read a dataset CSV written by :func:`write_dataset`."""
    path = Path(path)
    anchor = None
    seed = None
    truth = None
    header = None
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" not in body:
                    continue
                key, _, value = body.partition(":")
                key = key.strip().lower()
                if key == "anchor_mm":
                    anchor = np.array([float(v) for v in value.split()])
                elif key == "seed":
                    seed = int(value.strip())
                elif key == "truth":
                    truth = np.array([float(v) for v in value.split()])
                continue
            if header is None:
                header = [c.strip() for c in line.split(",")]
                if len(header) < 2 or header[-1] != "L_mm":
                    raise ValueError(f"{path}:{lineno}: expected header q1,...,L_mm")
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise ValueError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}"
                )
            rows.append([float(p) for p in parts])
    if anchor is None:
        raise ValueError(f"{path}: missing '# anchor_mm:' metadata line")
    if header is None or not rows:
        raise ValueError(f"{path}: no samples found")
    data = np.array(rows)
    return MeasurementSet(
        qs=data[:, :-1], lengths=data[:, -1], anchor_nominal=anchor, seed=seed, truth=truth
    )
