"""DH-chain kinematics: link transforms, forward kinematics, parameter
deviations, and a finite-difference position Jacobian.

Lengths are millimetres and angles radians throughout.  A joint command
q_i enters link i as ``theta_offset_i + q_i``.  Deviation vectors stack
per-joint blocks in the fixed order (dalpha | da | dd | dtheta), optionally
followed by a 3-entry anchor offset that the kinematics itself ignores.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DHTable",
    "JACOBIAN_STEP",
    "apply_deviation",
    "check_transform",
    "deviation_size",
    "end_position",
    "end_positions_batch",
    "error_jacobian",
    "forward_kinematics",
    "link_transform",
    "read_dh_file",
    "split_deviation",
    "write_dh_file",
    "zero_deviation",
]

# central-difference step per deviation coordinate (mm or rad)
JACOBIAN_STEP = 1e-6


def link_transform(a, d, theta, alpha):
    """Homogeneous transform of one DH link: Rz(theta) Tz(d) Tx(a) Rx(alpha).

    Parameters
    ----------
    a : float
        Link length along the rotated x axis, mm.
    d : float
        Offset along the joint z axis, mm.
    theta : float
        Rotation about the joint z axis, rad.
    alpha : float
        Twist about the rotated x axis, rad.

    Returns
    -------
    (4, 4) ndarray with an exact (0, 0, 0, 1) bottom row.
    """
    vals = np.array([a, d, theta, alpha], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"non-finite link parameters: {vals.tolist()}")
    a, d, theta, alpha = vals
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array(
        [
            [ct, -st * ca, st * sa, a * ct],
            [st, ct * ca, -ct * sa, a * st],
            [0.0, sa, ca, d],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


@dataclass(frozen=True)
class DHTable:
    """Nominal DH parameters, one row per joint: columns (a, d, theta_offset, alpha)."""

    params: np.ndarray

    def __post_init__(self):
        params = np.array(self.params, dtype=float)
        if params.ndim != 2 or params.shape[0] < 1 or params.shape[1] != 4:
            raise ValueError(f"DH table must have shape (joints, 4), got {params.shape}")
        if not np.all(np.isfinite(params)):
            raise ValueError("DH table entries must be finite")
        params.flags.writeable = False
        object.__setattr__(self, "params", params)

    @property
    def n_joints(self) -> int:
        return self.params.shape[0]

    @property
    def a(self) -> np.ndarray:
        return self.params[:, 0]

    @property
    def d(self) -> np.ndarray:
        return self.params[:, 1]

    @property
    def theta_offset(self) -> np.ndarray:
        return self.params[:, 2]

    @property
    def alpha(self) -> np.ndarray:
        return self.params[:, 3]


def deviation_size(n_joints: int, with_anchor: bool = False) -> int:
    """Length of a deviation vector: 4 per joint plus 3 if the anchor is free."""
    return 4 * n_joints + (3 if with_anchor else 0)


def zero_deviation(n_joints: int, with_anchor: bool = False) -> np.ndarray:
    return np.zeros(deviation_size(n_joints, with_anchor))


def _as_deviation(w, n_joints: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.shape[0] not in (4 * n_joints, 4 * n_joints + 3):
        raise ValueError(
            f"deviation vector must have length {4 * n_joints} or {4 * n_joints + 3}, "
            f"got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise ValueError("deviation entries must be finite")
    return w


def split_deviation(w, n_joints: int):
    """Split a deviation vector into (dalpha, da, dd, dtheta, anchor_offset).

    ``anchor_offset`` is None when the vector carries no anchor block.
    """
    w = _as_deviation(w, n_joints)
    j = n_joints
    anchor = w[4 * j :] if w.shape[0] > 4 * j else None
    return w[0:j], w[j : 2 * j], w[2 * j : 3 * j], w[3 * j : 4 * j], anchor


def apply_deviation(table: DHTable, w) -> DHTable:
    """Add per-joint deviations to a nominal table; anchor entries are ignored."""
    dalpha, da, dd, dtheta, _ = split_deviation(w, table.n_joints)
    params = np.column_stack(
        [table.a + da, table.d + dd, table.theta_offset + dtheta, table.alpha + dalpha]
    )
    return DHTable(params)


def forward_kinematics(table: DHTable, q) -> np.ndarray:
    """Base-to-flange transform for joint angles q (one per joint, rad)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (table.n_joints,):
        raise ValueError(f"expected {table.n_joints} joint angles, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("joint angles must be finite")
    T = np.eye(4)
    for i in range(table.n_joints):
        T = T @ link_transform(
            table.a[i], table.d[i], table.theta_offset[i] + q[i], table.alpha[i]
        )
    return T


def end_position(table: DHTable, q) -> np.ndarray:
    """End-effector position (3,) in base frame, mm."""
    return forward_kinematics(table, q)[:3, 3]


def end_positions_batch(table: DHTable, qs, W=None) -> np.ndarray:
    """End-effector positions for every (deviation, configuration) pair.

    Parameters
    ----------
    qs : (n, joints) array
        Joint configurations, one per row.
    W : (N, dim) array or None
        Deviation vectors, one per row; trailing anchor entries, if present,
        are ignored.  None evaluates the nominal table.

    Returns
    -------
    (N, n, 3) array, or (n, 3) when W is None.

    This is the single numeric path used by the objective, the simulator and
    the particle filter, so residuals computed anywhere agree bitwise.
    """
    qs = np.asarray(qs, dtype=float)
    j = table.n_joints
    if qs.ndim != 2 or qs.shape[1] != j or qs.shape[0] < 1:
        raise ValueError(f"qs must have shape (n, {j}), got {qs.shape}")
    if not np.all(np.isfinite(qs)):
        raise ValueError("joint angles must be finite")

    single = W is None
    if single:
        W2 = np.zeros((1, 4 * j))
    else:
        W2 = np.asarray(W, dtype=float)
        if W2.ndim != 2 or W2.shape[1] not in (4 * j, 4 * j + 3) or W2.shape[0] < 1:
            raise ValueError(f"W must have shape (N, {4 * j}[+3]), got {W2.shape}")
        if not np.all(np.isfinite(W2)):
            raise ValueError("deviation entries must be finite")

    dalpha = W2[:, 0:j]
    da = W2[:, j : 2 * j]
    dd = W2[:, 2 * j : 3 * j]
    dtheta = W2[:, 3 * j : 4 * j]
    a = table.a[None, :] + da  # (N, j)
    d = table.d[None, :] + dd
    alpha = table.alpha[None, :] + dalpha

    N, n = W2.shape[0], qs.shape[0]
    T = None
    for i in range(j):
        theta = table.theta_offset[i] + dtheta[:, i : i + 1] + qs[None, :, i]  # (N, n)
        ct, st = np.cos(theta), np.sin(theta)
        ca = np.cos(alpha[:, i : i + 1])  # (N, 1)
        sa = np.sin(alpha[:, i : i + 1])
        ai = a[:, i : i + 1]
        di = d[:, i : i + 1]
        M = np.zeros((N, n, 4, 4))
        M[..., 0, 0] = ct
        M[..., 0, 1] = -st * ca
        M[..., 0, 2] = st * sa
        M[..., 0, 3] = ai * ct
        M[..., 1, 0] = st
        M[..., 1, 1] = ct * ca
        M[..., 1, 2] = -ct * sa
        M[..., 1, 3] = ai * st
        M[..., 2, 1] = sa
        M[..., 2, 2] = ca
        M[..., 2, 3] = di
        M[..., 3, 3] = 1.0
        T = M if T is None else T @ M
    pos = T[..., :3, 3]
    return pos[0] if single else pos


def error_jacobian(table: DHTable, q, n_params: int | None = None, step: float = JACOBIAN_STEP) -> np.ndarray:
    """Sensitivity of the end position to each deviation coordinate.

    Central differences with the given step (mm or rad) per coordinate.
    Columns follow the deviation layout (dalpha | da | dd | dtheta [| anchor]);
    anchor columns, when requested via ``n_params``, are exactly zero because
    the arm position does not depend on the anchor.  Intended for
    identifiability diagnostics, not for the search itself.
    """
    j = table.n_joints
    k = 4 * j
    dim = k if n_params is None else int(n_params)
    if dim not in (k, k + 3):
        raise ValueError(f"n_params must be {k} or {k + 3}, got {n_params}")
    if not (np.isfinite(step) and step > 0):
        raise ValueError(f"step must be positive and finite, got {step}")
    q2 = np.asarray(q, dtype=float).reshape(1, j)

    W = np.zeros((2 * k, dim))
    W[:k, :k] = np.eye(k) * step
    W[k:, :k] = -np.eye(k) * step
    P = end_positions_batch(table, q2, W)[:, 0, :]  # (2k, 3)
    jac = np.zeros((3, dim))
    jac[:, :k] = (P[:k] - P[k:]).T / (2.0 * step)
    return jac


def check_transform(T, tol: float = 1e-9) -> float:
    """Validate a rigid homogeneous transform; returns the max orthonormality error.

    Raises ValueError when the bottom row is not exactly (0, 0, 0, 1) or the
    rotation block is not orthonormal with unit determinant within tol.
    """
    T = np.asarray(T, dtype=float)
    if T.shape != (4, 4):
        raise ValueError(f"transform must be 4x4, got {T.shape}")
    if not np.array_equal(T[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValueError(f"bottom row must be (0, 0, 0, 1), got {T[3].tolist()}")
    R = T[:3, :3]
    err = float(np.abs(R @ R.T - np.eye(3)).max())
    det_err = float(abs(np.linalg.det(R) - 1.0))
    worst = max(err, det_err)
    if worst > tol:
        raise ValueError(f"rotation block not orthonormal: error {worst:g} > {tol:g}")
    return worst


def read_dh_file(path) -> DHTable:
    """Read a DH table: one ``a d theta_offset alpha`` line per joint.

    Values are whitespace- or comma-separated; ``#`` starts a comment.
    """
    rows = []
    path = Path(path)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 4:
                raise ValueError(
                    f"{path}:{lineno}: expected 4 values (a d theta_offset alpha), "
                    f"got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no joint rows found")
    return DHTable(np.array(rows))


def write_dh_file(table: DHTable, path) -> None:
    """Write a DH table with full round-trip precision."""
    lines = ["# a_mm d_mm theta_offset_rad alpha_rad"]
    for row in table.params:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
