"""Beetle antennae search (BAS) and its cubic-interpolated variant (CIBAS).

A single search agent probes the fitness at two antenna points along a
random unit direction and steps toward the better side with a geometrically
decaying step.  The cubic variant additionally fits a third-order polynomial
to the three probed fitness values plus a central-difference slope, and jumps
to the polynomial's minimum whenever that point beats both the current
position and the plain step.

Steps, antenna spacing, and the cubic trust bound are dimensionless
fractions of the per-coordinate search-box half-width, applied along the
drawn direction, so one scalar schedule serves mixed-unit parameter spaces
(millimetres next to radians).
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CUBIC_TRUST_RATIO",
    "CubicFit",
    "DegenerateCubicError",
    "SearchConfig",
    "SearchResult",
    "SearchState",
    "bas_step",
    "cibas_step",
    "cubic_fit",
    "cubic_minimum",
    "init_search_state",
    "optimize",
    "random_direction",
    "tentacles",
    "write_trace",
]

# widest cubic jump allowed, as a multiple of the current step size
CUBIC_TRUST_RATIO = 10.0


class DegenerateCubicError(ValueError):
    """The cubic interpolation system is singular for the given inputs."""


@dataclass
class SearchConfig:
    """Search-box bounds plus the step schedule and stopping rules.

    bounds : (dim, 2) array of per-coordinate (lower, upper) limits.
    delta0 : initial step as a fraction of the box half-width.
    mu : per-iteration step decay factor, in (0, 1).
    m0_ratio : antenna spacing as a fraction of the current step.
    fitness_tol : stop once best fitness <= tol; non-finite or None disables.
    stall_iters : stop after this many iterations without improvement; None disables.
    restarts : extra random-start runs appended after the seeded start.
    """

    bounds: np.ndarray
    delta0: float = 0.1
    mu: float = 0.95
    m0_ratio: float = 0.5
    max_iters: int = 200
    fitness_tol: float | None = None
    stall_iters: int | None = 50
    restarts: int = 0
    seed: int | None = None

    def __post_init__(self):
        bounds = np.array(self.bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2 or bounds.shape[0] < 1:
            raise ValueError(f"bounds must have shape (dim, 2), got {bounds.shape}")
        if not np.all(np.isfinite(bounds)):
            raise ValueError("bounds must be finite")
        if not np.all(bounds[:, 0] < bounds[:, 1]):
            raise ValueError("each lower bound must be below its upper bound")
        bounds.flags.writeable = False
        self.bounds = bounds
        if not (np.isfinite(self.delta0) and self.delta0 > 0):
            raise ValueError(f"delta0 must be positive, got {self.delta0}")
        if not (0.0 < self.mu < 1.0):
            raise ValueError(f"mu must lie in (0, 1), got {self.mu}")
        if not (np.isfinite(self.m0_ratio) and self.m0_ratio > 0):
            raise ValueError(f"m0_ratio must be positive, got {self.m0_ratio}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.stall_iters is not None and self.stall_iters < 1:
            raise ValueError(f"stall_iters must be >= 1 or None, got {self.stall_iters}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be >= 0, got {self.restarts}")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def upper(self) -> np.ndarray:
        return self.bounds[:, 1]

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (self.bounds[:, 1] - self.bounds[:, 0])

    def clamp(self, w: np.ndarray) -> np.ndarray:
        return np.clip(w, self.lower, self.upper)


@dataclass
class SearchState:
    """Mutable per-run state; ``trace`` rows are (iter, best_f, evals)."""

    cfg: SearchConfig
    w: np.ndarray
    f_w: float
    delta: float
    best_w: np.ndarray
    best_f: float
    iter: int = 0
    trace: list = field(default_factory=list)


@dataclass
class SearchResult:
    best_w: np.ndarray
    best_f: float
    trace: list
    eval_count: int
    iters: int
    method: str


def random_direction(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unit direction with components drawn uniformly from [-1, 1].

    An exactly-zero draw is redrawn, so the result always has norm 1.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    while True:
        b = rng.uniform(-1.0, 1.0, size=dim)
        norm = np.linalg.norm(b)
        if norm > 0.0:
            return b / norm


def tentacles(w: np.ndarray, b: np.ndarray, m0: float):
    """Antenna points (w + m0*b, w - m0*b); callers clamp before evaluating."""
    w = np.asarray(w, dtype=float)
    b = np.asarray(b, dtype=float)
    return w + m0 * b, w - m0 * b


def init_search_state(cfg: SearchConfig, fitness, w0) -> SearchState:
    """Evaluate the start point and seed best-so-far with it."""
    w0 = cfg.clamp(np.asarray(w0, dtype=float))
    f0 = float(fitness(w0))
    best_f = f0 if math.isfinite(f0) else math.inf
    return SearchState(
        cfg=cfg, w=w0, f_w=f0, delta=cfg.delta0, best_w=w0.copy(), best_f=best_f
    )


def _consider(state: SearchState, w: np.ndarray, f: float) -> None:
    if math.isfinite(f) and f < state.best_f:
        state.best_f = f
        state.best_w = w.copy()


def bas_step(state: SearchState, fitness, rng: np.random.Generator) -> SearchState:
    """One plain BAS iteration: probe two antenna points, step toward the
    better one, decay the step.  A sign tie leaves the position unchanged;
    a non-finite fitness rejects the move but the step still decays."""
    cfg = state.cfg
    b = random_direction(cfg.dim, rng)
    direction = cfg.half_width * b
    m0 = cfg.m0_ratio * state.delta
    w_l, w_r = tentacles(state.w, direction, m0)
    w_l, w_r = cfg.clamp(w_l), cfg.clamp(w_r)
    f_l, f_r = float(fitness(w_l)), float(fitness(w_r))
    _consider(state, w_l, f_l)
    _consider(state, w_r, f_r)
    if math.isfinite(f_l) and math.isfinite(f_r):
        sign = float(np.sign(f_r - f_l))
        if sign != 0.0:
            candidate = cfg.clamp(state.w + state.delta * sign * direction)
            f_cand = float(fitness(candidate))
            _consider(state, candidate, f_cand)
            if math.isfinite(f_cand):
                state.w = candidate
                state.f_w = f_cand
    state.delta *= cfg.mu
    state.iter += 1
    return state


def cibas_step(state: SearchState, fitness, rng: np.random.Generator) -> SearchState:
    """One cubic-interpolated iteration.

    Probes phi(t) = fitness(clamp(w + t * half_width * b)) at t in
    {0, +m0, -m0} (phi(0) is cached from the previous move), fits a cubic in
    t with a central-difference slope at 0, and jumps to the cubic's minimum
    when it lies within CUBIC_TRUST_RATIO * delta and strictly beats both the
    current point and the plain BAS candidate.  Any degenerate fit or
    non-finite value falls back to the plain BAS move.  At most four fitness
    evaluations per call.
    """
    cfg = state.cfg
    b = random_direction(cfg.dim, rng)
    direction = cfg.half_width * b
    m0 = cfg.m0_ratio * state.delta

    def phi(t: float):
        point = cfg.clamp(state.w + t * direction)
        return point, float(fitness(point))

    w_l, f_l = phi(m0)
    w_r, f_r = phi(-m0)
    _consider(state, w_l, f_l)
    _consider(state, w_r, f_r)
    f0 = state.f_w

    # plain BAS candidate for this direction
    sign = 0.0
    if math.isfinite(f_l) and math.isfinite(f_r):
        sign = float(np.sign(f_r - f_l))
    if sign != 0.0:
        w_bas, f_bas = phi(state.delta * sign)
        _consider(state, w_bas, f_bas)
    else:
        w_bas, f_bas = state.w, f0

    moved = False
    if m0 > 0.0 and math.isfinite(f0) and math.isfinite(f_l) and math.isfinite(f_r):
        slope0 = (f_l - f_r) / (2.0 * m0)
        try:
            fit = cubic_fit(0.0, m0, -m0, f0, f_l, f_r, slope0)
        except DegenerateCubicError:
            fit = None
        if fit is not None:
            t_star = cubic_minimum(fit)
            if t_star is not None and abs(t_star) <= CUBIC_TRUST_RATIO * state.delta:
                w_cubic, f_cubic = phi(t_star)
                _consider(state, w_cubic, f_cubic)
                reference = min(f_bas, f0) if math.isfinite(f_bas) else f0
                if math.isfinite(f_cubic) and f_cubic < reference:
                    state.w = w_cubic
                    state.f_w = f_cubic
                    moved = True
    if not moved and sign != 0.0 and math.isfinite(f_bas):
        state.w = w_bas
        state.f_w = f_bas
    state.delta *= cfg.mu
    state.iter += 1
    return state


@dataclass(frozen=True)
class CubicFit:
    """Coefficients g(w) = c0 + c1 w + c2 w^2 + c3 w^3 from three points and
    one slope, with the secant-style intermediates of the closed-form
    recovery kept for inspection."""

    c0: float
    c1: float
    c2: float
    c3: float
    beta: float
    chi: float
    kappa: float
    phi: float

    def value(self, w: float) -> float:
        return self.c0 + w * (self.c1 + w * (self.c2 + w * self.c3))

    def slope(self, w: float) -> float:
        return self.c1 + w * (2.0 * self.c2 + 3.0 * self.c3 * w)

    def curvature(self, w: float) -> float:
        return 2.0 * self.c2 + 6.0 * self.c3 * w


def cubic_fit(w1, w2, w3, f1, f2, f3, f1p) -> CubicFit:
    """Fit the unique cubic through (w1,f1), (w2,f2), (w3,f3) with slope f1p
    at w1.

    Closed-form recovery: with beta and chi the slope-corrected secant
    curvatures of legs w1->w2 and w1->w3, and kappa and phi the matching
    abscissa factors, the leading coefficient is (beta-chi)/(kappa-phi) and
    the rest back-substitute.  Raises DegenerateCubicError on coincident
    abscissae or a non-finite system.
    """
    vals = np.array([w1, w2, w3, f1, f2, f3, f1p], dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"cubic_fit inputs must be finite, got {vals.tolist()}")
    w1, w2, w3, f1, f2, f3, f1p = (float(v) for v in vals)
    if w1 == w2 or w1 == w3 or w2 == w3:
        raise DegenerateCubicError(f"coincident interpolation points: {w1}, {w2}, {w3}")
    beta = (f2 - f1 + f1p * (w1 - w2)) / (w1 - w2) ** 2
    chi = (f3 - f1 + f1p * (w1 - w3)) / (w1 - w3) ** 2
    kappa = (2.0 * w1 * w1 - w2 * (w1 + w2)) / (w1 - w2)
    phi = (2.0 * w1 * w1 - w3 * (w1 + w3)) / (w1 - w3)
    if not all(math.isfinite(v) for v in (beta, chi, kappa, phi)) or kappa == phi:
        raise DegenerateCubicError("interpolation system is numerically singular")
    c3 = (beta - chi) / (kappa - phi)
    c2 = beta - kappa * c3
    c1 = f1p - 2.0 * c2 * w1 - 3.0 * c3 * w1 * w1
    c0 = f1 - w1 * (c1 + w1 * (c2 + w1 * c3))
    if not all(math.isfinite(v) for v in (c0, c1, c2, c3)):
        raise DegenerateCubicError("cubic coefficients overflowed")
    return CubicFit(c0=c0, c1=c1, c2=c2, c3=c3, beta=beta, chi=chi, kappa=kappa, phi=phi)


def cubic_minimum(fit: CubicFit) -> float | None:
    """Local minimizer of the fitted cubic, or None when it has no minimum.

    A negligible leading coefficient degrades to the quadratic case (vertex
    returned only for positive curvature).  Otherwise the stationary points
    solve a plain quadratic; the root with positive second derivative is the
    minimum, and a non-positive discriminant means the cubic is monotone.
    """
    c1, c2, c3 = fit.c1, fit.c2, fit.c3
    if abs(c3) <= 1e-12 * max(1.0, abs(c1), abs(c2)):
        if c2 > 0.0:
            return -c1 / (2.0 * c2)
        return None
    disc = c2 * c2 - 3.0 * c1 * c3
    if disc <= 0.0:
        return None
    sq = math.sqrt(disc)
    # numerically stable roots of 3*c3*t^2 + 2*c2*t + c1
    s = 1.0 if c2 >= 0.0 else -1.0
    q = -(c2 + s * sq)
    if q != 0.0:
        roots = (q / (3.0 * c3), c1 / q)
    else:
        roots = ((-c2 + sq) / (3.0 * c3), (-c2 - sq) / (3.0 * c3))
    for root in roots:
        if math.isfinite(root) and fit.curvature(root) > 0.0:
            return float(root)
    return None


def optimize(method: str, cfg: SearchConfig, fitness, w0) -> SearchResult:
    """Run a full search: ``method`` is ``bas`` or ``cibas``.

    The seeded run starts from w0; each extra restart starts from a uniform
    draw inside the box.  Stops on the fitness tolerance, the stall window,
    or the iteration cap, whichever comes first.  Returns the best-so-far
    point across all runs with the winning run's trace; eval_count counts
    every fitness call made by this invocation.
    """
    if method not in ("bas", "cibas"):
        raise ValueError(f"unknown method {method!r}: expected 'bas' or 'cibas'")
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (cfg.dim,):
        raise ValueError(f"w0 must have shape ({cfg.dim},), got {w0.shape}")
    if np.any(w0 < cfg.lower) or np.any(w0 > cfg.upper):
        raise ValueError("w0 must lie within bounds")

    evals = 0

    def counted(w):
        nonlocal evals
        evals += 1
        return float(fitness(w))

    step = bas_step if method == "bas" else cibas_step
    tol = cfg.fitness_tol
    tol_active = tol is not None and math.isfinite(tol)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts + 1)

    best: SearchState | None = None
    for run_idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        start = w0 if run_idx == 0 else rng.uniform(cfg.lower, cfg.upper)
        state = init_search_state(cfg, counted, start)
        stall = 0
        while state.iter < cfg.max_iters:
            prev_best = state.best_f
            step(state, counted, rng)
            state.trace.append((state.iter, state.best_f, evals))
            if state.best_f < prev_best:
                stall = 0
            else:
                stall += 1
            if tol_active and state.best_f <= tol:
                break
            if cfg.stall_iters is not None and stall >= cfg.stall_iters:
                break
        if best is None or state.best_f < best.best_f:
            best = state
        if tol_active and best.best_f <= tol:
            break

    return SearchResult(
        best_w=best.best_w,
        best_f=best.best_f,
        trace=best.trace,
        eval_count=evals,
        iters=best.iter,
        method=method,
    )


def write_trace(trace, path) -> None:
    """Write search trace rows as ``iter,best_f,evals`` CSV."""
    lines = ["iter,best_f,evals"]
    for it, best_f, evals in trace:
        lines.append(f"{int(it)},{repr(float(best_f))},{int(evals)}")
    Path(path).write_text("\n".join(lines) + "\n")
