"""Optimal single contractible-action offers with discretionary follow-up and exit.

The principal commits to one contractible action x, later chooses a
discretionary action y, and the agent walks away (both sides get zero
from the relationship) whenever her utility at (x, y) is negative. Under
the monotonicity and single-crossing audits below, richer communication
adds nothing, so the optimum solves

    max over x of  max over y of  E[ 1{u(x,y,theta) >= 0} * v(x,y,theta) ]

evaluated here by a kink-safe grid-then-golden-section search in each
variable, with the participation cutoff found by bisection and the
expectation by composite Simpson quadrature split exactly at the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprlang
from .env_core import Belief, TypeSpace
from .optimize import golden_max

__all__ = [
    "SingleProblem",
    "SolveResult",
    "CutoffResult",
    "RentProbeResult",
    "MonotonicityError",
    "cutoff",
    "expected_profit",
    "solve",
    "zoom_solve",
    "labor_profile",
    "rent_probe",
    "single_crossing_audit",
    "AuditReport",
]


class MonotonicityError(ValueError):
    """A payoff monotonicity audit failed at the probed point."""


def _as_fn(expr) -> Callable:
    if callable(expr):
        return expr
    if isinstance(expr, str):
        expr = exprlang.parse(expr)
    return exprlang.compile_fn(expr, ["x", "y", "theta"])


@dataclass
class SingleProblem:
    """Payoffs, type distribution, and search configuration.

    ``u`` and ``v`` may be expression text, parsed expressions, or plain
    callables of (x, y, theta) accepting numpy broadcasting. The type
    space is an interval (quadrature) or finite (weighted sum).
    """

    u: object
    v: object
    types: TypeSpace = field(default_factory=lambda: TypeSpace.interval(3.0, 4.0))
    x_box: tuple[float, float] = (0.0, 5.0)
    y_box: tuple[float, float] = (0.0, 5.0)
    x_grid: int = 256
    y_grid: int = 256
    panels: int = 256
    root_tol: float = 1e-10
    opt_tol: float = 1e-8
    tol: float = 1e-9

    def __post_init__(self):
        self.u_fn = _as_fn(self.u)
        self.v_fn = _as_fn(self.v)
        if self.x_box[0] >= self.x_box[1] or self.y_box[0] >= self.y_box[1]:
            raise ValueError("empty search box")
        if self.panels % 2 != 0:
            raise ValueError("Simpson quadrature needs an even panel count")


@dataclass(frozen=True, slots=True)
class CutoffResult:
    kind: str  # "interior" | "all-stay" | "none-stay"
    theta: float | None


@dataclass(frozen=True, slots=True)
class SolveResult:
    x: float | None
    y: float | None
    cutoff: CutoffResult | None
    value: float
    stay_prob: float
    no_trade: bool
    x_trace: tuple[tuple[float, float], ...]  # (x, best inner value)


@dataclass(frozen=True, slots=True)
class RentProbeResult:
    success: bool
    kappa: float
    step: float | None
    improvement: float | None


@dataclass(frozen=True, slots=True)
class AuditReport:
    passed: bool
    sign_changes: int
    zero_runs: int
    degenerate_equal: bool


def _audit_increasing(problem: SingleProblem, x: float, y: float, n: int = 33) -> None:
    lo, hi = _theta_span(problem.types)
    grid = np.linspace(lo, hi, n)
    vals = np.asarray(problem.u_fn(x, y, grid), dtype=float)
    if not np.all(np.diff(vals) > 0.0):
        raise MonotonicityError(
            f"agent utility is not strictly increasing in theta at (x, y) = ({x}, {y})"
        )


def _theta_span(types: TypeSpace) -> tuple[float, float]:
    if types.kind == "interval":
        return types.lo, types.hi
    vals = types.values
    return float(vals.min()), float(vals.max())


def cutoff(problem: SingleProblem, x: float, y: float) -> CutoffResult:
    """Participation threshold: the root of u(x, y, .) on the type span.

    Flags "all-stay" when the lowest type already accepts and "none-stay"
    when even the highest type refuses; otherwise bisects to ``root_tol``.
    Indifferent cutoff types count as staying. An everywhere-negative
    sweep certifies "none-stay" before the monotonicity audit, which only
    guards the root-finding path.
    """
    lo, hi = _theta_span(problem.types)
    sweep = np.asarray(problem.u_fn(x, y, np.linspace(lo, hi, 33)), dtype=float)
    if np.all(sweep < 0.0):
        return CutoffResult("none-stay", None)
    _audit_increasing(problem, x, y)
    u_lo = float(problem.u_fn(x, y, lo))
    u_hi = float(problem.u_fn(x, y, hi))
    if u_lo >= 0.0:
        return CutoffResult("all-stay", None)
    if u_hi < 0.0:
        return CutoffResult("none-stay", None)
    a, b = lo, hi
    while b - a > problem.root_tol:
        mid = 0.5 * (a + b)
        if float(problem.u_fn(x, y, mid)) >= 0.0:
            b = mid
        else:
            a = mid
    return CutoffResult("interior", 0.5 * (a + b))


_SIMPSON_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _simpson_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    hit = _SIMPSON_CACHE.get(n)
    if hit is None:
        frac = np.linspace(0.0, 1.0, n + 1)
        coef = np.ones(n + 1)
        coef[1:-1:2] = 4.0
        coef[2:-1:2] = 2.0
        hit = _SIMPSON_CACHE[n] = (frac, coef)
    return hit


def expected_profit(problem: SingleProblem, x: float, y: float) -> float:
    """Expected principal payoff with exit: v integrated over stayers."""
    if problem.types.kind == "finite":
        th = problem.types.values
        w = problem.types.weights
        uv = np.asarray(problem.u_fn(x, y, th), dtype=float)
        vv = np.asarray(problem.v_fn(x, y, th), dtype=float)
        return float(np.sum(w * vv * (uv >= 0.0)))
    cut = cutoff(problem, x, y)
    if cut.kind == "none-stay":
        return 0.0
    lo, hi = problem.types.lo, problem.types.hi
    start = lo if cut.kind == "all-stay" else max(cut.theta, lo)
    if start >= hi:
        return 0.0
    frac, coef = _simpson_nodes(problem.panels)
    nodes = start + (hi - start) * frac
    vals = np.asarray(problem.v_fn(x, y, nodes), dtype=float)
    dens = problem.types.density_at(nodes)
    h = (hi - start) / problem.panels
    return float(np.sum(coef * vals * dens) * h / 3.0)


def _stay_probability(problem: SingleProblem, x: float, y: float) -> float:
    if problem.types.kind == "finite":
        th = problem.types.values
        w = problem.types.weights
        uv = np.asarray(problem.u_fn(x, y, th), dtype=float)
        return float(np.sum(w * (uv >= 0.0)))
    cut = cutoff(problem, x, y)
    if cut.kind == "none-stay":
        return 0.0
    lo, hi = problem.types.lo, problem.types.hi
    start = lo if cut.kind == "all-stay" else max(cut.theta, lo)
    frac, coef = _simpson_nodes(problem.panels)
    nodes = start + (hi - start) * frac
    dens = problem.types.density_at(nodes)
    h = (hi - start) / problem.panels
    return float(np.sum(coef * dens) * h / 3.0)


def _profit_safe(problem: SingleProblem, x: float, y: float) -> float:
    try:
        return expected_profit(problem, x, y)
    except MonotonicityError:
        return -math.inf


def _profit_scalar(problem: SingleProblem, x: float, y: float, audit: bool) -> float:
    """Scalar counterpart of :func:`_profit_vec`; avoids array dispatch."""
    lo, hi = _theta_span(problem.types)
    if audit:
        sweep = np.asarray(
            problem.u_fn(x, y, np.linspace(lo, hi, 33)), dtype=float
        )
        if np.all(sweep < 0.0):
            return 0.0
        if not np.all(np.diff(sweep) > 0.0):
            return -math.inf
    if problem.types.kind == "finite":
        th = problem.types.values
        w = problem.types.weights
        uv = np.asarray(problem.u_fn(x, y, th), dtype=float)
        vv = np.asarray(problem.v_fn(x, y, th), dtype=float)
        return float(np.sum(w * vv * (uv >= 0.0)))
    if float(problem.u_fn(x, y, hi)) < 0.0:
        return 0.0
    if float(problem.u_fn(x, y, lo)) >= 0.0:
        start = lo
    else:
        a, b = lo, hi
        for _ in range(48):
            mid = 0.5 * (a + b)
            if float(problem.u_fn(x, y, mid)) >= 0.0:
                b = mid
            else:
                a = mid
        start = 0.5 * (a + b)
    frac, coef = _simpson_nodes(problem.panels)
    span = hi - start
    nodes = start + span * frac
    vvals = np.asarray(problem.v_fn(x, y, nodes), dtype=float)
    dens = problem.types.density_at(nodes)
    return float(np.sum(coef * vvals * dens) * span / problem.panels / 3.0)


def _profit_vec(
    problem: SingleProblem, X: np.ndarray, Y: np.ndarray, audit: bool = True
) -> np.ndarray:
    """Expected profit for paired (x, y) arrays; invalid entries are -inf.

    One vectorized pass: the 33-point monotonicity sweep, the
    participation bisection, and the Simpson quadrature all run on the
    flat arrays. Entries failing the strict-increase audit are kept only
    when the sweep certifies that no type stays (profit 0). Refinement
    probes inside already-audited brackets pass ``audit=False``.
    """
    X = np.asarray(X, dtype=float).ravel()
    Y = np.asarray(Y, dtype=float).ravel()
    if X.size == 1:
        return np.array([_profit_scalar(problem, float(X[0]), float(Y[0]), audit)])
    lo, hi = _theta_span(problem.types)
    if audit:
        sweep = np.asarray(
            problem.u_fn(X[:, None], Y[:, None], np.linspace(lo, hi, 33)[None, :]),
            dtype=float,
        )
        increasing = np.all(np.diff(sweep, axis=1) > 0.0, axis=1)
        grid_none = np.all(sweep < 0.0, axis=1)
        valid = increasing | grid_none

    if problem.types.kind == "finite":
        th = problem.types.values
        w = problem.types.weights
        uv = np.asarray(problem.u_fn(X[:, None], Y[:, None], th[None, :]), dtype=float)
        vv = np.asarray(problem.v_fn(X[:, None], Y[:, None], th[None, :]), dtype=float)
        vals = np.sum(w[None, :] * vv * (uv >= 0.0), axis=1)
    else:
        u_lo = np.asarray(problem.u_fn(X, Y, lo), dtype=float)
        u_hi = np.asarray(problem.u_fn(X, Y, hi), dtype=float)
        a = np.full_like(X, lo)
        b = np.full_like(X, hi)
        for _ in range(48):
            mid = 0.5 * (a + b)
            stay = np.asarray(problem.u_fn(X, Y, mid), dtype=float) >= 0.0
            b = np.where(stay, mid, b)
            a = np.where(stay, a, mid)
        start = np.where(u_lo >= 0.0, lo, 0.5 * (a + b))
        frac, coef = _simpson_nodes(problem.panels)
        span = hi - start
        nodes = start[:, None] + span[:, None] * frac[None, :]
        vvals = np.asarray(problem.v_fn(X[:, None], Y[:, None], nodes), dtype=float)
        dens = problem.types.density_at(nodes)
        vals = np.sum(coef[None, :] * vvals * dens, axis=1) * span / problem.panels / 3.0
        vals = np.where(u_hi < 0.0, 0.0, vals)
    if audit:
        vals = np.where(grid_none, 0.0, vals)
        vals = np.where(valid, vals, -np.inf)
    return vals


def _profit_grid(problem: SingleProblem, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Expected profit on the full (x, y) mesh; invalid cells are -inf.

    Evaluated in chunks so the quadrature workspace stays cache-sized.
    """
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Xf, Yf = X.ravel(), Y.ravel()
    chunk = max(1, 2_000_000 // max(problem.panels + 1, 1))
    if Xf.size <= chunk:
        vals = _profit_vec(problem, Xf, Yf)
    else:
        parts = [
            _profit_vec(problem, Xf[i : i + chunk], Yf[i : i + chunk])
            for i in range(0, Xf.size, chunk)
        ]
        vals = np.concatenate(parts)
    return vals.reshape(len(xs), len(ys))


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_INV_PHI_SQ = (3.0 - math.sqrt(5.0)) / 2.0


def _row_golden(
    problem: SingleProblem,
    X: np.ndarray,
    a: np.ndarray,
    b: np.ndarray,
    tol: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Golden-section maximization in y, vectorized across rows of fixed x."""
    a = a.astype(float).copy()
    b = b.astype(float).copy()
    dist = b - a
    width = float(np.max(dist)) if len(dist) else 0.0
    if width <= tol:
        mid = 0.5 * (a + b)
        return mid, _profit_vec(problem, X, mid)
    n = int(math.ceil(math.log(tol / width) / math.log(_INV_PHI)))
    c = a + _INV_PHI_SQ * dist
    d = a + _INV_PHI * dist
    yc = _profit_vec(problem, X, c, audit=False)
    yd = _profit_vec(problem, X, d, audit=False)
    for _ in range(max(n - 1, 0)):
        left = yc > yd  # maximum bracketed in [a, d] where true, [c, b] where false
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        dist = dist * _INV_PHI
        c = a + _INV_PHI_SQ * dist  # equals the surviving old point on one side
        d = a + _INV_PHI * dist
        probe = np.where(left, c, d)
        yp = _profit_vec(problem, X, probe, audit=False)
        yc, yd = np.where(left, yp, yd), np.where(left, yc, yp)
    pick_left = yc > yd
    y = np.where(pick_left, 0.5 * (a + d), 0.5 * (c + b))
    return y, _profit_vec(problem, X, y)  # final value honors the audit


def _inner_rows(
    problem: SingleProblem, xs: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Best (value, y) per contractible offer, vectorized across offers.

    A y-grid scan brackets the per-row optimum; golden section refines
    each bracket simultaneously. Grid ties break toward the lowest index
    and the refinement is kept only when it improves on the grid value.
    """
    ys = np.linspace(problem.y_box[0], problem.y_box[1], problem.y_grid)
    grid = _profit_grid(problem, xs, ys)
    idx = np.argmax(grid, axis=1)
    grid_best = grid[np.arange(len(xs)), idx]
    a = ys[np.maximum(idx - 1, 0)]
    b = ys[np.minimum(idx + 1, problem.y_grid - 1)]
    finite = np.isfinite(grid_best)
    if not np.any(finite):
        return grid_best, ys[idx].astype(float)
    y_ref = ys[idx].astype(float)
    v_ref = grid_best.copy()
    xf = np.asarray(xs, dtype=float)[finite]
    yr, vr = _row_golden(problem, xf, a[finite], b[finite], problem.opt_tol)
    better = vr > v_ref[finite]
    v_out = v_ref[finite].copy()
    y_out = y_ref[finite].copy()
    v_out[better] = vr[better]
    y_out[better] = yr[better]
    v_ref[finite] = v_out
    y_ref[finite] = y_out
    return v_ref, y_ref


def _inner_solve(problem: SingleProblem, x: float) -> tuple[float, float]:
    """Best (value, y) for one fixed contractible offer."""
    v, y = _inner_rows(problem, np.array([float(x)]))
    return float(v[0]), float(y[0])


def solve(problem: SingleProblem, threads: int = 1) -> SolveResult:
    """Two-step optimum: outer search over x, inner search over y.

    Both loops scan an even grid and refine around the best bracket by
    golden section; the objective has kinks where the participation
    cutoff meets the type-space boundary, so derivative-free search is
    used throughout. Offers retaining no type score zero; when nothing
    beats zero the result is the no-trade outcome.
    """
    xs = np.linspace(problem.x_box[0], problem.x_box[1], problem.x_grid)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(xs, threads * 4)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda block: _inner_rows(problem, block), chunks))
        values = np.concatenate([p[0] for p in parts])
        inner_y = np.concatenate([p[1] for p in parts])
    else:
        values, inner_y = _inner_rows(problem, xs)
    trace = tuple((float(x), float(v)) for x, v in zip(xs, values))

    i = int(np.argmax(values))
    if not np.isfinite(values[i]):
        return SolveResult(None, None, None, 0.0, 0.0, True, trace)
    a = float(xs[max(i - 1, 0)])
    b = float(xs[min(i + 1, problem.x_grid - 1)])
    x_ref, v_ref = golden_max(
        lambda x: _inner_solve(problem, x)[0], a, b, problem.opt_tol
    )
    if v_ref >= values[i]:
        x_star = float(x_ref)
        value, y_star = _inner_solve(problem, x_star)
    else:
        x_star = float(xs[i])
        value, y_star = float(values[i]), float(inner_y[i])

    if value <= 0.0:
        return SolveResult(None, None, None, 0.0, 0.0, True, trace)
    cut = cutoff(problem, x_star, y_star)
    stay = _stay_probability(problem, x_star, y_star)
    return SolveResult(x_star, y_star, cut, float(value), stay, False, trace)


def zoom_solve(
    problem: SingleProblem, stages: int = 4, grid: int = 48
) -> tuple[float, float, float]:
    """Fast (x, y) optimizer for iterative callers (best-response dynamics).

    Each stage scans an x-grid with the vectorized inner-row search (the
    inner optimum often sits at a participation kink, which the per-row
    golden refinement resolves exactly), then zooms the x-box around the
    incumbent row. Same unimodality assumption as the full solve.
    Returns (value, x, y).
    """
    xlo, xhi = problem.x_box
    best = (-math.inf, problem.x_box[0], problem.y_box[0])
    for _ in range(stages):
        xs = np.linspace(xlo, xhi, grid)
        values, inner_y = _inner_rows(problem, xs)
        i = int(np.argmax(values))
        if not np.isfinite(values[i]):
            return -math.inf, float(xs[i]), float(inner_y[i])
        if values[i] > best[0]:
            best = (float(values[i]), float(xs[i]), float(inner_y[i]))
        dx = (xhi - xlo) / (grid - 1)
        xlo = max(problem.x_box[0], xs[i] - 1.5 * dx)
        xhi = min(problem.x_box[1], xs[i] + 1.5 * dx)
    return best


def labor_profile(t: float) -> tuple[float, float, float]:
    """Closed-form profile of the worked employment example by cutoff type.

    For a cutoff t in [3, 4): the conditional-productivity factor
    K(t) = sqrt(t)(t+4)/2, the profit-maximizing offer x*(t) = (K(t)/4)^(2/3),
    and the resulting expected profit (4-t)(K(t) sqrt(x*) - x*^2).
    """
    if not 3.0 <= t < 4.0:
        raise ValueError("cutoff out of range [3, 4)")
    K = math.sqrt(t) * (t + 4.0) / 2.0
    x = (K / 4.0) ** (2.0 / 3.0)
    value = (4.0 - t) * (K * math.sqrt(x) - x * x)
    return K, x, value


def rent_probe(
    problem: SingleProblem,
    x: float,
    y: float,
    belief: Belief,
    steps: Sequence[float] = (0.025, 0.05, 0.1, 0.2, 0.4),
    mass_tol: float = 1e-9,
) -> RentProbeResult:
    """Extract rent from common slack by nudging the discretionary action.

    Requires every staying type's utility to sit strictly above zero
    (common slack kappa > 0) and opposite monotonicity in y (agent down,
    principal up). Scans increasing steps and succeeds at the first one
    keeping the stay set's mass unchanged while strictly raising the
    posterior expected principal payoff.
    """
    th = np.array(belief.points)
    w = np.array(belief.weights)
    uv = np.asarray(problem.u_fn(x, y, th), dtype=float)
    stay = uv >= 0.0
    stay_mass = float(np.sum(w[stay]))
    if stay_mass <= 0.0:
        raise ValueError("stay set has no belief mass")
    kappa = float(np.min(uv[stay & (w > 0)]))
    if kappa <= 1e-12:
        raise ValueError("no common slack: the cutoff type is binding")

    probe = min(steps)
    u_probe = np.asarray(problem.u_fn(x, y + probe, th), dtype=float)
    v_now = np.asarray(problem.v_fn(x, y, th), dtype=float)
    v_probe = np.asarray(problem.v_fn(x, y + probe, th), dtype=float)
    mask = w > 0
    if np.any(u_probe[mask] > uv[mask]) or np.any(v_probe[mask] <= v_now[mask]):
        raise MonotonicityError(
            "opposite-monotonicity audit failed: need u decreasing and v increasing in y"
        )

    base_value = float(np.sum(w * v_now * stay))
    for t in sorted(steps):
        u_t = np.asarray(problem.u_fn(x, y + t, th), dtype=float)
        stay_t = u_t >= 0.0
        if abs(float(np.sum(w[stay_t])) - stay_mass) > mass_tol:
            continue
        v_t = np.asarray(problem.v_fn(x, y + t, th), dtype=float)
        value_t = float(np.sum(w * v_t * stay_t))
        if value_t > base_value:
            return RentProbeResult(True, kappa, float(t), value_t - base_value)
    return RentProbeResult(False, kappa, None, None)


def single_crossing_audit(
    u: object,
    a: tuple[float, float],
    b: tuple[float, float],
    theta_grid: np.ndarray | Sequence[float],
    tol: float = 1e-12,
) -> AuditReport:
    """Sign-scan of u(a, theta) - u(b, theta) over a type grid.

    Passes when the difference changes sign at most once and has at most
    one (grid-tolerance) zero run; an identically zero difference is
    flagged as degenerate-equal.
    """
    fn = _as_fn(u)
    th = np.asarray(theta_grid, dtype=float)
    d = np.asarray(fn(a[0], a[1], th), dtype=float) - np.asarray(
        fn(b[0], b[1], th), dtype=float
    )
    scale = max(1.0, float(np.max(np.abs(d))))
    signs = np.where(d > tol * scale, 1, np.where(d < -tol * scale, -1, 0))
    nonzero = signs[signs != 0]
    sign_changes = int(np.sum(nonzero[1:] != nonzero[:-1])) if nonzero.size else 0
    zero_runs = 0
    in_run = False
    for s in signs:
        if s == 0 and not in_run:
            zero_runs += 1
            in_run = True
        elif s != 0:
            in_run = False
    degenerate = bool(np.all(signs == 0))
    passed = degenerate or (sign_changes <= 1 and zero_runs <= 1)
    return AuditReport(passed, sign_changes, zero_runs, degenerate)
