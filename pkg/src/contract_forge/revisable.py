"""Revisable-action model: bounded revisions of a committed baseline.

Both players care only about the final action ``z``. A contract fixes a
baseline ``x``; after messages the receiver revises it within a bounded
range (additive: z = x + y with |y| <= alpha; proportional: z = x * eta
with 0 < eta_lo <= eta <= eta_hi and positive baselines).

The module provides the receiver's posterior ideal point, the endpoint
placement that makes a target final action the receiver's constrained
optimum, conversions between the full-commitment (alpha = 0) and limited
models, an exhaustive desk-scale check that the two models induce the
same set of final-action allocations, and the quadratic-delegation
closed forms (ceiling/floor thresholds of the sender-optimal rule).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import exprlang
from .contracts import menu_rec
from .env_core import (
    ActionValue,
    Allocation,
    Belief,
    Environment,
    PayoffModel,
    PrincipalSpec,
    TypeSpace,
    expect,
)
from .equilibrium import (
    Assessment,
    BeliefSystem,
    check_continuation,
)
from .optimize import golden_max

__all__ = [
    "RevisableModel",
    "FinalAllocation",
    "ConcavityError",
    "audit_concavity",
    "posterior_ideal",
    "feasible_final_interval",
    "endpoint_baseline",
    "GridGame",
    "build_grid_game",
    "final_allocation_of",
    "collapse_to_full",
    "lift_to_limited",
    "enumerate_final_allocations",
    "check_gamma_equal",
    "GammaReport",
    "ms_thresholds",
    "ms_allocation",
    "ms_lift_check",
]


class ConcavityError(ValueError):
    """The receiver payoff failed the strict-concavity audit."""


def _subst_z(expr: exprlang.Expr, replacement: exprlang.Expr) -> exprlang.Expr:
    """Replace the variable ``z`` by ``replacement`` throughout ``expr``."""
    match expr:
        case exprlang.Num():
            return expr
        case exprlang.Var(name):
            return replacement if name == "z" else expr
        case exprlang.Neg(arg):
            return exprlang.Neg(_subst_z(arg, replacement))
        case exprlang.Bin(op, left, right):
            return exprlang.Bin(op, _subst_z(left, replacement), _subst_z(right, replacement))
        case exprlang.Call(fn, args):
            return exprlang.Call(fn, tuple(_subst_z(a, replacement) for a in args))
    raise TypeError(expr)


@dataclass(frozen=True, slots=True)
class RevisableModel:
    """Revision mode, payoffs over (z, theta), and the type space.

    ``ideal_form`` may declare the closed-form posterior ideal for the
    quadratic receiver family: ("affine", k, a) means the ideal point is
    k + a * E[theta]. Without it the ideal is located by a bracketed
    golden-section search over ``z_range``.
    """

    mode: str  # "additive" | "proportional"
    sender: exprlang.Expr
    receiver: exprlang.Expr
    types: TypeSpace
    alpha: float = 0.0
    eta_lo: float = 1.0
    eta_hi: float = 1.0
    z_range: tuple[float, float] = (-10.0, 10.0)
    ideal_form: tuple | None = None  # ("affine", k, a)

    def __post_init__(self):
        if self.mode not in ("additive", "proportional"):
            raise ValueError(f"unknown revision mode {self.mode!r}")
        if self.mode == "additive" and self.alpha < 0.0:
            raise ValueError("additive revision bound must be nonnegative")
        if self.mode == "proportional" and not 0.0 < self.eta_lo <= self.eta_hi:
            raise ValueError("proportional bounds must satisfy 0 < lo <= hi")

    @staticmethod
    def additive(
        sender: str | exprlang.Expr,
        receiver: str | exprlang.Expr,
        types: TypeSpace,
        alpha: float,
        z_range: tuple[float, float] = (-10.0, 10.0),
        ideal_form: tuple | None = None,
    ) -> "RevisableModel":
        conv = lambda e: exprlang.parse(e) if isinstance(e, str) else e
        return RevisableModel(
            mode="additive", sender=conv(sender), receiver=conv(receiver),
            types=types, alpha=alpha, z_range=z_range, ideal_form=ideal_form,
        )

    def sender_payoff(self, z: float, theta: float) -> float:
        return exprlang.evaluate(self.sender, {"z": z, "theta": theta})

    def receiver_payoff(self, z: float, theta: float) -> float:
        return exprlang.evaluate(self.receiver, {"z": z, "theta": theta})

    def receiver_expectation(self, z: float, belief: Belief) -> float:
        return expect(lambda th: _vec_eval(self.receiver, z, th), belief)


def _vec_eval(expr: exprlang.Expr, z: float, theta) -> np.ndarray:
    fn = exprlang.compile_fn(expr, ["z", "theta"])
    return np.asarray(fn(z, np.asarray(theta, dtype=float)), dtype=float)


def audit_concavity(
    model: RevisableModel,
    z_lo: float | None = None,
    z_hi: float | None = None,
    thetas: Sequence[float] | None = None,
    grid: int = 101,
) -> None:
    """Reject receiver payoffs whose second differences are not negative.

    Checks ``grid`` points on the working z-range for each sampled theta;
    raises :class:`ConcavityError` on the first violation.
    """
    lo = model.z_range[0] if z_lo is None else z_lo
    hi = model.z_range[1] if z_hi is None else z_hi
    if thetas is None:
        pts, _ = model.types.grid()
        idx = np.linspace(0, len(pts) - 1, min(7, len(pts))).astype(int)
        thetas = [float(pts[i]) for i in idx]
    zs = np.linspace(lo, hi, grid)
    fn = exprlang.compile_fn(model.receiver, ["z", "theta"])
    for th in thetas:
        vals = np.asarray(fn(zs, float(th)), dtype=float)
        second = vals[2:] - 2.0 * vals[1:-1] + vals[:-2]
        if not np.all(second < 0.0):
            raise ConcavityError(
                f"receiver payoff is not strictly concave in z at theta={th!r}"
            )


def posterior_ideal(
    model: RevisableModel, belief: Belief, audit: bool = True, tol: float = 1e-10
) -> float:
    """The receiver's uniquely optimal final action under ``belief``.

    Uses the declared closed form when present, otherwise a coarse scan of
    the working range followed by golden-section refinement. Raises if the
    scan cannot bracket an interior maximizer.
    """
    if audit:
        span = max(belief.points) - min(belief.points)
        lo = min(model.z_range[0], min(belief.points) - span)
        hi = max(model.z_range[1], max(belief.points) + span)
        audit_concavity(model, lo, hi, thetas=_sample(belief.points))
    if model.ideal_form is not None and model.ideal_form[0] == "affine":
        _, k, a = model.ideal_form
        return float(k) + float(a) * expect(lambda th: th, belief)
    fn = exprlang.compile_fn(model.receiver, ["z", "theta"])
    pts = np.array(belief.points)
    w = np.array(belief.weights)

    def value(z: float) -> float:
        return float(np.asarray(fn(z, pts), dtype=float) @ w)

    zs = np.linspace(model.z_range[0], model.z_range[1], 201)
    vals = np.array([value(z) for z in zs])
    i = int(np.argmax(vals))
    if i in (0, len(zs) - 1):
        raise ValueError(
            "posterior ideal search found no interior bracket; widen z_range"
        )
    z_star, _ = golden_max(value, float(zs[i - 1]), float(zs[i + 1]), tol)
    return float(z_star)


def _sample(points: Sequence[float], k: int = 7) -> list[float]:
    pts = sorted(set(float(p) for p in points))
    if len(pts) <= k:
        return pts
    idx = np.linspace(0, len(pts) - 1, k).astype(int)
    return [pts[i] for i in idx]


def feasible_final_interval(model: RevisableModel, x: float) -> tuple[float, float]:
    """Final actions reachable from baseline ``x`` under the revision bound."""
    if model.mode == "additive":
        return (x - model.alpha, x + model.alpha)
    if x < 0.0:
        raise ValueError("proportional revisions require a nonnegative baseline")
    return (model.eta_lo * x, model.eta_hi * x)


def endpoint_baseline(
    model: RevisableModel, z_target: float, r: float, tol: float = 1e-12
) -> tuple[float, float]:
    """Baseline and revision placing ``z_target`` at the receiver's optimum.

    A target below the posterior ideal sits at the upper endpoint of the
    feasible interval; above, at the lower endpoint; at the ideal, in the
    middle. Returns (baseline, revision); the revision is the additive
    step or the proportional factor, and baseline (+ or *) revision equals
    the target.
    """
    if model.mode == "additive":
        if abs(z_target - r) <= tol:
            return (z_target, 0.0)
        if z_target < r:
            return (z_target - model.alpha, model.alpha)
        return (z_target + model.alpha, -model.alpha)
    if z_target <= 0.0:
        raise ValueError("proportional placement requires a positive target")
    if abs(z_target - r) <= tol:
        if model.eta_lo <= 1.0 <= model.eta_hi:
            return (z_target, 1.0)
        # identity revision unavailable: park the target at the endpoint
        # nearer to one, keeping the whole interval weakly on one side of r
        if model.eta_hi < 1.0:
            return (z_target / model.eta_hi, model.eta_hi)
        return (z_target / model.eta_lo, model.eta_lo)
    if z_target < r:
        return (z_target / model.eta_hi, model.eta_hi)
    return (z_target / model.eta_lo, model.eta_lo)


# ---------------------------------------------------------------------------
# Discretized single-receiver game
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class GridGame:
    """Finite single-receiver game over a final-action grid.

    Baselines extend the z-grid by the revision bound on each side so that
    every endpoint placement stays on the baseline grid; feasible
    revisions keep the final action inside the z-grid.
    """

    model: RevisableModel
    z_values: tuple[float, ...]
    alpha_steps: int
    env: Environment
    x_values: tuple[float, ...]
    rev_values: tuple[float, ...]

    @property
    def step(self) -> float:
        return self.z_values[1] - self.z_values[0]

    def x_label(self, value: float) -> str:
        for i, v in enumerate(self.x_values):
            if abs(v - value) <= 1e-9:
                return f"b{i}"
        raise KeyError(f"baseline {value!r} is not on the grid")

    def rev_label(self, value: float) -> str:
        for i, v in enumerate(self.rev_values):
            if abs(v - value) <= 1e-9:
                return f"r{i}"
        raise KeyError(f"revision {value!r} is not on the grid")

    def final_of(self, x_label: str, rev_label: str) -> float:
        x = self.x_values[int(x_label[1:])]
        r = self.rev_values[int(rev_label[1:])]
        return x + r


def build_grid_game(
    model: RevisableModel, z_values: Sequence[float], alpha_steps: int
) -> GridGame:
    """Discretize an additive revisable model on an evenly spaced z-grid."""
    if model.mode != "additive":
        raise ValueError("grid games support the additive revision mode")
    if model.types.kind != "finite":
        raise ValueError("grid games need a finite type space")
    z = tuple(float(v) for v in z_values)
    if len(z) < 2:
        raise ValueError("need at least two final actions")
    h = z[1] - z[0]
    if not all(abs((z[i + 1] - z[i]) - h) <= 1e-9 for i in range(len(z) - 1)):
        raise ValueError("final-action grid must be evenly spaced")
    m = int(alpha_steps)
    if m < 0:
        raise ValueError("alpha_steps must be nonnegative")
    alpha = m * h
    if abs(model.alpha - alpha) > 1e-9:
        model = RevisableModel(
            mode="additive", sender=model.sender, receiver=model.receiver,
            types=model.types, alpha=alpha, z_range=model.z_range,
            ideal_form=model.ideal_form,
        )
    xs = tuple(z[0] + h * k for k in range(-m, len(z) + m))
    revs = tuple(h * k for k in range(-m, m + 1))
    x_actions = tuple(ActionValue(f"b{i}", v) for i, v in enumerate(xs))
    y_actions = tuple(ActionValue(f"r{i}", v) for i, v in enumerate(revs))
    feasible = {}
    for i, x in enumerate(xs):
        ok = tuple(
            f"r{k}"
            for k, r in enumerate(revs)
            if any(abs(x + r - zv) <= 1e-9 for zv in z)
        )
        feasible[f"b{i}"] = ok
    spec = PrincipalSpec(
        contractible=x_actions, noncontractible=y_actions, feasible=feasible
    )
    u_expr = _subst_z(model.sender, exprlang.Bin("+", exprlang.Var("x"), exprlang.Var("y")))
    v_expr = _subst_z(model.receiver, exprlang.Bin("+", exprlang.Var("x"), exprlang.Var("y")))
    env = Environment(
        types=model.types,
        principals=(spec,),
        payoffs=PayoffModel.from_expressions(u_expr, [v_expr]),
        observability="public",
        optout=False,  # the sender always messages in this model
    )
    return GridGame(
        model=model, z_values=z, alpha_steps=m, env=env, x_values=xs, rev_values=revs
    )


@dataclass(frozen=True, slots=True)
class FinalAllocation:
    """Per-type finitely supported distribution over final actions."""

    entries: Mapping[str, tuple[tuple[float, float], ...]]  # type -> ((z, prob), ...)

    def key(self, digits: int = 10) -> tuple:
        out = []
        for label in sorted(self.entries):
            dist = tuple(
                sorted(
                    (round(z, digits), round(p, digits))
                    for z, p in self.entries[label]
                    if round(p, digits) != 0.0
                )
            )
            out.append((label, dist))
        return tuple(out)


def final_allocation_of(game: GridGame, alloc: Allocation) -> FinalAllocation:
    """Collapse an action-pair allocation to final actions z = x + revision."""
    entries = {}
    for label, dist in alloc.entries.items():
        acc: dict[float, float] = {}
        for outcome, p in dist:
            if outcome == "opt-out":
                raise ValueError("revisable games have no outside option")
            (x_lab, y_lab), = outcome  # single receiver
            zv = round(game.final_of(x_lab, y_lab), 12)
            acc[zv] = acc.get(zv, 0.0) + p
        entries[label] = tuple(sorted(acc.items()))
    return FinalAllocation(entries)


def _message_posteriors(game: GridGame, assessment: Assessment):
    """On-path posterior weight vectors keyed by message label."""
    env = game.env
    T = len(env.types.labels)
    mu = env.types.weights
    post: dict[str, np.ndarray] = {}
    for t, lab in enumerate(env.types.labels):
        for outcome, prob in assessment.strategy[lab]:
            if prob == 0.0:
                continue
            msg = outcome[0]
            vec = post.setdefault(msg, np.zeros(T))
            vec[t] += mu[t] * prob
    return {m: v / v.sum() for m, v in post.items()}


def collapse_to_full(game: GridGame, assessment: Assessment):
    """Convert a limited-model assessment to the alpha = 0 model.

    Each message's baseline becomes the final action it induced and the
    revision is zeroed; the final-action allocation is unchanged.
    """
    env = game.env
    mech = assessment.contracts[0]
    cont = assessment.continuation[0]
    finals: dict[str, float] = {}
    for msg in mech.messages:
        y_lab = cont[(msg.label,)]
        finals[msg.label] = game.final_of(msg.action, y_lab)

    game0 = build_grid_game(
        RevisableModel(
            mode="additive", sender=game.model.sender, receiver=game.model.receiver,
            types=game.model.types, alpha=0.0, z_range=game.model.z_range,
            ideal_form=game.model.ideal_form,
        ),
        game.z_values,
        0,
    )
    menu = sorted({game0.x_label(z) for z in finals.values()}, key=lambda s: int(s[1:]))
    mech0 = menu_rec(game0.env, 0, menu)
    zero = game0.rev_label(0.0)
    recode = {m: f"{game0.x_label(z)}|{zero}" for m, z in finals.items()}

    strategy = {}
    for lab, dist in assessment.strategy.items():
        acc: dict[tuple[str, ...], float] = {}
        for outcome, prob in dist:
            new = (recode[outcome[0]],)
            acc[new] = acc.get(new, 0.0) + prob
        strategy[lab] = tuple(sorted(acc.items()))

    old_beliefs = assessment.beliefs.public[0]
    labels = game0.env.types.labels
    onpath = {}
    mu = game0.env.types.weights
    T = len(labels)
    for t, lab in enumerate(labels):
        for outcome, prob in strategy[lab]:
            if prob > 0:
                vec = onpath.setdefault(outcome[0], np.zeros(T))
                vec[t] += mu[t] * prob
    beliefs = {}
    continuation = {}
    for msg in mech0.messages:
        prof = (msg.label,)
        continuation[prof] = zero
        if msg.label in onpath:
            vec = onpath[msg.label]
            beliefs[prof] = tuple(float(x) for x in vec / vec.sum())
        else:
            src = next(m for m, new in recode.items() if new == msg.label)
            beliefs[prof] = tuple(old_beliefs[(src,)])
    new = Assessment(
        contracts=(mech0,),
        strategy=strategy,
        continuation={0: continuation},
        beliefs=BeliefSystem(
            mode="public", public={0: beliefs}, offpath=assessment.beliefs.offpath
        ),
    )
    return game0, new


def lift_to_limited(game0: GridGame, assessment: Assessment, alpha_steps: int):
    """Convert a full-commitment assessment to the limited model.

    Places each message's final action at the appropriate endpoint of the
    revision window around the new baseline, using the posterior ideal at
    the message's belief; verifies the constrained receiver optimum on a
    101-point scan of the feasible interval.
    """
    model = game0.model
    audit_concavity(model)
    game_a = build_grid_game(model, game0.z_values, alpha_steps)
    mech0 = assessment.contracts[0]
    old_beliefs = assessment.beliefs.public[0]
    labels = game0.env.types.labels

    placements: dict[str, tuple[float, float, tuple[float, ...]]] = {}
    for msg in mech0.messages:
        z = game0.x_values[int(msg.action[1:])]
        bel_vec = old_beliefs[(msg.label,)]
        belief = Belief(
            tuple(float(v) for v in game0.env.types.values),
            tuple(float(w) for w in bel_vec),
            labels,
        )
        r = posterior_ideal(model, belief, audit=False)
        x_hat, rev = endpoint_baseline(
            RevisableModel(
                mode="additive", sender=model.sender, receiver=model.receiver,
                types=model.types, alpha=game_a.model.alpha,
                z_range=model.z_range, ideal_form=model.ideal_form,
            ),
            z,
            r,
        )
        lo, hi = x_hat - game_a.model.alpha, x_hat + game_a.model.alpha
        scan = np.linspace(lo, hi, 101)
        vals = np.array([model.receiver_expectation(float(s), belief) for s in scan])
        z_best = float(scan[int(np.argmax(vals))])
        step = (hi - lo) / 100.0 if hi > lo else 1.0
        if abs(z_best - z) > step + 1e-9:
            raise ValueError(
                f"endpoint placement failed: constrained optimum {z_best!r} != {z!r}"
            )
        placements[msg.label] = (x_hat, rev, bel_vec)

    menu = sorted(
        {game_a.x_label(x) for x, _, _ in placements.values()}, key=lambda s: int(s[1:])
    )
    mech_a = menu_rec(game_a.env, 0, menu)
    recode = {
        m: f"{game_a.x_label(x)}|{game_a.rev_label(rev)}"
        for m, (x, rev, _) in placements.items()
    }

    strategy = {}
    for lab, dist in assessment.strategy.items():
        acc: dict[tuple[str, ...], float] = {}
        for outcome, prob in dist:
            new = (recode[outcome[0]],)
            acc[new] = acc.get(new, 0.0) + prob
        strategy[lab] = tuple(sorted(acc.items()))

    by_new = {new: old for old, new in recode.items()}
    selector: dict[str, str] = {}
    for msg in mech_a.messages:
        if msg.label in by_new:
            selector.setdefault(msg.action, msg.label)
    continuation = {}
    beliefs = {}
    for msg in mech_a.messages:
        prof = (msg.label,)
        if msg.label in by_new:
            continuation[prof] = msg.recommendation
            beliefs[prof] = tuple(placements[by_new[msg.label]][2])
        else:
            ref = selector[msg.action]
            continuation[prof] = ref.split("|", 1)[1]
            beliefs[prof] = tuple(placements[by_new[ref]][2])
    new = Assessment(
        contracts=(mech_a,),
        strategy=strategy,
        continuation={0: continuation},
        beliefs=BeliefSystem(
            mode="public", public={0: beliefs}, offpath=assessment.beliefs.offpath
        ),
    )
    return game_a, new


# ---------------------------------------------------------------------------
# Exhaustive desk-scale enumeration of final-action allocation sets
# ---------------------------------------------------------------------------


def _partitions(items: Sequence[int]):
    """All set partitions, blocks ordered by smallest element."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]


def enumerate_final_allocations(
    game: GridGame, tol: float = 1e-9, validate: bool = True, cap: int = 5_000_000
) -> dict[tuple, tuple[FinalAllocation, Assessment]]:
    """All pure continuation-equilibrium final allocations of the grid game.

    Enumerates type partitions with one message per block, keeping only
    receiver-optimal recommendations per block posterior and agent-optimal
    block assignments; off-path recommendations copy the behavior of the
    first block sharing the baseline, so deviations duplicate on-path
    final actions. Every found equilibrium is re-validated by the generic
    continuation checker when ``validate`` is set. Raises when the grid
    implies more block-assignment candidates than ``cap``.
    """
    env = game.env
    labels = env.types.labels
    thetas = env.types.values
    mu = env.types.weights
    T = len(labels)
    Z = np.array(game.z_values)
    u_fn = exprlang.compile_fn(game.model.sender, ["z", "theta"])
    v_fn = exprlang.compile_fn(game.model.receiver, ["z", "theta"])
    u_tab = np.asarray(u_fn(Z[:, None], thetas[None, :]), dtype=float)  # |Z| x T
    v_tab = np.asarray(v_fn(Z[:, None], thetas[None, :]), dtype=float)

    z_index = {round(z, 12): i for i, z in enumerate(game.z_values)}
    windows: list[list[int]] = []
    for x in game.x_values:
        win = [
            z_index[round(x + r, 12)]
            for r in game.rev_values
            if round(x + r, 12) in z_index
        ]
        windows.append(sorted(set(win)))

    found: dict[tuple, tuple[FinalAllocation, Assessment]] = {}
    candidates = 0
    for part in _partitions(list(range(T))):
        # per block: receiver-optimal final actions per baseline
        options: list[list[tuple[int, int]]] = []  # (x index, z index)
        for block in part:
            w = np.array([mu[t] if t in block else 0.0 for t in range(T)])
            w = w / w.sum()
            vbar = v_tab @ w  # value of each z under the block posterior
            opts = []
            for xi, win in enumerate(windows):
                if not win:
                    continue
                best = max(vbar[zi] for zi in win)
                for zi in win:
                    if vbar[zi] >= best - tol:
                        opts.append((xi, zi))
            options.append(opts)
        size = 1
        for opts in options:
            size *= len(opts)
        candidates += size
        if candidates > cap:
            raise ValueError(
                f"grid caps exceeded: more than {cap} block-assignment candidates"
            )
        for combo in itertools.product(*options):
            if len(set(combo)) != len(combo):
                continue
            # agent optimality: each type's assigned z beats every used z
            z_of_type = np.empty(T, dtype=int)
            for block, (xi, zi) in zip(part, combo):
                for t in block:
                    z_of_type[t] = zi
            used = sorted(set(zi for _, zi in combo))
            ok = True
            for t in range(T):
                best = max(u_tab[zi, t] for zi in used)
                if u_tab[z_of_type[t], t] < best - tol:
                    ok = False
                    break
            if not ok:
                continue
            fa = FinalAllocation(
                {labels[t]: ((float(Z[z_of_type[t]]), 1.0),) for t in range(T)}
            )
            key = fa.key()
            if key in found:
                continue
            assessment = _assessment_from_blocks(game, part, combo)
            if validate:
                report = check_continuation(env, assessment, tol)
                if not report.passed:
                    raise AssertionError(
                        "partition enumeration produced an invalid equilibrium; "
                        f"worst violations: {report.agent_worst} {report.principal_worst}"
                    )
            found[key] = (fa, assessment)
    return found


def _assessment_from_blocks(game: GridGame, part, combo) -> Assessment:
    env = game.env
    labels = env.types.labels
    mu = env.types.weights
    T = len(labels)
    msg_of_block = []
    for xi, zi in combo:
        rev = game.z_values[zi] - game.x_values[xi]
        msg_of_block.append(f"b{xi}|{game.rev_label(rev)}")
    menu = sorted({f"b{xi}" for xi, _ in combo}, key=lambda s: int(s[1:]))
    mech = menu_rec(env, 0, menu)

    strategy = {}
    for block, msg in zip(part, msg_of_block):
        for t in block:
            strategy[labels[t]] = (((msg,), 1.0),)

    posteriors: dict[str, tuple[float, ...]] = {}
    for block, msg in zip(part, msg_of_block):
        w = np.array([mu[t] if t in block else 0.0 for t in range(T)])
        posteriors[msg] = tuple(float(x) for x in w / w.sum())

    selector: dict[str, str] = {}
    for msg in msg_of_block:
        selector.setdefault(msg.split("|", 1)[0], msg)

    continuation = {}
    beliefs = {}
    for m in mech.messages:
        prof = (m.label,)
        if m.label in posteriors:
            continuation[prof] = m.recommendation
            beliefs[prof] = posteriors[m.label]
        else:
            ref = selector[m.action]
            continuation[prof] = ref.split("|", 1)[1]
            beliefs[prof] = posteriors[ref]
    return Assessment(
        contracts=(mech,),
        strategy=strategy,
        continuation={0: continuation},
        beliefs=BeliefSystem(mode="public", public={0: beliefs}, offpath="selector"),
    )


@dataclass(frozen=True, slots=True)
class GammaReport:
    equal: bool
    n_limited: int
    n_full: int
    only_limited: tuple
    only_full: tuple
    transforms_ok: bool
    lift_failures: int
    collapse_failures: int
    limited: tuple[FinalAllocation, ...]
    full: tuple[FinalAllocation, ...]


def check_gamma_equal(
    model: RevisableModel,
    z_values: Sequence[float],
    alpha_steps: int,
    tol: float = 1e-9,
) -> GammaReport:
    """Exhaustively verify that bounded revision is allocation-neutral.

    Enumerates the final-action allocation sets of the limited
    (``alpha_steps`` grid steps of discretion) and full-commitment models
    and checks set equality; additionally lifts every full-commitment
    equilibrium and collapses every limited one, re-checking each
    transformed assessment in its target model.
    """
    game_a = build_grid_game(model, z_values, alpha_steps)
    game_0 = build_grid_game(model, z_values, 0)
    lim = enumerate_final_allocations(game_a, tol)
    full = enumerate_final_allocations(game_0, tol)
    only_lim = tuple(sorted(set(lim) - set(full), key=repr))
    only_full = tuple(sorted(set(full) - set(lim), key=repr))

    lift_failures = 0
    for key, (fa, assessment) in full.items():
        try:
            g2, lifted = lift_to_limited(game_0, assessment, alpha_steps)
            rep = check_continuation(g2.env, lifted, tol)
            fa2 = final_allocation_of(g2, rep.allocation)
            if not rep.passed or fa2.key() != key:
                lift_failures += 1
        except (ValueError, ConcavityError):
            lift_failures += 1
    collapse_failures = 0
    for key, (fa, assessment) in lim.items():
        try:
            g2, collapsed = collapse_to_full(game_a, assessment)
            rep = check_continuation(g2.env, collapsed, tol)
            fa2 = final_allocation_of(g2, rep.allocation)
            if not rep.passed or fa2.key() != key:
                collapse_failures += 1
        except (ValueError, ConcavityError):
            collapse_failures += 1

    return GammaReport(
        equal=not only_lim and not only_full,
        n_limited=len(lim),
        n_full=len(full),
        only_limited=only_lim,
        only_full=only_full,
        transforms_ok=lift_failures == 0 and collapse_failures == 0,
        lift_failures=lift_failures,
        collapse_failures=collapse_failures,
        limited=tuple(fa for fa, _ in lim.values()),
        full=tuple(fa for fa, _ in full.values()),
    )


# ---------------------------------------------------------------------------
# Quadratic-delegation closed forms
# ---------------------------------------------------------------------------


def ms_thresholds(k: float, a: float) -> tuple[float, float, bool]:
    """Ceiling/floor thresholds of the sender-optimal quadratic rule.

    Sender wants z = theta on [0, 1]; receiver wants z = k + a*theta with
    a in (0, 1). Returns (theta1, theta2, valid) where ``valid`` records
    the bias condition k in (-a/2, 1 - a/2) under which the rule below is
    the sender-optimal one.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("slope parameter must lie in (0, 1)")
    theta1 = max(0.0, 2.0 * k / (2.0 - a))
    theta2 = min((2.0 * k + a) / (2.0 - a), 1.0)
    valid = -a / 2.0 < k < 1.0 - a / 2.0
    return theta1, theta2, valid


def ms_allocation(k: float, a: float, theta: float) -> float:
    """Sender-optimal final action: the type clamped to the threshold band."""
    theta1, theta2, _ = ms_thresholds(k, a)
    return min(max(theta, theta1), theta2)


def ms_model(k: float, a: float, grid_points: int = 1025) -> RevisableModel:
    """Quadratic delegation model on uniform [0, 1] types."""
    sender = "-(z-theta)^2"
    receiver = f"-(z-({k!r})-({a!r})*theta)^2"
    return RevisableModel.additive(
        sender, receiver,
        TypeSpace.interval(0.0, 1.0, grid_points=grid_points),
        alpha=0.0,
        z_range=(-2.0, 3.0),
        ideal_form=("affine", float(k), float(a)),
    )


def ms_lift_check(
    k: float, a: float, alpha: float, theta_grid: int = 101
) -> dict[str, float]:
    """Endpoint-placement audit of the quadratic sender-optimal rule.

    For each grid type, lifts the target final action with revision bound
    ``alpha`` at the belief its message carries (point mass on the
    separating band, the pooled interval at the edges) and verifies that
    the constrained receiver optimum over the feasible interval recovers
    the target within the 101-point scan resolution. Returns the worst
    absolute deviation and the scan step.
    """
    theta1, theta2, valid = ms_thresholds(k, a)
    if not valid:
        raise ValueError("bias outside the validity band of the closed form")
    base = ms_model(k, a)
    model = RevisableModel(
        mode="additive", sender=base.sender, receiver=base.receiver,
        types=base.types, alpha=alpha, z_range=base.z_range,
        ideal_form=base.ideal_form,
    )

    def pooled_belief(lo: float, hi: float) -> Belief:
        pts = np.linspace(lo, hi, 201)
        h = (hi - lo) / 200.0
        coef = np.ones(201)
        coef[1:-1:2] = 4.0
        coef[2:-1:2] = 2.0
        w = coef * h / 3.0
        return Belief(tuple(map(float, pts)), tuple(map(float, w / w.sum())))

    worst = 0.0
    for theta in np.linspace(0.0, 1.0, theta_grid):
        z = ms_allocation(k, a, float(theta))
        if theta < theta1 and theta1 > 0.0:
            belief = pooled_belief(0.0, theta1)
        elif theta > theta2 and theta2 < 1.0:
            belief = pooled_belief(theta2, 1.0)
        else:
            belief = Belief.point_mass(float(theta))
        r = posterior_ideal(model, belief, audit=False)
        x_hat, _rev = endpoint_baseline(model, z, r)
        lo, hi = feasible_final_interval(model, x_hat)
        scan = np.linspace(lo, hi, 101)
        vals = np.array([model.receiver_expectation(float(s), belief) for s in scan])
        z_best = float(scan[int(np.argmax(vals))])
        worst = max(worst, abs(z_best - z))
    return {"worst_deviation": worst, "scan_step": (2.0 * alpha) / 100.0}
