"""Continuation- and robust-equilibrium verification and enumeration.

Works on finite environments with an installed contract profile (one
mechanism per principal). Two observability modes:

* public: principals observe the full message profile; continuation
  strategies and beliefs are keyed by message profiles;
* private: each principal observes only the message sent to him;
  continuation strategies are keyed by own messages and beliefs are
  joint weights over (type, other principals' messages).

A continuation equilibrium requires Bayes-consistent beliefs, agent
optimality with interim participation (the agent's payoff must weakly
beat the outside option and every message profile), and posterior
optimality of every principal's discretionary choice after every
message. The no-safe-deviation test treats a contract deviation as
defeating an assessment only when every continuation equilibrium after
the deviation strictly improves the deviator.

All search operations walk a declared finite space (pure agent
strategies, pure continuation choices, off-path beliefs drawn from a
finite policy menu) and are deterministic for any thread count.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .contracts import Mechanism, image, menu_rec
from .env_core import (
    OPT_OUT,
    Allocation,
    Environment,
    ProfileKey,
    payoff_u,
    payoff_v,
)

__all__ = [
    "Assessment",
    "BeliefSystem",
    "EquilibriumReport",
    "SearchOptions",
    "SearchSpaceError",
    "FoundEquilibrium",
    "RobustReport",
    "DeviationFinding",
    "build_assessment",
    "bayes_update",
    "check_continuation",
    "induced_allocation",
    "principal_value",
    "principal_state_values",
    "enumerate_equilibria",
    "check_robust",
    "private_post_deviation_values",
    "canonicalize",
]

OFFPATH_POLICIES = ("prior", "lowest-type", "highest-type", "selector")

StrategyMap = Mapping[str, tuple[tuple[tuple[str, ...] | str, float], ...]]


class SearchSpaceError(RuntimeError):
    """The declared search space exceeds the configured cap."""


@dataclass(frozen=True, slots=True)
class BeliefSystem:
    """Posterior beliefs, public or private.

    ``public`` maps principal index -> message-label profile -> weight
    vector over types. ``private`` maps principal index -> own message
    label -> weights over (type label, other principals' message labels).
    """

    mode: str
    public: Mapping[int, Mapping[tuple[str, ...], tuple[float, ...]]] | None = None
    private: (
        Mapping[int, Mapping[str, Mapping[tuple[str, tuple[str, ...]], float]]] | None
    ) = None
    offpath: str = "prior"


@dataclass(frozen=True, slots=True)
class Assessment:
    """Contract profile plus agent strategy, continuation play, and beliefs."""

    contracts: tuple[Mechanism, ...]
    strategy: StrategyMap
    continuation: Mapping[int, Mapping]  # public: profile->y; private: message->y
    beliefs: BeliefSystem


@dataclass(frozen=True, slots=True)
class EquilibriumReport:
    bayes_ok: bool
    bayes_gap: float
    agent_ok: bool
    agent_worst: tuple | None  # (type label, deviation profile, gap)
    principal_ok: bool
    principal_worst: tuple | None  # (principal, where, deviation y, gap)
    values: tuple[float, ...]
    allocation: Allocation
    ties: tuple = ()

    @property
    def passed(self) -> bool:
        return self.bayes_ok and self.agent_ok and self.principal_ok


@dataclass(frozen=True, slots=True)
class SearchOptions:
    tol: float = 1e-9
    policies: tuple[str, ...] = ("prior",)
    mixing: str = "pure"  # "pure" | "two-point"
    mix_step: float = 0.125
    cap: int = 5_000_000
    threads: int = 1


@dataclass(frozen=True, slots=True)
class FoundEquilibrium:
    assessment: Assessment
    allocation: Allocation
    values: tuple[float, ...]


@dataclass(frozen=True, slots=True)
class DeviationFinding:
    principal: int
    deviation: Mechanism
    outcome: str  # "safe-profitable" | "deterred" | "no-continuation-equilibrium"
    worst_value: float | None  # lowest post-deviation value for the deviator
    best_value: float | None
    gain: float | None  # worst_value - equilibrium value when safe-profitable


@dataclass(frozen=True, slots=True)
class RobustReport:
    passed: bool
    base: EquilibriumReport
    findings: tuple[DeviationFinding, ...]


# ---------------------------------------------------------------------------
# Internal finite-game view of (environment, contracts)
# ---------------------------------------------------------------------------


class _Game:
    def __init__(self, env: Environment, contracts: Sequence[Mechanism]):
        if len(contracts) != env.n:
            raise ValueError("one contract per principal required")
        for j, c in enumerate(contracts):
            if c.principal != j:
                raise ValueError(f"contract at slot {j} is for principal {c.principal}")
        self.env = env
        self.contracts = tuple(contracts)
        self.mode = env.observability
        self.t_labels = env.types.labels
        self.t_values = env.types.values
        self.mu = env.types.weights
        self.T = len(self.t_labels)
        self.n = env.n
        self.msg_labels = [c.labels for c in contracts]
        self.msg_action = [tuple(m.action for m in c.messages) for c in contracts]
        self.msg_rec = [tuple(m.recommendation for m in c.messages) for c in contracts]
        self.feas = [
            tuple(env.principals[j].feasible[a] for a in self.msg_action[j])
            for j in range(self.n)
        ]
        self.sizes = [len(c.messages) for c in contracts]
        self.profiles = list(itertools.product(*[range(s) for s in self.sizes]))
        self.profile_index = {p: i for i, p in enumerate(self.profiles)}
        # first message of each contract carrying a given action
        self.selector = []
        for j in range(self.n):
            sel: dict[str, int] = {}
            for i, a in enumerate(self.msg_action[j]):
                sel.setdefault(a, i)
            self.selector.append(sel)
        self.U = np.array([env.outside_option(v) for v in self.t_values])
        self._pay: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    def profile_labels(self, prof: tuple[int, ...]) -> tuple[str, ...]:
        return tuple(self.msg_labels[j][m] for j, m in enumerate(prof))

    def profile_from_labels(self, labels: Sequence[str]) -> tuple[int, ...]:
        return tuple(self.msg_labels[j].index(lab) for j, lab in enumerate(labels))

    def action_key(self, prof: tuple[int, ...], ys: tuple[str, ...]) -> ProfileKey:
        return tuple(
            (self.msg_action[j][prof[j]], ys[j]) for j in range(self.n)
        )

    def payoffs(self, prof: tuple[int, ...], ys: tuple[str, ...]):
        """(agent payoff vector over types, principal payoff matrix n x T)."""
        key = (prof, ys)
        hit = self._pay.get(key)
        if hit is not None:
            return hit
        pk = self.action_key(prof, ys)
        u = np.array([payoff_u(self.env, pk, v) for v in self.t_values])
        v = np.array(
            [[payoff_v(self.env, j, pk, tv) for tv in self.t_values] for j in range(self.n)]
        )
        self._pay[key] = (u, v)
        return u, v

    def rest_profiles(self, j: int) -> list[tuple[int, ...]]:
        return list(
            itertools.product(*[range(self.sizes[k]) for k in range(self.n) if k != j])
        )

    @staticmethod
    def merge(j: int, mj: int, rest: tuple[int, ...]) -> tuple[int, ...]:
        return rest[:j] + (mj,) + rest[j:]


def _normalize_strategy(game: _Game, strategy: StrategyMap):
    """Strategy as dict: type index -> list of (profile tuple | None, prob)."""
    out: dict[int, list[tuple[tuple[int, ...] | None, float]]] = {}
    for t, lab in enumerate(game.t_labels):
        if lab not in strategy:
            raise ValueError(f"strategy missing type {lab!r}")
        dist = []
        total = 0.0
        for outcome, prob in strategy[lab]:
            total += prob
            if outcome == OPT_OUT:
                dist.append((None, float(prob)))
            else:
                dist.append((game.profile_from_labels(outcome), float(prob)))
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"strategy for type {lab!r} has mass {total!r}")
        out[t] = dist
    return out


# ---------------------------------------------------------------------------
# Bayes updating and off-path policies
# ---------------------------------------------------------------------------


def _joint(game: _Game, q) -> dict[tuple[int, ...], np.ndarray]:
    """Joint mass over (type, message profile); opt-out mass is dropped."""
    joint: dict[tuple[int, ...], np.ndarray] = {}
    for t, dist in q.items():
        for prof, prob in dist:
            if prof is None or prob == 0.0:
                continue
            vec = joint.setdefault(prof, np.zeros(game.T))
            vec[t] += game.mu[t] * prob
    return joint


def _policy_type_vector(game: _Game, policy: str) -> np.ndarray:
    if policy == "lowest-type":
        vec = np.zeros(game.T)
        vec[int(np.argmin(game.t_values))] = 1.0
        return vec
    if policy == "highest-type":
        vec = np.zeros(game.T)
        vec[int(np.argmax(game.t_values))] = 1.0
        return vec
    total = float(game.mu.sum())
    return game.mu / total


def _public_beliefs(game: _Game, q, policy: str):
    """Belief vector over types for every message profile."""
    joint = _joint(game, q)
    out: dict[tuple[int, ...], np.ndarray] = {}
    onpath: dict[tuple[int, ...], np.ndarray] = {}
    for prof, vec in joint.items():
        mass = float(vec.sum())
        if mass > 0.0:
            onpath[prof] = vec / mass
    fallback = _policy_type_vector(game, policy)
    for prof in game.profiles:
        if prof in onpath:
            out[prof] = onpath[prof]
        elif policy == "selector":
            ref = tuple(
                game.selector[j][game.msg_action[j][prof[j]]] for j in range(game.n)
            )
            out[prof] = onpath.get(ref, game.mu / float(game.mu.sum()))
        else:
            out[prof] = fallback
    return out


def _participation_rest(game: _Game, q, j: int):
    """Per type: conditional distribution over others' messages given participation."""
    out = []
    default_rest = tuple(0 for k in range(game.n) if k != j)
    for t in range(game.T):
        acc: dict[tuple[int, ...], float] = {}
        total = 0.0
        for prof, prob in q[t]:
            if prof is None or prob == 0.0:
                continue
            rest = tuple(prof[k] for k in range(game.n) if k != j)
            acc[rest] = acc.get(rest, 0.0) + prob
            total += prob
        if total > 0.0:
            out.append({r: p / total for r, p in acc.items()})
        else:
            out.append({default_rest: 1.0})
    return out


def _private_beliefs(game: _Game, q, j: int, policy: str):
    """Belief over (type, others' messages) for every own message of principal j."""
    onpath: dict[int, dict[tuple[int, tuple[int, ...]], float]] = {}
    mass: dict[int, float] = {}
    for t, dist in q.items():
        for prof, prob in dist:
            if prof is None or prob == 0.0:
                continue
            mj = prof[j]
            rest = tuple(prof[k] for k in range(game.n) if k != j)
            w = game.mu[t] * prob
            onpath.setdefault(mj, {})
            onpath[mj][(t, rest)] = onpath[mj].get((t, rest), 0.0) + w
            mass[mj] = mass.get(mj, 0.0) + w
    beliefs: dict[int, dict[tuple[int, tuple[int, ...]], float]] = {}
    for mj, acc in onpath.items():
        m = mass[mj]
        beliefs[mj] = {k: w / m for k, w in acc.items()}

    rest_given_part = _participation_rest(game, q, j)
    tvec = _policy_type_vector(game, policy)

    def offpath_for(mj: int):
        if policy == "selector":
            ref = game.selector[j].get(game.msg_action[j][mj])
            if ref is not None and ref in beliefs:
                return dict(beliefs[ref])
        out: dict[tuple[int, tuple[int, ...]], float] = {}
        for t in range(game.T):
            if tvec[t] == 0.0:
                continue
            for rest, p in rest_given_part[t].items():
                out[(t, rest)] = out.get((t, rest), 0.0) + tvec[t] * p
        return out

    for mj in range(game.sizes[j]):
        if mj not in beliefs:
            beliefs[mj] = offpath_for(mj)
    return beliefs


def bayes_update(
    game_env: Environment,
    contracts: Sequence[Mechanism],
    strategy: StrategyMap,
    offpath: str = "prior",
) -> BeliefSystem:
    """Posterior system from a messaging strategy.

    On-path entries follow Bayes' rule; off-path entries come from the
    named policy ("prior", "lowest-type", "highest-type", "selector").
    """
    if offpath not in OFFPATH_POLICIES:
        raise ValueError(f"unknown off-path policy {offpath!r}")
    game = _Game(game_env, contracts)
    q = _normalize_strategy(game, strategy)
    if game.mode == "public":
        pub: dict[int, dict[tuple[str, ...], tuple[float, ...]]] = {}
        table = _public_beliefs(game, q, offpath)
        shared = {
            game.profile_labels(prof): tuple(float(x) for x in vec)
            for prof, vec in table.items()
        }
        for j in range(game.n):
            pub[j] = dict(shared)
        return BeliefSystem(mode="public", public=pub, offpath=offpath)
    priv: dict[int, dict[str, dict]] = {}
    for j in range(game.n):
        table_j = _private_beliefs(game, q, j, offpath)
        priv[j] = {}
        for mj, weights in table_j.items():
            rest_labels = lambda rest: tuple(
                game.msg_labels[k][rest[i]]
                for i, k in enumerate(k for k in range(game.n) if k != j)
            )
            priv[j][game.msg_labels[j][mj]] = {
                (game.t_labels[t], rest_labels(rest)): float(w)
                for (t, rest), w in weights.items()
            }
    return BeliefSystem(mode="private", private=priv, offpath=offpath)


def build_assessment(
    env: Environment,
    contracts: Sequence[Mechanism],
    strategy: StrategyMap,
    continuation: str | Mapping[int, Mapping] = "recommendation",
    offpath: str = "prior",
    beliefs: BeliefSystem | None = None,
) -> Assessment:
    """Assemble an assessment, filling continuation play and beliefs.

    ``continuation`` is either an explicit map or the rule
    "recommendation" (each principal follows the recommendation carried by
    the message addressed to him; every message must carry one).
    """
    game = _Game(env, contracts)
    if isinstance(continuation, str):
        if continuation != "recommendation":
            raise ValueError(f"unknown continuation rule {continuation!r}")
        cont: dict[int, dict] = {}
        for j in range(game.n):
            recs = game.msg_rec[j]
            if any(r is None for r in recs):
                raise ValueError(
                    f"contract of principal {j} has messages without recommendations"
                )
            if game.mode == "private":
                cont[j] = {game.msg_labels[j][i]: recs[i] for i in range(game.sizes[j])}
            else:
                cont[j] = {
                    game.profile_labels(prof): recs[prof[j]] for prof in game.profiles
                }
    else:
        cont = {j: dict(m) for j, m in continuation.items()}
    if beliefs is None:
        beliefs = bayes_update(env, contracts, strategy, offpath)
    return Assessment(
        contracts=tuple(contracts),
        strategy={k: tuple(v) for k, v in strategy.items()},
        continuation=cont,
        beliefs=beliefs,
    )


# ---------------------------------------------------------------------------
# Checking
# ---------------------------------------------------------------------------


def _continuation_arrays(game: _Game, assessment: Assessment):
    """Continuation as index arrays: public profile->ys tuple, private per-j."""
    if game.mode == "public":
        gamma: dict[tuple[int, ...], tuple[str, ...]] = {}
        for prof in game.profiles:
            labs = game.profile_labels(prof)
            ys = []
            for j in range(game.n):
                try:
                    ys.append(assessment.continuation[j][labs])
                except KeyError:
                    raise ValueError(
                        f"continuation of principal {j} missing profile {labs!r}"
                    ) from None
            gamma[prof] = tuple(ys)
        return gamma
    per_msg: list[dict[int, str]] = []
    for j in range(game.n):
        table = assessment.continuation[j]
        col = {}
        for i, lab in enumerate(game.msg_labels[j]):
            if lab not in table:
                raise ValueError(f"continuation of principal {j} missing message {lab!r}")
            col[i] = table[lab]
        per_msg.append(col)
    gamma = {
        prof: tuple(per_msg[j][prof[j]] for j in range(game.n))
        for prof in game.profiles
    }
    return gamma


def _belief_vectors(game: _Game, assessment: Assessment):
    """Public belief vectors per (j, profile); private dicts per (j, message)."""
    if game.mode == "public":
        out: dict[tuple[int, tuple[int, ...]], np.ndarray] = {}
        for j in range(game.n):
            table = assessment.beliefs.public[j]
            for prof in game.profiles:
                labs = game.profile_labels(prof)
                vec = np.array(table[labs])
                out[(j, prof)] = vec
        return out
    out_p: dict[tuple[int, int], dict[tuple[int, tuple[int, ...]], float]] = {}
    for j in range(game.n):
        table = assessment.beliefs.private[j]
        others = [k for k in range(game.n) if k != j]
        for i, lab in enumerate(game.msg_labels[j]):
            raw = table[lab]
            conv: dict[tuple[int, tuple[int, ...]], float] = {}
            for (t_lab, rest_labs), w in raw.items():
                t = game.t_labels.index(t_lab)
                rest = tuple(
                    game.msg_labels[k].index(rl) for k, rl in zip(others, rest_labs)
                )
                conv[(t, rest)] = float(w)
            out_p[(j, i)] = conv
    return out_p


def check_continuation(
    env: Environment, assessment: Assessment, tol: float = 1e-9
) -> EquilibriumReport:
    """Exact verification of the three continuation-equilibrium conditions."""
    game = _Game(env, assessment.contracts)
    q = _normalize_strategy(game, assessment.strategy)
    gamma = _continuation_arrays(game, assessment)
    for prof, ys in gamma.items():
        for j in range(game.n):
            if ys[j] not in game.feas[j][prof[j]]:
                raise ValueError(
                    f"continuation action {ys[j]!r} infeasible for principal {j} "
                    f"at profile {game.profile_labels(prof)!r}"
                )
    beliefs = _belief_vectors(game, assessment)
    joint = _joint(game, q)

    # (i) Bayes consistency: prior-weighted posterior mass equals joint mass.
    bayes_gap = 0.0
    if game.mode == "public":
        for prof, vec in joint.items():
            mass = float(vec.sum())
            if mass <= 0.0:
                continue
            for j in range(game.n):
                p = beliefs[(j, prof)]
                bayes_gap = max(bayes_gap, float(np.max(np.abs(p * mass - vec))))
                bayes_gap = max(bayes_gap, abs(float(p.sum()) - 1.0))
    else:
        for j in range(game.n):
            mass_j: dict[int, float] = {}
            joint_j: dict[tuple[int, int, tuple[int, ...]], float] = {}
            for prof, vec in joint.items():
                mj = prof[j]
                rest = tuple(prof[k] for k in range(game.n) if k != j)
                mass_j[mj] = mass_j.get(mj, 0.0) + float(vec.sum())
                for t in range(game.T):
                    if vec[t] != 0.0:
                        key = (t, mj, rest)
                        joint_j[key] = joint_j.get(key, 0.0) + float(vec[t])
            for mj, m in mass_j.items():
                p = beliefs[(j, mj)]
                bayes_gap = max(bayes_gap, abs(sum(p.values()) - 1.0))
                keys = set(p) | {
                    (t, rest) for (t, mjj, rest) in joint_j if mjj == mj
                }
                for t, rest in keys:
                    lhs = p.get((t, rest), 0.0) * m
                    rhs = joint_j.get((t, mj, rest), 0.0)
                    bayes_gap = max(bayes_gap, abs(lhs - rhs))
    bayes_ok = bayes_gap <= tol

    # (ii) agent optimality with interim participation.
    agent_worst = None
    agent_gap = 0.0
    eq_pay = np.zeros(game.T)
    for t in range(game.T):
        total = 0.0
        for prof, prob in q[t]:
            if prof is None:
                total += prob * game.U[t]
            else:
                u, _ = game.payoffs(prof, gamma[prof])
                total += prob * float(u[t])
        eq_pay[t] = total
    for t in range(game.T):
        best = game.U[t] if env.optout else -np.inf
        best_where: tuple[str, ...] | str = OPT_OUT
        for prof in game.profiles:
            u, _ = game.payoffs(prof, gamma[prof])
            if float(u[t]) > best:
                best = float(u[t])
                best_where = game.profile_labels(prof)
        gap = best - eq_pay[t]
        if gap > agent_gap:
            agent_gap = gap
            agent_worst = (game.t_labels[t], best_where, float(gap))
    agent_ok = agent_gap <= tol

    # (iii) principal optimality after every message (profile).
    principal_worst = None
    principal_gap = 0.0
    ties: list[tuple] = []
    if game.mode == "public":
        for prof in game.profiles:
            ys = gamma[prof]
            for j in range(game.n):
                p = beliefs[(j, prof)]
                _, v = game.payoffs(prof, ys)
                lhs = float(p @ v[j])
                for y_dev in game.feas[j][prof[j]]:
                    if y_dev == ys[j]:
                        continue
                    alt = ys[:j] + (y_dev,) + ys[j + 1 :]
                    _, v_alt = game.payoffs(prof, alt)
                    rhs = float(p @ v_alt[j])
                    gap = rhs - lhs
                    if abs(gap) <= tol and gap <= tol:
                        ties.append((j, game.profile_labels(prof), y_dev))
                    if gap > principal_gap:
                        principal_gap = gap
                        principal_worst = (
                            j,
                            game.profile_labels(prof),
                            y_dev,
                            float(gap),
                        )
    else:
        # own-message continuation values via belief over (type, rest)
        cont_j = [
            {i: assessment.continuation[j][game.msg_labels[j][i]] for i in range(game.sizes[j])}
            for j in range(game.n)
        ]
        for j in range(game.n):
            others = [k for k in range(game.n) if k != j]
            for i in range(game.sizes[j]):
                p = beliefs[(j, i)]

                def value_of(y_j: str) -> float:
                    total = 0.0
                    for (t, rest), w in p.items():
                        if w == 0.0:
                            continue
                        prof = _Game.merge(j, i, rest)
                        ys = tuple(
                            y_j if k == j else cont_j[k][prof[k]] for k in range(game.n)
                        )
                        u, v = game.payoffs(prof, ys)
                        total += w * float(v[j][t])
                    return total

                lhs = value_of(cont_j[j][i])
                for y_dev in game.feas[j][i]:
                    if y_dev == cont_j[j][i]:
                        continue
                    rhs = value_of(y_dev)
                    gap = rhs - lhs
                    if abs(gap) <= tol and gap <= tol:
                        ties.append((j, game.msg_labels[j][i], y_dev))
                    if gap > principal_gap:
                        principal_gap = gap
                        principal_worst = (j, game.msg_labels[j][i], y_dev, float(gap))
    principal_ok = principal_gap <= tol

    alloc = induced_allocation(env, assessment)
    values = tuple(float(principal_value(env, assessment, j)) for j in range(game.n))
    return EquilibriumReport(
        bayes_ok=bool(bayes_ok),
        bayes_gap=float(bayes_gap),
        agent_ok=bool(agent_ok),
        agent_worst=agent_worst,
        principal_ok=bool(principal_ok),
        principal_worst=principal_worst,
        values=values,
        allocation=alloc,
        ties=tuple(ties),
    )


def induced_allocation(env: Environment, assessment: Assessment) -> Allocation:
    """Pushforward of the agent's strategy through contracts and continuation."""
    game = _Game(env, assessment.contracts)
    q = _normalize_strategy(game, assessment.strategy)
    gamma = _continuation_arrays(game, assessment)
    entries: dict[str, tuple] = {}
    for t, lab in enumerate(game.t_labels):
        acc: dict = {}
        for prof, prob in q[t]:
            if prob == 0.0:
                continue
            key = OPT_OUT if prof is None else game.action_key(prof, gamma[prof])
            acc[key] = acc.get(key, 0.0) + prob
        entries[lab] = tuple(sorted(acc.items(), key=lambda kv: repr(kv[0])))
    return Allocation(entries)


def principal_value(env: Environment, assessment: Assessment, j: int) -> float:
    """Principal ``j``'s ex ante payoff (opt-out yields zero)."""
    game = _Game(env, assessment.contracts)
    q = _normalize_strategy(game, assessment.strategy)
    gamma = _continuation_arrays(game, assessment)
    total = 0.0
    for t in range(game.T):
        for prof, prob in q[t]:
            if prof is None or prob == 0.0:
                continue
            _, v = game.payoffs(prof, gamma[prof])
            total += game.mu[t] * prob * float(v[j][t])
    return total


def principal_state_values(
    env: Environment, assessment: Assessment, j: int
) -> dict[str, float]:
    """Principal ``j``'s expected payoff conditional on each type."""
    game = _Game(env, assessment.contracts)
    q = _normalize_strategy(game, assessment.strategy)
    gamma = _continuation_arrays(game, assessment)
    out: dict[str, float] = {}
    for t, lab in enumerate(game.t_labels):
        total = 0.0
        for prof, prob in q[t]:
            if prof is None or prob == 0.0:
                continue
            _, v = game.payoffs(prof, gamma[prof])
            total += prob * float(v[j][t])
        out[lab] = total
    return out


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def _strategy_candidates(game: _Game, options: SearchOptions):
    """Iterate agent strategies: per type, (outcome, prob) lists over profiles."""
    outcomes: list[tuple[int, ...] | None] = list(game.profiles)
    if game.env.optout:
        outcomes.append(None)
    if options.mixing == "pure":
        per_type = [[((o, 1.0),) for o in outcomes] for _ in range(game.T)]
    elif options.mixing == "two-point":
        k = round(1.0 / options.mix_step)
        dists = [((o, 1.0),) for o in outcomes]
        for a_i in range(len(outcomes)):
            for b_i in range(a_i + 1, len(outcomes)):
                for step in range(1, k):
                    p = step / k
                    dists.append(((outcomes[a_i], p), (outcomes[b_i], 1.0 - p)))
        per_type = [list(dists) for _ in range(game.T)]
    else:
        raise ValueError(f"unknown mixing mode {options.mixing!r}")
    total = 1
    for col in per_type:
        total *= len(col)
    if total * max(1, len(options.policies)) > options.cap:
        raise SearchSpaceError(
            f"{total} strategy candidates exceed the cap of {options.cap}"
        )
    yield from itertools.product(*per_type)


def _posterior_from_q(game: _Game, qlist) -> dict:
    return {t: list(dist) for t, dist in enumerate(qlist)}


def _nash_sets(game: _Game, beliefs_pub, tol: float):
    """Per message profile: all y-profiles surviving every principal's check."""
    ne: dict[tuple[int, ...], list[tuple[str, ...]]] = {}
    for prof in game.profiles:
        feas_sets = [game.feas[j][prof[j]] for j in range(game.n)]
        values: dict[tuple[str, ...], np.ndarray] = {}
        for ys in itertools.product(*feas_sets):
            _, v = game.payoffs(prof, ys)
            values[ys] = v
        good = []
        for ys in itertools.product(*feas_sets):
            ok = True
            for j in range(game.n):
                p = beliefs_pub[prof]
                lhs = float(p @ values[ys][j])
                for y_dev in feas_sets[j]:
                    if y_dev == ys[j]:
                        continue
                    alt = ys[:j] + (y_dev,) + ys[j + 1 :]
                    if float(p @ values[alt][j]) > lhs + tol:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                good.append(ys)
        ne[prof] = good
    return ne


def _public_equilibria_for_q(game: _Game, qlist, policy: str, options: SearchOptions):
    """All (gamma, beliefs) completions of one agent strategy, public mode."""
    tol = options.tol
    q = _posterior_from_q(game, qlist)
    beliefs_pub = _public_beliefs(game, q, policy)
    ne = _nash_sets(game, beliefs_pub, tol)
    if any(not v for v in ne.values()):
        return
    onpath: list[tuple[int, ...]] = []
    seen = set()
    for t in range(game.T):
        for prof, prob in q[t]:
            if prof is not None and prob > 0.0 and prof not in seen:
                seen.add(prof)
                onpath.append(prof)
    offpath = [prof for prof in game.profiles if prof not in seen]

    combos = 1
    for prof in onpath:
        combos *= len(ne[prof])
    if combos > options.cap:
        raise SearchSpaceError(f"{combos} continuation combinations exceed the cap")

    for choice in itertools.product(*[ne[prof] for prof in onpath]):
        assign = dict(zip(onpath, choice))
        eq_pay = np.zeros(game.T)
        ok = True
        for t in range(game.T):
            total = 0.0
            for prof, prob in q[t]:
                if prof is None:
                    total += prob * game.U[t]
                else:
                    u, _ = game.payoffs(prof, assign[prof])
                    total += prob * float(u[t])
            eq_pay[t] = total
            if game.env.optout and eq_pay[t] < game.U[t] - tol:
                ok = False
                break
        if not ok:
            continue
        for prof in onpath:
            u, _ = game.payoffs(prof, assign[prof])
            if np.any(u > eq_pay + tol):
                ok = False
                break
        if not ok:
            continue
        full = dict(assign)
        for prof in offpath:
            pick = None
            for ys in ne[prof]:
                u, _ = game.payoffs(prof, ys)
                if not np.any(u > eq_pay + tol):
                    pick = ys
                    break
            if pick is None:
                ok = False
                break
            full[prof] = pick
        if not ok:
            continue
        yield q, full, beliefs_pub


def _private_equilibria_for_q(game: _Game, qlist, policy: str, options: SearchOptions):
    """All continuation completions of one agent strategy, private mode."""
    tol = options.tol
    q = _posterior_from_q(game, qlist)
    beliefs = [
        _private_beliefs(game, q, j, policy) for j in range(game.n)
    ]
    slots = [(j, i) for j in range(game.n) for i in range(game.sizes[j])]
    pools = [game.feas[j][i] for j, i in slots]
    combos = 1
    for p in pools:
        combos *= len(p)
    if combos > options.cap:
        raise SearchSpaceError(f"{combos} continuation combinations exceed the cap")
    for flat in itertools.product(*pools):
        cont = {}
        for (j, i), y in zip(slots, flat):
            cont.setdefault(j, {})[i] = y
        # principal optimality at every own message
        ok = True
        for j in range(game.n):
            for i in range(game.sizes[j]):
                p = beliefs[j][i]

                def value_of(y_j: str) -> float:
                    total = 0.0
                    for (t, rest), w in p.items():
                        if w == 0.0:
                            continue
                        prof = _Game.merge(j, i, rest)
                        ys = tuple(
                            y_j if k == j else cont[k][prof[k]] for k in range(game.n)
                        )
                        u, v = game.payoffs(prof, ys)
                        total += w * float(v[j][t])
                    return total

                lhs = value_of(cont[j][i])
                for y_dev in game.feas[j][i]:
                    if y_dev != cont[j][i] and value_of(y_dev) > lhs + tol:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if not ok:
            continue
        gamma = {
            prof: tuple(cont[j][prof[j]] for j in range(game.n))
            for prof in game.profiles
        }
        eq_pay = np.zeros(game.T)
        for t in range(game.T):
            total = 0.0
            for prof, prob in q[t]:
                if prof is None:
                    total += prob * game.U[t]
                else:
                    u, _ = game.payoffs(prof, gamma[prof])
                    total += prob * float(u[t])
            eq_pay[t] = total
        ok = not game.env.optout or bool(np.all(eq_pay >= game.U - tol))
        if ok:
            for prof in game.profiles:
                u, _ = game.payoffs(prof, gamma[prof])
                if np.any(u > eq_pay + tol):
                    ok = False
                    break
        if not ok:
            continue
        yield q, gamma, beliefs


def _assessment_from(game: _Game, q, gamma, beliefs_raw, policy: str) -> Assessment:
    strategy = {}
    for t, lab in enumerate(game.t_labels):
        dist = []
        for prof, prob in q[t]:
            outcome = OPT_OUT if prof is None else game.profile_labels(prof)
            dist.append((outcome, prob))
        strategy[lab] = tuple(dist)
    if game.mode == "public":
        cont = {
            j: {game.profile_labels(p): ys[j] for p, ys in gamma.items()}
            for j in range(game.n)
        }
        shared = {
            game.profile_labels(p): tuple(float(x) for x in vec)
            for p, vec in beliefs_raw.items()
        }
        bel = BeliefSystem(
            mode="public",
            public={j: dict(shared) for j in range(game.n)},
            offpath=policy,
        )
    else:
        cont = {}
        for j in range(game.n):
            col = {}
            for prof, ys in gamma.items():
                col[game.msg_labels[j][prof[j]]] = ys[j]
            cont[j] = col
        priv = {}
        for j in range(game.n):
            others = [k for k in range(game.n) if k != j]
            priv[j] = {
                game.msg_labels[j][i]: {
                    (
                        game.t_labels[t],
                        tuple(game.msg_labels[k][r] for k, r in zip(others, rest)),
                    ): float(w)
                    for (t, rest), w in beliefs_raw[j][i].items()
                }
                for i in range(game.sizes[j])
            }
        bel = BeliefSystem(mode="private", private=priv, offpath=policy)
    return Assessment(
        contracts=game.contracts, strategy=strategy, continuation=cont, beliefs=bel
    )


def enumerate_equilibria(
    env: Environment,
    contracts: Sequence[Mechanism],
    options: SearchOptions | None = None,
) -> list[FoundEquilibrium]:
    """Exhaustive continuation-equilibrium search over the declared space.

    The space is: pure agent strategies (optionally two-point mixtures on a
    probability grid), pure continuation choices, and off-path beliefs from
    the policy menu in ``options.policies``. Results are deduplicated by
    induced allocation and returned in a deterministic order.
    """
    options = options or SearchOptions()
    game = _Game(env, contracts)
    found: dict[tuple, FoundEquilibrium] = {}

    def run_chunk(job):
        policy, chunk = job
        rows = []
        for qlist in chunk:
            gen = (
                _public_equilibria_for_q(game, qlist, policy, options)
                if game.mode == "public"
                else _private_equilibria_for_q(game, qlist, policy, options)
            )
            for q, gamma, beliefs_raw in gen:
                a = _assessment_from(game, q, gamma, beliefs_raw, policy)
                alloc = induced_allocation(env, a)
                vals = tuple(principal_value(env, a, j) for j in range(game.n))
                rows.append((alloc.key(), FoundEquilibrium(a, alloc, vals)))
        return rows

    candidates = list(_strategy_candidates(game, options))
    if options.threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        size = max(1, len(candidates) // (options.threads * 4))
        jobs = [
            (policy, candidates[i : i + size])
            for policy in options.policies
            for i in range(0, len(candidates), size)
        ]
        with ThreadPoolExecutor(max_workers=options.threads) as ex:
            all_rows = list(ex.map(run_chunk, jobs))
    else:
        all_rows = [run_chunk((policy, candidates)) for policy in options.policies]
    # merge in deterministic job order, first hit per allocation wins
    for rows in all_rows:
        for key, fe in rows:
            if key not in found:
                found[key] = fe
    return [found[k] for k in sorted(found, key=repr)]


# ---------------------------------------------------------------------------
# Robustness
# ---------------------------------------------------------------------------


def private_post_deviation_values(
    env: Environment,
    assessment: Assessment,
    j: int,
    deviation: Mechanism,
    options: SearchOptions,
) -> list[float]:
    """Deviator values over admissible post-deviation continuations.

    Non-deviating principals keep their mechanisms, continuation
    strategies, and beliefs; only the agent's strategy, the deviator's
    continuation choice, and the deviator's Bayes-consistent beliefs are
    re-solved.
    """
    contracts = list(assessment.contracts)
    contracts[j] = deviation
    game = _Game(env, contracts)
    tol = options.tol
    frozen = [
        None
        if k == j
        else {
            i: assessment.continuation[k][game.msg_labels[k][i]]
            for i in range(game.sizes[k])
        }
        for k in range(game.n)
    ]
    values: list[float] = []
    for policy in options.policies:
        for qlist in _strategy_candidates(game, options):
            q = _posterior_from_q(game, qlist)
            p_j = _private_beliefs(game, q, j, policy)

            def value_of(i: int, y_j: str) -> float:
                total = 0.0
                for (t, rest), w in p_j[i].items():
                    if w == 0.0:
                        continue
                    prof = _Game.merge(j, i, rest)
                    ys = tuple(
                        y_j if k == j else frozen[k][prof[k]] for k in range(game.n)
                    )
                    u, v = game.payoffs(prof, ys)
                    total += w * float(v[j][t])
                return total

            br: list[list[str]] = []
            for i in range(game.sizes[j]):
                vals = [(value_of(i, y), y) for y in game.feas[j][i]]
                top = max(v for v, _ in vals)
                br.append([y for v, y in vals if v >= top - tol])

            onpath_own: list[int] = []
            seen = set()
            for t in range(game.T):
                for prof, prob in q[t]:
                    if prof is not None and prob > 0.0 and prof[j] not in seen:
                        seen.add(prof[j])
                        onpath_own.append(prof[j])
            offpath_own = [i for i in range(game.sizes[j]) if i not in seen]

            def gamma_for(choice: dict[int, str]):
                def g(prof):
                    return tuple(
                        choice[prof[j]] if k == j else frozen[k][prof[k]]
                        for k in range(game.n)
                    )

                return g

            for combo in itertools.product(*[br[i] for i in onpath_own]):
                choice = dict(zip(onpath_own, combo))
                g = gamma_for(choice)
                eq_pay = np.zeros(game.T)
                ok = True
                for t in range(game.T):
                    total = 0.0
                    for prof, prob in q[t]:
                        if prof is None:
                            total += prob * game.U[t]
                        else:
                            u, _ = game.payoffs(prof, g(prof))
                            total += prob * float(u[t])
                    eq_pay[t] = total
                    if game.env.optout and eq_pay[t] < game.U[t] - tol:
                        ok = False
                        break
                if not ok:
                    continue
                for prof in game.profiles:
                    if prof[j] in choice:
                        u, _ = game.payoffs(prof, g(prof))
                        if np.any(u > eq_pay + tol):
                            ok = False
                            break
                if not ok:
                    continue
                for o in offpath_own:
                    pick = None
                    for y in br[o]:
                        bad = False
                        for rest in game.rest_profiles(j):
                            prof = _Game.merge(j, o, rest)
                            ys = tuple(
                                y if k == j else frozen[k][prof[k]]
                                for k in range(game.n)
                            )
                            u, _ = game.payoffs(prof, ys)
                            if np.any(u > eq_pay + tol):
                                bad = True
                                break
                        if not bad:
                            pick = y
                            break
                    if pick is None:
                        ok = False
                        break
                    choice[o] = pick
                if not ok:
                    continue
                g = gamma_for(choice)
                total = 0.0
                for t in range(game.T):
                    for prof, prob in q[t]:
                        if prof is None or prob == 0.0:
                            continue
                        _, v = game.payoffs(prof, g(prof))
                        total += game.mu[t] * prob * float(v[j][t])
                values.append(total)
    return values


def check_robust(
    env: Environment,
    assessment: Assessment,
    deviation_space: Mapping[int, Sequence[Mechanism]] | None = None,
    options: SearchOptions | None = None,
    tol: float = 1e-9,
) -> RobustReport:
    """No-safe-deviation audit of a continuation equilibrium.

    For each principal and each deviation contract, the post-deviation
    continuation equilibria are searched (full re-solve in public mode;
    non-deviators frozen in private mode). A deviation is safe-profitable
    only if every found continuation gives the deviator strictly more than
    the equilibrium value plus ``tol``. Deviating to the installed
    contract itself is seeded with the original outcome and is therefore
    never safe-profitable.
    """
    options = options or SearchOptions(tol=tol)
    base = check_continuation(env, assessment, tol)
    if not base.passed:
        raise ValueError("assessment fails continuation checks; robustness undefined")
    findings: list[DeviationFinding] = []
    private = env.observability == "private"
    from .contracts import enumerate_gstar, enumerate_private

    for j in range(env.n):
        if deviation_space is not None and j in deviation_space:
            devs = list(deviation_space[j])
        elif private:
            devs = enumerate_private(env, j)
        else:
            devs = enumerate_gstar(env, j)
        for dev in devs:
            same = dev.messages == assessment.contracts[j].messages
            if private:
                vals = private_post_deviation_values(env, assessment, j, dev, options)
            else:
                contracts = list(assessment.contracts)
                contracts[j] = dev
                vals = [
                    fe.values[j]
                    for fe in enumerate_equilibria(env, contracts, options)
                ]
            if same:
                vals = list(vals) + [base.values[j]]
            if not vals:
                findings.append(
                    DeviationFinding(j, dev, "no-continuation-equilibrium", None, None, None)
                )
                continue
            worst, best = min(vals), max(vals)
            if worst > base.values[j] + tol:
                findings.append(
                    DeviationFinding(
                        j, dev, "safe-profitable", worst, best, worst - base.values[j]
                    )
                )
            else:
                findings.append(DeviationFinding(j, dev, "deterred", worst, best, None))
    passed = not any(f.outcome == "safe-profitable" for f in findings)
    return RobustReport(passed=passed, base=base, findings=tuple(findings))


# ---------------------------------------------------------------------------
# Canonicalization (menus with recommendations)
# ---------------------------------------------------------------------------


def canonicalize(env: Environment, assessment: Assessment) -> Assessment:
    """Rebuild an assessment over menu-with-recommendations contracts.

    Each message is recoded as the pair (assigned contractible action,
    continuation action it induced); the agent's strategy is pushed
    forward through this recoding, on-path beliefs follow Bayes, and
    off-path behavior is copied through a fixed per-action selector. The
    induced allocation and every principal's value are preserved exactly.
    """
    game = _Game(env, assessment.contracts)
    q = _normalize_strategy(game, assessment.strategy)
    gamma = _continuation_arrays(game, assessment)
    new_contracts = tuple(
        menu_rec(env, j, image(assessment.contracts[j])) for j in range(game.n)
    )

    def recode(prof: tuple[int, ...]) -> tuple[str, ...]:
        ys = gamma[prof]
        return tuple(
            f"{game.msg_action[j][prof[j]]}|{ys[j]}" for j in range(game.n)
        )

    strategy: dict[str, tuple] = {}
    for t, lab in enumerate(game.t_labels):
        acc: dict = {}
        for prof, prob in q[t]:
            outcome = OPT_OUT if prof is None else recode(prof)
            acc[outcome] = acc.get(outcome, 0.0) + prob
        strategy[lab] = tuple(sorted(acc.items(), key=repr))

    ngame = _Game(env, new_contracts)
    nq = _normalize_strategy(ngame, strategy)

    # Fill continuation and beliefs for every new profile: on the recoded
    # image use the recommendations and the preimage's beliefs; elsewhere
    # copy from the selector message carrying the same contractible action.
    image_map: dict[tuple[str, ...], tuple[int, ...]] = {}
    for prof in game.profiles:
        image_map.setdefault(recode(prof), prof)

    def original_ref(labs: tuple[str, ...]) -> tuple[int, ...]:
        if labs in image_map:
            return image_map[labs]
        return tuple(
            game.selector[j][labs[j].split("|", 1)[0]] for j in range(game.n)
        )

    if game.mode == "public":
        joint_new = _joint(ngame, nq)
        onpath = {}
        for prof, vec in joint_new.items():
            mass = float(vec.sum())
            if mass > 0:
                onpath[prof] = vec / mass
        old_beliefs = _belief_vectors(game, assessment)
        cont: dict[int, dict] = {j: {} for j in range(game.n)}
        pub: dict[int, dict] = {j: {} for j in range(game.n)}
        for nprof in ngame.profiles:
            labs = ngame.profile_labels(nprof)
            if nprof in onpath or labs in image_map:
                ys = tuple(lab.split("|", 1)[1] for lab in labs)
            else:
                ref = original_ref(labs)
                ys = gamma[ref]
            for j in range(game.n):
                cont[j][labs] = ys[j]
                if nprof in onpath:
                    pub[j][labs] = tuple(float(x) for x in onpath[nprof])
                else:
                    ref = original_ref(labs)
                    pub[j][labs] = tuple(float(x) for x in old_beliefs[(j, ref)])
        bel = BeliefSystem(
            mode="public", public=pub, offpath=assessment.beliefs.offpath
        )
        return Assessment(new_contracts, strategy, cont, bel)

    # private: recode each principal's own message independently
    old_beliefs = _belief_vectors(game, assessment)
    cont = {j: {} for j in range(game.n)}
    priv: dict[int, dict] = {j: {} for j in range(game.n)}
    onpath_own: list[dict[int, dict]] = []
    for j in range(game.n):
        table = _private_beliefs(ngame, nq, j, assessment.beliefs.offpath)
        onpath_mass: dict[int, float] = {}
        for t, dist in nq.items():
            for prof, prob in dist:
                if prof is not None and prob > 0:
                    onpath_mass[prof[j]] = onpath_mass.get(prof[j], 0.0) + prob
        onpath_own.append({"mass": onpath_mass, "table": table})

    # per-principal recode map: old own message -> new own label
    own_recode = []
    for j in range(game.n):
        col = {}
        for i in range(game.sizes[j]):
            y = assessment.continuation[j][game.msg_labels[j][i]]
            col[i] = f"{game.msg_action[j][i]}|{y}"
        own_recode.append(col)

    others_of = [
        [k for k in range(game.n) if k != j] for j in range(game.n)
    ]
    for j in range(game.n):
        new_game_labels = ngame.msg_labels[j]
        table = onpath_own[j]["table"]
        mass = onpath_own[j]["mass"]
        old_priv = assessment.beliefs.private[j]
        for i, lab in enumerate(new_game_labels):
            x_lab, y_lab = lab.split("|", 1)
            recoded_from = [
                oi for oi in range(game.sizes[j]) if own_recode[j][oi] == lab
            ]
            if i in mass:
                cont[j][lab] = y_lab
                priv[j][lab] = {
                    (
                        ngame.t_labels[t],
                        tuple(
                            ngame.msg_labels[k][r]
                            for k, r in zip(others_of[j], rest)
                        ),
                    ): float(w)
                    for (t, rest), w in table[i].items()
                }
            elif recoded_from:
                oi = recoded_from[0]
                cont[j][lab] = y_lab
                priv[j][lab] = _recode_private_belief(
                    game, assessment, j, oi, own_recode
                )
            else:
                oi = game.selector[j][x_lab]
                cont[j][lab] = assessment.continuation[j][game.msg_labels[j][oi]]
                priv[j][lab] = _recode_private_belief(
                    game, assessment, j, oi, own_recode
                )
    bel = BeliefSystem(mode="private", private=priv, offpath=assessment.beliefs.offpath)
    return Assessment(new_contracts, strategy, cont, bel)


def _recode_private_belief(game, assessment, j, old_own_index, own_recode):
    """Push an old private belief through the other principals' recodings."""
    old = assessment.beliefs.private[j][game.msg_labels[j][old_own_index]]
    others = [k for k in range(game.n) if k != j]
    out: dict = {}
    for (t_lab, rest_labs), w in old.items():
        new_rest = []
        for k, rl in zip(others, rest_labs):
            oi = game.msg_labels[k].index(rl)
            new_rest.append(own_recode[k][oi])
        key = (t_lab, tuple(new_rest))
        out[key] = out.get(key, 0.0) + float(w)
    return out
