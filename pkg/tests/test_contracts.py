import itertools

import pytest

from contract_forge import contracts as ct
from contract_forge import env_core as ec
from contract_forge import equilibrium as eq


def _env_with(feasible_sizes, n_types=3):
    """Single principal with the given feasibility-set sizes per action."""
    nx = len(feasible_sizes)
    ny = max(feasible_sizes)
    spec = ec.PrincipalSpec(
        contractible=tuple(ec.ActionValue(f"x{i}") for i in range(nx)),
        noncontractible=tuple(ec.ActionValue(f"y{i}") for i in range(ny)),
        feasible={
            f"x{i}": tuple(f"y{k}" for k in range(s))
            for i, s in enumerate(feasible_sizes)
        },
    )
    return ec.Environment(
        types=ec.TypeSpace.uniform_finite([float(i) for i in range(n_types)]),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions("0", ["0"]),
    )


class TestEnumerateGstar:
    def test_example4_counts_and_message_sizes(self, example4_env):
        menus = ct.enumerate_gstar(example4_env, 0)
        assert len(menus) == 3
        assert sorted(len(m.messages) for m in menus) == [2, 3, 5]

    def test_singleton(self):
        env = _env_with([1, 1])
        menus = ct.enumerate_gstar(env, 0)
        assert len(menus[0].messages) == 1

    def test_three_actions_seven_menus(self):
        env = _env_with([1, 1, 1])
        assert len(ct.enumerate_gstar(env, 0)) == 7

    def test_bitmask_order(self):
        env = _env_with([1, 1])
        menus = ct.enumerate_gstar(env, 0)
        assert [ct.image(m) for m in menus] == [("x0",), ("x1",), ("x0", "x1")]


class TestEnumerateGsharp:
    def test_example4_31(self, example4_env):
        assert len(ct.enumerate_gsharp(example4_env, 0)) == 31
        assert len(ct.enumerate_gsharp(example4_env, 1)) == 31

    def test_singleton_pair(self):
        env = _env_with([1, 1])
        # |Z| = 2 here, so 3 submenus; a true singleton Z needs one action
        assert len(ct.enumerate_gsharp(env, 0)) == 3

    def test_three_pairs(self):
        env = _env_with([2, 1])
        assert len(ct.enumerate_gsharp(env, 0)) == 7


class TestEnumeratePrivate:
    def test_example4_six(self, example4_env):
        mechs = ct.enumerate_private(example4_env, 0)
        assert len(mechs) == 6
        kinds = [m.kind for m in mechs]
        assert kinds.count("menu_rec") == 3
        assert kinds.count("plain") == 3

    def test_singleton_degenerate(self):
        env = _env_with([1])
        # Assumption floor fails for enumeration-only purposes; build by hand
        env = _env_with([1, 1])
        sub = ec.Environment(
            types=env.types,
            principals=(
                ec.PrincipalSpec(
                    contractible=(ec.ActionValue("x0"),),
                    noncontractible=(ec.ActionValue("y0"), ec.ActionValue("y1")),
                    feasible={"x0": ("y0",)},
                ),
            ),
            payoffs=env.payoffs,
        )
        assert len(ct.enumerate_private(sub, 0)) == 1

    def test_mixed_feasibility_five(self):
        env = _env_with([1, 2])
        mechs = ct.enumerate_private(env, 0)
        assert len(mechs) == 5
        plains = [ct.image(m) for m in mechs if m.kind == "plain"]
        assert set(plains) == {("x1",), ("x0", "x1")}


class TestRelations:
    def test_equiv_menu_vs_plain(self, example4_env):
        a = ct.menu_rec(example4_env, 0, ["x"])
        b = ct.plain_menu(example4_env, 0, ["x"])
        assert ct.is_equiv(a, b)

    def test_not_equiv_different_menus(self, example4_env):
        a = ct.menu_rec(example4_env, 0, ["x"])
        b = ct.menu_rec(example4_env, 0, ["x", "xp"])
        assert not ct.is_equiv(a, b)

    def test_submenus_same_action_equiv(self, example4_env):
        a = ct.submenu(example4_env, 0, [("x", "y")])
        b = ct.submenu(example4_env, 0, [("x", "yp")])
        assert ct.is_equiv(a, b)

    def test_refines_duplicate_message(self, example4_env):
        base = ct.submenu(example4_env, 0, [("x", "y")])
        fine = ct.submenu(example4_env, 0, [("x", "y"), ("x", "yp")])
        witness = ct.refines(fine, base)
        assert witness is not None
        surj, rinv = witness
        assert set(surj.values()) == {"x|y"}
        assert rinv["x|y"] in surj

    def test_refines_cardinality_blocks(self, example4_env):
        fine = ct.submenu(example4_env, 0, [("x", "y")])
        coarse = ct.submenu(example4_env, 0, [("x", "y"), ("x", "yp")])
        assert ct.refines(fine, coarse) is None

    def test_menu_rec_refines_plain(self, example4_env):
        menu = ct.menu_rec(example4_env, 0, ["x", "xp"])
        plain = ct.plain_menu(example4_env, 0, ["x", "xp"])
        witness = ct.refines(menu, plain)
        assert witness is not None
        surj, _ = witness
        # projection drops the recommendation coordinate
        assert all(k.split("|")[0] == v for k, v in surj.items())

    def test_refines_reflexive_transitive(self, example4_env):
        sample = ct.enumerate_gsharp(example4_env, 0)[:8] + ct.enumerate_gstar(
            example4_env, 0
        )
        for m in sample:
            assert ct.refines(m, m) is not None
        for a, b, c in itertools.islice(itertools.product(sample, repeat=3), 400):
            ab = ct.refines(a, b)
            bc = ct.refines(b, c)
            if ab and bc:
                assert ct.refines(a, c) is not None

    def test_refines_implies_equiv(self, example4_env):
        sample = ct.enumerate_gsharp(example4_env, 0)
        for a, b in itertools.product(sample[:12], repeat=2):
            if ct.refines(a, b) is not None:
                assert ct.is_equiv(a, b)


class TestCanonicalCounterpart:
    def test_plain_to_menu(self, example4_env):
        plain = ct.plain_menu(example4_env, 0, ["x", "xp"])
        c = ct.canonical_counterpart(example4_env, plain)
        assert c.kind == "menu_rec"
        assert set(ct.image(c)) == {"x", "xp"}
        assert len(c.messages) == 5

    def test_submenu_singleton(self, example4_env):
        sub = ct.submenu(example4_env, 0, [("x", "y")])
        c = ct.canonical_counterpart(example4_env, sub)
        assert ct.image(c) == ("x",)

    def test_idempotent_and_image_preserving(self, example4_env):
        for mech in ct.enumerate_gsharp(example4_env, 0):
            c = ct.canonical_counterpart(example4_env, mech)
            assert set(ct.image(c)) == set(ct.image(mech))
            cc = ct.canonical_counterpart(example4_env, c)
            assert cc.messages == c.messages

    def test_example4_size4_submenu(self, example4_env):
        sub = ct.submenu(
            example4_env, 0, [("x", "y"), ("x", "yp"), ("xp", "yp"), ("xp", "ypp")]
        )
        c = ct.canonical_counterpart(example4_env, sub)
        assert len(c.messages) == 5


class TestNecessityEnvironment:
    def test_round_robin_surjection(self, necessity_skeleton):
        env, alloc, phi = ct.necessity_environment(necessity_skeleton, 0, ["a", "b"])
        assert phi == {"t0": "a", "t1": "b", "t2": "a"}
        assert ec.validate(env).passed
        ec.check_allocation(env, alloc)

    def test_singleton_menu_pools(self, necessity_skeleton):
        env, alloc, phi = ct.necessity_environment(necessity_skeleton, 0, ["a"])
        assert set(phi.values()) == {"a"}
        assert ec.payoff_v(env, 0, (("a", "w"), ("d", "e")), 1.0) == 1.0

    def test_off_menu_penalties(self, necessity_skeleton):
        env, _, _ = ct.necessity_environment(necessity_skeleton, 0, ["a", "b"])
        prof = (("c", "w"), ("d", "e"))
        assert ec.payoff_u(env, prof, 1.0) == 8.0
        assert ec.payoff_v(env, 0, prof, 1.0) == -8.0
        assert ec.payoff_v(env, 1, prof, 1.0) == -8.0

    def test_too_few_types_rejected(self, necessity_skeleton):
        small = ec.Environment(
            types=ec.TypeSpace.uniform_finite([1.0]),
            principals=necessity_skeleton.principals,
            payoffs=necessity_skeleton.payoffs,
        )
        with pytest.raises(ValueError, match="surjection"):
            ct.necessity_environment(small, 0, ["a", "b"])


class TestPlainMenuScenario:
    def test_kappa_half_without_aux(self):
        env, assessment, deviation, meta = ct.plain_menu_scenario()
        assert meta["kappa"] == pytest.approx(0.5)
        assert env.observability == "private"
        assert deviation.kind == "plain"

    def test_separating_deviator_payoffs(self):
        env, assessment, deviation, meta = ct.plain_menu_scenario()
        rep = eq.check_continuation(env, assessment)
        assert rep.passed
        state_vals = eq.principal_state_values(env, assessment, 0)
        assert state_vals == {"theta1": 2.0, "theta2": 1.0}

    def test_post_deviation_pooled_payoff(self):
        env, assessment, deviation, meta = ct.plain_menu_scenario()
        vals = eq.private_post_deviation_values(
            env, assessment, 0, deviation, eq.SearchOptions(policies=("prior",))
        )
        assert vals, "post-deviation game must have a continuation"
        assert set(round(float(v), 12) for v in vals) == {2.0}

    def test_aux_states_change_kappa(self):
        env, assessment, deviation, meta = ct.plain_menu_scenario(n_aux=2)
        assert meta["kappa"] == pytest.approx(0.25)
        rep = eq.check_continuation(env, assessment)
        assert rep.passed


class TestMenuRecSubmenuInclusion:
    def test_every_menu_rec_is_a_submenu(self, example4_env):
        """Each menu-with-recommendations has a submenu twin with the same
        message set and assignment (the closure is itself a pair set)."""
        for mech in ct.enumerate_gstar(example4_env, 0):
            pairs = [(m.action, m.recommendation) for m in mech.messages]
            twin = ct.submenu(example4_env, 0, pairs)
            assert [(m.label, m.action, m.recommendation) for m in twin.messages] == [
                (m.label, m.action, m.recommendation) for m in mech.messages
            ]


from hypothesis import given, settings
from hypothesis import strategies as st


@given(sizes=st.lists(st.integers(1, 3), min_size=1, max_size=4))
@settings(max_examples=40, deadline=None)
def test_enumeration_counting_laws(sizes):
    if sum(sizes) < 2:
        sizes = sizes + [2]
    env = _env_with(sizes)
    n_actions = len(sizes)
    n_pairs = sum(sizes)
    assert len(ct.enumerate_gstar(env, 0)) == 2**n_actions - 1
    assert len(ct.enumerate_gsharp(env, 0)) == 2**n_pairs - 1
    rich = sum(1 for s in sizes if s >= 2)
    poor = n_actions - rich
    expected_private = (2**n_actions - 1) + (2**n_actions - 1) - (2**poor - 1)
    assert len(ct.enumerate_private(env, 0)) == expected_private
