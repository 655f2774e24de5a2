import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contract_forge import env_core as ec


def _single_env(feasible, n_y=1, payoffs=("0", ["0"])):
    ys = tuple(ec.ActionValue(f"y{i}") for i in range(n_y))
    spec = ec.PrincipalSpec(
        contractible=tuple(ec.ActionValue(x) for x in feasible),
        noncontractible=ys,
        feasible={k: v for k, v in feasible.items()},
    )
    return ec.Environment(
        types=ec.TypeSpace.uniform_finite([1.0, 2.0]),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions(payoffs[0], payoffs[1]),
    )


def test_validate_flags_empty_feasibility():
    env = _single_env({"x0": (), "x1": ("y0", "y0b")}, n_y=1)
    report = ec.validate(env)
    assert not report.passed
    assert any("empty feasibility" in v for v in report.violations)


def test_validate_flags_single_feasible_pair():
    env = _single_env({"x0": ("y0",)})
    report = ec.validate(env)
    assert not report.passed
    assert any("fewer than two feasible pairs" in v for v in report.violations)


def test_validate_passes_example4(example4_env):
    assert ec.validate(example4_env).passed


def test_payoff_u_labor_point():
    spec = ec.PrincipalSpec(
        contractible=(ec.ActionValue("x", 1.0),),
        noncontractible=(ec.ActionValue("y", 0.0), ec.ActionValue("yb", 1.0)),
        feasible={"x": ("y", "yb")},
    )
    env = ec.Environment(
        types=ec.TypeSpace.uniform_finite([4.0]),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions(
            "(x*theta - y^2)/sqrt(theta)", ["y*theta - x^2"]
        ),
    )
    assert ec.payoff_u(env, (("x", "y"),), 4.0) == pytest.approx(2.0)


def test_payoff_v_single_and_two_principal():
    spec = ec.PrincipalSpec(
        contractible=(ec.ActionValue("x", 3.0),),
        noncontractible=(ec.ActionValue("y", 3.0), ec.ActionValue("y0", 0.0)),
        feasible={"x": ("y", "y0")},
    )
    env1 = ec.Environment(
        types=ec.TypeSpace.uniform_finite([3.0]),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions("0", ["y*theta - x^2"]),
    )
    assert ec.payoff_v(env1, 0, (("x", "y"),), 3.0) == pytest.approx(0.0)

    beta = 17.0 / 21.0
    env2 = ec.Environment(
        types=ec.TypeSpace.uniform_finite([3.0]),
        principals=(spec, spec),
        payoffs=ec.PayoffModel.from_expressions(
            "0",
            [f"(1 + {beta!r}*x_2)*y_1*theta - x_1^2", "0"],
        ),
    )
    v = ec.payoff_v(env2, 0, (("x", "y"), ("x", "y")), 3.0)
    assert v == pytest.approx((1 + 51 / 21) * 9 - 9, abs=1e-3)
    assert v == pytest.approx(21.857, abs=1e-3)


def test_payoff_errors_name_offender():
    spec = ec.PrincipalSpec(
        contractible=(ec.ActionValue("x", 1.0),),
        noncontractible=(ec.ActionValue("y", 0.0), ec.ActionValue("yb", 2.0)),
        feasible={"x": ("y", "yb")},
    )
    env = ec.Environment(
        types=ec.TypeSpace.uniform_finite([1.0]),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions("unknown_var", ["0"]),
    )
    with pytest.raises(ec.EvalError, match="unknown_var"):
        ec.payoff_u(env, (("x", "y"),), 1.0)
    with pytest.raises(ec.EvalError, match="infeasible"):
        ec.payoff_u(env, (("x", "zz"),), 1.0)


def test_expect_finite_midpoint():
    b = ec.Belief((3.0, 4.0), (0.5, 0.5))
    assert ec.expect(lambda t: t, b) == pytest.approx(3.5)


def test_expect_uniform_interval_mean():
    b = ec.Belief.from_typespace(ec.TypeSpace.interval(3.0, 4.0))
    assert ec.expect(lambda t: t, b) == pytest.approx(3.5, abs=1e-9)


def test_expect_reciprocal_analytic():
    b = ec.Belief.from_typespace(ec.TypeSpace.interval(0.5, 1.5))
    assert ec.expect(lambda t: 1.0 / t, b) == pytest.approx(math.log(3.0), abs=1e-6)


@given(st.floats(-5, 5, allow_nan=False))
@settings(max_examples=50, deadline=None)
def test_expect_constant_is_exact(c):
    finite = ec.Belief((1.0, 2.0, 5.0), (0.2, 0.3, 0.5))
    assert ec.expect(lambda t: c + 0.0 * t, finite) == pytest.approx(c, abs=1e-12)
    grid = ec.Belief.from_typespace(ec.TypeSpace.interval(0.0, 1.0))
    assert ec.expect(lambda t: c + 0.0 * t, grid) == pytest.approx(c, abs=1e-12)


def test_truncated_normal_density_normalizes():
    ts = ec.TypeSpace.interval(3.0, 4.0, density="normal", mean=3.5, sd=0.4)
    pts, w = ts.grid()
    assert float(np.sum(w)) == pytest.approx(1.0, abs=1e-12)
    # mean of the symmetric truncation is the center
    assert float(pts @ w) == pytest.approx(3.5, abs=1e-9)


def test_validate_interval_bounds():
    env = ec.Environment(
        types=ec.TypeSpace.interval(4.0, 3.0),
        principals=(
            ec.PrincipalSpec(
                contractible=(ec.ActionValue("x"),),
                noncontractible=(ec.ActionValue("y"), ec.ActionValue("yb")),
                feasible={"x": ("y", "yb")},
            ),
        ),
        payoffs=ec.PayoffModel.from_expressions("0", ["0"]),
    )
    assert not ec.validate(env).passed


def test_allocation_mass_and_feasibility(example4_env):
    alloc = ec.Allocation(
        {
            "t0": (((("x", "y"), ("x", "yp")), 1.0),),
            "t1": (((("xp", "ypp"), ("x", "y")), 0.5), (ec.OPT_OUT, 0.5)),
        }
    )
    ec.check_allocation(example4_env, alloc)
    # marginal against the prior has total mass 1
    total = sum(
        w * p
        for w, (lab, dist) in zip(
            example4_env.types.weights, sorted(alloc.entries.items())
        )
        for _, p in dist
    )
    assert total == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        ec.Allocation({"t0": (((("x", "y"), ("x", "yp")), 0.7),)})


def test_validate_table_payoff_coverage(necessity_skeleton):
    # expression sweep: finite evaluation over all feasible profiles
    assert ec.validate(necessity_skeleton).passed


def test_validate_rejects_undeclared_expression_variable():
    spec = ec.PrincipalSpec(
        contractible=(ec.ActionValue("x", 1.0),),
        noncontractible=(ec.ActionValue("y", 0.0), ec.ActionValue("yb", 1.0)),
        feasible={"x": ("y", "yb")},
    )
    env = ec.Environment(
        types=ec.TypeSpace.uniform_finite([1.0]),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions("x*shock", ["0"]),
    )
    report = ec.validate(env)
    assert not report.passed
    assert any("undeclared variable 'shock'" in v for v in report.violations)


def test_interval_contractible_set_blocks_enumeration():
    from contract_forge import contracts as ct

    spec = ec.PrincipalSpec(
        contractible=ec.Interval(0.0, 5.0),
        noncontractible=ec.Interval(0.0, 5.0),
    )
    env = ec.Environment(
        types=ec.TypeSpace.interval(3.0, 4.0),
        principals=(spec,),
        payoffs=ec.PayoffModel.from_expressions("0", ["0"]),
    )
    assert ec.validate(env).passed
    with pytest.raises(ValueError, match="not finite"):
        ct.enumerate_gstar(env, 0)
