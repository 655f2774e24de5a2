import pytest

from contract_forge import env_core as ec


@pytest.fixture
def example4_env() -> ec.Environment:
    """Two principals, two contractible actions each, feasibility sizes 2 and 3."""
    spec = ec.PrincipalSpec(
        contractible=(ec.ActionValue("x"), ec.ActionValue("xp")),
        noncontractible=(
            ec.ActionValue("y"),
            ec.ActionValue("yp"),
            ec.ActionValue("ypp"),
            ec.ActionValue("yppp"),
        ),
        feasible={"x": ("y", "yp"), "xp": ("yp", "ypp", "yppp")},
    )
    return ec.Environment(
        types=ec.TypeSpace.uniform_finite([0.0, 1.0]),
        principals=(spec, spec),
        payoffs=ec.PayoffModel.from_expressions("0", ["0", "0"]),
    )


@pytest.fixture
def necessity_skeleton() -> ec.Environment:
    """Three types; principal 1 has three actions with singleton feasibility."""
    return ec.Environment(
        types=ec.TypeSpace.uniform_finite([1.0, 2.0, 3.0]),
        principals=(
            ec.PrincipalSpec(
                contractible=(
                    ec.ActionValue("a"),
                    ec.ActionValue("b"),
                    ec.ActionValue("c"),
                ),
                noncontractible=(ec.ActionValue("w"),),
                feasible={"a": ("w",), "b": ("w",), "c": ("w",)},
            ),
            ec.PrincipalSpec(
                contractible=(ec.ActionValue("d"),),
                noncontractible=(ec.ActionValue("e"), ec.ActionValue("f")),
                feasible={"d": ("e", "f")},
            ),
        ),
        payoffs=ec.PayoffModel.from_expressions("0", ["0", "0"]),
    )
