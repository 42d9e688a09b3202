"""Optimizer module: design specs, manifold solves, objective searches."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import loop_third_order_residuals
from fsrk import (
    ContextTemplate,
    DesignSpec,
    InputError,
    SearchFailureError,
    find_xhat,
    StabilityContext,
    get_method,
    lem3,
    manifold_branches,
    minimize_lem,
    minimize_xhat,
    plan_from_string,
    read_design_file,
    solve_order_manifold,
)
from fsrk.optimizer import _xhat_value

RATIO = 1.92 / 1260.0


def test_design_spec_validation():
    with pytest.raises(InputError, match="two-stage"):
        DesignSpec(2)
    with pytest.raises(InputError):
        DesignSpec(3, target_order=4)
    with pytest.raises(InputError):
        DesignSpec(3, zero_pattern=[(4, 1)])
    with pytest.raises(InputError):
        DesignSpec(3, zero_pattern=[(1, 3)])
    with pytest.raises(InputError):
        DesignSpec(3, zero_pattern=[(1, 1), (1, 1)])
    with pytest.raises(InputError, match="at least 5"):
        DesignSpec(3, zero_pattern=[(1, 1), (2, 1)])
    with pytest.raises(InputError):
        DesignSpec(3, box=(1.0, -1.0))
    with pytest.raises(InputError):
        DesignSpec(3, box=(0.0, np.inf))
    with pytest.raises(InputError):
        DesignSpec(3, seeds=0)
    with pytest.raises(InputError):
        DesignSpec(3, objective="min_cost")


def test_design_spec_positions_and_partition():
    spec = DesignSpec(3)
    assert spec.positions() == [(1, 1), (2, 1), (3, 1), (1, 2), (2, 2), (3, 2)]
    free, dep = spec.partition()
    assert free == [(1, 1)]
    assert len(dep) == 5
    spec4 = DesignSpec(4, zero_pattern=[(4, 2)])
    assert (4, 2) not in spec4.positions()
    free4, dep4 = spec4.partition()
    assert len(free4) == 2 and len(dep4) == 5


def test_manifold_recovers_ruth():
    spec = DesignSpec(3)
    ruth = get_method("ruth").alpha
    branches = manifold_branches([7.0 / 24.0], spec)
    assert branches
    devs = [np.abs(alpha - ruth).max() for alpha in branches]
    assert min(devs) < 1e-10
    alpha = solve_order_manifold([7.0 / 24.0], spec)
    assert alpha is not None
    res = loop_third_order_residuals(alpha[:, 0], alpha[:, 1])
    assert np.abs(res).max() < 1e-10


def test_manifold_checks_free_value_count():
    spec = DesignSpec(3)
    with pytest.raises(InputError):
        solve_order_manifold([0.1, 0.2], spec)


def test_manifold_branches_are_solutions_and_distinct():
    spec = DesignSpec(3)
    branches = manifold_branches([0.4], spec)
    assert branches
    for alpha in branches:
        res = loop_third_order_residuals(alpha[:, 0], alpha[:, 1])
        assert np.abs(res).max() < 1e-9
    for i in range(len(branches)):
        for j in range(i + 1, len(branches)):
            assert np.abs(branches[i] - branches[j]).max() > 1e-8


@given(st.floats(min_value=-0.9, max_value=0.95))
@settings(max_examples=25, deadline=None)
def test_manifold_branches_property(a1):
    spec = DesignSpec(3)
    for alpha in manifold_branches([a1], spec):
        res = loop_third_order_residuals(alpha[:, 0], alpha[:, 1])
        assert np.abs(res).max() < 1e-9


def test_minimize_lem_three_stage():
    spec = DesignSpec(3, objective="min_lem", seeds=6, rng_seed=0)
    cand = minimize_lem(spec)
    assert cand.feasible
    assert cand.order_residual_norm < 1e-12
    assert cand.method.name == "opt-lem-3s"
    assert cand.method.alpha.min() >= -1.0 - 1e-9
    assert cand.method.alpha.max() <= 1.0 + 1e-9
    assert cand.objective_value == pytest.approx(0.24787675, abs=1e-6)
    assert cand.objective_value == pytest.approx(
        lem3(cand.method).lem3, abs=1e-12
    )
    assert cand.discarded_evaluations >= 0


def test_minimize_lem_is_deterministic():
    spec = DesignSpec(3, objective="min_lem", seeds=4, rng_seed=7)
    c1 = minimize_lem(spec)
    c2 = minimize_lem(DesignSpec(3, objective="min_lem", seeds=4, rng_seed=7))
    assert np.array_equal(c1.method.alpha, c2.method.alpha)
    assert c1.objective_value == c2.objective_value


def test_minimize_lem_monotone_in_seeds():
    lo = minimize_lem(DesignSpec(3, objective="min_lem", seeds=3, rng_seed=3))
    hi = minimize_lem(DesignSpec(3, objective="min_lem", seeds=8, rng_seed=3))
    assert hi.objective_value <= lo.objective_value + 1e-12


def test_objective_kind_is_checked():
    with pytest.raises(InputError):
        minimize_lem(DesignSpec(3, objective="min_xhat"))
    ctx = ContextTemplate("DR", RATIO, plan_from_string("sdirk23:rk3", "DR"))
    with pytest.raises(InputError):
        minimize_xhat(DesignSpec(3, objective="min_lem"), ctx)


def test_all_positive_box_is_infeasible():
    # third order forces a negative coefficient somewhere; a [0, 1] box
    # therefore admits no feasible candidate
    spec = DesignSpec(3, objective="min_lem", box=(0.0, 1.0), seeds=2, rng_seed=0)
    with pytest.raises(SearchFailureError) as excinfo:
        minimize_lem(spec)
    assert excinfo.value.best_residual is not None


def test_minimize_xhat_three_stage():
    spec = DesignSpec(3, objective="min_xhat", seeds=3, rng_seed=2)
    plan = plan_from_string("sdirk23:rk3", "DR")
    cand = minimize_xhat(spec, ContextTemplate("DR", RATIO, plan))
    assert cand.feasible
    assert cand.order_residual_norm < 1e-9
    assert cand.objective_value < -2.0
    ctx = StabilityContext(cand.method, plan, "DR", RATIO)
    assert find_xhat(ctx).xhat == pytest.approx(cand.objective_value, abs=1e-6)


def test_xhat_value_guards():
    spec = DesignSpec(3)
    plan = plan_from_string("sdirk23:sdirk23", "DR")
    tpl = ContextTemplate("DR", 1.0, plan)
    # a pole at the first scan point makes the candidate unusable
    alpha = np.array([[-1e9, 1.0], [0.5, 0.5], [0.5, -0.5]])
    assert _xhat_value(alpha, spec, tpl, 4000) == np.inf
    # L-stable everywhere: scored at the scan depth
    stable = np.array([[1.0, 1.0]])
    assert _xhat_value(stable, spec, tpl, 4000) == -50.0


def test_read_design_file(tmp_path):
    path = tmp_path / "design.txt"
    path.write_text(
        "name my-design\n"
        "stages 4\n"
        "zero 4 2\n"
        "box -2 2\n"
        "objective xhat\n"
        "ordering rd\n"
        "ratio 0.0015238\n"
        "seeds 12\n"
        "rng 5\n"
    )
    spec, extras = read_design_file(path)
    assert spec.stages == 4
    assert spec.zero_pattern == ((4, 2),)
    assert spec.box == (-2.0, 2.0)
    assert spec.objective == "min_xhat"
    assert spec.seeds == 12 and spec.rng_seed == 5
    assert extras == {"name": "my-design", "ordering": "RD", "ratio": 0.0015238}


def test_read_design_file_errors(tmp_path):
    path = tmp_path / "design.txt"
    path.write_text("objective lem\n")
    with pytest.raises(InputError, match="stages"):
        read_design_file(path)
    path.write_text("stages 3\n")
    with pytest.raises(InputError, match="objective"):
        read_design_file(path)
    path.write_text("stages 3\nobjective fast\n")
    with pytest.raises(InputError):
        read_design_file(path)
    path.write_text("stages 3\nobjective lem\nwibble 3\n")
    with pytest.raises(InputError, match="wibble"):
        read_design_file(path)
    path.write_text("stages 3\nobjective lem\nzero 1\n")
    with pytest.raises(InputError):
        read_design_file(path)
