"""Stability module: tableau stability functions, factor products, xhat
location, and region rasters."""

import xml.etree.ElementTree as ET

import numpy as np
import pytest

from _oracles import det_stability
from fsrk import (
    TABLEAUS,
    InputError,
    SplittingMethod,
    StabilityContext,
    SubIntegratorPlan,
    contour_segments,
    export_region_svg,
    find_xhat,
    fsrk_stability,
    get_method,
    get_tableau,
    negative_real_poles,
    origin_component,
    parse_plan,
    plan_for_ordering,
    plan_from_string,
    practical_interval,
    raster,
    raster_to_csv,
    rk_stability,
    single_var_stability,
)

RATIO = 1.92 / 1260.0

# frozen regression anchors at the reference ratio, plan sdirk23:rk3
XHAT_ANCHORS = {
    ("ruth", "DR"): -2.68484,
    ("ruth", "RD"): -5.92901,
    ("os437dr-minx", "DR"): -9.19553,
}

ZGRID = np.array(
    [0.5 + 0.5j, -0.3 + 1.2j, -2.0 - 0.7j, -4.5 + 0.1j, 1.5 - 2.5j, -0.01j]
)


def _ctx(name, ordering, plan_text="sdirk23:rk3", ratio=RATIO):
    m = get_method(name)
    return StabilityContext(m, plan_from_string(plan_text, ordering), ordering, ratio)


def test_rk_stability_matches_determinant_formula():
    for name in ("fe", "heun", "rk3", "sdirk23"):
        tab = get_tableau(name)
        for z in ZGRID:
            want = det_stability(tab, complex(z))
            got = rk_stability(tab, complex(z))
            assert abs(got - want) < 1e-12 * max(1.0, abs(want)), name


def test_exact_flow_stability_is_exp():
    tab = get_tableau("exact")
    for z in ZGRID:
        assert abs(rk_stability(tab, complex(z)) - np.exp(z)) < 1e-13


def test_known_stability_polynomials():
    z = -0.37
    assert rk_stability(get_tableau("fe"), z) == pytest.approx(1 + z, abs=1e-15)
    assert rk_stability(get_tableau("heun"), z) == pytest.approx(
        1 + z + z**2 / 2, abs=1e-15
    )
    assert rk_stability(get_tableau("rk3"), z) == pytest.approx(
        1 + z + z**2 / 2 + z**3 / 6, abs=1e-15
    )


def test_fsrk_stability_is_a_factor_product():
    m = get_method("strang")
    plan = plan_from_string("rk3:heun", "DR")
    z1, z2 = -0.4 + 0.2j, -1.1 - 0.5j
    r3, heun = get_tableau("rk3"), get_tableau("heun")
    want = (
        rk_stability(r3, 0.5 * z1)
        * rk_stability(heun, 1.0 * z2)
        * rk_stability(r3, 0.5 * z1)
    )
    assert abs(fsrk_stability(m, plan, z1, z2) - want) < 1e-14


def test_zero_coefficient_sub_integrations_are_skipped():
    # strang has alpha_2[2] = 0: overriding that slot must change nothing
    m = get_method("strang")
    base = plan_from_string("rk3:heun", "DR")
    overridden = SubIntegratorPlan(
        dict(base.default_per_operator), {(2, 2): get_tableau("fe")}
    )
    for z in ZGRID:
        a = fsrk_stability(m, base, z, 0.3 * z)
        b = fsrk_stability(m, overridden, z, 0.3 * z)
        assert a == b


def test_single_var_matches_two_var_scaling():
    for ordering, scales in (("DR", (RATIO, 1.0)), ("RD", (1.0, RATIO))):
        ctx = _ctx("ruth", ordering)
        for z in (-0.8, -3.0 + 0.4j):
            want = fsrk_stability(
                ctx.method, ctx.plan, scales[0] * z, scales[1] * z
            )
            assert abs(single_var_stability(ctx, z) - want) < 1e-13


def test_consistency_at_origin():
    for name in ("lie-trotter", "strang", "ruth", "aks3", "os437dr-minx"):
        for ordering in ("DR", "RD"):
            ctx = _ctx(name, ordering)
            assert single_var_stability(ctx, 0.0) == pytest.approx(1.0, abs=1e-14)


def test_context_rejects_uncovered_plan():
    m = get_method("ruth")
    plan = SubIntegratorPlan({1: get_tableau("rk3")})  # nothing for operator 2
    with pytest.raises(InputError, match="cover"):
        StabilityContext(m, plan, "DR", RATIO)


def test_context_rejects_bad_ordering_and_ratio():
    m = get_method("ruth")
    plan = plan_from_string("rk3:rk3", "DR")
    with pytest.raises(InputError):
        StabilityContext(m, plan, "DX", RATIO)
    with pytest.raises(InputError):
        StabilityContext(m, plan, "DR", np.inf)


def test_find_xhat_frozen_anchors():
    for (name, ordering), want in XHAT_ANCHORS.items():
        res = find_xhat(_ctx(name, ordering))
        assert res.xhat == pytest.approx(want, abs=1e-4), (name, ordering)
        lo, hi = res.bracket
        assert lo <= res.xhat <= hi and hi - lo < 1e-11


def test_find_xhat_stable_to_depth():
    # L-stable SDIRK on both operators of a one-stage splitting: |R| <= 1
    # on the whole negative real axis
    ctx = _ctx("lie-trotter", "DR", plan_text="sdirk23:sdirk23")
    res = find_xhat(ctx)
    assert res.xhat is None and res.bracket is None
    assert practical_interval(ctx) is None


def test_find_xhat_pole_insertion():
    # ratio 1 puts an implicit backward factor pole on the scanned axis
    ctx = _ctx("ruth", "DR", plan_text="sdirk23:sdirk23", ratio=1.0)
    poles = negative_real_poles(ctx)
    assert poles, "expected negative-real poles"
    res = find_xhat(ctx)
    assert res.xhat is not None
    assert res.xhat > max(poles)


def test_practical_interval_form():
    ctx = _ctx("ruth", "DR")
    lo, hi = practical_interval(ctx)
    assert hi == 0.0
    assert lo == find_xhat(ctx).xhat


def test_negfe_policy_changes_stability():
    base = find_xhat(_ctx("ruth", "DR")).xhat
    neg = find_xhat(_ctx("ruth", "DR", plan_text="sdirk23:rk3+negfe")).xhat
    assert abs(neg) >= abs(base) - 1e-9


def test_raster_grid_and_flags():
    ctx = _ctx("ruth", "DR")
    r = raster(ctx, (-3.0, 0.5, -2.0, 2.0), 31, 25)
    assert r.nx == 31 and r.ny == 25
    assert r.magnitude.shape == (31, 25)
    i, j = 7, 11
    z = r.xs[i] + 1j * r.ys[j]
    assert abs(single_var_stability(ctx, z)) == pytest.approx(
        r.magnitude[i, j], rel=1e-12
    )
    assert np.array_equal(r.inside, r.magnitude <= 1.0)


def test_raster_rejects_bad_window():
    ctx = _ctx("ruth", "DR")
    with pytest.raises(InputError):
        raster(ctx, (0.0, -1.0, 0.0, 1.0), 11, 11)
    with pytest.raises(InputError):
        raster(ctx, (-1.0, 1.0, -1.0, 1.0), 1, 11)


def test_raster_csv_round_trip(tmp_path):
    ctx = _ctx("strang", "RD")
    r = raster(ctx, (-2.0, 0.5, -1.0, 1.0), 11, 9)
    path = tmp_path / "region.csv"
    raster_to_csv(r, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,y,abs_R,inside,pole"
    assert len(lines) == 1 + 11 * 9
    x, y, mag, inside, pole = lines[1].split(",")
    assert float(x) == r.xs[0] and float(y) == r.ys[0]
    assert inside in ("0", "1") and pole in ("0", "1")


def test_contour_on_exact_flow_lies_on_imag_axis():
    # with exact sub-flows R(z) = exp(c z), so |R| = 1 exactly at Re z = 0
    m = get_method("strang")
    plan = plan_from_string("exact:exact", "DR")
    ctx = StabilityContext(m, plan, "DR", 0.5)
    r = raster(ctx, (-1.0, 1.0, -1.0, 1.0), 41, 41)
    segs = contour_segments(r, level=1.0)
    assert segs
    for (xa, ya), (xb, yb) in segs:
        assert abs(xa) < 5e-3 and abs(xb) < 5e-3


def test_origin_component_is_inside_subset():
    ctx = _ctx("ruth", "DR")
    r = raster(ctx, (-4.0, 0.5, -3.0, 3.0), 41, 41)
    comp = origin_component(r)
    assert comp.shape == r.inside.shape
    assert comp.any()
    assert not (comp & ~r.inside).any()


def test_export_region_svg(tmp_path):
    ctx = _ctx("ruth", "DR")
    r = raster(ctx, (-4.0, 0.5, -3.0, 3.0), 31, 31)
    path = tmp_path / "region.svg"
    export_region_svg(r, path, title="ruth DR")
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    body = path.read_text()
    assert "polyline" in body or "path" in body


def test_plan_parse_and_describe():
    diffusion, reaction, negfe = parse_plan("sdirk23:rk3+negfe")
    assert diffusion is TABLEAUS["sdirk23"]
    assert reaction is TABLEAUS["rk3"]
    assert negfe
    plan = plan_for_ordering(diffusion, reaction, "RD", negfe=True)
    assert plan.default_per_operator[2] is diffusion
    assert plan.negative_step_policy is TABLEAUS["fe"]
    assert "neg->fe" in plan.describe()
    with pytest.raises(InputError):
        parse_plan("sdirk23")


def test_plan_mirrored_swaps_stages_and_operators():
    plan = SubIntegratorPlan(
        {1: TABLEAUS["rk3"], 2: TABLEAUS["heun"]},
        {(1, 1): TABLEAUS["fe"]},
    )
    mir = plan.mirrored(3)
    assert mir.default_per_operator[2] is TABLEAUS["rk3"]
    assert mir.default_per_operator[1] is TABLEAUS["heun"]
    assert mir.overrides == {(3, 2): TABLEAUS["fe"]}


def test_plan_covers_ignores_zero_slots():
    # minlem has alpha_4[2] = 0, so a plan with no operator-2 default at
    # stage 4 still covers it via the operator default elsewhere
    m = get_method("os437-minlem")
    plan = plan_from_string("rk3:rk3", "DR")
    assert plan.covers(m)
    empty = SubIntegratorPlan({1: TABLEAUS["rk3"]})
    assert not empty.covers(m)
