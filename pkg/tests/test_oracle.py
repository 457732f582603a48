import math

import numpy as np
import pytest

from maurey.integrator import integrate_min, integrate_region
from maurey.measures import OH_TO_CP, OH_TO_LP, MonomialWeight, ParameterError, build_scenario, custom_scenario, derive_regions
from maurey.oracle import LogBox, UnboundedTailError, mc_estimate, quad_box, tail_bound

M = MonomialWeight.make


@pytest.fixture(scope="module")
def toy():
    """int min(t, t^-3) dt, i.e. min(t^2, t^-2) against dt/t; total 1."""
    return custom_scenario(("t",), [M(("t",), 0, t=2), M(("t",), 0, t=-2)])


TOY_BOX = LogBox((math.log(1e-6),), (math.log(1e6),))


def test_toy_quadrature(toy):
    est = quad_box(toy, TOY_BOX, 1e-8)
    assert est.value == pytest.approx(1.0, abs=1e-8)
    assert est.covers(1.0)


def test_toy_tail_is_exact_two_sided_mass(toy):
    # int_{1e6}^inf t^-3 dt + int_0^{1e-6} t dt = 5e-13 + 5e-13
    b = tail_bound(toy, TOY_BOX)
    assert b >= 1e-12 * (1 - 1e-9)
    assert b == pytest.approx(1e-12, rel=1e-9)


def test_tail_shrinks_when_box_grows(toy):
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    a = tail_bound(spec, LogBox.symmetric(4, 20))
    b = tail_bound(spec, LogBox.symmetric(4, 40))
    assert b < a
    assert tail_bound(toy, TOY_BOX.scaled(2)) < tail_bound(toy, TOY_BOX)


def test_lp_tail_relative_to_estimate():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    assert tail_bound(spec, LogBox.symmetric(4, 40)) <= 1e-8 * integrate_min(spec)


def test_no_decay_raises():
    flat = custom_scenario(("t",), [M(("t",), 0, t=2), M(("t",), 0)])
    with pytest.raises(UnboundedTailError):
        tail_bound(flat, LogBox((-1.0,), (1.0,)))


def test_constant_integrand_gives_volume():
    one = custom_scenario(("x", "y"), [M(("x", "y"), 0)])
    box = LogBox((0.0, 0.0), (1.0, 1.0))
    assert quad_box(one, box, 1e-10, with_tail=False).value == pytest.approx(1.0, rel=1e-14)
    assert box.volume() == 1.0


def test_bad_inputs():
    one = custom_scenario(("x",), [M(("x",), 0)])
    with pytest.raises(ParameterError):
        quad_box(one, LogBox((0.0,), (1.0,)), 0.0)
    with pytest.raises(ParameterError):
        LogBox((1.0,), (0.0,))


@pytest.mark.parametrize("n", [16, 256])
@pytest.mark.parametrize("theta", [0.3, 0.7])
def test_region_mode_matches_closed_form(n, theta):
    spec = build_scenario(OH_TO_LP, theta, n)
    r = next(r for r in derive_regions(spec) if r.id == (1, 1))
    est = quad_box(spec, LogBox.symmetric(4, 60), 1e-9, region=r, with_tail=False)
    assert est.value == pytest.approx(integrate_region(spec, r), rel=1e-6)


def test_partition_matches_integrator_lp():
    spec = build_scenario(OH_TO_LP, 0.7, 16)
    est = quad_box(spec, LogBox.symmetric(4, 40), 1e-6)
    exact = integrate_min(spec)
    assert abs(est.value - exact) <= est.quadrature_error + est.tail_bound
    assert est.covers(exact)


def test_cp_partition_and_generic_modes():
    spec = build_scenario(OH_TO_CP, 0.7, 64)
    exact = integrate_min(spec)
    box = LogBox.symmetric(2, 60)
    a = quad_box(spec, box, 1e-8)
    b = quad_box(spec, box, 1e-8, partition=False)
    for est in (a, b):
        assert est.value == pytest.approx(exact, rel=1e-6)
        assert est.covers(exact)


@pytest.mark.parametrize("rid", [(1, 1), (2, 3), (4, 2)])
def test_symmetry_invariance(rid):
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    regions = {r.id: r for r in derive_regions(spec)}
    box = LogBox.symmetric(4, 60)
    a = quad_box(spec, box, 1e-7, region=regions[rid], with_tail=False)
    b = quad_box(spec, box, 1e-7, region=regions[(rid[0] + 4, rid[1])], with_tail=False)
    assert a.value == pytest.approx(b.value, rel=1e-6)


def test_mc_toy_coverage(toy):
    hits = sum(mc_estimate(toy, seed, 1000).covers(1.0) for seed in range(100))
    assert hits >= 93


def test_mc_deterministic_and_covers():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    a, b = mc_estimate(spec, 11, 20_000), mc_estimate(spec, 11, 20_000)
    assert a.value == b.value and a.quadrature_error == b.quadrature_error
    assert a.covers(integrate_min(spec))


def test_mc_rate():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    w1 = np.mean([mc_estimate(spec, s, 4000).quadrature_error for s in range(8)])
    w4 = np.mean([mc_estimate(spec, s, 16000).quadrature_error for s in range(8)])
    assert w1 / w4 == pytest.approx(2.0, rel=0.3)


def test_mc_rejects_small_n(toy):
    with pytest.raises(ParameterError):
        mc_estimate(toy, 0, 10)
