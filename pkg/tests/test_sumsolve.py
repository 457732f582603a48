import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maurey.integrator import integrate_min
from maurey.measures import OH_TO_LP, MonomialWeight, ParameterError, build_scenario, custom_scenario, derive_regions
from maurey.oracle import LogBox, quad_box
from maurey.sumsolve import (
    SolverConfig,
    box_min_integral,
    discretize,
    l2_norm,
    nuclear_norm,
    region_assignment_value,
    relaxed_lower_bound,
    solve_decomposition,
)

M = MonomialWeight.make
TOY_BOX = LogBox((math.log(1e-6),), (math.log(1e6),))


@pytest.fixture(scope="module")
def toy():
    return custom_scenario(("t",), [M(("t",), 0, t=2), M(("t",), 0, t=-2)])


def test_unit_weight_masses():
    one = custom_scenario(("x", "y"), [M(("x", "y"), 0)])
    g = discretize(one, LogBox((0.0, 0.0), (1.0, 1.0)), 2)
    assert np.allclose(g.masses[0], 0.25, rtol=1e-15)


def test_masses_match_quadrature_and_refinement():
    w = M(("x", "y"), 0, coefficient=1.5, x=1.5, y=-0.5)
    spec = custom_scenario(("x", "y"), [w])
    box = LogBox((-2.0, -1.0), (1.0, 3.0))
    ref = quad_box(spec, box, 1e-12, with_tail=False).value
    for res in (3, 6, 12):
        assert discretize(spec, box, res).masses[0].sum() == pytest.approx(ref, rel=1e-10)


def test_resolution_must_be_at_least_two(toy):
    with pytest.raises(ParameterError):
        discretize(toy, TOY_BOX, 1)


@given(st.integers(0, 2**32 - 1))
def test_rank_one_and_contraction(seed):
    rng = np.random.default_rng(seed)
    g, h = rng.normal(size=5), rng.normal(size=4)
    rm, cm = rng.uniform(0.1, 2, 5), rng.uniform(0.1, 2, 4)
    assert nuclear_norm(np.outer(g, h), rm, cm) == pytest.approx(l2_norm(g, rm) * l2_norm(h, cm), rel=1e-10)
    K = rng.normal(size=(5, 4))
    assert nuclear_norm(K, rm, cm) >= l2_norm(K, np.outer(rm, cm)) * (1 - 1e-12)


def test_indicator_of_product_region():
    rm, cm = np.array([1.0, 2.0, 3.0]), np.array([0.5, 4.0])
    ind = np.outer([1, 0, 1], [0, 1])
    assert nuclear_norm(ind, rm, cm) == pytest.approx(math.sqrt(4.0) * math.sqrt(4.0), rel=1e-12)


def test_single_term_value_is_l2_norm():
    w = M(("x",), 0, x=1)
    spec = custom_scenario(("x",), [w])
    grid = discretize(spec, LogBox((-1.0,), (2.0,)), 6)
    res = solve_decomposition(spec, grid)
    norm = math.sqrt(grid.masses[0].sum())
    assert res.objective == pytest.approx(norm, rel=1e-14)
    assert relaxed_lower_bound(spec, grid) == pytest.approx(norm, rel=1e-10)
    assert region_assignment_value(spec, None, grid) == pytest.approx(norm, rel=1e-14)


def test_toy_sandwich(toy):
    grid = discretize(toy, TOY_BOX, 32)
    res = solve_decomposition(toy, grid)
    M_ = box_min_integral(toy, TOY_BOX)
    assert 0.5 * math.sqrt(M_) <= res.objective <= math.sqrt(2) * math.sqrt(M_)
    assert res.lower_bound == pytest.approx(0.5 * math.sqrt(M_), rel=1e-9)
    assert res.lower_bound <= res.objective <= res.upper_bound


def test_toy_refinement_stability(toy):
    a = solve_decomposition(toy, discretize(toy, TOY_BOX, 16)).objective
    b = solve_decomposition(toy, discretize(toy, TOY_BOX, 32)).objective
    assert abs(a - b) <= 0.1 * b


@pytest.mark.parametrize("lam", [0.25, 3.0])
def test_scale_equivariance(toy, lam):
    grid = discretize(toy, TOY_BOX, 16)
    base = solve_decomposition(toy, grid).objective
    assert solve_decomposition(toy, grid, target=lam).objective == pytest.approx(lam * base, rel=1e-6)


def test_history_nonincreasing(toy):
    res = solve_decomposition(toy, discretize(toy, TOY_BOX, 16))
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0)


@pytest.fixture(scope="module")
def lp_result():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    box = LogBox.symmetric(4, 4.0)
    grid = discretize(spec, box, 8)
    M_ = box_min_integral(spec, box, 1e-5)
    return spec, grid, M_, solve_decomposition(spec, grid, box_integral=M_)


def test_lp_sandwich(lp_result):
    spec, grid, M_, res = lp_result
    assert res.lower_bound <= res.objective <= res.upper_bound
    assert res.upper_bound == pytest.approx(region_assignment_value(spec, derive_regions(spec), grid), rel=1e-12)
    assert res.objective <= region_assignment_value(spec, None, grid)
    assert res.lower_bound / res.objective <= 1
    # band of acceptance criterion 6; lower/objective alone is only >= 1/(L sqrt(L))
    assert 1 / 8 <= res.objective / math.sqrt(M_) <= math.sqrt(8) * 1.5
    assert res.lower_bound / res.objective >= 1 / (8 * math.sqrt(8))
    assert res.converged


def test_lp_fields_sum_to_one(lp_result, tmp_path):
    spec, grid, M_, res = lp_result
    assert np.allclose(res.fields.sum(axis=0), 1.0, atol=1e-9)
    path = tmp_path / "fields.csv"
    res.dump_fields(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "cell,term,value" and len(lines) == 1 + 8 * grid.cells


def test_box_integral_below_full_integral(lp_result):
    spec, grid, M_, res = lp_result
    assert 0 < M_ < integrate_min(spec)


def test_solver_config_defaults():
    cfg = SolverConfig()
    assert cfg.max_iter == 5000 and cfg.tolerance == 1e-7
