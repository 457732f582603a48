import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maurey.measures import (
    L2,
    OH_TO_CP,
    OH_TO_LP,
    OH_TO_LP_RELAXED,
    PROJ,
    DomainError,
    MonomialWeight,
    ParameterError,
    StepDiscretization,
    TwoWeightInterpolation,
    active_term,
    build_scenario,
    derive_regions,
    embed_norm,
    kfunc_constant,
    kfunc_norm,
    project_norm,
    region_centroid_log,
    sequence_norm,
    step_embed,
    step_project,
)

V = ("s", "t", "u", "v")
REDUCED = [
    dict(n=-1, s=4, u=-2, v=-2),
    dict(n=-1, t=4),
    dict(s=4, u=-2),
    dict(t=4, v=-2),
    dict(u=-2, v=-2),
    dict(u=-2),
    dict(),
    dict(v=-2),
]


def test_reduced_terms_match_closed_list():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    for w, want in zip(spec.reduced_weights(), REDUCED):
        assert w.n_power == want.get("n", 0)
        for var in V:
            assert w.exponent(var) == want.get(var, 0)


def test_lp_has_two_l2_and_six_projective_terms():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    kinds = [t.kind for t in spec.terms]
    assert kinds == [L2, L2] + [PROJ] * 6
    for t in spec.terms[2:]:
        assert sorted(t.groups[0] + t.groups[1]) == sorted(V)
        assert not set(t.groups[0]) & set(t.groups[1])
    assert spec.reduced_weights()[6].exponents == {v: 0 for v in V}


def test_relaxed_uses_product_densities():
    a = build_scenario(OH_TO_LP, 0.4, 32)
    b = build_scenario(OH_TO_LP_RELAXED, 0.4, 32)
    assert all(t.kind == L2 for t in b.terms)
    for wa, wb in zip(a.product_weights(), b.product_weights()):
        assert wa.exponents == wb.exponents and wa.n_power == wb.n_power


def test_n_one_collapses_first_terms_onto_third_and_fourth():
    spec = build_scenario(OH_TO_LP, 0.3, 1)
    r = spec.reduced_weights()
    x = np.exp(np.random.default_rng(0).normal(size=(50, 4)))
    assert np.allclose(r[0](x, 1) * x[:, 3] ** 2, r[2](x, 1))
    assert np.allclose(r[1](x, 1), r[3](x, 1) * x[:, 3] ** 2)


def test_cp_scenario_shape():
    spec = build_scenario(OH_TO_CP, 0.7, 8)
    assert len(spec.terms) == 4 and spec.variables == ("t", "s")


@pytest.mark.parametrize("kind,theta", [(OH_TO_LP, 0.0), (OH_TO_LP, 1.2), (OH_TO_CP, 0.4), (OH_TO_CP, 1.0)])
def test_theta_out_of_range(kind, theta):
    with pytest.raises(ParameterError, match="outside"):
        build_scenario(kind, theta, 4)


def test_active_term_examples():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    assert active_term(spec, (1, 3, 0.5, 0.1)) == 6
    big = active_term(spec, (1e6, 1e6, 1.0, 1.0))
    assert big in (4, 5, 6, 7)
    with pytest.raises(DomainError):
        active_term(spec, (1, 0, 1, 1))


@given(st.lists(st.floats(-6, 6), min_size=4, max_size=4), st.sampled_from([0.2, 0.5, 0.8]))
def test_active_term_attains_minimum(logx, theta):
    spec = build_scenario(OH_TO_LP, theta, 16)
    x = np.exp(logx)
    vals = [w(x, 16) for w in spec.reduced_weights()]
    assert vals[active_term(spec, x)] == pytest.approx(min(vals), rel=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_monomial_multiplicative(logs):
    w = MonomialWeight.make(V, 1, coefficient=2.5, s=Fraction(3, 2), t=-1, u=0.25)
    x, y = np.exp(logs[:4]), np.exp(logs[4:])
    assert w(x * y, 3) * w.coefficient * 3 == pytest.approx(w(x, 3) * w(y, 3), rel=1e-10)


def test_region_a11_bounds():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    regions = derive_regions(spec)
    assert len(regions) == 24
    a11 = next(r for r in regions if r.id == (1, 1))
    assert a11.active_term == 6
    inside = (2.0, 3.0, 0.5, 0.1)  # u<1, v<n^{-1/2}=0.25, s>=u^{1/2}, t>=n^{1/4}=2
    assert a11.contains(inside, 16)
    assert not a11.contains((2.0, 1.5, 0.5, 0.1), 16)
    assert not a11.contains((0.5, 3.0, 0.5, 0.1), 16)


@pytest.mark.parametrize("kind,theta,n", [(OH_TO_LP, 0.5, 16), (OH_TO_LP, 0.3, 1000), (OH_TO_CP, 0.7, 64)])
def test_regions_partition(kind, theta, n):
    spec = build_scenario(kind, theta, n)
    regions = derive_regions(spec)
    X = np.random.default_rng(1).uniform(-12, 12, size=(100_000, spec.dim))
    logn = math.log(n)
    member = np.stack([r.contains_log(X, logn) for r in regions])
    assert np.all(member.sum(axis=0) == 1)
    G, c = spec.log_weight_matrix()
    vals = X @ G.T + c
    owner = np.argmax(member, axis=0)
    active = np.array([r.active_term for r in regions])[owner]
    assert np.allclose(vals[np.arange(len(X)), active], vals.min(axis=1), rtol=0, atol=1e-9)


@pytest.mark.parametrize("kind,theta,n", [(OH_TO_LP, 0.5, 16), (OH_TO_CP, 0.7, 64)])
def test_active_term_at_centroids(kind, theta, n):
    spec = build_scenario(kind, theta, n)
    for r in derive_regions(spec):
        X = region_centroid_log(r, math.log(n))
        assert r.contains_log(X, math.log(n))
        assert active_term(spec, np.exp(X)) == r.active_term


def test_mirror_symmetry_of_regions():
    spec = build_scenario(OH_TO_LP, 0.5, 16)
    regions = {r.id: r for r in derive_regions(spec)}
    X = np.random.default_rng(2).uniform(-8, 8, size=(20_000, 4))
    Xm = np.stack([X[:, 1], X[:, 0], -X[:, 2], -X[:, 3]], axis=1)
    logn = math.log(16)
    for i in range(1, 5):
        for j in range(1, 4):
            a = regions[(i, j)].contains_log(X, logn)
            b = regions[(i + 4, j)].contains_log(Xm, logn)
            # boundaries are half-open, so they can disagree on a null set only
            assert np.mean(a != b) == 0


def test_kfunc_unit_weights_min_kernel():
    th = 0.3
    ti = TwoWeightInterpolation(np.ones(5), np.ones(5), th)
    x = np.arange(1.0, 6.0)
    assert kfunc_norm(ti, x, kernel="min") == pytest.approx(np.linalg.norm(x) / math.sqrt(2 * th * (1 - th)), rel=1e-14)
    assert kfunc_norm(ti, np.zeros(5)) == 0.0
    assert kfunc_norm(TwoWeightInterpolation(np.ones(0), np.ones(0), th), np.ones(0)) == 0.0


def test_kfunc_parallel_constant_matches_quadrature():
    from scipy.integrate import quad

    for th in (0.1, 0.5, 0.9):
        f = lambda t: t ** (-2 * th) * t**2 / (1 + t**2) / t  # noqa: E731
        val = quad(f, 0, 1)[0] + quad(f, 1, np.inf)[0]
        assert kfunc_constant(th) == pytest.approx(val, rel=1e-8)


def test_kfunc_constant_band():
    ths = np.linspace(0.05, 0.95, 19)
    band = [math.sqrt(kfunc_constant(t)) * math.sqrt(t * (1 - t)) for t in ths]
    assert max(band) / min(band) < 1.3


@given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_kfunc_is_a_norm(seed, th):
    rng = np.random.default_rng(seed)
    ti = TwoWeightInterpolation(np.exp(rng.normal(size=6)), np.exp(rng.normal(size=6)), th)
    x, y = rng.normal(size=6) + 1j * rng.normal(size=6), rng.normal(size=6)
    lam = rng.normal()
    assert kfunc_norm(ti, lam * x) == pytest.approx(abs(lam) * kfunc_norm(ti, x), rel=1e-12)
    assert kfunc_norm(ti, x + y) <= (kfunc_norm(ti, x) + kfunc_norm(ti, y)) * (1 + 1e-12)


def test_step_round_trip_and_alpha_zero():
    sd = StepDiscretization(1.5, 0.0, 6)
    x = np.random.default_rng(3).normal(size=13)
    assert np.allclose(step_project(sd, step_embed(sd, x)), x, rtol=1e-15, atol=0)
    assert embed_norm(sd) == 1.0
    assert step_embed(sd, x).l2_norm(0.0) == pytest.approx(sequence_norm(sd, x), rel=1e-14)


@pytest.mark.parametrize("delta", [1.1, 1.5, 2.0])
@pytest.mark.parametrize("alpha", [-0.9, -0.3, 0.7, 1.7, 1.9])
def test_step_norm_bounds(delta, alpha):
    sd = StepDiscretization(delta, alpha, 5)
    ld = math.log(delta)
    assert embed_norm(sd) ** 2 == pytest.approx((delta ** (2 * alpha) - 1) / (2 * alpha * ld), rel=1e-12)
    assert embed_norm(sd) <= max(1.0, delta**alpha) + 1e-15
    assert project_norm(sd) <= max(1.0, delta ** (-alpha)) + 1e-15
    x = np.random.default_rng(4).normal(size=11)
    f = step_embed(sd, x)
    assert f.l2_norm(alpha) <= embed_norm(sd) * sequence_norm(sd, x) * (1 + 1e-12)
    assert np.array_equal(step_project(sd, f), step_project(sd, f))
    assert np.allclose(step_project(sd, f), x, rtol=1e-14)


def test_step_rejects_bad_delta():
    with pytest.raises(ParameterError):
        StepDiscretization(1.0, 0.5, 3)
