"""Zeroth-order VJP estimators: exactness on linear maps, sampling contracts."""
import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zo_meshopt.errors import ConfigError, SolverError
from zo_meshopt.zo import (
    ESTIMATOR_KINDS,
    EstimatorSpec,
    draw_directions,
    estimator_stats,
    zo_grad_scalar,
    zo_vjp,
)


def linear_map(a, c):
    def evaluate(m):
        return a @ m + c
    return evaluate


def closed_form_estimate(a, v, draws, mu, b):
    """Oracle for linear maps: difference quotients collapse to <v, A u> exactly
    up to the mu cancellation, so the estimate is sum_j <v, A u_j> u_j / b."""
    acc = np.zeros(a.shape[1])
    for d in draws:
        acc += float(v @ (a @ d.direction)) * d.direction
    return acc / b


@pytest.mark.parametrize("kind", ESTIMATOR_KINDS)
def test_linear_map_matches_closed_form(kind):
    rng = np.random.default_rng(8)
    for trial in range(4):
        dim, out = 6, 5
        a = rng.standard_normal((out, dim))
        c = rng.standard_normal(out)
        v = rng.standard_normal(out)
        m0 = rng.standard_normal(dim)
        spec = EstimatorSpec(kind=kind, mu=1e-3, b=4, d=3, seed=100 + trial)
        evaluate = linear_map(a, c)
        est, n_evals = zo_vjp(evaluate, m0, evaluate(m0), v, spec)
        oracle = closed_form_estimate(a, v, draw_directions(spec, dim), spec.mu, spec.b)
        assert n_evals == 4
        assert np.allclose(est, oracle, rtol=0, atol=1e-9)


def test_coordinate_full_coverage_equals_scaled_transpose():
    """A full coordinate pass with b = D recovers A^T v / D without noise."""
    rng = np.random.default_rng(3)
    a = rng.integers(-4, 5, size=(5, 6)).astype(float)
    v = rng.integers(-4, 5, size=5).astype(float)
    m0 = np.zeros(6)
    spec = EstimatorSpec(kind="coordinate", mu=0.25, b=6, seed=5)
    evaluate = linear_map(a, np.zeros(5))
    est, _ = zo_vjp(evaluate, m0, evaluate(m0), v, spec)
    assert np.array_equal(est, (a.T @ v) / 6.0)


def test_coordinate_directions_cycle_permutations():
    spec = EstimatorSpec(kind="coordinate", b=7, seed=9)
    draws = draw_directions(spec, 3)
    assert len(draws) == 7
    coords = [d.coordinate for d in draws]
    # without replacement inside each full block of 3
    assert sorted(coords[0:3]) == [0, 1, 2]
    assert sorted(coords[3:6]) == [0, 1, 2]
    for d in draws:
        e = np.zeros(3)
        e[d.coordinate] = 1.0
        assert np.array_equal(d.direction, e)


def test_gauss_coord_single_subset_per_call():
    spec = EstimatorSpec(kind="gauss_coord", b=5, d=4, seed=21)
    draws = draw_directions(spec, 16)
    subset = draws[0].subset
    assert subset.shape == (4,)
    for d in draws:
        assert np.array_equal(d.subset, subset)
        off = np.setdiff1d(np.arange(16), subset)
        assert np.all(d.direction[off] == 0.0)
        assert np.any(d.direction[subset] != 0.0)


def test_gauss_coord_full_subset_matches_gaussian():
    for seed in (0, 1, 17):
        g = draw_directions(EstimatorSpec(kind="gaussian", b=3, seed=seed), 10)
        gc = draw_directions(EstimatorSpec(kind="gauss_coord", b=3, d=10, seed=seed), 10)
        for a, b in zip(g, gc):
            assert np.array_equal(a.direction, b.direction)


def test_same_seed_same_estimate():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 5))
    v = rng.standard_normal(4)
    evaluate = linear_map(a, np.zeros(4))
    spec = EstimatorSpec(kind="gaussian", b=2, seed=33)
    e1, _ = zo_vjp(evaluate, np.zeros(5), evaluate(np.zeros(5)), v, spec)
    e2, _ = zo_vjp(evaluate, np.zeros(5), evaluate(np.zeros(5)), v, spec)
    assert np.array_equal(e1, e2)


def test_eval_count_is_exactly_b():
    calls = []
    a = np.eye(3)

    def evaluate(m):
        calls.append(1)
        return a @ m

    spec = EstimatorSpec(kind="gaussian", b=5, seed=2)
    base = a @ np.zeros(3)
    _, n_evals = zo_vjp(evaluate, np.zeros(3), base, np.ones(3), spec)
    assert n_evals == 5
    assert len(calls) == 5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 30), st.integers(-8, 8))
def test_estimate_linear_in_cotangent(seed, scale_pow):
    """Doubling v doubles the estimate exactly; powers of two stay bit-exact."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    v = rng.standard_normal(3)
    s = float(2.0 ** scale_pow)
    evaluate = linear_map(a, np.zeros(3))
    spec = EstimatorSpec(kind="gaussian", b=2, seed=seed)
    base = evaluate(np.zeros(4))
    e1, _ = zo_vjp(evaluate, np.zeros(4), base, v, spec)
    e2, _ = zo_vjp(evaluate, np.zeros(4), base, s * v, spec)
    assert np.array_equal(e2, s * e1)


def test_gaussian_mean_documented_seed():
    """1e5 single-draw estimates of grad(0.5*||x||^2) at (1, 0), seed 123."""
    def f(x):
        return 0.5 * float(x @ x)

    spec = EstimatorSpec(kind="gaussian", mu=1e-3, b=1, seed=123)
    mean, var = estimator_stats(f, np.array([1.0, 0.0]), spec, trials=10**5)
    assert abs(mean[0] - 1.0) <= 0.05
    assert abs(mean[1]) <= 0.05
    assert var[0] > 0.0


def test_scalar_gradient_quadratic():
    def f(x):
        return float(x[0] ** 2 + 3.0 * x[1])

    spec = EstimatorSpec(kind="coordinate", mu=1e-6, b=2, seed=4)
    g = zo_grad_scalar(f, np.array([2.0, -1.0]), spec)
    # both coordinates visited once, forward differences at mu
    assert g == pytest.approx(np.array([4.0, 3.0]) / 2.0, rel=1e-4)


def test_validation_rejects_bad_specs():
    with pytest.raises(ConfigError):
        EstimatorSpec(kind="nope").validate(4)
    with pytest.raises(ConfigError):
        EstimatorSpec(kind="gaussian", mu=0.0).validate(4)
    with pytest.raises(ConfigError):
        EstimatorSpec(kind="gaussian", b=0).validate(4)
    with pytest.raises(ConfigError):
        EstimatorSpec(kind="gauss_coord", d=0).validate(4)
    with pytest.raises(ConfigError):
        EstimatorSpec(kind="gauss_coord", d=5).validate(4)
    with pytest.raises(ConfigError):
        estimator_stats(lambda x: 0.0, np.zeros(2), EstimatorSpec(kind="gaussian"), 1)


def test_shape_mismatch_raises():
    a = np.eye(3)
    evaluate = linear_map(a, np.zeros(3))
    spec = EstimatorSpec(kind="gaussian", b=1, seed=0)
    with pytest.raises(ValueError):
        zo_vjp(evaluate, np.zeros(3), np.zeros(3), np.ones(2), spec)
    with pytest.raises(ValueError):
        zo_vjp(evaluate, np.zeros(3), np.zeros(2), np.ones(3), spec)


def test_non_finite_output_raises():
    def evaluate(m):
        return np.array([np.nan])

    spec = EstimatorSpec(kind="gaussian", b=1, seed=0)
    with pytest.raises(SolverError):
        zo_vjp(evaluate, np.zeros(2), np.zeros(1), np.ones(1), spec)


def test_spec_replace_keeps_fields():
    spec = EstimatorSpec(kind="gaussian", mu=2e-3, b=3, d=7, seed=11)
    moved = dataclasses.replace(spec, seed=12)
    assert moved.mu == 2e-3 and moved.b == 3 and moved.d == 7
    assert moved.seed == 12
