import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from daol.losses import FeasibleSet, LossSpec, loss_value, project, step_size, subgradient

floats = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
vec3 = st.lists(floats, min_size=3, max_size=3).map(np.array)


def unit_x(v):
    n = np.linalg.norm(v)
    return v / n if n > 1 else v


@pytest.mark.parametrize("lam,w,expected", [
    (0.0, (0, 0), (-1, 0)),
    (0.0, (2, 0), (0, 0)),
    (1.0, (2, 0), (2, 0)),
])
def test_subgradient_examples(lam, w, expected):
    g = subgradient(LossSpec(lam), np.array(w, float), np.array([1.0, 0.0]), 1.0)
    np.testing.assert_array_equal(g, expected)


def test_subgradient_tie_takes_regularizer_side():
    g = subgradient(LossSpec(0.5), np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.0)
    np.testing.assert_array_equal(g, [0.5, 0.0])


def test_subgradient_batched_matches_single(rng):
    W = rng.standard_normal((4, 3))
    X = rng.standard_normal((4, 3))
    y = np.array([1.0, -1.0, 1.0, -1.0])
    spec = LossSpec(0.2)
    batch = subgradient(spec, W, X, y)
    for i in range(4):
        np.testing.assert_array_equal(batch[i], subgradient(spec, W[i], X[i], y[i]))


@pytest.mark.parametrize("lam,w,x,y,expected", [
    (0.0, (0, 0), (0.3, -0.7), -1, 1.0),
    (0.0, (2, 0), (1, 0), 1, 0.0),
    (1.0, (1, 0), (1, 0), 1, 0.5),
])
def test_loss_value_examples(lam, w, x, y, expected):
    assert loss_value(LossSpec(lam), np.array(w, float), np.array(x, float), y) == expected


@pytest.mark.parametrize("domain,w,expected", [
    (FeasibleSet.ball(1), (0.3, 0.4), (0.3, 0.4)),
    (FeasibleSet.ball(1), (3, 4), (0.6, 0.8)),
    (FeasibleSet.box([0, 0], [1, 1]), (-2, 0.5), (0, 0.5)),
    (FeasibleSet(), (7, -9), (7, -9)),
])
def test_project_examples(domain, w, expected):
    np.testing.assert_allclose(project(domain, np.array(w, float)), expected, atol=1e-15)


@pytest.mark.parametrize("lam,t,expected", [(0.5, 1, 1.0), (0.0, 4, 0.25), (2.0, 5, 0.05)])
def test_step_size_examples(lam, t, expected):
    assert step_size(lam, t) == pytest.approx(expected, rel=1e-15)


def test_step_size_rejects_bad_input():
    with pytest.raises(ValueError):
        step_size(0.1, 0)
    with pytest.raises(ValueError):
        step_size(-1.0, 3)


def test_for_domain_defaults():
    spec = LossSpec.for_domain(0.1, FeasibleSet.ball(5))
    assert spec.grad_bound == pytest.approx(1.5)
    assert FeasibleSet.ball(5).diameter == 10
    assert FeasibleSet().diameter == float("inf")


@settings(max_examples=1000, deadline=None)
@given(vec3, vec3, vec3, st.sampled_from([-1.0, 1.0]), st.floats(0, 2))
def test_subgradient_inequality(w, w2, x, y, lam):
    spec = LossSpec(lam)
    x = unit_x(x)
    g = subgradient(spec, w, x, y)
    assert loss_value(spec, w2, x, y) - loss_value(spec, w, x, y) >= np.dot(w2 - w, g) - 1e-9


@settings(max_examples=500, deadline=None)
@given(vec3, vec3, vec3, st.sampled_from([-1.0, 1.0]), st.floats(0.01, 2))
def test_strong_convexity(w, w2, x, y, lam):
    spec = LossSpec(lam)
    x = unit_x(x)
    g = subgradient(spec, w, x, y)
    gap = loss_value(spec, w2, x, y) - loss_value(spec, w, x, y) - np.dot(w2 - w, g)
    assert gap >= 0.5 * lam * np.dot(w2 - w, w2 - w) - 1e-9


domains = st.sampled_from([FeasibleSet.ball(1.0), FeasibleSet.ball(2.5),
                           FeasibleSet.box(np.array([-1.0, 0.0, -2.0]), np.array([1.0, 0.5, 2.0]))])


@settings(max_examples=500, deadline=None)
@given(domains, vec3, vec3, vec3)
def test_projection_properties(domain, u, v, w):
    pu, pv = project(domain, u), project(domain, v)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12
    assert domain.contains(pu)
    w_in = project(domain, w)
    # <P(u) - u, u - w> <= -||P(u) - u||^2 for w in the set
    lhs = np.dot(pu - u, u - w_in)
    assert lhs <= -np.dot(pu - u, pu - u) + 1e-9


@settings(max_examples=500, deadline=None)
@given(vec3, vec3, st.sampled_from([-1.0, 1.0]), st.floats(0, 2), st.floats(0.1, 5))
def test_subgradient_norm_bound(w, x, y, lam, rho):
    w = project(FeasibleSet.ball(rho), w)
    g = subgradient(LossSpec(lam), w, unit_x(x), y)
    assert np.linalg.norm(g) <= 1 + lam * rho + 1e-12


def test_non_finite_inputs_rejected():
    with pytest.raises(ValueError):
        subgradient(LossSpec(0.0), np.array([np.nan, 0.0]), np.array([1.0, 0.0]), 1.0)
