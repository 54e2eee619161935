import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reluflow.errors import DegenerateAngleError, DimensionError, DomainError, ZeroVectorError
from reluflow.population import (
    NeuronConfig,
    WeightState,
    double_wedge_second_moment,
    half_space_second_moment,
    polar_of,
    population_gradient,
    population_loss,
    relu_product_moment,
)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


@st.composite
def unit_vectors(draw, d):
    raw = draw(
        st.lists(st.floats(-3, 3), min_size=d, max_size=d).filter(
            lambda xs: 0.5 < sum(x * x for x in xs) < 25.0
        )
    )
    return unit(raw)


# ----------------------------------------------------------------
# second-moment closed forms

def test_half_space_d2():
    got = half_space_second_moment(np.array([1.0, 0.0]))
    assert np.allclose(got, 0.5 * np.eye(2), atol=1e-15)


@given(unit_vectors(3))
def test_half_space_trace(u):
    assert np.trace(half_space_second_moment(u)) == pytest.approx(1.5, abs=1e-12)


def test_double_wedge_orthogonal():
    u = np.array([1.0, 0.0, 0.0])
    v = np.array([0.0, 1.0, 0.0])
    want = 0.25 * np.eye(3) + (np.outer(u, v) + np.outer(v, u)) / (2 * math.pi)
    assert np.allclose(double_wedge_second_moment(u, v), want, atol=1e-15)


@given(unit_vectors(4), unit_vectors(4))
@settings(max_examples=50)
def test_double_wedge_symmetries(u, v):
    if abs(abs(float(u @ v)) - 1.0) < 1e-6:
        return  # degenerate pair, covered separately
    a = double_wedge_second_moment(u, v)
    assert np.allclose(a, a.T, atol=1e-13)
    assert np.allclose(a, double_wedge_second_moment(v, u), atol=1e-13)


@given(unit_vectors(5), unit_vectors(5))
@settings(max_examples=50)
def test_double_wedge_eigenpairs(u, v):
    """u+v and u-v are eigenvectors with eigenvalues
    (1-θ/π)/2 ± sinθ/(2π)."""
    cos = float(np.clip(u @ v, -1.0, 1.0))
    if abs(cos) > 1.0 - 1e-6:
        return
    theta = math.acos(cos)
    a = double_wedge_second_moment(u, v)
    lam = 0.5 * (1.0 - theta / math.pi)
    mu = math.sin(theta) / (2.0 * math.pi)
    p, q = u + v, u - v
    assert np.allclose(a @ p, (lam + mu) * p, atol=1e-12)
    assert np.allclose(a @ q, (lam - mu) * q, atol=1e-12)


def test_double_wedge_degenerate_angle():
    u = unit([1.0, 2.0, -1.0])
    with pytest.raises(DegenerateAngleError):
        double_wedge_second_moment(u, u)
    with pytest.raises(DegenerateAngleError):
        double_wedge_second_moment(u, -u)


def test_relu_product_values():
    assert relu_product_moment(0.0) == pytest.approx(0.5, abs=1e-15)
    assert relu_product_moment(math.pi) == pytest.approx(0.0, abs=1e-15)
    assert relu_product_moment(math.pi / 2) == pytest.approx(1 / (2 * math.pi), abs=1e-15)
    want = 0.5 * (1 / 3) * (-0.5) + math.sin(2 * math.pi / 3) / (2 * math.pi)
    assert relu_product_moment(2 * math.pi / 3) == pytest.approx(want, abs=1e-15)


# ----------------------------------------------------------------
# configs and states

def test_config_validation():
    with pytest.raises(ZeroVectorError):
        NeuronConfig(d=3, m=0, target_w=np.zeros(3))
    with pytest.raises(DomainError):
        NeuronConfig(d=3, m=1, target_w=np.ones(3), target_v=0.3)  # unbalanced
    cfg = NeuronConfig(d=3, m=2, target_w=np.ones(3))
    assert cfg.target_v == pytest.approx(math.sqrt(3.0))
    assert cfg.target_product == pytest.approx(math.sqrt(3.0) ** 2)


def test_weight_state_validation():
    cfg = NeuronConfig(d=2, m=1, target_w=np.array([1.0, 0.0]))
    with pytest.raises(DimensionError):
        population_loss(cfg, WeightState(np.array([1.0, 0.0]), ()))
    with pytest.raises(DimensionError):
        population_loss(cfg, WeightState(np.array([1.0, 0.0, 0.0]), (1.0,)))


def test_polar_of_reference_points():
    cfg = NeuronConfig(d=3, m=0, target_w=np.array([2.0, 0.0, 0.0]))
    at_target = polar_of(cfg, WeightState(np.array([2.0, 0.0, 0.0]), ()))
    assert (at_target.magnitude, at_target.angle) == pytest.approx((2.0, math.pi))
    opposite = polar_of(cfg, WeightState(np.array([-2.0, 0.0, 0.0]), ()))
    assert opposite.angle == pytest.approx(0.0, abs=1e-12)
    perp = polar_of(cfg, WeightState(np.array([0.0, 2.0, 0.0]), ()))
    assert (perp.magnitude, perp.angle) == pytest.approx((2.0, math.pi / 2))


# ----------------------------------------------------------------
# loss and gradient

def test_loss_zero_at_target():
    cfg = NeuronConfig(d=4, m=2, target_w=np.array([1.0, -2.0, 0.5, 1.0]))
    state = WeightState(cfg.target_w.copy(), (cfg.target_v, cfg.target_v))
    assert population_loss(cfg, state) == pytest.approx(0.0, abs=1e-14)


def test_loss_antipodal_one_layer():
    w = np.array([3.0, 4.0])
    cfg = NeuronConfig(d=2, m=0, target_w=w)
    # cross term vanishes at θ=π, leaving ½(½‖w‖² + ½‖w‖²)
    assert population_loss(cfg, WeightState(-w, ())) == pytest.approx(
        0.5 * float(w @ w), abs=1e-12
    )


def test_gradient_zero_at_target():
    cfg = NeuronConfig(d=3, m=1, target_w=np.array([0.5, 1.0, -1.0]))
    state = WeightState(cfg.target_w.copy(), (cfg.target_v,))
    gw, gh = population_gradient(cfg, state)
    assert np.allclose(gw, 0.0, atol=1e-13)
    assert np.allclose(gh, 0.0, atol=1e-13)


def _fd_gradient(cfg, state, h=1e-6):
    def loss_at(w, hidden):
        return population_loss(cfg, WeightState(w, tuple(hidden)))

    gw = np.zeros_like(state.w)
    for i in range(len(state.w)):
        e = np.zeros_like(state.w)
        e[i] = h
        gw[i] = (loss_at(state.w + e, state.hidden) - loss_at(state.w - e, state.hidden)) / (2 * h)
    gh = np.zeros(len(state.hidden))
    for k in range(len(state.hidden)):
        up = list(state.hidden)
        dn = list(state.hidden)
        up[k] += h
        dn[k] -= h
        gh[k] = (loss_at(state.w, up) - loss_at(state.w, dn)) / (2 * h)
    return gw, gh


@pytest.mark.parametrize("m", [0, 1, 2, 3])
def test_gradient_matches_finite_difference(m):
    rng = np.random.default_rng(7 + m)
    cfg = NeuronConfig(d=4, m=m, target_w=unit(rng.standard_normal(4)) * 1.3)
    for _ in range(5):
        w = rng.standard_normal(4)
        w *= (0.4 + rng.random()) / np.linalg.norm(w)
        hidden = tuple(0.5 + rng.random(m))
        state = WeightState(w, hidden)
        gw, gh = population_gradient(cfg, state)
        fw, fh = _fd_gradient(cfg, state)
        scale = max(float(np.linalg.norm(np.concatenate([gw, gh]))), 1e-8)
        assert np.linalg.norm(gw - fw) < 1e-5 * scale
        assert np.linalg.norm(gh - fh) < 1e-5 * scale


def test_balanced_scalar_gradients_equal():
    rng = np.random.default_rng(11)
    cfg = NeuronConfig(d=5, m=2, target_w=rng.standard_normal(5))
    w = rng.standard_normal(5)
    state = WeightState(w, (float(np.linalg.norm(w)),) * 2)
    _, gh = population_gradient(cfg, state)
    assert gh[0] == pytest.approx(gh[1], rel=1e-13)


def test_gradient_rejects_nonpositive_hidden():
    cfg = NeuronConfig(d=2, m=1, target_w=np.array([1.0, 0.0]))
    with pytest.raises(DomainError):
        population_gradient(cfg, WeightState(np.array([0.5, 0.5]), (-0.1,)))
