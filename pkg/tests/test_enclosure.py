import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pznn.enclosure import ApproxPolicy, image_enclosure, image_witness, layer_enclosure
from pznn.interval import Interval
from pznn.network import Layer, Network, forward, random_network
from pznn.pz import (
    PolynomialZonotope,
    affine_map,
    compact,
    evaluate,
    evaluate_batch,
    interval_enclosure,
    sample_factors,
)

BOX2 = Interval([-1, -1], [1, 1])


def mixing_layer():
    # first neuron straddles zero on [-1, 1], second stays in [0.5, 1.5]
    return Layer([[1.0, 0.0], [0.25, 0.25]], [0.0, 1.0], "relu")


def test_identity_layer_is_exact():
    rng = np.random.default_rng(0)
    pz = PolynomialZonotope.from_interval(BOX2)
    layer = Layer(rng.normal(size=(3, 2)), rng.normal(size=3), "identity")
    out, rec = layer_enclosure(pz, layer, ApproxPolicy())
    ref = affine_map(layer.W, pz, layer.b)
    assert rec.mode == "affine" and rec.err_dims is None
    a, b = sample_factors(pz, 500, rng)
    assert np.allclose(evaluate_batch(out, a, b[:, :0]), evaluate_batch(ref, a, b), atol=1e-12)


def test_mixing_layer_coefficients():
    pz = PolynomialZonotope.from_interval(BOX2)
    policy = ApproxPolicy.uniform("relu_closed_form")
    out, rec = layer_enclosure(pz, mixing_layer(), policy)
    assert rec.approx[0].coeffs == (0.25, 0.5, 0.25)
    assert rec.approx[1].coeffs == (0.0, 1.0, 0.0) and rec.approx[1].width == 0
    assert (rec.lower.tolist(), rec.upper.tolist()) == ([-1.0, 0.5], [1.0, 1.5])
    assert rec.approx[0].d_lo == pytest.approx(-0.25) and rec.approx[0].d_hi >= 0


def test_mixing_layer_witness():
    net = Network([mixing_layer()])
    out, trace = image_enclosure(net, BOX2, ApproxPolicy.uniform("relu_closed_form"))
    x = np.random.default_rng(1).uniform(-1, 1, (2000, 2))
    a, b = image_witness(trace, net, x)
    assert np.max(np.abs(evaluate_batch(out, a, b) - forward(net, x))) <= 1e-12


def test_sigmoid_neuron_contains_range():
    net = Network([Layer([[1.0]], [0.0], "sigmoid")])
    out, _ = image_enclosure(net, Interval([-1], [1]))
    box = interval_enclosure(out)
    s = 1 / (1 + np.exp(-np.linspace(-1, 1, 10_001)))
    assert box.l[0] <= s.min() and s.max() <= box.u[0]


def test_point_input_collapses():
    rng = np.random.default_rng(2)
    for act in ("relu", "sigmoid", "tanh"):
        net = random_network([2, 8, 8, 2], act, rng)
        x = rng.uniform(-1, 1, 2)
        out, _ = image_enclosure(net, Interval(x, x))
        box = interval_enclosure(out)
        assert np.max(box.widths()) <= 1e-9
        assert np.allclose(box.center, forward(net, x), atol=1e-9)


@pytest.mark.parametrize("act", ["relu", "sigmoid", "tanh"])
@pytest.mark.parametrize("scheme", ["regression", "relu_closed_form", "taylor", "linear", "best_of"])
def test_witness_random_nets(act, scheme):
    rng = np.random.default_rng([ord(c) for c in act + scheme])
    net = random_network([2, 12, 6, 2], act, rng)
    out, trace = image_enclosure(net, BOX2, ApproxPolicy.uniform(scheme))
    x = rng.uniform(-1, 1, (1000, 2))
    x[:4] = [[-1, -1], [-1, 1], [1, -1], [1, 1]]
    a, b = image_witness(trace, net, x)
    assert np.all(np.abs(a) <= 1) and np.all(np.abs(b) <= 1)
    assert np.max(np.abs(evaluate_batch(out, a, b) - forward(net, x))) <= 1e-7


def test_witness_single_point_returns_assignment():
    rng = np.random.default_rng(3)
    net = random_network([2, 5, 1], "tanh", rng)
    out, trace = image_enclosure(net, BOX2)
    fa = image_witness(trace, net, [0.2, -0.7])
    assert evaluate(out, fa) == pytest.approx(forward(net, [0.2, -0.7]), abs=1e-9)
    with pytest.raises(ValueError):
        image_witness(trace, net, [2.0, 0.0])


def test_witness_through_order_reduction():
    rng = np.random.default_rng(4)
    net = random_network([2, 20, 20, 2], "relu", rng)
    policy = ApproxPolicy(schemes=("regression", "regression"), order=3.0)
    out, trace = image_enclosure(net, BOX2, policy)
    assert any(r.reduction is not None for r in trace.layers)
    x = rng.uniform(-1, 1, (500, 2))
    a, b = image_witness(trace, net, x)
    assert np.max(np.abs(evaluate_batch(out, a, b) - forward(net, x))) <= 1e-7


def test_witness_with_pz_input():
    rng = np.random.default_rng(5)
    X0 = PolynomialZonotope([0.0, 0.5], [[1.0, 0.3], [0.0, 0.5]], [[0.1], [0.0]], [[1, 2], [0, 1]])
    net = random_network([2, 6, 2], "sigmoid", rng)
    out, trace = image_enclosure(net, X0)
    a, b = sample_factors(X0, 300, rng)
    x = evaluate_batch(X0, a, b)
    with pytest.raises(ValueError):
        image_witness(trace, net, x)
    wa, wb = image_witness(trace, net, x, (a, b))
    assert np.max(np.abs(evaluate_batch(out, wa, wb) - forward(net, x))) <= 1e-7


def test_output_keeps_input_factors_first():
    rng = np.random.default_rng(6)
    net = random_network([2, 4, 2], "relu", rng)
    out, _ = image_enclosure(net, BOX2, ApproxPolicy.uniform("linear"))
    assert out.p == 2


def test_linear_policy_adds_no_dependent_columns():
    rng = np.random.default_rng(7)
    for act in ("relu", "sigmoid", "tanh"):
        net = random_network([2, 30, 30, 2], act, rng)
        out, trace = image_enclosure(net, BOX2, ApproxPolicy.uniform("linear"))
        assert out.h <= 2
        assert all(r.mode in ("linear", "affine") for r in trace.layers)


def test_identity_network_exact_after_compact():
    rng = np.random.default_rng(8)
    net = random_network([3, 4, 4, 2], "identity", rng)
    box = Interval([-1, 0, 2], [1, 0.5, 3])
    out, _ = image_enclosure(net, box)
    M, m = np.eye(3), np.zeros(3)
    for layer in net.layers:
        M, m = layer.W @ M, layer.W @ m + layer.b
    ref = compact(affine_map(M, PolynomialZonotope.from_interval(box), m))
    a, b = sample_factors(ref, 500, rng)
    assert np.allclose(evaluate_batch(out, a, b[:, :out.q]), evaluate_batch(ref, a, b), atol=1e-9)


def test_dimension_mismatch():
    net = random_network([3, 2], "relu", np.random.default_rng(0))
    with pytest.raises(ValueError):
        image_enclosure(net, BOX2)
    with pytest.raises(ValueError):
        layer_enclosure(PolynomialZonotope.from_interval(BOX2), net.layers[0], ApproxPolicy())


def test_policy_validation_and_dict():
    p = ApproxPolicy()
    assert p.scheme_for(0) == "regression" and p.scheme_for(1) == "regression"
    assert p.scheme_for(5) == "linear"
    assert ApproxPolicy.from_dict(p.to_dict()) == p
    q = ApproxPolicy.from_dict({"schemes": ["taylor"], "default": "best_of", "samples": 5})
    assert q.scheme_for(0) == "taylor" and q.scheme_for(1) == "best_of" and q.samples == 5
    for bad in ({"samples": 2}, {"precision": 0.0}, {"order": 0.5}, {"default": "cubic"}):
        with pytest.raises(ValueError):
            ApproxPolicy.from_dict(bad)


def test_relu_pure_cases_are_exact():
    net = Network([Layer([[1.0], [-1.0]], [2.0, -2.0], "relu")])
    out, trace = image_enclosure(net, Interval([-1], [1]))
    assert [a.width for a in trace.layers[0].approx] == [0, 0]
    box = interval_enclosure(out)
    assert box == Interval([1, 0], [3, 0])


@given(st.integers(0, 2 ** 31), st.sampled_from(["relu", "sigmoid", "tanh"]))
def test_enclosure_contains_samples(seed, act):
    rng = np.random.default_rng(seed)
    net = random_network([2, 7, 2], act, rng)
    out, _ = image_enclosure(net, BOX2)
    box = interval_enclosure(out)
    y = forward(net, rng.uniform(-1, 1, (500, 2)))
    assert np.all(box.contains(y, tol=1e-9))
