import math
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pznn.closedloop import (
    ControlSetup,
    ExtendedSystem,
    LinearPlant,
    PropagatorDivergence,
    PropagatorOptions,
    check_sets,
    expm_taylor,
    propagate_linear,
    propagate_nonlinear,
    reach,
    simulate,
)
from pznn.expr import Plant
from pznn.interval import Interval
from pznn.io import load_setup
from pznn.network import Layer, Network
from pznn.pz import PolynomialZonotope, evaluate_batch, interval_enclosure, sample_factors

from conftest import random_pz

DEMO = Path(__file__).resolve().parents[1] / "demo"


def bias_controller(n, m, value):
    return Network([Layer(np.zeros((m, n)), np.full(m, value), "identity")])


def ident_controller(n):
    return Network([Layer(np.eye(n), np.zeros(n), "identity")])


def hull_contains(result, times, states, dt, tol=1e-9):
    """Every state at time t lies in the hull of the time-interval set covering t."""
    hulls = result.hulls()
    for t, x in zip(times, states):
        i = min(int(t / dt + 1e-9), len(hulls) - 1)
        for k in {i, max(i - 1, 0)} if abs(t / dt - round(t / dt)) < 1e-9 else {i}:
            if np.all(hulls[k].contains(x, tol)):
                break
        else:
            return False
    return True


# ---------------------------------------------------------------------------
# matrix exponential and one-step propagation


def test_expm_examples():
    T, eps = expm_taylor(np.array([[0.0, 0.1], [0.0, 0.0]]))
    assert np.array_equal(T, [[1.0, 0.1], [0.0, 1.0]]) and eps <= 1e-13
    assert expm_taylor(np.zeros((2, 2))) == (pytest.approx(np.eye(2)), 0.0)
    T, eps = expm_taylor(np.array([[1.0]]))
    assert T[0, 0] == pytest.approx(math.e, abs=1e-9) and eps <= 1e-9


def test_expm_matches_scipy():
    from scipy.linalg import expm

    rng = np.random.default_rng(0)
    for _ in range(20):
        M = rng.normal(size=(4, 4)) * rng.uniform(0.01, 2)
        T, eps = expm_taylor(M, 12)
        ref = expm(M)
        assert np.max(np.abs(T - ref)) <= eps


def test_zdot_equals_z_gives_e():
    pz = PolynomialZonotope.point([1.0])
    nxt, tau = propagate_linear([[1.0]], pz, 1.0)
    box = interval_enclosure(nxt)
    assert box.l[0] <= math.e <= box.u[0] and box.center[0] == pytest.approx(math.e, abs=1e-12)
    th = interval_enclosure(tau)
    assert th.l[0] <= 1.0 and th.u[0] >= math.e


def test_zero_dynamics_keep_set():
    pz = random_pz(np.random.default_rng(1), n=3)
    nxt, tau = propagate_linear(np.zeros((3, 3)), pz, 0.5)
    assert interval_enclosure(nxt) == interval_enclosure(pz)
    assert interval_enclosure(tau) == interval_enclosure(pz)


def test_disturbance_is_enclosed():
    # dz/dt = v, v in [-1, 1]: z(1) in z0 + [-1, 1]
    nxt, _ = propagate_linear([[0.0]], PolynomialZonotope.point([0.0]), 1.0, V=Interval([-1.0], [1.0]))
    box = interval_enclosure(nxt)
    assert box.l[0] <= -1.0 and box.u[0] >= 1.0 and box.u[0] <= 1.0 + 1e-9


@given(st.integers(0, 2 ** 31))
def test_linear_step_contains_exact_solution(seed):
    from scipy.linalg import expm

    rng = np.random.default_rng(seed)
    A = rng.normal(size=(2, 2))
    c = rng.normal(size=2)
    pz = random_pz(rng, n=2, scale=1.0)
    dt = rng.uniform(0.01, 0.5)
    nxt, tau = propagate_linear(A, pz, dt, c)
    a, b, = sample_factors(pz, 200, rng)
    x0 = evaluate_batch(pz, a, b)
    M = np.zeros((3, 3))
    M[:2, :2], M[:2, 2] = A, c
    end, hull = interval_enclosure(nxt), interval_enclosure(tau)
    for t in np.linspace(0, dt, 7):
        E = expm(M * t)
        xt = x0 @ E[:2, :2].T + E[:2, 2]
        assert np.all(hull.contains(xt, 1e-9))
    assert np.all(end.contains(x0 @ expm(M * dt)[:2, :2].T + expm(M * dt)[:2, 2], 1e-9))


# ---------------------------------------------------------------------------
# nonlinear propagation


def test_cubic_decay_contains_simulation():
    plant = Plant(["-x1^3"])
    pz = PolynomialZonotope.from_interval(Interval([0.9], [1.1]))
    nxt, taus, _ = propagate_nonlinear(ExtendedSystem(plant), pz, 0.01)
    assert len(taus) == PropagatorOptions().substeps
    x = np.random.default_rng(0).uniform(0.9, 1.1, 100)
    x[:2] = [0.9, 1.1]
    h = 1e-4
    for _ in range(100):
        k1 = -x ** 3
        k2 = -(x + 0.5 * h * k1) ** 3
        k3 = -(x + 0.5 * h * k2) ** 3
        k4 = -(x + h * k3) ** 3
        x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    assert np.all(interval_enclosure(nxt).contains(x[:, None]))
    exact = np.array([0.9, 1.1]) / np.sqrt(1 + 2 * np.array([0.81, 1.21]) * 0.01)
    assert np.all(interval_enclosure(nxt).contains(exact[:, None]))


def test_zero_field_is_identity():
    pz = PolynomialZonotope.from_interval(Interval([0.0, 1.0], [0.5, 2.0]))
    nxt, _, _ = propagate_nonlinear(ExtendedSystem(Plant(["0", "0"])), pz, 1.0)
    assert interval_enclosure(nxt) == interval_enclosure(pz)


def test_linear_as_expressions_matches_linear_propagator():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    pz = PolynomialZonotope.from_interval(Interval([0.9, -0.1], [1.1, 0.1]))
    lin, _ = propagate_linear(A, pz, 0.1)
    nl, _, _ = propagate_nonlinear(ExtendedSystem(Plant.linear(A)), pz, 0.1,
                                   opts=PropagatorOptions(substeps=1))
    a, b = interval_enclosure(lin), interval_enclosure(nl)
    assert np.allclose(a.l, b.l, atol=1e-9) and np.allclose(a.u, b.u, atol=1e-9)


def test_divergence_raises():
    # finite escape time of dx/dt = x^2 from x = 10 is 0.1
    pz = PolynomialZonotope.from_interval(Interval([9.0], [10.0]))
    with pytest.raises(PropagatorDivergence):
        propagate_nonlinear(ExtendedSystem(Plant(["x1^2"])), pz, 1.0, opts=PropagatorOptions(substeps=1))


# ---------------------------------------------------------------------------
# closed loop


def test_setup_validation():
    plant = LinearPlant([[0.0]], [[1.0]])
    X0 = Interval([0.0], [1.0])
    with pytest.raises(ValueError):
        ControlSetup(plant, bias_controller(2, 1, 0.0), X0, 0.1, 1.0)
    with pytest.raises(ValueError):
        ControlSetup(plant, bias_controller(1, 2, 0.0), X0, 0.1, 1.0)
    with pytest.raises(ValueError):
        ControlSetup(plant, bias_controller(1, 1, 0.0), Interval([0, 0], [1, 1]), 0.1, 1.0)
    with pytest.raises(ValueError):
        ControlSetup(plant, bias_controller(1, 1, 0.0), X0, 0.3, 1.0)
    with pytest.raises(ValueError):
        ControlSetup(plant, bias_controller(1, 1, 0.0), X0, -0.1, 1.0)
    with pytest.raises(ValueError):
        ControlSetup(LinearPlant([[0.0]], [[1.0]], [[1.0]]), bias_controller(1, 1, 0.0), X0, 0.1, 1.0)
    assert ControlSetup(plant, bias_controller(1, 1, 0.0), X0, 0.1, 1.0).steps == 10


def test_zero_dynamics_closed_loop():
    X0 = Interval([0.0, 1.0], [0.5, 2.0])
    setup = ControlSetup(LinearPlant(np.zeros((2, 2)), np.zeros((2, 1))), bias_controller(2, 1, 3.0),
                         X0, 0.1, 0.5)
    res = reach(setup)
    assert len(res.time_points) == 6 and len(res.time_intervals) == 5
    for r in res.time_points + res.time_intervals:
        assert interval_enclosure(r) == X0


@pytest.mark.parametrize("kind", ["linear", "expressions"])
def test_integrator_with_constant_input(kind):
    plant = LinearPlant([[0.0]], [[1.0]]) if kind == "linear" else Plant(["u1"], m=1)
    setup = ControlSetup(plant, bias_controller(1, 1, 0.7), Interval([0.0], [0.0]), 1.0, 2.0)
    res = reach(setup)
    for k, expected in ((1, 0.7), (2, 1.4)):
        box = interval_enclosure(res.time_points[k])
        assert box.l[0] <= expected <= box.u[0] and box.widths()[0] <= 1e-9
    times, states = simulate(setup, [0.0])
    assert states[-1, 0] == pytest.approx(1.4, abs=1e-12)
    assert np.allclose(states[:, 0], 0.7 * times, atol=1e-12)


def test_double_integrator_matrix():
    setup = load_setup(DEMO / "double_integrator.json")[0]
    T, _ = expm_taylor(setup.plant.A * setup.dt)
    assert np.array_equal(T, [[1.0, 0.1], [0.0, 1.0]])


def test_identity_controller_dependency():
    n = 2
    plant = LinearPlant(-np.eye(n), np.eye(n))
    setup = ControlSetup(plant, ident_controller(n), Interval([-1, 0], [1, 0.5]), 0.1, 0.3)
    res = reach(setup)
    rng = np.random.default_rng(0)
    for ext in res.extended:
        a, b = sample_factors(ext, 1000, rng)
        z = evaluate_batch(ext, a, b)
        assert np.max(np.abs(z[:, :n] - z[:, n:])) <= 1e-9


def test_harmonic_oscillator_energy():
    plant = LinearPlant([[0.0, 1.0], [-1.0, 0.0]], np.zeros((2, 1)))
    setup = ControlSetup(plant, bias_controller(2, 1, 0.0), Interval([1, 0], [1, 0]), 0.5, 10.0)
    _, states = simulate(setup, [1.0, 0.0])
    energy = np.sum(states ** 2, axis=1)
    assert np.max(np.abs(energy - 1.0)) <= 1e-6


def test_simulate_batch_shape_and_disturbance():
    plant = LinearPlant([[0.0]], [[0.0]], [[1.0]])
    setup = ControlSetup(plant, bias_controller(1, 1, 0.0), Interval([0.0], [0.0]), 0.1, 1.0,
                         W=Interval([-1.0], [1.0]))
    times, states = simulate(setup, np.zeros((5, 1)), np.random.default_rng(0))
    assert states.shape == (len(times), 5, 1) and times[-1] == pytest.approx(1.0)
    assert np.all(np.abs(states) <= times[:, None, None] + 1e-12)


def test_disturbed_reach_contains_simulation():
    plant = LinearPlant([[0.0, 1.0], [0.0, -0.5]], [[0.0], [1.0]], [[0.0], [1.0]])
    net = Network([Layer([[-1.0, -1.5]], [0.0], "tanh")])
    setup = ControlSetup(plant, net, Interval([0.9, -0.1], [1.1, 0.1]), 0.1, 1.0,
                         W=Interval([-0.05], [0.05]))
    res = reach(setup)
    rng = np.random.default_rng(0)
    x0 = rng.uniform(setup.X0.l, setup.X0.u, (50, 2))
    times, states = simulate(setup, x0, rng, micro_step=0.01)
    assert hull_contains(res, times, states, setup.dt)


def test_check_sets_examples():
    setup = ControlSetup(LinearPlant([[0.0]], [[1.0]]), bias_controller(1, 1, 1.0),
                         Interval([0.0], [0.1]), 0.5, 1.0)
    res = reach(setup)
    assert check_sets(res, goal=Interval([0.9], [1.2])) == {"goal": "proved"}
    assert check_sets(res, goal=Interval([1.05], [1.2])) == {"goal": "not proved"}
    ok = check_sets(res, avoid=[{"A": [[1.0]], "b": [-0.5]}])
    assert ok == {"avoid": "proved"}
    bad = check_sets(res, avoid=[{"A": [[-1.0]], "b": [-0.8]}])
    assert bad == {"avoid": "not proved", "avoid_first_failure": 1}


def test_time_consistency():
    setup = load_setup(DEMO / "double_integrator.json")[0]
    res = reach(setup)
    for i, tau in enumerate(res.time_intervals):
        h = interval_enclosure(tau)
        assert interval_enclosure(res.time_points[i]).subset_of(h.hull(h))
        end = interval_enclosure(res.time_points[i + 1])
        assert np.all(h.l <= end.u) and np.all(end.l <= h.u)


def test_substep_refinement_is_monotone():
    setup = load_setup(DEMO / "pendulum.json")[0]
    setup = replace(setup, tF=0.5)
    hulls = []
    for s in (1, 2, 4, 8):
        res = reach(replace(setup, options=PropagatorOptions(substeps=s)))
        hulls.append(interval_enclosure(res.time_points[-1]))
    for coarse, fine in zip(hulls, hulls[1:]):
        assert np.all(fine.widths() <= coarse.widths() * (1 + 1e-6))


@pytest.mark.parametrize("name", ["double_integrator.json", "pendulum.json"])
def test_demo_fixtures_contain_simulation(name):
    setup = load_setup(DEMO / name)[0]
    res = reach(setup)
    rng = np.random.default_rng(1)
    x0 = rng.uniform(setup.X0.l, setup.X0.u, (30, 2))
    times, states = simulate(setup, x0, rng, micro_step=0.01)
    assert hull_contains(res, times, states, setup.dt)
