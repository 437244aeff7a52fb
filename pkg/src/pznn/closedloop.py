"""Reachability of sampled-data systems with a neural-network controller.

Every control cycle the controller image of the current state set is
combined with the state set by a dependency-preserving Cartesian product,
and the extended system ``d/dt [x; u] = [f(x, u, w); 0]`` is propagated over
one sampling period. Linear plants are propagated with a truncated matrix
exponential and explicit remainder bounds. Nonlinear plants are linearised
at the set center with a Lagrange remainder found by fixed-point iteration
(conservative linearisation, not polynomialisation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .enclosure import ApproxPolicy, image_enclosure
from .expr import Const, Plant, evaluate as eval_expr, interval_eval
from .interval import Interval, ScalarInterval, iv_pow_int
from .network import Network, forward
from .openloop import OutputSpec, check_enclosure
from .pz import (
    PolynomialZonotope,
    affine_map,
    cartesian_product_dep,
    compact,
    interval_enclosure,
    minkowski_sum_interval,
    rebase,
    reduce_order,
)


class PropagatorDivergence(RuntimeError):
    """The remainder fixed point was not found."""


# ---------------------------------------------------------------------------
# plant descriptions


@dataclass(frozen=True)
class LinearPlant:
    """``dx/dt = A x + B u + E w``."""
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        E = np.zeros((n, 0)) if self.E is None else np.asarray(self.E, dtype=float).reshape(n, -1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def r(self) -> int:
        return self.E.shape[1]

    def as_plant(self) -> Plant:
        return Plant.linear(self.A, self.B, self.E)

    def __call__(self, x, u=(), w=()):
        x = np.asarray(x, dtype=float)
        out = self.A @ x
        if self.m:
            out = out + self.B @ np.asarray(u, dtype=float)
        if self.r:
            out = out + self.E @ np.asarray(w, dtype=float)
        return out


@dataclass(frozen=True)
class PropagatorOptions:
    taylor_order: int = 12
    substeps: int = 4
    max_iter: int = 10
    order: float = 20.0


@dataclass
class ControlSetup:
    plant: Plant | LinearPlant
    controller: Network
    X0: Interval | PolynomialZonotope
    dt: float
    tF: float
    W: Interval | None = None
    policy: ApproxPolicy = field(default_factory=ApproxPolicy)
    options: PropagatorOptions = field(default_factory=PropagatorOptions)

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        if self.controller.input_dim != n:
            raise ValueError(f"controller takes {self.controller.input_dim} inputs, plant has {n} states")
        if self.controller.output_dim != m:
            raise ValueError(f"controller gives {self.controller.output_dim} outputs, plant takes {m}")
        if self.X0.dim != n:
            raise ValueError("initial set dimension does not match the plant")
        if self.dt <= 0 or self.tF <= 0:
            raise ValueError("sampling period and final time must be positive")
        k = self.tF / self.dt
        if abs(k - round(k)) > 1e-9 * max(1.0, k):
            raise ValueError("final time must be a multiple of the sampling period")
        if self.plant.r and (self.W is None or self.W.dim != self.plant.r):
            raise ValueError("disturbance set missing or of wrong dimension")

    @property
    def steps(self) -> int:
        return int(round(self.tF / self.dt))


@dataclass
class ReachResult:
    time_points: list          # R(t_0), ..., R(t_F)
    time_intervals: list       # R(tau_0), ..., R(tau_{F-1})
    inputs: list               # controller images per cycle
    extended: list             # extended initial set per cycle
    substep_intervals: list    # per cycle, the time-interval set of every substep
    dt: float
    propagator: str
    status: str = "ok"

    def hulls(self) -> list[Interval]:
        return [interval_enclosure(r) for r in self.time_intervals]


# ---------------------------------------------------------------------------
# matrix exponential with remainder bound


def expm_taylor(M: np.ndarray, order: int = 12):
    """Truncated Taylor series of ``exp(M)`` with scaling and squaring.

    Returns ``(T, eps)`` with ``||exp(M) - T||_inf <= eps``. The bound covers
    series truncation and a first-order estimate of floating-point rounding
    in the matrix products.
    """
    M = np.asarray(M, dtype=float)
    N = M.shape[0]
    norm = np.linalg.norm(M, np.inf) if N else 0.0
    if norm == 0.0:
        return np.eye(N), 0.0
    u = np.finfo(float).eps
    s = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    Ms = M / 2.0 ** s
    ns = norm / 2.0 ** s
    T = np.eye(N)
    term = np.eye(N)
    for k in range(1, order + 1):
        term = term @ Ms / k
        T = T + term
    eps = ns ** (order + 1) / math.factorial(order + 1) / (1.0 - ns / (order + 2))
    eps += (N + 2) * (order + 1) * u * math.exp(ns)
    for _ in range(s):
        tn = np.linalg.norm(T, np.inf)
        eps = 2.0 * tn * eps + eps * eps + (N + 1) * u * tn * tn
        T = T @ T
    return T, eps


def _input_integral(A: np.ndarray, dt: float, order: int):
    """``int_0^dt exp(A s) ds`` via an augmented exponential, with error bound."""
    N = A.shape[0]
    aug = np.zeros((2 * N, 2 * N))
    aug[:N, :N] = A
    aug[:N, N:] = np.eye(N)
    T, eps = expm_taylor(aug * dt, order)
    return T[:N, :N], T[:N, N:], eps


def _box(rad: np.ndarray) -> Interval:
    rad = np.maximum(rad, 0.0)
    return Interval(-rad, rad)


def _interpolate(pz0: PolynomialZonotope, pz1: PolynomialZonotope) -> PolynomialZonotope:
    """All convex combinations ``(1 - t) z0 + t z1`` of paired points.

    ``pz1`` must be an affine image of ``pz0`` (same columns). A fresh
    dependent factor ``lam`` parametrises ``t = (1 + lam) / 2``; products of
    ``lam`` with independent factors are replaced by new independent ones.
    """
    p = pz0.p
    E = np.vstack([pz0.E, np.zeros((1, pz0.h), dtype=np.int64)])
    E_lam = np.vstack([pz0.E, np.ones((1, pz0.h), dtype=np.int64)])
    e_lam = np.zeros((p + 1, 1), dtype=np.int64)
    e_lam[p, 0] = 1
    G = np.hstack([0.5 * (pz0.G + pz1.G), 0.5 * (pz1.G - pz0.G), 0.5 * (pz1.c - pz0.c)[:, None]])
    GI = np.hstack([0.5 * (pz0.GI + pz1.GI), 0.5 * (pz1.GI - pz0.GI)])
    return compact(PolynomialZonotope(0.5 * (pz0.c + pz1.c), G, GI, np.hstack([E, E_lam, e_lam])))


def propagate_linear(A, pz: PolynomialZonotope, dt: float, u_const=None,
                     V: Interval | None = None, order: int = 12):
    """One step of ``dz/dt = A z + u_const + v(t)``, ``v(t)`` in the box ``V``.

    Returns the set at ``t + dt`` and an enclosure over ``[t, t + dt]``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    N = A.shape[0]
    if pz.dim != N:
        raise ValueError("set dimension does not match the system matrix")
    c_in = np.zeros(N) if u_const is None else np.asarray(u_const, dtype=float)
    v_rad = np.zeros(N)
    if V is not None:
        c_in = c_in + V.center
        v_rad = V.radius

    Phi, eps_phi = expm_taylor(A * dt, order)
    _, Gamma, eps = _input_integral(A, dt, order)
    absA = np.abs(A)
    _, Gamma_abs, eps_abs = _input_integral(absA, dt, order)

    box0 = interval_enclosure(pz)
    zmax = float(np.max(np.maximum(np.abs(box0.l), np.abs(box0.u)))) if N else 0.0
    cmax = float(np.max(np.abs(c_in))) if N else 0.0
    vmax = float(np.max(v_rad)) if N else 0.0

    trunc = eps_phi * zmax + eps * cmax + Gamma_abs @ v_rad + eps_abs * vmax
    end_core = affine_map(Phi, pz, Gamma @ c_in)
    pz_next = minkowski_sum_interval(end_core, _box(trunc))

    # second derivative of the undisturbed solution along the step
    normA = np.linalg.norm(A, np.inf) if N else 0.0
    growth = math.exp(normA * dt)
    xb = growth * (zmax + dt * cmax)
    curv = dt * dt / 8.0 * (absA @ (absA @ np.full(N, xb) + np.abs(c_in)))
    tau = _interpolate(pz, end_core)
    tau = minkowski_sum_interval(tau, _box(trunc + curv))
    return pz_next, tau


# ---------------------------------------------------------------------------
# conservative linearisation


class ExtendedSystem:
    """``d/dt [x; u] = [f(x, u, w); 0]`` for an expression plant."""

    def __init__(self, plant: Plant):
        self.plant = plant
        self.n, self.m, self.r = plant.n, plant.m, plant.r
        self.N = self.n + self.m
        self.jac = plant.jacobian_exprs()
        self.hess = plant.hessian_exprs()

    def split(self, z):
        return z[: self.n], z[self.n:]

    def value(self, z, w) -> np.ndarray:
        x, u = self.split(z)
        out = np.zeros(self.N)
        out[: self.n] = self.plant(x, u, w)
        return out

    def jacobians(self, z, w):
        x, u = self.split(z)
        J = np.array([[float(eval_expr(d, x, u, w)) for d in row] for row in self.jac])
        Jz = np.zeros((self.N, self.N))
        Jz[: self.n] = J[:, : self.N]
        Jw = np.zeros((self.N, self.r))
        Jw[: self.n] = J[:, self.N:]
        return Jz, Jw

    def remainder(self, zbox: Interval, wbox: Interval | None, z_star, w_star) -> Interval:
        """Lagrange remainder of the first-order expansion over the boxes."""
        x_box = Interval(zbox.l[: self.n], zbox.u[: self.n])
        u_box = Interval(zbox.l[self.n:], zbox.u[self.n:]) if self.m else None
        dev = [ScalarInterval(float(zbox.l[j] - z_star[j]), float(zbox.u[j] - z_star[j]))
               for j in range(self.N)]
        if self.r:
            dev += [ScalarInterval(float(wbox.l[j] - w_star[j]), float(wbox.u[j] - w_star[j]))
                    for j in range(self.r)]
        lo = np.zeros(self.N)
        hi = np.zeros(self.N)
        V = len(dev)
        for i in range(self.n):
            acc = ScalarInterval(0.0, 0.0)
            for j in range(V):
                for k in range(j, V):
                    hjk = self.hess[i][j][k]
                    if hjk == Const(0.0):
                        continue
                    hv = interval_eval(hjk, x_box, u_box, wbox)
                    prod = iv_pow_int(dev[j], 2) if j == k else 2.0 * (dev[j] * dev[k])
                    acc = acc + hv * prod
            acc = 0.5 * acc
            lo[i], hi[i] = acc.lo, acc.hi
        return Interval(lo, hi)


def propagate_nonlinear(system: ExtendedSystem, pz: PolynomialZonotope, dt: float,
                        W: Interval | None = None, opts: PropagatorOptions | None = None):
    """Conservative linearisation over ``opts.substeps`` substeps.

    Returns the final set, the list of substep time-interval sets and the
    number of fixed-point iterations used.
    """
    opts = opts or PropagatorOptions()
    h = dt / opts.substeps
    taus = []
    iters = 0
    for _ in range(opts.substeps):
        box = interval_enclosure(pz)
        z_star = box.center
        w_star = W.center if W is not None and W.dim else np.zeros(0)
        F = system.value(z_star, w_star)
        Jz, Jw = system.jacobians(z_star, w_star)
        shifted = affine_map(np.eye(system.N), pz, -z_star)
        V0 = None
        if system.r:
            rad = np.abs(Jw) @ W.radius
            V0 = Interval(-rad, rad)

        def step(L: Interval | None):
            V = V0
            if L is not None:
                V = L if V is None else Interval(V.l + L.l, V.u + L.u)
            nxt, tau = propagate_linear(Jz, shifted, h, F, V, opts.taylor_order)
            return nxt, tau

        _, tau = step(None)
        hb = interval_enclosure(tau)
        c0, r0 = hb.center + z_star, hb.radius
        cand = Interval(c0 - 1.1 * r0 - 1e-9, c0 + 1.1 * r0 + 1e-9)
        stable = False
        for _ in range(opts.max_iter):
            iters += 1
            L = system.remainder(cand, W, z_star, w_star)
            if not np.all(np.isfinite(L.radius)):
                break
            nxt, tau = step(L)
            hb = interval_enclosure(tau)
            reached = Interval(hb.l + z_star, hb.u + z_star)
            if reached.subset_of(cand):
                stable = True
                break
            merged = cand.hull(reached)
            if not np.all(np.isfinite(merged.radius)):
                break
            cand = Interval(merged.center - 2.0 * merged.radius, merged.center + 2.0 * merged.radius)
        if not stable:
            raise PropagatorDivergence(
                f"remainder enclosure did not stabilise within {opts.max_iter} iterations"
            )
        pz = affine_map(np.eye(system.N), nxt, z_star)
        taus.append(affine_map(np.eye(system.N), tau, z_star))
    return pz, taus, iters


# ---------------------------------------------------------------------------
# closed loop


def _extended_linear(plant: LinearPlant) -> np.ndarray:
    n, m = plant.n, plant.m
    A = np.zeros((n + m, n + m))
    A[:n, :n] = plant.A
    A[:n, n:] = plant.B
    return A


def _interval_hull_pz(sets) -> PolynomialZonotope:
    boxes = [interval_enclosure(s) for s in sets]
    hull = boxes[0]
    for b in boxes[1:]:
        hull = hull.hull(b)
    return PolynomialZonotope.from_interval(hull, dependent=False)


def reach(setup: ControlSetup) -> ReachResult:
    """Reachable sets of the closed loop over ``[0, tF]``."""
    plant = setup.plant
    n, m = plant.n, plant.m
    opts = setup.options
    R = setup.X0 if isinstance(setup.X0, PolynomialZonotope) else PolynomialZonotope.from_interval(setup.X0)
    proj = np.hstack([np.eye(n), np.zeros((n, m))])

    linear = isinstance(plant, LinearPlant)
    if linear:
        A_ext = _extended_linear(plant)
        V = None
        u_const = None
        if plant.r:
            E_ext = np.vstack([plant.E, np.zeros((m, plant.r))])
            u_const = E_ext @ setup.W.center
            rad = np.abs(E_ext) @ setup.W.radius
            V = Interval(-rad, rad)
    else:
        system = ExtendedSystem(plant)

    result = ReachResult([R], [], [], [], [], setup.dt, "linear" if linear else "linearization")
    for _ in range(setup.steps):
        Rb = rebase(R)
        Y, _ = image_enclosure(setup.controller, Rb, setup.policy)
        ext = cartesian_product_dep(Rb, Y)
        result.inputs.append(Y)
        result.extended.append(ext)
        if linear:
            nxt, tau = propagate_linear(A_ext, ext, setup.dt, u_const, V, opts.taylor_order)
            taus = [tau]
        else:
            nxt, taus, _ = propagate_nonlinear(system, ext, setup.dt, setup.W, opts)
        tau_sets = [affine_map(proj, t) for t in taus]
        result.substep_intervals.append(tau_sets)
        result.time_intervals.append(tau_sets[0] if len(tau_sets) == 1 else _interval_hull_pz(tau_sets))
        R = reduce_order(compact(affine_map(proj, nxt)), opts.order)
        result.time_points.append(R)
    return result


# ---------------------------------------------------------------------------
# simulation


def simulate(setup: ControlSetup, x0, rng: np.random.Generator | None = None,
             micro_step: float = 1e-3):
    """RK4 trajectories with the control held constant over each period.

    ``x0`` is one state or an (N, n) batch. Disturbances are drawn uniformly
    from ``W`` and held per micro step. Returns ``(times, states)`` where
    ``states`` has shape (T, N, n) (or (T, n) for a single state).
    """
    rng = rng or np.random.default_rng(0)
    x0 = np.asarray(x0, dtype=float)
    single = x0.ndim == 1
    X = np.atleast_2d(x0).T.copy()       # (n, N)
    plant = setup.plant
    f = plant
    sub = max(1, int(round(setup.dt / micro_step)))
    h = setup.dt / sub
    Nb = X.shape[1]
    times = [0.0]
    states = [X.T.copy()]
    for k in range(setup.steps):
        U = forward(setup.controller, X.T).T  # (m, N)
        for j in range(sub):
            if plant.r:
                w = rng.uniform(setup.W.l[:, None], setup.W.u[:, None], (plant.r, Nb))
            else:
                w = np.zeros((0, Nb))
            k1 = f(X, U, w)
            k2 = f(X + 0.5 * h * k1, U, w)
            k3 = f(X + 0.5 * h * k2, U, w)
            k4 = f(X + h * k3, U, w)
            X = X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(X)):
                raise FloatingPointError("simulation produced a non-finite state")
            times.append(k * setup.dt + (j + 1) * h)
            states.append(X.T.copy())
    S = np.array(states)
    return np.array(times), (S[:, 0, :] if single else S)


# ---------------------------------------------------------------------------
# set checks


def check_sets(result: ReachResult, goal: Interval | None = None, avoid=None) -> dict:
    """Goal: final set inside ``goal``. Avoid: every time-interval set
    provably misses every unsafe ``{x | A x <= b}``."""
    report = {}
    if goal is not None:
        final = interval_enclosure(result.time_points[-1])
        report["goal"] = "proved" if final.subset_of(goal) else "not proved"
    if avoid:
        specs = [a if isinstance(a, OutputSpec) else OutputSpec(a["A"], a["b"], "avoid")
                 for a in avoid]
        first = None
        for i, tau in enumerate(result.time_intervals):
            sets = result.substep_intervals[i] if result.substep_intervals else [tau]
            if not all(check_enclosure(s, sp) for sp in specs for s in sets):
                first = i
                break
        report["avoid"] = "proved" if first is None else "not proved"
        if first is not None:
            report["avoid_first_failure"] = first
    return report
