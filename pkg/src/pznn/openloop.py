"""Open-loop verification of linear output specifications by input splitting."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .enclosure import ApproxPolicy, image_enclosure
from .interval import Interval
from .network import Network, forward
from .pz import PolynomialZonotope, affine_map, interval_enclosure


@dataclass(frozen=True)
class OutputSpec:
    """Linear constraints ``A y <= b`` on the network output.

    In ``prove`` mode every output must satisfy them; in ``avoid`` mode they
    describe an unsafe set that no output may enter.
    """
    A: np.ndarray
    b: np.ndarray
    mode: str = "prove"

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        b = np.atleast_1d(np.array(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("constraint matrix rows and offset length differ")
        if self.mode not in ("prove", "avoid"):
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def margin(self, y) -> np.ndarray:
        """Positive exactly when ``y`` is a counterexample."""
        slack = np.asarray(y) @ self.A.T - self.b
        worst = np.max(slack, axis=-1)
        return worst if self.mode == "prove" else -worst

    def violated(self, y) -> np.ndarray:
        slack = np.asarray(y) @ self.A.T - self.b
        worst = np.max(slack, axis=-1)
        return worst > 0 if self.mode == "prove" else worst <= 0

    @classmethod
    def from_dict(cls, d: dict) -> "OutputSpec":
        return cls(d["A"], d["b"], d.get("mode", "prove"))


@dataclass(frozen=True)
class SplitBudget:
    max_subproblems: int = 1000
    max_depth: int = 30
    falsification_samples: int = 200

    def __post_init__(self):
        if min(self.max_subproblems, self.max_depth, self.falsification_samples) <= 0:
            raise ValueError("budget entries must be positive")


@dataclass
class Verdict:
    status: str                      # verified | falsified | unknown
    subproblems: int = 0
    counterexample: np.ndarray | None = None
    output: np.ndarray | None = None
    proved_boxes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {"status": self.status, "subproblems": self.subproblems}
        if self.counterexample is not None:
            d["counterexample"] = {"input": self.counterexample.tolist(),
                                   "output": self.output.tolist()}
        return d


def check_enclosure(pz: PolynomialZonotope, spec: OutputSpec) -> bool:
    """True when the enclosure alone proves the specification."""
    if spec.A.shape[1] != pz.dim:
        raise ValueError("specification and set dimensions differ")
    bounds = interval_enclosure(affine_map(spec.A, pz, -spec.b))
    if spec.mode == "prove":
        return bool(np.all(bounds.u <= 0))
    return bool(np.any(bounds.l > 0))


def falsify(net: Network, box: Interval, spec: OutputSpec, samples: int = 200,
            rng: np.random.Generator | None = None, refine_steps: int = 20):
    """Search for an input in ``box`` whose output violates ``spec``.

    Corners and uniform samples first, then coordinate descent on the most
    promising point. Returns ``(x, y)`` or ``None``; any returned pair has been
    re-checked with :func:`forward`.
    """
    rng = rng or np.random.default_rng(0)
    n = box.dim
    pts = [box.center[None, :], rng.uniform(box.l, box.u, (samples, n))]
    if n <= 10:
        corners = np.array(list(itertools.product(*zip(box.l, box.u))))
        pts.append(corners)
    X = np.vstack(pts)
    m = spec.margin(forward(net, X))
    best = int(np.argmax(m))
    x, best_m = X[best].copy(), m[best]

    step = 0.25 * box.widths()
    for _ in range(refine_steps):
        if best_m > 0 or not np.any(step > 0):
            break
        improved = False
        for i in range(n):
            for sgn in (1.0, -1.0):
                cand = x.copy()
                cand[i] = np.clip(cand[i] + sgn * step[i], box.l[i], box.u[i])
                cm = spec.margin(forward(net, cand))
                if cm > best_m:
                    x, best_m, improved = cand, cm, True
        if not improved:
            step = 0.5 * step

    y = forward(net, x)
    if spec.violated(y):
        return x, y
    return None


def verify(net: Network, box: Interval, spec: OutputSpec,
           policy: ApproxPolicy | None = None, budget: SplitBudget | None = None,
           seed: int = 0) -> Verdict:
    """Complete verification by recursive bisection of the input box.

    The widest pending box is processed first; ties go to the earlier one.
    """
    policy = policy or ApproxPolicy()
    budget = budget or SplitBudget()
    if box.dim != net.input_dim:
        raise ValueError("input box dimension does not match the network")
    counter = itertools.count()
    queue = [(-float(np.max(box.widths())), next(counter), 0, box)]
    processed = 0
    proved = []
    while queue:
        if processed >= budget.max_subproblems:
            return Verdict("unknown", processed, proved_boxes=proved)
        _, idx, depth, sub = heapq.heappop(queue)
        processed += 1
        pz, _ = image_enclosure(net, sub, policy)
        if check_enclosure(pz, spec):
            proved.append(sub)
            continue
        cex = falsify(net, sub, spec, budget.falsification_samples,
                      np.random.default_rng((seed, idx)))
        if cex is not None:
            return Verdict("falsified", processed, cex[0], cex[1])
        if depth >= budget.max_depth:
            return Verdict("unknown", processed, proved_boxes=proved)
        dim = int(np.argmax(sub.widths()))
        for child in sub.bisect(dim):
            heapq.heappush(queue, (-float(np.max(child.widths())), next(counter), depth + 1, child))
    return Verdict("verified", processed, proved_boxes=proved)
