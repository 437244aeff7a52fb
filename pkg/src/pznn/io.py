"""JSON formats: sets, specifications, policies, closed-loop setups, results."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .closedloop import ControlSetup, LinearPlant, PropagatorOptions, ReachResult
from .enclosure import ApproxPolicy
from .expr import Plant
from .interval import Interval
from .network import Network, load_network, network_from_dict
from .openloop import OutputSpec
from .pz import PolynomialZonotope


class InputError(ValueError):
    """A file is missing or does not have the expected content."""


def read_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON ({e})") from e


def dumps(doc) -> str:
    """Deterministic JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc))


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _field(doc: dict, key: str, where: str):
    if key not in doc:
        raise InputError(f"{where}: missing field {key!r}")
    return doc[key]


def _wrap(fn, doc, where: str):
    try:
        return fn(doc)
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{where}: {e}") from e


# ---------------------------------------------------------------------------
# sets


def box_from_doc(doc, where: str = "box") -> Interval:
    if isinstance(doc, dict) and "l" in doc and "u" in doc:
        return _wrap(Interval.from_dict, doc, where)
    if isinstance(doc, list):
        return _wrap(lambda d: Interval([r[0] for r in d], [r[1] for r in d]), doc, where)
    raise InputError(f"{where}: expected {{'l': [...], 'u': [...]}} or a list of [lo, hi] pairs")


def parse_box_arg(text: str) -> Interval:
    """``"lo:hi,lo:hi"`` on the command line."""
    try:
        pairs = [tuple(float(v) for v in part.split(":")) for part in text.split(",")]
        if any(len(p) != 2 for p in pairs):
            raise ValueError
        return Interval([p[0] for p in pairs], [p[1] for p in pairs])
    except ValueError as e:
        raise InputError(f"cannot parse box {text!r}; expected lo:hi,lo:hi,...") from e


def set_from_doc(doc, where: str = "set"):
    """A box or a polynomial zonotope."""
    if isinstance(doc, dict) and "c" in doc:
        return _wrap(PolynomialZonotope.from_dict, doc, where)
    return box_from_doc(doc, where)


def load_pz(path) -> PolynomialZonotope:
    s = set_from_doc(read_json(path), str(path))
    return s if isinstance(s, PolynomialZonotope) else PolynomialZonotope.from_interval(s)


def load_net(path) -> Network:
    try:
        return load_network(path)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror or e}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# policy, specification


def policy_from_doc(doc, where: str = "policy") -> ApproxPolicy:
    if not isinstance(doc, dict):
        raise InputError(f"{where}: expected an object")
    return _wrap(ApproxPolicy.from_dict, doc, where)


def load_policy(path) -> ApproxPolicy:
    return policy_from_doc(read_json(path), str(path))


def load_spec(path):
    """Returns ``(input box, OutputSpec)``."""
    doc = read_json(path)
    where = str(path)
    key = "input_box" if "input_box" in doc else "input"
    box = box_from_doc(_field(doc, key, where), f"{where}: {key}")
    out = doc.get("output", doc)
    spec = _wrap(OutputSpec.from_dict, out, where)
    return box, spec


# ---------------------------------------------------------------------------
# closed-loop setup


def plant_from_doc(doc, where: str):
    if "linear" in doc:
        lin = doc["linear"]
        return _wrap(lambda d: LinearPlant(d["A"], d["B"], d.get("E")), lin, where)
    if "expressions" in doc:
        exprs = doc["expressions"]
        return _wrap(lambda d: Plant(exprs, len(exprs), int(d.get("inputs", 1)),
                                     int(d.get("disturbances", 0))), doc, where)
    raise InputError(f"{where}: plant needs 'linear' or 'expressions'")


def load_setup(path):
    """Returns ``(ControlSetup, goal box or None, avoid specs)``."""
    path = Path(path)
    doc = read_json(path)
    where = str(path)
    plant = plant_from_doc(_field(doc, "plant", where), f"{where}: plant")
    ctrl = _field(doc, "controller", where)
    if isinstance(ctrl, str):
        net = load_net(path.parent / ctrl)
    else:
        net = _wrap(network_from_dict, ctrl, f"{where}: controller")
    X0 = set_from_doc(_field(doc, "X0", where), f"{where}: X0")
    W = box_from_doc(doc["W"], f"{where}: W") if doc.get("W") is not None else None
    pol = doc.get("policy", {})
    policy = load_policy(path.parent / pol) if isinstance(pol, str) else policy_from_doc(pol, f"{where}: policy")
    opts = _wrap(lambda d: PropagatorOptions(**d), doc.get("propagator", {}), f"{where}: propagator")
    setup = _wrap(lambda d: ControlSetup(plant, net, X0, float(d["dt"]), float(d["tF"]), W, policy, opts),
                  doc, where)
    goal = box_from_doc(doc["goal"], f"{where}: goal") if doc.get("goal") is not None else None
    avoid = [_wrap(lambda d: OutputSpec(d["A"], d["b"], "avoid"), a, f"{where}: avoid")
             for a in doc.get("avoid", [])]
    return setup, goal, avoid


# ---------------------------------------------------------------------------
# results


def reach_to_doc(res: ReachResult) -> dict:
    return {
        "dt": res.dt,
        "propagator": res.propagator,
        "status": res.status,
        "time_points": [r.to_dict() for r in res.time_points],
        "time_intervals": [r.to_dict() for r in res.time_intervals],
        "inputs": [y.to_dict() for y in res.inputs],
    }


def reach_from_doc(doc: dict) -> ReachResult:
    pzs = lambda key: [PolynomialZonotope.from_dict(d) for d in doc.get(key, [])]  # noqa: E731
    return ReachResult(pzs("time_points"), pzs("time_intervals"), pzs("inputs"), [], [],
                       float(doc["dt"]), doc.get("propagator", ""), doc.get("status", "ok"))


def load_sets(path) -> list:
    """Sets to plot from a set file or a stored reach result."""
    doc = read_json(path)
    if isinstance(doc, dict) and "time_intervals" in doc:
        return _wrap(lambda d: reach_from_doc(d).time_intervals, doc, str(path))
    return [load_pz(path)]
