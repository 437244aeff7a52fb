"""Command-line interface.

Exit codes: 0 success / verified / proved, 1 falsified, 2 bad input,
3 unknown or not proved, 4 reachability propagator diverged.
"""

from __future__ import annotations

import argparse
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .closedloop import LinearPlant, PropagatorDivergence, check_sets, reach, simulate
from .enclosure import ApproxPolicy, image_enclosure
from .expr import ExprSyntaxError
from .io import (
    InputError,
    box_from_doc,
    load_net,
    load_policy,
    load_sets,
    load_setup,
    load_spec,
    parse_box_arg,
    reach_to_doc,
    read_json,
    write_json,
)
from .openloop import SplitBudget, verify
from .plot import plot_sets, project, render_svg
from .pz import PolynomialZonotope, evaluate_batch, interval_enclosure, sample_factors

EXIT_OK, EXIT_FALSIFIED, EXIT_INPUT, EXIT_UNKNOWN, EXIT_DIVERGED = 0, 1, 2, 3, 4

LINEARISATION_NOTE = "nonlinear plant propagated by conservative linearisation instead of polynomialisation"


class Run:
    """Collects the report of one command."""

    def __init__(self, args, argv):
        self.args = args
        self.doc = {
            "command": list(argv),
            "tool": {"name": "pznn", "version": __version__},
            "deviations": [],
        }
        self.timings = {}

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(1000.0 * (time.perf_counter() - t0), 3)

    def out_dir(self) -> Path:
        d = Path(self.args.out)
        d.mkdir(parents=True, exist_ok=True)
        return d

    def finish(self, default_name: str = "report.json") -> None:
        if not self.args.no_timings:
            self.doc["timings_ms"] = self.timings
        path = Path(self.args.report) if self.args.report else self.out_dir() / default_name
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json(path, self.doc)


def _policy(args) -> ApproxPolicy:
    return load_policy(args.policy) if args.policy else ApproxPolicy()


def _input_box(args):
    if args.box and args.input:
        raise InputError("give either --box or --input, not both")
    if args.box:
        return parse_box_arg(args.box)
    if args.input:
        return box_from_doc(read_json(args.input), args.input)
    raise InputError("an input set is required (--box or --input)")


# ---------------------------------------------------------------------------
# commands


def cmd_enclose(args, run: Run) -> int:
    net = load_net(args.network)
    box = _input_box(args)
    policy = _policy(args)
    with run.phase("enclose"):
        pz, trace = image_enclosure(net, box, policy)
    run.doc["policy"] = policy.to_dict()
    run.doc["layers"] = [dict(rec.stats, mode=rec.mode) for rec in trace.layers]
    run.doc["output"] = {"stats": pz.stats(), "hull": interval_enclosure(pz).to_dict()}
    out = run.out_dir()
    write_json(out / "enclosure.json", pz.to_dict())
    if args.svg:
        (out / "enclosure.svg").write_text(plot_sets([pz], _dims(args, pz.dim), args.samples, args.seed,
                                                     "output enclosure"))
    run.finish()
    return EXIT_OK


def cmd_verify(args, run: Run) -> int:
    net = load_net(args.network)
    box, spec = load_spec(args.spec)
    if box.dim != net.input_dim or spec.A.shape[1] != net.output_dim:
        raise InputError("specification dimensions do not match the network")
    budget = SplitBudget(args.max_subproblems, args.max_depth, args.falsification_samples)
    with run.phase("verify"):
        verdict = verify(net, box, spec, _policy(args), budget, args.seed)
    run.doc["verdict"] = verdict.to_dict()
    run.finish()
    return {"verified": EXIT_OK, "falsified": EXIT_FALSIFIED}.get(verdict.status, EXIT_UNKNOWN)


def cmd_reach(args, run: Run) -> int:
    setup, goal, avoid = load_setup(args.setup)
    nonlinear = not isinstance(setup.plant, LinearPlant)
    if nonlinear:
        run.doc["deviations"].append(LINEARISATION_NOTE)
    try:
        with run.phase("reach"):
            res = reach(setup)
    except PropagatorDivergence as e:
        print(f"error: reachability diverged: {e}", file=sys.stderr)
        run.doc["status"] = "diverged"
        run.doc["diagnostic"] = str(e)
        run.finish()
        return EXIT_DIVERGED
    checks = check_sets(res, goal, avoid)
    run.doc["status"] = res.status
    run.doc["propagator"] = res.propagator
    run.doc["checks"] = checks
    run.doc["sets"] = {
        "time_points": [r.stats() for r in res.time_points],
        "time_intervals": [r.stats() for r in res.time_intervals],
        "inputs": [y.stats() for y in res.inputs],
    }
    run.doc["final_hull"] = interval_enclosure(res.time_points[-1]).to_dict()
    out = run.out_dir()
    write_json(out / "reach.json", reach_to_doc(res))
    if args.svg:
        dims = _dims(args, setup.plant.n)
        for i, tau in enumerate(res.time_intervals):
            (out / f"reach_tau_{i:03d}.svg").write_text(
                plot_sets([tau], dims, args.samples, args.seed, f"time interval {i}"))
        (out / "reach.svg").write_text(_overview_svg(res.time_intervals, dims))
    run.finish()
    return EXIT_OK if all(v == "proved" for k, v in checks.items() if k in ("goal", "avoid")) else EXIT_UNKNOWN


def _overview_svg(sets, dims) -> str:
    boxes = [interval_enclosure(project(s, dims)) for s in sets]
    return render_svg([], boxes, "time-interval hulls", labels=(f"dim {dims[0]}", f"dim {dims[1]}"))


def cmd_simulate(args, run: Run) -> int:
    setup, _, _ = load_setup(args.setup)
    rng = np.random.default_rng(args.seed)
    X0 = setup.X0
    if isinstance(X0, PolynomialZonotope):
        x0 = evaluate_batch(X0, *sample_factors(X0, args.trajectories, rng))
    else:
        x0 = rng.uniform(X0.l, X0.u, (args.trajectories, X0.dim))
    with run.phase("simulate"):
        times, states = simulate(setup, x0, rng, args.micro_step)
    stride = max(1, int(round(setup.dt / args.micro_step)))
    keep = np.arange(0, len(times), stride)
    out = run.out_dir()
    write_json(out / "trajectories.json", {"times": times[keep], "states": states[keep].transpose(1, 0, 2)})
    run.doc["trajectories"] = args.trajectories
    run.doc["final_hull"] = {"l": states[-1].min(0), "u": states[-1].max(0)}
    if args.svg:
        dims = _dims(args, setup.plant.n)
        pts = states[:, :, list(dims)].reshape(-1, 2)
        (out / "simulation.svg").write_text(render_svg([pts], [], "simulated trajectories",
                                                       labels=(f"dim {dims[0]}", f"dim {dims[1]}")))
    run.finish()
    return EXIT_OK


def cmd_plot(args, run: Run) -> int:
    sets = load_sets(args.file)
    dims = _dims(args, sets[0].dim)
    svg = plot_sets(sets, dims, args.samples, args.seed, Path(args.file).name)
    target = Path(args.output) if args.output else run.out_dir() / "plot.svg"
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(svg)
    return EXIT_OK


def _dims(args, n: int):
    i, j = args.dims
    if n < 2 and (i, j) == (0, 1):
        return 0, 0
    if not (0 <= i < n and 0 <= j < n):
        raise InputError(f"plot dimensions ({i}, {j}) out of range for dimension {n}")
    return i, j


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    common.add_argument("--policy", help="approximation policy JSON")
    common.add_argument("--out", default=".", help="output directory (default: current)")
    common.add_argument("--svg", action="store_true", help="also write SVG plots")
    common.add_argument("--report", help="report path (default: <out>/report.json)")
    common.add_argument("--no-timings", action="store_true", help="leave timings out of the report")
    common.add_argument("--dims", type=int, nargs=2, default=(0, 1), metavar=("I", "J"),
                        help="dimensions shown in plots")
    common.add_argument("--samples", type=int, default=200, help="plot grid size per axis")

    p = argparse.ArgumentParser(prog="pznn", description="Polynomial-zonotope reachability for neural networks.")
    p.add_argument("--version", action="version", version=f"pznn {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("enclose", parents=[common], help="image enclosure of a network")
    e.add_argument("network", help="network file (.json or .nnet)")
    e.add_argument("--box", help="input box as lo:hi,lo:hi,...")
    e.add_argument("--input", help="input box JSON file")
    e.set_defaults(func=cmd_enclose)

    v = sub.add_parser("verify", parents=[common], help="verify an output specification")
    v.add_argument("network")
    v.add_argument("spec", help="specification JSON with input box and A, b, mode")
    v.add_argument("--max-subproblems", type=int, default=1000)
    v.add_argument("--max-depth", type=int, default=30)
    v.add_argument("--falsification-samples", type=int, default=200)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reach", parents=[common], help="closed-loop reachable sets")
    r.add_argument("setup", help="setup JSON")
    r.set_defaults(func=cmd_reach)

    s = sub.add_parser("simulate", parents=[common], help="simulate the closed loop")
    s.add_argument("setup")
    s.add_argument("--trajectories", type=int, default=100)
    s.add_argument("--micro-step", type=float, default=1e-3)
    s.set_defaults(func=cmd_simulate)

    pl = sub.add_parser("plot", parents=[common], help="plot a set or a stored reach result")
    pl.add_argument("file")
    pl.add_argument("-o", "--output", help="SVG path (default: <out>/plot.svg)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    run = Run(args, argv)
    try:
        return args.func(args, run)
    except (InputError, ExprSyntaxError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
