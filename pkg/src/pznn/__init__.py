"""Polynomial-zonotope image enclosures and reachability for neural networks."""

from .closedloop import ControlSetup, LinearPlant, PropagatorDivergence, PropagatorOptions, ReachResult, reach, simulate
from .enclosure import ApproxPolicy, image_enclosure, image_witness
from .expr import Plant, parse_expr
from .interval import Interval
from .network import Activation, Layer, Network, forward, load_network
from .openloop import OutputSpec, SplitBudget, Verdict, verify
from .pz import FactorAssignment, PolynomialZonotope, evaluate, interval_enclosure

__version__ = "0.1.0"

__all__ = [
    "Activation", "ApproxPolicy", "ControlSetup", "FactorAssignment", "Interval", "Layer",
    "LinearPlant", "Network", "OutputSpec", "Plant", "PolynomialZonotope", "PropagatorDivergence",
    "PropagatorOptions", "ReachResult", "SplitBudget", "Verdict", "evaluate", "forward",
    "image_enclosure", "image_witness", "interval_enclosure", "load_network", "parse_expr",
    "reach", "simulate", "verify",
]
