"""Outage analysis of an energy-harvesting point-to-point link with ARQ.

Closed forms for unbounded batteries (:mod:`ehlink.analytic`), a finite
battery Markov chain (:mod:`ehlink.fsmc`) and a slot-level simulator
(:mod:`ehlink.montecarlo`).
"""
from .model import ConfigError, EnergyProfile, LinkConfig, UNBOUNDED
from .policies import PolicySpec, ReceiverMode, SourceKind

__version__ = "0.1.0"

__all__ = ["ConfigError", "EnergyProfile", "LinkConfig", "UNBOUNDED",
           "PolicySpec", "ReceiverMode", "SourceKind", "__version__"]
