"""Distributed autonomous online learning: simulation, regret bounds and
topology-based subgradient privacy analysis."""

__version__ = "0.1.0"
