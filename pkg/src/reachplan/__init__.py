"""Reachability-based safe trajectory planning for serial-chain robot arms.

The package splits into an offline stage (per-joint reachable-set banks over a
fixed time partition), an online stage (conservative composition of the arm's
workspace reachable set, collision constraints with subgradients, time-boxed
trajectory optimization), and a simulation harness with an independent
collision oracle.
"""

__version__ = "0.1.0"
