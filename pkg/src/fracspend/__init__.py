"""Fractional spending over secret validation quorums, with a deterministic
adversarial network simulator for checking safety, liveness and complexity
properties at desk scale."""

__version__ = "0.1.0"

from .params import SystemConfig, chernoff_lower_tail, derive_params, vrf_threshold
from .simnet import Simulation

__all__ = [
    "SystemConfig",
    "Simulation",
    "chernoff_lower_tail",
    "derive_params",
    "vrf_threshold",
    "__version__",
]
