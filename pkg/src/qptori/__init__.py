"""Certified constructions of Hamiltonians with unstable quasi-periodic tori."""

from .arithmetic import *  # noqa: F401,F403
from .diffusion import *  # noqa: F401,F403
from .flow import *  # noqa: F401,F403
from .hamiltonian import *  # noqa: F401,F403
from .normalform import *  # noqa: F401,F403
from .numerics import (  # noqa: F401
    CapacityError,
    LogAmplitude,
    PrecisionError,
    cos_double_integral,
    cos_integral,
    from_decimal,
    log_sum,
    precision,
    sin_integral,
    to_decimal,
    to_mpf,
)
from .state import PhaseState  # noqa: F401

__version__ = "0.1.0"
