"""Stabilizing feedback design for discrete-time switched linear systems.

Feedback gains are built by assigning approximate common eigenvectors one
level at a time, and closed loops are certified with a common quadratic
Lyapunov function found by LMI search.
"""

__version__ = "0.1.0"

from .cea import CeaFailure, CeaInputs, CeaOptions, CeaSolution, run_cea
from .kernels import BACKEND
from .lmi import (CqlfCertificate, InfeasibleVerdict, SynthesisCertificate, check_cqlf,
                  synthesize_lmi)
from .model import SwitchedSystem, validate
from .triangularize import DesignFailure, DesignResult, realize_real_gains, run_algorithm1

__all__ = [
    "BACKEND", "CeaFailure", "CeaInputs", "CeaOptions", "CeaSolution", "CqlfCertificate",
    "DesignFailure", "DesignResult", "InfeasibleVerdict", "SwitchedSystem",
    "SynthesisCertificate", "check_cqlf", "realize_real_gains", "run_algorithm1", "run_cea",
    "synthesize_lmi", "validate", "__version__",
]
