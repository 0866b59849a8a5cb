"""Hybrid residue/floating numerical arithmetic.

Values are ``CRT(residues) * 2**exponent``: a residue-number-system integer
mantissa with one power-of-two exponent. Multiplication and addition are
channelwise and exact; threshold-driven normalization is the only rounding
step, and every rounding is charged to an error budget.
"""
from .core import (
    DEFAULT_MODULI,
    ModulusSet,
    ResidueVector,
    RoundingMode,
    crt_reconstruct,
    default_modulus_set,
    encode,
    make_modulus_set,
    mod_add,
    mod_mul,
    scale_and_reencode,
)
from .errors import HrfnaError
from .hybrid import (
    ErrorBudget,
    HybridNumber,
    MagnitudeInterval,
    NormalizationPolicy,
    add,
    exponent_sync,
    from_real,
    hybrid_add,
    hybrid_mul,
    mac,
    magnitude_interval,
    make_policy,
    multiply,
    needs_normalization,
    normalize,
    phi,
    select_max_magnitude,
)
from .kernels import KernelResult, OdeProblem, dot_product, matmul, rk4_integrate
from .telemetry import Counters, amortization_report

__version__ = "0.1.0"
