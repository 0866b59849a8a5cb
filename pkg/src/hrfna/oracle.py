"""Reference implementations and baselines.

Nothing here touches the residue arithmetic: exact results come from
:class:`fractions.Fraction` and plain integers, the RK4 reference from
mpmath at a caller-chosen precision, the binary32/binary64 paths from numpy
scalars (round-to-nearest-even after every operation), and the block
floating-point baseline from integer mantissas with a shared exponent per
block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import mpmath
import numpy as np

from .errors import DimensionMismatch, HrfnaError, LengthMismatch

# ----------------------------------------------------------------------------
# exact references


def _dyadic_ints(values: Sequence) -> tuple[list[int], int]:
    """Scale dyadic values to integers: returns (ints, e) with v = n * 2**e."""
    fr = [Fraction(v) for v in values]
    shift = 0
    for v in fr:
        d = v.denominator
        if d & (d - 1):
            raise HrfnaError(f"{v} is not a dyadic rational")
        shift = max(shift, d.bit_length() - 1)
    return [v.numerator * ((1 << shift) // v.denominator) for v in fr], -shift


def exact_dot(xs: Sequence, ys: Sequence) -> Fraction:
    """Exact rational dot product."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"vector lengths {len(xs)} and {len(ys)} differ")
    if not xs:
        raise LengthMismatch("dot product needs at least one element")
    try:
        a, ea = _dyadic_ints(xs)
        b, eb = _dyadic_ints(ys)
    except HrfnaError:
        return sum((Fraction(x) * Fraction(y) for x, y in zip(xs, ys)), Fraction(0))
    total = sum(x * y for x, y in zip(a, b))
    return Fraction(total) * Fraction(2) ** (ea + eb)


def exact_matmul(a: Sequence[Sequence], b: Sequence[Sequence]) -> list[list[Fraction]]:
    """Exact rational product of dyadic matrices (integer matmul underneath)."""
    rows, inner = len(a), len(a[0]) if a else 0
    if not rows or not b:
        raise DimensionMismatch("empty matrix")
    if inner != len(b):
        raise DimensionMismatch(f"inner dimensions {inner} and {len(b)} differ")
    cols = len(b[0])
    if any(len(r) != inner for r in a) or any(len(r) != cols for r in b):
        raise DimensionMismatch("ragged matrix")
    ia, ea = _dyadic_ints([v for r in a for v in r])
    ib, eb = _dyadic_ints([v for r in b for v in r])
    ma = np.array(ia, dtype=object).reshape(rows, inner)
    mb = np.array(ib, dtype=object).reshape(inner, cols)
    prod = ma.dot(mb)
    scale = Fraction(2) ** (ea + eb)
    return [[Fraction(int(prod[i, j])) * scale for j in range(cols)] for i in range(rows)]


# ----------------------------------------------------------------------------
# high-precision RK4

ODE_CATALOG = ("zero", "linear_decay", "logistic", "cubic_damping")


def _rhs_fn(name: str, params: Mapping):
    if name == "zero":
        return lambda y: mpmath.mpf(0)
    if name == "linear_decay":
        lam = mpmath.mpf(Fraction(params["lam"]).numerator) / Fraction(params["lam"]).denominator
        return lambda y: -lam * y
    if name == "logistic":
        return lambda y: y * (1 - y)
    if name == "cubic_damping":
        return lambda y: y - y * y * y
    raise HrfnaError(f"unknown right-hand side {name!r}")


def _to_fraction(v) -> Fraction:
    man, exp = mpmath.mpf(v).man_exp
    return Fraction(int(man)) * Fraction(2) ** int(exp)


def _mpf(v) -> "mpmath.mpf":
    v = Fraction(v)
    return mpmath.mpf(v.numerator) / v.denominator


def highprec_rk4(
    rhs: str,
    y0,
    h,
    steps: int,
    *,
    params: Mapping | None = None,
    prec_bits: int = 256,
    checkpoint_every: int = 1024,
) -> dict[int, Fraction]:
    """Classical RK4 at ``prec_bits`` of working precision.

    Returns ``{step: y}`` at step 0, every ``checkpoint_every`` steps and the
    final step. The h/6 weight is evaluated at working precision, so this is
    a reference for the ideal scheme, not for any particular rounding of it.
    """
    if steps < 1 or checkpoint_every < 1:
        raise HrfnaError("steps and checkpoint_every must be positive")
    f = _rhs_fn(rhs, params or {})
    out = {}
    with mpmath.workprec(prec_bits):
        y = _mpf(y0)
        hh = _mpf(h)
        half = hh / 2
        sixth = hh / 6
        out[0] = _to_fraction(y)
        for step in range(1, steps + 1):
            k1 = f(y)
            k2 = f(y + half * k1)
            k3 = f(y + half * k2)
            k4 = f(y + hh * k3)
            y = y + sixth * (k1 + 2 * k2 + 2 * k3 + k4)
            if step % checkpoint_every == 0 or step == steps:
                out[step] = _to_fraction(y)
    return out


def agreement_bits(a: Fraction, b: Fraction) -> float:
    """Number of leading bits on which two references agree (inf when equal)."""
    if a == b:
        return math.inf
    diff = abs(a - b)
    scale = max(abs(a), abs(b))
    return math.log2(scale) - math.log2(diff) if scale else -math.log2(diff)


# ----------------------------------------------------------------------------
# IEEE binary32 / binary64 paths


def _dtype(name: str):
    try:
        return {"binary32": np.float32, "binary64": np.float64}[name]
    except KeyError:
        raise HrfnaError(f"unknown float format {name!r}") from None


def float_dot(xs: Sequence[float], ys: Sequence[float], fmt: str = "binary64") -> float:
    """Sequential left-to-right dot product, rounded after each operation."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"vector lengths {len(xs)} and {len(ys)} differ")
    if not len(xs):
        raise LengthMismatch("dot product needs at least one element")
    dt = _dtype(fmt)
    prods = np.asarray(xs, dtype=dt) * np.asarray(ys, dtype=dt)
    # cumsum accumulates strictly in order, one rounding per add
    return float(np.cumsum(prods, dtype=dt)[-1])


def float_matmul(a, b, fmt: str = "binary64") -> np.ndarray:
    """Matrix product with sequential accumulation over the inner index."""
    dt = _dtype(fmt)
    ma = np.asarray(a, dtype=dt)
    mb = np.asarray(b, dtype=dt)
    if ma.ndim != 2 or mb.ndim != 2 or ma.shape[1] != mb.shape[0]:
        raise DimensionMismatch(f"cannot multiply shapes {ma.shape} and {mb.shape}")
    out = np.zeros((ma.shape[0], mb.shape[1]), dtype=dt)
    for k in range(ma.shape[1]):
        out += np.outer(ma[:, k], mb[k, :]).astype(dt)
    return out


# ----------------------------------------------------------------------------
# block floating point


@dataclass(frozen=True)
class BfpConfig:
    """Shared-exponent blocks: every element of a block is an integer
    multiple of ``2**(E - mantissa_bits)`` where ``E`` is the block's largest
    element exponent (``|v| < 2**E``). The cross-block accumulator keeps
    ``acc_bits`` bits and truncates when it has to align.
    """

    block_size: int = 16
    mantissa_bits: int = 24
    acc_bits: int | None = None

    def __post_init__(self):
        if self.block_size < 1:
            raise HrfnaError("block_size must be at least 1")
        if self.mantissa_bits < 2:
            raise HrfnaError("mantissa_bits must be at least 2")
        if self.acc_bits is not None and self.acc_bits < 2:
            raise HrfnaError("acc_bits must be at least 2")

    @property
    def accumulator_bits(self) -> int:
        return self.mantissa_bits if self.acc_bits is None else self.acc_bits


def bfp_quantize(values: Sequence[float], cfg: BfpConfig) -> list[tuple[list[int], int]]:
    """Split into blocks of (integer mantissas, scale exponent)."""
    v = np.asarray(values, dtype=np.float64)
    blocks = []
    for start in range(0, len(v), cfg.block_size):
        chunk = v[start : start + cfg.block_size]
        nz = chunk[chunk != 0]
        if not len(nz):
            blocks.append(([0] * len(chunk), 0))
            continue
        _, e = np.frexp(nz)
        scale = int(e.max()) - cfg.mantissa_bits
        mant = np.rint(np.ldexp(chunk, -scale))
        blocks.append(([int(m) for m in mant], scale))
    return blocks


class _Accumulator:
    """Fixed-width accumulator with a monotone exponent and truncation."""

    def __init__(self, bits: int):
        self.bits = bits
        self.mant = 0
        self.exp: int | None = None

    def add(self, n: int, e: int) -> None:
        if n == 0:
            return
        if self.exp is None:
            self.mant, self.exp = 0, e
        low = min(self.exp, e)
        total = (self.mant << (self.exp - low)) + (n << (e - low))
        new = max(self.exp, low + abs(total).bit_length() - self.bits)
        self.mant = total >> (new - low)
        self.exp = new

    def value(self) -> Fraction:
        if self.exp is None:
            return Fraction(0)
        return Fraction(self.mant) * Fraction(2) ** self.exp


def _bfp_dot_blocks(qx, qy, bits: int) -> Fraction:
    acc = _Accumulator(bits)
    for (mx, ex), (my, ey) in zip(qx, qy):
        acc.add(sum(a * b for a, b in zip(mx, my)), ex + ey)
    return acc.value()


def bfp_dot(xs: Sequence[float], ys: Sequence[float], cfg: BfpConfig = BfpConfig()) -> Fraction:
    """Blockwise exact integer products, summed in a fixed-width accumulator."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"vector lengths {len(xs)} and {len(ys)} differ")
    if not len(xs):
        raise LengthMismatch("dot product needs at least one element")
    return _bfp_dot_blocks(bfp_quantize(xs, cfg), bfp_quantize(ys, cfg), cfg.accumulator_bits)


def bfp_matmul(a, b, cfg: BfpConfig = BfpConfig()) -> list[list[Fraction]]:
    ma = np.asarray(a, dtype=np.float64)
    mb = np.asarray(b, dtype=np.float64)
    if ma.ndim != 2 or mb.ndim != 2 or ma.shape[1] != mb.shape[0]:
        raise DimensionMismatch(f"cannot multiply shapes {ma.shape} and {mb.shape}")
    rows = [bfp_quantize(r, cfg) for r in ma]
    cols = [bfp_quantize(c, cfg) for c in mb.T]
    bits = cfg.accumulator_bits
    return [[_bfp_dot_blocks(r, c, bits) for c in cols] for r in rows]


# ----------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class ErrorMetrics:
    """Error statistics of an approximation against exact values.

    ``nrms`` is ``rms`` divided by the RMS of the exact values, which makes
    runs with different input scales comparable.
    """

    rms: float
    max_abs: float
    max_rel: float
    n: int
    nrms: float

    def as_dict(self) -> dict:
        return {"rms": self.rms, "max_abs": self.max_abs, "max_rel": self.max_rel, "n": self.n, "nrms": self.nrms}


def _sqrt_fraction(v: Fraction) -> float:
    if v == 0:
        return 0.0
    # float(Fraction) is correctly rounded, but a tiny or huge ratio may
    # under/overflow, so take the square root through logs in that case
    f = float(v)
    if f == 0.0 or math.isinf(f):
        lg = (math.log2(v.numerator) - math.log2(v.denominator)) / 2
        return 2.0**lg
    return math.sqrt(f)


def rms_error(approx: Sequence, exact: Sequence) -> ErrorMetrics:
    """Metrics with exact rational differencing; rounding happens only at the end."""
    if len(approx) != len(exact):
        raise LengthMismatch(f"{len(approx)} approximations for {len(exact)} exact values")
    if not len(exact):
        raise LengthMismatch("need at least one sample")
    n = len(exact)
    sq = Fraction(0)
    ref_sq = Fraction(0)
    max_abs = Fraction(0)
    max_rel = 0.0
    for a, e in zip(approx, exact):
        e = Fraction(e)
        d = abs(Fraction(a) - e)
        sq += d * d
        ref_sq += e * e
        max_abs = max(max_abs, d)
        if d:
            max_rel = max(max_rel, float(d / abs(e)) if e else math.inf)
    rms = _sqrt_fraction(sq / n)
    ref = _sqrt_fraction(ref_sq / n)
    nrms = rms / ref if ref else rms
    return ErrorMetrics(rms, float(max_abs), max_rel, n, nrms)


def log_slope(xs: Sequence[float], ys: Sequence[float], floor: float = 1e-300) -> float:
    """Least-squares slope of log(y) against log(x); zeros are clamped to ``floor``."""
    lx = np.log([float(x) for x in xs])
    ly = np.log([max(float(y), floor) for y in ys])
    if len(lx) < 2:
        raise HrfnaError("need at least two points for a slope")
    return float(np.polyfit(lx, ly, 1)[0])
