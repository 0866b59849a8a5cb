"""Hybrid residue/exponent numbers.

A :class:`HybridNumber` pairs a residue vector with a power-of-two exponent;
its value is ``CRT(residues) * 2**exponent``. Multiplication and addition act
channelwise and are exact. The only lossy steps are normalization (a
power-of-two downscale with rounding) and the rare exponent synchronization
that cannot be done by an exact upshift. Each lossy step returns an
:class:`ErrorBudget` delta carrying its worst-case absolute error.

Every number carries ``bound``, an integer upper bound on ``|CRT(residues)|``
kept algebraically (product for mul, sum for add). The tracker is what keeps
residue arithmetic from silently wrapping modulo M.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .core import (
    ModulusSet,
    ResidueVector,
    RoundingMode,
    crt_reconstruct,
    encode,
    make_modulus_set,
    mod_add,
    mod_mul,
    round_shift,
    shift_up,
    zeros,
)
from .errors import AmbiguousSign, ConfigError, EmptyInput, HrfnaError, WouldWrap
from .telemetry import Counters, record

ZERO = Fraction(0)


def pow2(e: int) -> Fraction:
    return Fraction(1 << e) if e >= 0 else Fraction(1, 1 << -e)


def _ceil_shift(b: int, s: int) -> int:
    return -((-b) >> s)


@dataclass(frozen=True, slots=True)
class HybridNumber:
    residues: ResidueVector
    exponent: int
    bound: int

    @property
    def ms(self) -> ModulusSet:
        return self.residues.ms

    def magnitude_bound(self) -> Fraction:
        """Upper bound on ``|phi(self)|``."""
        return self.bound * pow2(self.exponent)


def zero(ms: ModulusSet) -> HybridNumber:
    """Canonical zero: all-zero residues, exponent 0, bound 0."""
    return HybridNumber(zeros(ms), 0, 0)


def _make(rv: ResidueVector, exponent: int, bound: int) -> HybridNumber:
    # bound < M/2 and N == 0 mod M imply N == 0
    if bound == 0 or rv.is_zero():
        return HybridNumber(zeros(rv.ms), 0, 0)
    return HybridNumber(rv, exponent, bound)


def from_integer(n: int, ms: ModulusSet, exponent: int = 0) -> HybridNumber:
    return _make(encode(n, ms), exponent, abs(n))


def phi(x: HybridNumber) -> Fraction:
    """Exact value CRT(r) * 2**f."""
    n = crt_reconstruct(x.residues)
    if x.exponent >= 0:
        return Fraction(n << x.exponent)
    return Fraction(n, 1 << -x.exponent)


def floor_log2(v: Fraction) -> int:
    a, d = abs(v.numerator), v.denominator
    e = a.bit_length() - d.bit_length()
    if (e >= 0 and a < d << e) or (e < 0 and a << -e < d):
        e -= 1
    return e


def from_real(v, ms: ModulusSet, mantissa_bits: int = 24) -> HybridNumber:
    """Round a finite real to a ``mantissa_bits``-bit integer mantissa.

    The exponent is chosen so that ``2**(b-1) <= |N| < 2**b``; dyadic inputs
    with at most ``b`` significant bits are therefore exact. Rounding is to
    nearest, ties to even.
    """
    if isinstance(v, float) and not math.isfinite(v):
        raise HrfnaError(f"cannot encode non-finite value {v}")
    v = Fraction(v)
    if v == 0:
        return zero(ms)
    if mantissa_bits < 1:
        raise HrfnaError("mantissa_bits must be positive")
    f = floor_log2(v) - (mantissa_bits - 1)
    if f <= 0:
        n = round(Fraction(v.numerator << -f, v.denominator))
    else:
        n = round(Fraction(v.numerator, v.denominator << f))
    if abs(n) == 1 << mantissa_bits:
        n >>= 1
        f += 1
    return HybridNumber(encode(n, ms), f, abs(n))


def max_input_bits(ms: ModulusSet, cap: int = 53) -> int:
    """Widest mantissa whose full window fits the centered range."""
    b = max(1, min(cap, (ms.half + 1).bit_length() - 1))
    return b


# ----------------------------------------------------------------------------
# policy and error accounting


def default_target_bits(ms: ModulusSet) -> int:
    """Largest b with 2**(2b) < M/2: two normalized values multiply without wrap."""
    b = 0
    while 2 * (1 << (2 * (b + 1))) < ms.composite:
        b += 1
    return b


@dataclass(frozen=True)
class NormalizationPolicy:
    """Threshold-driven normalization settings.

    ``tau`` triggers normalization (bound >= tau). After an event the
    mantissa is brought down to ``target_bits`` bits. ``fixed_shift`` replaces
    the derived per-event shift with a constant one.
    """

    tau: int
    target_bits: int
    mode: RoundingMode = RoundingMode.NEAREST_EVEN
    check_every: int = 16
    fixed_shift: int | None = None

    def validate(self, ms: ModulusSet) -> "NormalizationPolicy":
        if not (0 < self.tau and ms.below_half(self.tau)):
            raise ConfigError(f"tau must satisfy 0 < tau < M/2 (M = {ms.composite})")
        if self.target_bits < 0:
            raise ConfigError("target_bits must be nonnegative")
        if not (1 << self.target_bits) < self.tau:
            raise ConfigError("need 2**target_bits < tau")
        if self.check_every < 1:
            raise ConfigError("check_every must be at least 1")
        if self.fixed_shift is not None and self.fixed_shift < 1:
            raise ConfigError("fixed_shift must be at least 1")
        return self

    def charge(self, exponent: int) -> Fraction:
        """Worst-case absolute error of rounding to a multiple of 2**exponent."""
        if self.mode is RoundingMode.NEAREST_EVEN:
            return pow2(exponent - 1)
        return pow2(exponent)


def make_policy(
    ms: ModulusSet,
    tau: int | None = None,
    target_bits: int | None = None,
    mode: RoundingMode = RoundingMode.NEAREST_EVEN,
    check_every: int = 16,
    fixed_shift: int | None = None,
) -> NormalizationPolicy:
    return NormalizationPolicy(
        tau=ms.composite // 4 if tau is None else tau,
        target_bits=default_target_bits(ms) if target_bits is None else target_bits,
        mode=mode,
        check_every=check_every,
        fixed_shift=fixed_shift,
    ).validate(ms)


@dataclass(frozen=True, order=True)
class BudgetEvent:
    op_index: int
    kind: str  # "normalize", "sync" or "coefficient"
    shift: int
    exponent: int
    bound: Fraction


@dataclass(frozen=True)
class ErrorBudget:
    """Sum of per-event worst-case absolute errors, with the event log.

    Events are kept sorted, so ``merge`` is associative and commutative.
    ``truncated`` marks a log that stopped recording before ``count`` events.
    """

    total: Fraction = ZERO
    count: int = 0
    events: tuple[BudgetEvent, ...] = ()
    truncated: bool = False

    @classmethod
    def of(cls, *events: BudgetEvent) -> "ErrorBudget":
        return cls(sum((e.bound for e in events), ZERO), len(events), tuple(sorted(events)))

    def merge(self, other: "ErrorBudget") -> "ErrorBudget":
        if not other.count and not other.truncated:
            return self
        if not self.count and not self.truncated:
            return other
        return ErrorBudget(
            self.total + other.total,
            self.count + other.count,
            tuple(heapq.merge(self.events, other.events)),
            self.truncated or other.truncated,
        )

    def consistent(self) -> bool:
        if self.truncated:
            return len(self.events) <= self.count
        return len(self.events) == self.count and sum((e.bound for e in self.events), ZERO) == self.total


EMPTY = ErrorBudget()


class BudgetTally:
    """Mutable accumulator used inside long kernel loops."""

    def __init__(self, log_limit: int | None = None):
        self.total = ZERO
        self.count = 0
        self.events: list[BudgetEvent] = []
        self.log_limit = log_limit
        self.truncated = False

    def add(self, delta: ErrorBudget) -> None:
        if not delta.count:
            return
        self.total += delta.total
        self.count += delta.count
        self.truncated = self.truncated or delta.truncated
        for e in delta.events:
            if self.log_limit is not None and len(self.events) >= self.log_limit:
                self.truncated = True
                break
            self.events.append(e)

    def freeze(self) -> ErrorBudget:
        return ErrorBudget(self.total, self.count, tuple(sorted(self.events)), self.truncated)


def _op_index(counters: Counters | None) -> int:
    return counters.total_ops() if counters is not None else 0


# ----------------------------------------------------------------------------
# primitive operations


def hybrid_mul(x: HybridNumber, y: HybridNumber, counters: Counters | None = None) -> HybridNumber:
    """Exact product; raises WouldWrap when the bound product could reach M/2."""
    bound = x.bound * y.bound
    if not x.ms.below_half(bound):
        raise WouldWrap(f"product bound {bound} reaches M/2")
    record(counters, "muls")
    return _make(mod_mul(x.residues, y.residues), x.exponent + y.exponent, bound)


def _rescale(x: HybridNumber, s: int, mode: RoundingMode, counters) -> tuple[ResidueVector, int, int]:
    n = crt_reconstruct(x.residues)
    record(counters, "reconstructions")
    q = round_shift(n, s, mode)
    return encode(q, x.ms), n, q


def exponent_sync(
    x: HybridNumber,
    y: HybridNumber,
    policy: NormalizationPolicy,
    *,
    reserve_sum: bool = False,
    counters: Counters | None = None,
) -> tuple[HybridNumber, HybridNumber, ErrorBudget]:
    """Bring both operands to one exponent.

    The larger-exponent operand is shifted up exactly when its bound allows
    (``bound * 2**delta < M/2``, or ``< M/2 - other.bound`` with
    ``reserve_sum``). Otherwise the smaller-exponent operand is rounded down
    by the fewest bits that make the upshift of the other fit; the shared
    exponent ``f`` never exceeds the larger input exponent, so the charge
    ``2**(f-1)`` (nearest) or ``2**f`` (floor) is at most the full-downshift
    charge.
    """
    if x.exponent == y.exponent:
        return x, y, EMPTY
    if x.bound == 0:
        record(counters, "syncs_exact")
        return HybridNumber(x.residues, y.exponent, 0), y, EMPTY
    if y.bound == 0:
        record(counters, "syncs_exact")
        return x, HybridNumber(y.residues, x.exponent, 0), EMPTY

    swapped = x.exponent < y.exponent
    hi, lo = (y, x) if swapped else (x, y)
    delta = hi.exponent - lo.exponent
    ms = x.ms

    def fits(down: int) -> bool:
        up = hi.bound << (delta - down)
        rest = _ceil_shift(lo.bound, down) if reserve_sum else 0
        return ms.below_half(up + rest)

    room = ms.composite.bit_length() - 1 - hi.bound.bit_length()
    if delta <= room and fits(0):
        record(counters, "syncs_exact")
        hi = HybridNumber(shift_up(hi.residues, delta), lo.exponent, hi.bound << delta)
        return (lo, hi, EMPTY) if swapped else (hi, lo, EMPTY)

    down = max(1, delta - max(room, 0))
    while down < delta and not fits(down):
        down += 1
    common = lo.exponent + down
    rv, _, _ = _rescale(lo, down, policy.mode, counters)
    record(counters, "syncs_lossy")
    event = BudgetEvent(_op_index(counters), "sync", down, lo.exponent, policy.charge(common))
    lo = _make(rv, common, _ceil_shift(lo.bound, down))
    if lo.bound == 0:
        lo = HybridNumber(lo.residues, common, 0)
    if down < delta:
        hi = HybridNumber(shift_up(hi.residues, delta - down), common, hi.bound << (delta - down))
    return (lo, hi, ErrorBudget.of(event)) if swapped else (hi, lo, ErrorBudget.of(event))


def hybrid_add(
    x: HybridNumber, y: HybridNumber, policy: NormalizationPolicy, counters: Counters | None = None
) -> tuple[HybridNumber, ErrorBudget]:
    a, b, delta = exponent_sync(x, y, policy, reserve_sum=True, counters=counters)
    bound = a.bound + b.bound
    if not x.ms.below_half(bound):
        raise WouldWrap(f"sum bound {bound} reaches M/2")
    record(counters, "adds")
    return _make(mod_add(a.residues, b.residues), a.exponent, bound), delta


def needs_normalization(x: HybridNumber, policy: NormalizationPolicy) -> bool:
    return x.bound >= policy.tau


def normalize_shift(x: HybridNumber, policy: NormalizationPolicy) -> int:
    if x.bound < 1 << policy.target_bits:
        return 0
    if policy.fixed_shift is not None:
        return policy.fixed_shift
    return max(0, x.bound.bit_length() - policy.target_bits)


def normalize(
    x: HybridNumber,
    policy: NormalizationPolicy,
    counters: Counters | None = None,
    *,
    weight: Fraction | None = None,
) -> tuple[HybridNumber, ErrorBudget]:
    """Downscale the mantissa by 2**s and bump the exponent by s.

    ``weight`` scales the recorded charge; callers pass the magnitude of a
    co-factor when the rounded value is about to be multiplied.
    """
    if normalize_shift(x, policy) == 0:
        return x, EMPTY
    # the rescale reconstructs N anyway, so size the shift on |N| rather
    # than on the tracked bound, and keep |q| as the new (exact) bound
    n = crt_reconstruct(x.residues)
    record(counters, "reconstructions")
    if policy.fixed_shift is not None:
        s = policy.fixed_shift
    else:
        s = max(0, abs(n).bit_length() - policy.target_bits)
    if s == 0:
        return _make(x.residues, x.exponent, abs(n)), EMPTY
    q = round_shift(n, s, policy.mode)
    record(counters, "normalizations")
    if abs(n) >= policy.tau:
        record(counters, "true_triggers")
    charge = policy.charge(x.exponent + s)
    if weight is not None:
        charge *= weight
    event = BudgetEvent(_op_index(counters), "normalize", s, x.exponent, charge)
    return _make(encode(q, x.ms), x.exponent + s, abs(q)), ErrorBudget.of(event)


# ----------------------------------------------------------------------------
# composite operations with automatic headroom management


def _prepare_product(x, y, policy, counters):
    """Normalize operands until their product bound fits below M/2."""
    ms = x.ms
    budget = EMPTY
    if ms.below_half(x.bound * y.bound):
        return x, y, budget
    # shrink the wider operand first; its error is amplified by |other|
    if x.bound < y.bound:
        y, d = normalize(y, policy, counters, weight=x.magnitude_bound())
        budget = budget.merge(d)
    else:
        x, d = normalize(x, policy, counters, weight=y.magnitude_bound())
        budget = budget.merge(d)
    if not ms.below_half(x.bound * y.bound):
        if x.bound < y.bound:
            y, d = normalize(y, policy, counters, weight=x.magnitude_bound())
        else:
            x, d = normalize(x, policy, counters, weight=y.magnitude_bound())
        budget = budget.merge(d)
    if not ms.below_half(x.bound * y.bound):
        raise WouldWrap("normalization cannot make room for the product; check target_bits")
    return x, y, budget


def _sum(x, y, policy, counters):
    """x + y with wrap protection (no add is recorded).

    When the synchronized bounds would reach M/2, the wider operand is
    normalized and the pair re-synchronized. Work already done is kept, so
    every recorded event stays in the returned budget.
    """
    ms = x.ms
    a, b, budget = exponent_sync(x, y, policy, reserve_sum=True, counters=counters)
    for _ in range(3):
        bound = a.bound + b.bound
        if ms.below_half(bound):
            return _make(mod_add(a.residues, b.residues), a.exponent, bound), budget
        if a.bound >= b.bound:
            a, d = normalize(a, policy, counters)
        else:
            b, d = normalize(b, policy, counters)
        budget = budget.merge(d)
        a, b, d = exponent_sync(a, b, policy, reserve_sum=True, counters=counters)
        budget = budget.merge(d)
    raise WouldWrap("normalization cannot make room for the sum; check policy")


def multiply(x, y, policy: NormalizationPolicy, counters: Counters | None = None):
    """Product with pre-normalization as needed and threshold check on the result."""
    x, y, budget = _prepare_product(x, y, policy, counters)
    z = hybrid_mul(x, y, counters)
    if needs_normalization(z, policy):
        z, d = normalize(z, policy, counters)
        budget = budget.merge(d)
    return z, budget


def add(x, y, policy: NormalizationPolicy, counters: Counters | None = None):
    """Sum with wrap protection and threshold check on the result."""
    z, budget = _sum(x, y, policy, counters)
    record(counters, "adds")
    if needs_normalization(z, policy):
        z, d = normalize(z, policy, counters)
        budget = budget.merge(d)
    return z, budget


def negate(x: HybridNumber) -> HybridNumber:
    ms = x.ms
    rv = ResidueVector(tuple((-r) % m for r, m in zip(x.residues.residues, ms.moduli)), ms)
    return HybridNumber(rv, x.exponent, x.bound)


def mac(
    acc: HybridNumber,
    x: HybridNumber,
    y: HybridNumber,
    policy: NormalizationPolicy,
    counters: Counters | None = None,
    *,
    check: bool = True,
) -> tuple[HybridNumber, ErrorBudget]:
    """acc + x*y with a single synchronization.

    The threshold test runs only when ``check`` is set; the wrap guard always
    runs, since skipping it could corrupt the residues.
    """
    x, y, budget = _prepare_product(x, y, policy, counters)
    bound = x.bound * y.bound
    p = _make(mod_mul(x.residues, y.residues), x.exponent + y.exponent, bound)
    out, d = _sum(acc, p, policy, counters)
    budget = budget.merge(d)
    record(counters, "macs")
    if check and needs_normalization(out, policy):
        out, d = normalize(out, policy, counters)
        budget = budget.merge(d)
    return out, budget


# ----------------------------------------------------------------------------
# magnitude estimation and selection


@dataclass(frozen=True)
class MagnitudeInterval:
    lo: Fraction
    hi: Fraction
    idx: int = 0
    exact: bool = False

    def scaled(self, exponent: int) -> "MagnitudeInterval":
        k = pow2(exponent)
        return MagnitudeInterval(self.lo * k, self.hi * k, self.idx, self.exact)


def magnitude_interval(x: HybridNumber, counters: Counters | None = None, idx: int = 0) -> MagnitudeInterval:
    """Bound ``|CRT(residues)|`` from the fractional CRT sum, without reconstruction.

    ``sum(r_i * w_i / m_i) mod 1`` equals ``(N mod M) / M``; the fixed-point
    sum underestimates it by less than ``k * 2**-frac_precision``. Values on
    the upper half of the circle are negative representatives. An estimate
    straddling 1/2 cannot be folded and raises AmbiguousSign.

    The resolution is absolute: the width is about ``k * 2**-p * M`` in
    mantissa units (2**35 for the default set), so only wide mantissas get
    informative intervals.
    """
    ms = x.ms
    record(counters, "interval_evals")
    shift = ms.frac_shift
    one = 1 << shift
    half = one >> 1
    est = 0
    for r, w in zip(x.residues.residues, ms.frac_weights):
        est += r * w
    u = est & (one - 1)
    slack = ms.k << (shift - ms.frac_precision)
    big = ms.composite
    if u + slack <= half:
        return MagnitudeInterval(Fraction(u * big, one), Fraction((u + slack) * big, one), idx)
    if u > half and u + slack <= one:
        return MagnitudeInterval(Fraction((one - u - slack) * big, one), Fraction((one - u) * big, one), idx)
    if u + slack > one:
        # the interval wraps through 0: tiny value of unknown sign
        top = max(one - u, u + slack - one)
        return MagnitudeInterval(ZERO, Fraction(top * big, one), idx)
    raise AmbiguousSign("estimate within slack of the sign fold")


def _exact_interval(x: HybridNumber, idx: int, counters) -> MagnitudeInterval:
    n = abs(crt_reconstruct(x.residues))
    record(counters, "reconstructions")
    return MagnitudeInterval(Fraction(n), Fraction(n), idx, True)


def audit(x: HybridNumber, counters: Counters | None = None) -> HybridNumber:
    """Tighten the tracked bound with an interval estimate (exact on ambiguity)."""
    try:
        iv = magnitude_interval(x, counters)
    except AmbiguousSign:
        iv = _exact_interval(x, 0, counters)
    hi = math.ceil(iv.hi)
    if hi < x.bound:
        return _make(x.residues, x.exponent, hi)
    return x


def select_max_magnitude(
    xs: Sequence[HybridNumber], counters: Counters | None = None
) -> tuple[int, MagnitudeInterval]:
    """Index of an element with the largest ``|phi|``.

    Pairwise tournament over intervals scaled by 2**f. Disjoint intervals
    decide a match outright; overlapping candidates are reconstructed
    exactly. Ties go to the lower index.
    """
    if not xs:
        raise EmptyInput("select_max_magnitude needs at least one value")
    entries = []
    for i, x in enumerate(xs):
        try:
            iv = magnitude_interval(x, counters, i)
        except AmbiguousSign:
            iv = _exact_interval(x, i, counters)
        entries.append((iv.scaled(x.exponent), x))

    def exactify(entry):
        iv, x = entry
        if iv.exact:
            return entry
        return _exact_interval(x, iv.idx, counters).scaled(x.exponent), x

    while len(entries) > 1:
        nxt = []
        for j in range(0, len(entries) - 1, 2):
            a, b = entries[j], entries[j + 1]
            if a[0].lo > b[0].hi:
                nxt.append(a)
            elif b[0].lo > a[0].hi:
                nxt.append(b)
            else:
                a, b = exactify(a), exactify(b)
                nxt.append(a if a[0].lo >= b[0].lo else b)
        if len(entries) % 2:
            nxt.append(entries[-1])
        entries = nxt
    iv = entries[0][0]
    return iv.idx, iv


# ----------------------------------------------------------------------------
# serialization


def to_record(x: HybridNumber) -> dict:
    return {
        "residues": [str(r) for r in x.residues.residues],
        "exponent": x.exponent,
        "bound": str(x.bound),
    }


def from_record(rec: dict, ms: ModulusSet) -> HybridNumber:
    try:
        rv = ResidueVector(tuple(int(r) for r in rec["residues"]), ms).check()
        exponent = int(rec["exponent"])
        bound = int(rec["bound"])
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, HrfnaError):
            raise
        raise HrfnaError(f"malformed hybrid record: {exc}") from None
    if bound < 0 or not ms.below_half(bound):
        raise HrfnaError("bound must lie in [0, M/2)")
    if abs(crt_reconstruct(rv)) > bound:
        raise HrfnaError("record bound does not cover its residues")
    return HybridNumber(rv, exponent, bound)


__all__ = [
    "BudgetEvent",
    "BudgetTally",
    "EMPTY",
    "ErrorBudget",
    "HybridNumber",
    "MagnitudeInterval",
    "NormalizationPolicy",
    "add",
    "audit",
    "default_target_bits",
    "exponent_sync",
    "from_integer",
    "from_real",
    "from_record",
    "hybrid_add",
    "hybrid_mul",
    "mac",
    "magnitude_interval",
    "make_modulus_set",
    "make_policy",
    "max_input_bits",
    "multiply",
    "needs_normalization",
    "negate",
    "normalize",
    "phi",
    "pow2",
    "select_max_magnitude",
    "to_record",
    "zero",
]
