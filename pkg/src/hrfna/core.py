"""Residue number system substrate.

Moduli management, channelwise modular arithmetic, centered CRT
reconstruction and power-of-two rescaling with re-encoding. Integers are
plain Python ints, so nothing here can overflow.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ChannelCountMismatch, HrfnaError, NotCoprime, OutOfRange

# Eight largest primes below 2**16; the composite has bit length 128.
DEFAULT_MODULI = (65521, 65519, 65497, 65479, 65449, 65447, 65437, 65423)
DEFAULT_FRAC_PRECISION = 96


class RoundingMode(enum.Enum):
    FLOOR_DIV = "floor"
    NEAREST_EVEN = "nearest-even"

    @classmethod
    def parse(cls, text: str) -> "RoundingMode":
        key = text.strip().lower().replace("_", "-")
        aliases = {
            "floor": cls.FLOOR_DIV,
            "floordiv": cls.FLOOR_DIV,
            "floor-div": cls.FLOOR_DIV,
            "nearest-even": cls.NEAREST_EVEN,
            "nearesteven": cls.NEAREST_EVEN,
            "nearest": cls.NEAREST_EVEN,
            "rne": cls.NEAREST_EVEN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise HrfnaError(f"unknown rounding mode {text!r}") from None


@dataclass(frozen=True, eq=False)
class ModulusSet:
    """Pairwise-coprime moduli plus the constants derived from them.

    ``crt_weights[i]`` is ``(M_i, w_i)`` with ``M_i = M / m_i`` and
    ``w_i = M_i^-1 mod m_i``. ``frac_weights[i]`` is ``floor(w_i / m_i * 2**frac_shift)``
    where ``frac_shift`` is the requested precision plus enough guard bits
    to absorb a residue-sized multiplier.
    """

    moduli: tuple[int, ...]
    composite: int
    crt_weights: tuple[tuple[int, int], ...]
    frac_precision: int
    frac_shift: int
    frac_weights: tuple[int, ...]
    _coeffs: tuple[int, ...] = field(repr=False)
    _pow2: dict = field(default_factory=dict, repr=False)

    def __eq__(self, other):
        if not isinstance(other, ModulusSet):
            return NotImplemented
        return self.moduli == other.moduli

    def __hash__(self):
        return hash(self.moduli)

    def __repr__(self):
        return f"ModulusSet(moduli={self.moduli}, frac_precision={self.frac_precision})"

    def __reduce__(self):
        return make_modulus_set, (self.moduli, self.frac_precision)

    @property
    def k(self) -> int:
        return len(self.moduli)

    @property
    def half(self) -> int:
        """Largest value in the centered range, floor(M/2)."""
        return self.composite // 2

    @property
    def lowest(self) -> int:
        """Smallest value in the centered range, -ceil(M/2) + 1."""
        return -((self.composite + 1) // 2) + 1

    def in_range(self, value: int) -> bool:
        return self.lowest <= value <= self.half

    def below_half(self, magnitude: int) -> bool:
        """True when ``magnitude < M/2`` (exact, no division)."""
        return 2 * magnitude < self.composite

    def pow2(self, delta: int) -> tuple[int, ...]:
        """Channelwise 2**delta mod m_i, cached."""
        got = self._pow2.get(delta)
        if got is None:
            got = tuple(pow(2, delta, m) for m in self.moduli)
            if len(self._pow2) < 4096:
                self._pow2[delta] = got
        return got


def make_modulus_set(moduli: Sequence[int], frac_precision: int = DEFAULT_FRAC_PRECISION) -> ModulusSet:
    moduli = tuple(int(m) for m in moduli)
    if not moduli:
        raise HrfnaError("modulus list is empty")
    for m in moduli:
        if m < 2:
            raise HrfnaError(f"modulus {m} is below 2")
    for i in range(len(moduli)):
        for j in range(i + 1, len(moduli)):
            g = math.gcd(moduli[i], moduli[j])
            if g != 1:
                raise NotCoprime(i, j, g)
    if frac_precision < 1:
        raise HrfnaError("frac_precision must be positive")

    composite = math.prod(moduli)
    weights = []
    coeffs = []
    for m in moduli:
        big = composite // m
        w = pow(big, -1, m)
        weights.append((big, w))
        coeffs.append(big * w % composite)
    shift = frac_precision + max(moduli).bit_length()
    fracs = tuple((w << shift) // m for (_, w), m in zip(weights, moduli))
    return ModulusSet(
        moduli=moduli,
        composite=composite,
        crt_weights=tuple(weights),
        frac_precision=frac_precision,
        frac_shift=shift,
        frac_weights=fracs,
        _coeffs=tuple(coeffs),
    )


_DEFAULT: ModulusSet | None = None


def default_modulus_set() -> ModulusSet:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = make_modulus_set(DEFAULT_MODULI)
    return _DEFAULT


@dataclass(frozen=True, slots=True)
class ResidueVector:
    residues: tuple[int, ...]
    ms: ModulusSet = field(repr=False)

    def __post_init__(self):
        if len(self.residues) != self.ms.k:
            raise ChannelCountMismatch(
                f"{len(self.residues)} residues for {self.ms.k} moduli"
            )

    def __iter__(self):
        return iter(self.residues)

    def __len__(self):
        return len(self.residues)

    def __getitem__(self, i):
        return self.residues[i]

    def is_zero(self) -> bool:
        return not any(self.residues)

    def check(self) -> "ResidueVector":
        """Validate that every residue is a nonnegative representative."""
        for r, m in zip(self.residues, self.ms.moduli):
            if not 0 <= r < m:
                raise OutOfRange(f"residue {r} not in [0, {m})")
        return self


def encode(value: int, ms: ModulusSet) -> ResidueVector:
    value = int(value)
    if not ms.in_range(value):
        raise OutOfRange(f"{value} outside the centered range of M={ms.composite}")
    return ResidueVector(tuple(value % m for m in ms.moduli), ms)


def zeros(ms: ModulusSet) -> ResidueVector:
    return ResidueVector((0,) * ms.k, ms)


def crt_reconstruct(rv: ResidueVector, ms: ModulusSet | None = None) -> int:
    """Centered CRT: the unique N congruent to ``rv`` with N in [-ceil(M/2)+1, floor(M/2)]."""
    if ms is not None and ms != rv.ms:
        raise ChannelCountMismatch("residue vector bound to a different modulus set")
    ms = rv.ms
    total = 0
    for r, c in zip(rv.residues, ms._coeffs):
        total += r * c
    n = total % ms.composite
    if n > ms.half:
        n -= ms.composite
    return n


def _same_binding(a: ResidueVector, b: ResidueVector) -> ModulusSet:
    if a.ms is not b.ms and a.ms != b.ms:
        raise ChannelCountMismatch("operands bound to different modulus sets")
    return a.ms


def mod_add(a: ResidueVector, b: ResidueVector) -> ResidueVector:
    ms = _same_binding(a, b)
    return ResidueVector(
        tuple((x + y) % m for x, y, m in zip(a.residues, b.residues, ms.moduli)), ms
    )


def mod_mul(a: ResidueVector, b: ResidueVector) -> ResidueVector:
    ms = _same_binding(a, b)
    return ResidueVector(
        tuple(x * y % m for x, y, m in zip(a.residues, b.residues, ms.moduli)), ms
    )


def shift_up(rv: ResidueVector, delta: int) -> ResidueVector:
    """Exact multiplication by 2**delta, channelwise (caller guarantees no wrap)."""
    ms = rv.ms
    return ResidueVector(
        tuple(x * p % m for x, p, m in zip(rv.residues, ms.pow2(delta), ms.moduli)), ms
    )


def round_shift(n: int, s: int, mode: RoundingMode) -> int:
    """n / 2**s rounded per ``mode``; floor is taken on the signed value."""
    if s == 0:
        return n
    if mode is RoundingMode.FLOOR_DIV:
        return n >> s
    q = n >> s
    rem = n - (q << s)
    twice = rem << 1
    unit = 1 << s
    if twice > unit or (twice == unit and q & 1):
        q += 1
    return q


def scale_and_reencode(
    rv: ResidueVector, s: int, mode: RoundingMode, ms: ModulusSet | None = None
) -> tuple[ResidueVector, int]:
    """Reconstruct N, divide by 2**s with rounding, re-encode.

    Returns the new residue vector and the exact integer error
    ``N - round(N / 2**s) * 2**s``.
    """
    if s < 0:
        raise HrfnaError("scale shift must be nonnegative")
    if ms is not None and ms != rv.ms:
        raise ChannelCountMismatch("residue vector bound to a different modulus set")
    n = crt_reconstruct(rv)
    q = round_shift(n, s, mode)
    return encode(q, rv.ms), n - (q << s)
