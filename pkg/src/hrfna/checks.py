"""Invariant suites with adjustable sizes.

``hrfna selftest`` runs them small; the acceptance tests run them at full
size. Each suite returns a :class:`CheckResult` and never raises on a
failed property (exceptions other than the expected ones do propagate).
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .core import ModulusSet, ResidueVector, RoundingMode, crt_reconstruct, encode, make_modulus_set, mod_add, mod_mul
from .errors import AmbiguousSign, WouldWrap
from .hybrid import (
    HybridNumber,
    add,
    from_integer,
    from_real,
    magnitude_interval,
    make_policy,
    multiply,
    mac,
    negate,
    normalize,
    phi,
    pow2,
    select_max_magnitude,
)
from .kernels import dot_product
from .oracle import exact_dot
from .telemetry import Counters


@dataclass
class CheckResult:
    name: str
    ok: bool
    trials: int
    detail: str = ""
    stats: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"ok": self.ok, "trials": self.trials, "detail": self.detail, **self.stats}


def _rand_in_range(rnd: random.Random, ms: ModulusSet, bits: int | None = None) -> int:
    if bits is None:
        return rnd.randint(ms.lowest, ms.half)
    return rnd.randint(-(1 << bits) + 1, (1 << bits) - 1)


def crt_roundtrip(ms: ModulusSet, trials: int, seed: int = 1) -> CheckResult:
    rnd = random.Random(seed)
    edge = [0, 1, -1, ms.half, ms.lowest]
    values = edge + [_rand_in_range(rnd, ms) for _ in range(trials)]
    bad = [v for v in values if crt_reconstruct(encode(v, ms)) != v]
    small = make_modulus_set([3, 5, 7])
    seen = set()
    for a in range(3):
        for b in range(5):
            for c in range(7):
                seen.add(crt_reconstruct(ResidueVector((a, b, c), small)))
    bijective = seen == set(range(small.lowest, small.half + 1)) and len(seen) == 105
    ok = not bad and bijective
    return CheckResult(
        "crt_roundtrip",
        ok,
        len(values),
        f"{len(bad)} mismatches; {{3,5,7}} bijection {'holds' if bijective else 'fails'}",
    )


def _random_hybrid(rnd: random.Random, ms: ModulusSet, bits: int) -> HybridNumber:
    return from_integer(_rand_in_range(rnd, ms, bits), ms, rnd.randint(-40, 40))


def exact_products(ms: ModulusSet, pairs: int, seed: int = 2) -> CheckResult:
    """Exact products whenever the bound product stays below M/2."""
    from .hybrid import hybrid_mul

    rnd = random.Random(seed)
    half_bits = (ms.composite.bit_length() - 2) // 2
    bad = 0
    for _ in range(pairs):
        bx = rnd.randint(1, half_bits)
        x = _random_hybrid(rnd, ms, bx)
        y = _random_hybrid(rnd, ms, max(1, 2 * half_bits - bx))
        if not ms.below_half(x.bound * y.bound):
            continue
        if phi(hybrid_mul(x, y)) != phi(x) * phi(y):
            bad += 1
    return CheckResult("exact_product", bad == 0, pairs, f"{bad} inexact products")


def event_bound(ms: ModulusSet, events: int, mode: RoundingMode, seed: int = 3) -> CheckResult:
    """Every forced normalization stays within the mode's per-event bound.

    Nearest-even: ``|err| <= 2**(f+s-1)``. Floor: ``|err| < 2**(f+s)``.
    """
    rnd = random.Random(seed)
    bits = ms.composite.bit_length() - 2
    bad = 0
    worst = Fraction(0)
    done = 0
    while done < events:
        n = _rand_in_range(rnd, ms, rnd.randint(2, bits))
        if n == 0:
            continue
        f = rnd.randint(-60, 60)
        s = rnd.randint(1, max(1, abs(n).bit_length() + 2))
        x = from_integer(n, ms, f)
        pol = make_policy(ms, target_bits=0, mode=mode, fixed_shift=s)
        y, delta = normalize(x, pol)
        err = abs(phi(x) - phi(y))
        limit = pow2(f + s - 1) if mode is RoundingMode.NEAREST_EVEN else pow2(f + s)
        within = err <= limit if mode is RoundingMode.NEAREST_EVEN else err < limit
        bad += not within or delta.total != pol.charge(f + s)
        worst = max(worst, err / limit)
        done += 1
    return CheckResult(
        f"event_bound_{mode.value}",
        bad == 0,
        done,
        f"{bad} violations; worst error/limit {float(worst):.3f}",
        {"worst_ratio": float(worst)},
    )


def relative_bound(ms: ModulusSet, events: int, seed: int = 4) -> CheckResult:
    """Fixed shift s with tau >= 2**(2s-1): events with |N| >= tau have relative error <= 2**-s."""
    rnd = random.Random(seed)
    top = ms.composite.bit_length() - 2
    bad = 0
    worst = 0.0
    for _ in range(events):
        s = rnd.randint(1, (top - 1) // 2)
        tau = 1 << (2 * s - 1 + rnd.randint(0, top - 2 * s))
        pol = make_policy(ms, tau=tau, target_bits=0, fixed_shift=s)
        mag = rnd.randint(tau, min(ms.half, 4 * tau))
        n = mag if rnd.random() < 0.5 else -mag
        x = from_integer(n, ms, rnd.randint(-30, 30))
        y, _ = normalize(x, pol)
        rel = abs(phi(x) - phi(y)) / abs(phi(x))
        bad += rel > pow2(-s)
        worst = max(worst, float(rel / pow2(-s)))
    return CheckResult("relative_bound", bad == 0, events, f"{bad} violations; worst rel/2^-s {worst:.3f}")


def interval_soundness(ms: ModulusSet, trials: int, lists: int, max_len: int = 256, seed: int = 5) -> CheckResult:
    rnd = random.Random(seed)
    misses = 0
    ambiguous = 0
    for i in range(trials):
        bits = rnd.randint(0, ms.composite.bit_length() - 1)
        n = _rand_in_range(rnd, ms, bits) if bits else 0
        n = max(ms.lowest, min(ms.half, n))
        x = HybridNumber(encode(n, ms), 0, abs(n))
        try:
            iv = magnitude_interval(x)
        except AmbiguousSign:
            ambiguous += 1
            continue
        misses += not (iv.lo <= abs(n) <= iv.hi)
    wrong = 0
    for _ in range(lists):
        k = rnd.randint(1, max_len)
        xs = [from_real(rnd.choice([-1, 1]) * rnd.random() * 2.0 ** rnd.randint(-30, 30), ms, 24) for _ in range(k)]
        if rnd.random() < 0.2 and k > 1:
            xs[rnd.randrange(k)] = xs[rnd.randrange(k)]  # duplicate magnitudes
        idx, _ = select_max_magnitude(xs)
        best = max(abs(phi(x)) for x in xs)
        wrong += abs(phi(xs[idx])) != best
    ok = misses == 0 and wrong == 0
    return CheckResult(
        "interval_soundness",
        ok,
        trials + lists,
        f"{misses} containment misses ({ambiguous} ambiguous); {wrong} wrong argmax",
        {"misses": misses, "ambiguous": ambiguous, "wrong_argmax": wrong},
    )


def tracker_soundness(sequences: int, length: int, seed: int = 6) -> CheckResult:
    """Random op sequences on {3,5,7}: the bound always covers |N|, stays below M/2,
    and every op's deviation from the exact op is within its budget delta."""
    ms = make_modulus_set([3, 5, 7])
    pol = make_policy(ms)
    rnd = random.Random(seed)
    bad = 0
    ops = 0
    for _ in range(sequences):
        pool = [from_integer(rnd.randint(-3, 3), ms, rnd.randint(-3, 3)) for _ in range(4)]
        for _ in range(length):
            a, b, c = (rnd.choice(pool) for _ in range(3))
            kind = rnd.choice(("add", "mul", "mac", "neg", "norm"))
            try:
                if kind == "add":
                    z, d = add(a, b, pol)
                    want = phi(a) + phi(b)
                elif kind == "mul":
                    z, d = multiply(a, b, pol)
                    want = phi(a) * phi(b)
                elif kind == "mac":
                    z, d = mac(a, b, c, pol)
                    want = phi(a) + phi(b) * phi(c)
                elif kind == "neg":
                    z, d = negate(a), None
                    want = -phi(a)
                else:
                    z, d = normalize(a, pol)
                    want = phi(a)
            except WouldWrap:
                continue
            ops += 1
            n = crt_reconstruct(z.residues)
            slack = d.total if d is not None else 0
            if abs(n) > z.bound or not ms.below_half(z.bound) or abs(phi(z) - want) > slack:
                bad += 1
            pool[rnd.randrange(len(pool))] = z
    # plain residue wrap, for contrast: 7 + 8 over {3,5} is 0 without a tracker
    small = make_modulus_set([3, 5])
    wraps = crt_reconstruct(mod_add(encode(7, small), encode(-7, small))) == 0
    return CheckResult("tracker_soundness", bad == 0 and wraps, ops, f"{bad} violations over {ops} ops")


def budget_dominance_dot(ms: ModulusSet, runs: int, length: int, seed: int = 7) -> CheckResult:
    """Dot products forced to normalize often (small tau) stay within budget."""
    rnd = random.Random(seed)
    bad = 0
    events = 0
    for r in range(runs):
        mode = RoundingMode.NEAREST_EVEN if r % 2 == 0 else RoundingMode.FLOOR_DIV
        pol = make_policy(ms, tau=1 << 40, target_bits=20, mode=mode, check_every=rnd.choice((1, 4, 16)))
        xs = [Fraction(rnd.randint(-(1 << 20), 1 << 20), 1 << rnd.randint(0, 40)) for _ in range(length)]
        ys = [Fraction(rnd.randint(-(1 << 20), 1 << 20), 1 << rnd.randint(0, 40)) for _ in range(length)]
        hx = [from_real(v, ms, 21) for v in xs]
        hy = [from_real(v, ms, 21) for v in ys]
        res = dot_product(hx, hy, pol)
        events += res.budget.count
        bad += abs(res.result - exact_dot(xs, ys)) > res.budget.total
        c = res.counters
        bad += res.budget.count != c.normalizations + c.syncs_lossy
    return CheckResult("budget_dominance_dot", bad == 0, runs, f"{bad} violations; {events} budget events")


def counters_monoid(trials: int, seed: int = 8) -> CheckResult:
    from .telemetry import KINDS

    rnd = random.Random(seed)
    bad = 0
    for _ in range(trials):
        a, b, c = (Counters(**{k: rnd.randint(0, 1000) for k in KINDS}) for _ in range(3))
        bad += a.merge(b).merge(c) != a.merge(b.merge(c))
        bad += a.merge(b) != b.merge(a)
        bad += a.merge(Counters()) != a
    return CheckResult("counters_monoid", bad == 0, trials, f"{bad} violations")


def homomorphism(ms: ModulusSet, trials: int, seed: int = 9) -> CheckResult:
    rnd = random.Random(seed)
    half = (ms.composite.bit_length() - 3) // 2
    bad = 0
    for _ in range(trials):
        a = _rand_in_range(rnd, ms, half)
        b = _rand_in_range(rnd, ms, half)
        bad += crt_reconstruct(mod_mul(encode(a, ms), encode(b, ms))) != a * b
        bad += crt_reconstruct(mod_add(encode(a, ms), encode(b, ms))) != a + b
    return CheckResult("homomorphism", bad == 0, trials, f"{bad} violations")


def run_all(ms: ModulusSet, mode: RoundingMode, scale: float = 1.0) -> list[CheckResult]:
    """Every suite at ``scale`` times its selftest size."""
    n = lambda k: max(1, int(k * scale))  # noqa: E731
    return [
        crt_roundtrip(ms, n(2000)),
        homomorphism(ms, n(1000)),
        exact_products(ms, n(1000)),
        event_bound(ms, n(500), mode),
        relative_bound(ms, n(300)),
        interval_soundness(ms, n(1000), n(50), 64),
        tracker_soundness(n(100), 50),
        budget_dominance_dot(ms, n(6), 200),
        counters_monoid(n(200)),
    ]
