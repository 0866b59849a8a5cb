import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hrfna.core import RoundingMode, crt_reconstruct, default_modulus_set, encode, make_modulus_set
from hrfna.errors import ConfigError, EmptyInput, HrfnaError, WouldWrap
from hrfna.hybrid import (
    EMPTY,
    BudgetEvent,
    ErrorBudget,
    HybridNumber,
    add,
    exponent_sync,
    from_integer,
    from_real,
    from_record,
    hybrid_add,
    hybrid_mul,
    mac,
    magnitude_interval,
    make_policy,
    max_input_bits,
    multiply,
    needs_normalization,
    negate,
    normalize,
    phi,
    pow2,
    select_max_magnitude,
    to_record,
    zero,
)
from hrfna.telemetry import Counters

MS35 = make_modulus_set([3, 5])
MS = default_modulus_set()
POL = make_policy(MS)


def hn(n, f=0, ms=MS35):
    return HybridNumber(encode(n, ms), f, abs(n))


def test_phi_examples():
    assert phi(hn(0, 5)) == 0
    assert phi(hn(7, -2)) == Fraction(7, 4)
    assert phi(hn(-1, 3)) == -8


def test_from_real_examples():
    z = from_real(0.0, MS)
    assert z == zero(MS) and z.exponent == 0 and z.bound == 0
    one = from_real(1.0, MS, 24)
    assert crt_reconstruct(one.residues) == 1 << 23 and one.exponent == -23
    x = from_real(0.3, MS, 24)
    assert abs(phi(x) - Fraction(3, 10)) <= Fraction(3, 10) * pow2(-23)
    # exact dyadic with few bits stays exact
    assert phi(from_real(Fraction(-3, 16), MS, 24)) == Fraction(-3, 16)


@pytest.mark.parametrize("bad", [float("nan"), float("inf")])
def test_from_real_rejects_non_finite(bad):
    with pytest.raises(HrfnaError):
        from_real(bad, MS)


@settings(max_examples=200, deadline=None)
@given(st.fractions(min_value=-(10**9), max_value=10**9), st.integers(min_value=2, max_value=53))
def test_from_real_window_and_error(v, bits):
    x = from_real(v, MS, bits)
    if v == 0:
        assert x == zero(MS)
        return
    n = abs(crt_reconstruct(x.residues))
    assert (1 << (bits - 1)) <= n < (1 << bits)
    assert abs(phi(x) - v) <= abs(v) * pow2(1 - bits)


def test_max_input_bits():
    assert max_input_bits(MS35) == 3
    assert max_input_bits(MS) == 53


def test_hybrid_mul_examples():
    x = from_real(0.75, MS)
    assert phi(hybrid_mul(x, from_real(1.0, MS))) == phi(x)
    assert phi(hybrid_mul(hn(7, 1), hn(-1, 2))) == -56
    big = HybridNumber(encode(1, MS), 0, 1 << 64)
    with pytest.raises(WouldWrap):
        hybrid_mul(big, big)


def test_hybrid_mul_zero_is_canonical():
    z = hybrid_mul(hn(0, 4), hn(3, -2))
    assert z == zero(MS35)


def test_sync_examples():
    a, b = hn(3, -3, MS), hn(5, -3, MS)
    assert exponent_sync(a, b, POL) == (a, b, EMPTY)
    pol = make_policy(MS35)
    x, y, d = exponent_sync(hn(1, 2), hn(3, 0), pol)
    assert (crt_reconstruct(x.residues), x.exponent) == (4, 0)
    assert phi(x) == 4 and phi(y) == 3 and d == EMPTY


def test_sync_lossy_path():
    big = (MS.composite // 4) - 12345
    x = from_integer(big, MS, 8)
    y = from_integer(-987654321987, MS, 0)
    c = Counters()
    x2, y2, d = exponent_sync(x, y, POL, counters=c)
    assert c.syncs_lossy == 1 and d.count == 1
    assert x2.exponent == y2.exponent <= 8
    err = abs(phi(x2) - phi(x)) + abs(phi(y2) - phi(y))
    assert err <= d.total <= pow2(8 - 1)


def test_hybrid_add_examples():
    x = from_real(1.25, MS)
    z, d = hybrid_add(x, zero(MS), POL)
    assert phi(z) == phi(x) and d == EMPTY
    # over {3,5} the bounds 7 + 1 reach M/2 = 7.5, so the tracker refuses
    pol = make_policy(MS35)
    with pytest.raises(WouldWrap):
        hybrid_add(from_real(7, MS35, 3), from_real(-1, MS35, 1), pol)
    ms = make_modulus_set([3, 5, 7])
    z, d = hybrid_add(from_real(7, ms, 3), from_real(-1, ms, 1), make_policy(ms))
    assert phi(z) == 6 and d == EMPTY
    with pytest.raises(WouldWrap):
        hybrid_add(hn(7), hn(6), pol)


def test_safe_add_normalizes_instead_of_wrapping():
    pol = make_policy(MS35)
    z, d = add(hn(7), hn(6), pol)
    assert abs(phi(z) - 13) <= d.total


def test_mac_examples():
    x, y = from_real(0.375, MS), from_real(-2.5, MS)
    z, d = mac(zero(MS), x, y, POL)
    assert phi(z) == phi(x) * phi(y) and d == EMPTY

    rnd = random.Random(3)
    acc, exact = zero(MS), Fraction(0)
    for _ in range(100):
        a = Fraction(rnd.randint(-1000, 1000), 64)
        b = Fraction(rnd.randint(-1000, 1000), 8)
        acc, d = mac(acc, from_real(a, MS), from_real(b, MS), POL)
        assert d == EMPTY
        exact += a * b
    assert phi(acc) == exact


def test_mac_single_forced_normalization():
    pol = make_policy(MS, tau=1 << 70, target_bits=40)
    acc = from_integer((1 << 69) + 12345, MS, -10)
    x, y = from_integer(9, MS, 0), from_integer(1 << 66, MS, -10)
    z, d = mac(acc, x, y, pol)
    assert d.count == 1
    ev = d.events[0]
    exact = phi(acc) + phi(x) * phi(y)
    assert abs(phi(z) - exact) <= pow2(ev.exponent + ev.shift - 1) == d.total


def test_magnitude_interval_examples():
    iv = magnitude_interval(zero(MS))
    assert iv.lo == 0 and iv.hi == Fraction(MS.k * MS.composite, 1 << MS.frac_precision)
    ms = make_modulus_set([3, 5], 32)
    iv = magnitude_interval(HybridNumber(encode(7, ms), 0, 7))
    assert iv.lo <= 7 <= iv.hi
    assert iv.hi - iv.lo < Fraction(2 * 2 * 15, 1 << 32)


@settings(max_examples=300, deadline=None)
@given(st.integers(min_value=MS.lowest, max_value=MS.half))
def test_interval_contains(n):
    from hrfna.errors import AmbiguousSign

    try:
        iv = magnitude_interval(HybridNumber(encode(n, MS), 0, abs(n)))
    except AmbiguousSign:
        return
    assert iv.lo <= abs(n) <= iv.hi
    assert iv.hi - iv.lo <= Fraction(2 * MS.k * MS.composite, 1 << MS.frac_precision)


def test_needs_normalization_examples():
    assert not needs_normalization(zero(MS), POL)
    assert needs_normalization(HybridNumber(encode(1, MS), 0, POL.tau), POL)
    a = from_integer(POL.tau // 2, MS)
    z, _ = hybrid_add(a, a, POL)
    z, _ = hybrid_add(z, negate(a), POL)
    # true |N| is tau/2 but the tracker says 3*tau/2
    assert abs(crt_reconstruct(z.residues)) == POL.tau // 2 and needs_normalization(z, POL)


def test_normalize_examples():
    x = from_integer(12345, MS, -3)
    assert normalize(x, POL) == (x, EMPTY)
    ne = make_policy(MS35, tau=7, target_bits=0, fixed_shift=2)
    y, d = normalize(hn(7), ne)
    assert phi(y) == 8 and d.total == 2
    fl = make_policy(MS35, tau=7, target_bits=0, mode=RoundingMode.FLOOR_DIV, fixed_shift=2)
    y, d = normalize(hn(7), fl)
    assert phi(y) == 4 and 2 < 7 - phi(y) < d.total == 4


@settings(max_examples=300, deadline=None)
@given(
    st.integers(min_value=MS.lowest, max_value=MS.half),
    st.integers(min_value=-200, max_value=200),
    st.sampled_from(list(RoundingMode)),
)
def test_normalize_event_bound_and_headroom(n, f, mode):
    pol = make_policy(MS, mode=mode)
    x = HybridNumber(encode(n, MS), f, max(abs(n), 1))
    y, d = normalize(x, pol)
    assert y.bound < pol.tau
    assert abs(crt_reconstruct(y.residues)) <= y.bound
    err = abs(phi(x) - phi(y))
    if d.count:
        ev = d.events[0]
        unit = pow2(ev.exponent + ev.shift)
        assert err <= unit / 2 if mode is RoundingMode.NEAREST_EVEN else err < unit
    else:
        assert err == 0


def test_select_max_examples():
    assert select_max_magnitude([from_real(2.0, MS)])[0] == 0
    xs = [from_real(v, MS) for v in (1, -100, 3)]
    assert select_max_magnitude(xs)[0] == 1
    with pytest.raises(EmptyInput):
        select_max_magnitude([])


def test_select_well_separated_needs_no_reconstruction():
    # the estimate resolves |N| to about k * 2**-p * M = 2**35, so use
    # accumulator-sized mantissas
    rnd = random.Random(9)
    exps = rnd.sample(range(-60, 60), 64)
    xs = [from_integer(rnd.choice([-1, 1]) * rnd.randint(1 << 99, 1 << 100), MS, e) for e in exps]
    c = Counters()
    idx, _ = select_max_magnitude(xs, c)
    assert exps[idx] == max(exps)
    assert c.reconstructions == 0 and c.interval_evals == 64


def test_select_ties_resolve_exactly():
    xs = [from_real(v, MS) for v in (5, -5, 5.00001, 1)]
    idx, iv = select_max_magnitude(xs)
    assert idx == 2 and iv.exact
    xs = [from_real(v, MS) for v in (1, 5, -5)]
    assert select_max_magnitude(xs)[0] == 1


def test_record_round_trip_and_validation():
    x = from_real(-0.3, MS)
    assert from_record(to_record(x), MS) == x
    rec = to_record(x)
    with pytest.raises(HrfnaError):
        from_record({**rec, "bound": "1"}, MS)
    with pytest.raises(HrfnaError):
        from_record({"residues": ["1"]}, MS)


def test_policy_validation():
    with pytest.raises(ConfigError):
        make_policy(MS, tau=MS.composite // 2 + 1)
    with pytest.raises(ConfigError):
        make_policy(MS, tau=1 << 10, target_bits=10)
    assert POL.tau == MS.composite // 4 and POL.target_bits == 63


events = st.builds(
    BudgetEvent,
    st.integers(0, 100),
    st.sampled_from(["normalize", "sync"]),
    st.integers(0, 64),
    st.integers(-100, 100),
    st.fractions(min_value=0, max_value=10),
)
budgets = st.lists(events, max_size=5).map(lambda es: ErrorBudget.of(*es))


@settings(max_examples=200, deadline=None)
@given(budgets, budgets, budgets)
def test_budget_merge_is_a_commutative_monoid(a, b, c):
    assert a.merge(b).merge(c) == a.merge(b.merge(c))
    assert a.merge(b) == b.merge(a)
    assert a.merge(EMPTY) == a
    assert a.merge(b).consistent()


def test_determinism():
    def run():
        rnd = random.Random(11)
        acc = zero(MS)
        budget = EMPTY
        for _ in range(200):
            x = from_real(rnd.uniform(-1e6, 1e6), MS)
            acc, d = mac(acc, x, x, POL)
            budget = budget.merge(d)
            acc, d = multiply(acc, from_real(rnd.uniform(0.5, 1.5), MS), POL)
            budget = budget.merge(d)
        return acc, budget

    assert run() == run()


def test_tracker_soundness_on_small_set():
    from hrfna.checks import tracker_soundness

    res = tracker_soundness(200, 50)
    assert res.ok, res.detail
