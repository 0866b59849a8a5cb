import random
from fractions import Fraction

import numpy as np
import pytest

from hrfna import oracle
from hrfna.core import RoundingMode, default_modulus_set
from hrfna.errors import DimensionMismatch, LengthMismatch, NonDyadicStep, UnsupportedRhs
from hrfna.hybrid import from_integer, from_real, make_policy, phi
from hrfna.kernels import OdeProblem, dot_product, from_dyadic, matmul, rk4_integrate
from hrfna.workloads import to_hybrid, vector_pair

MS = default_modulus_set()
POL = make_policy(MS)


def test_dot_single_element():
    one = from_real(1.0, MS)
    r = dot_product([one], [one], POL)
    assert r.result == 1 and r.counters.normalizations == 0 and r.budget.count == 0
    assert r.counters.reconstructions == 1


def test_dot_errors():
    with pytest.raises(LengthMismatch):
        dot_product([from_real(1.0, MS)], [], POL)
    with pytest.raises(LengthMismatch):
        dot_product([], [], POL)


def test_dot_1000_uniform_is_exact():
    x, y = vector_pair(5, "uniform", 1000)
    r = dot_product(to_hybrid(x, MS), to_hybrid(y, MS), POL)
    exact = oracle.exact_dot([Fraction(v) for v in x], [Fraction(v) for v in y])
    assert r.result == exact and r.budget.total == 0
    assert abs(float(r.result) - oracle.float_dot(x, y)) < 1e-6


def test_dot_cancellation_within_budget():
    a = from_real(12345.678, MS)
    xs = [a if i % 2 == 0 else from_real(-12345.678, MS) for i in range(1001)]
    ys = [from_real(1.0, MS)] * 1001
    r = dot_product(xs, ys, POL)
    assert abs(r.result - phi(a)) <= r.budget.total


@pytest.mark.parametrize("mode", list(RoundingMode))
def test_dot_forced_normalizations_within_budget(mode):
    pol = make_policy(MS, tau=1 << 50, target_bits=24, mode=mode, check_every=4)
    rnd = random.Random(1)
    xs = [Fraction(rnd.randint(-(1 << 23), 1 << 23), 1 << rnd.randint(0, 30)) for _ in range(500)]
    ys = [Fraction(rnd.randint(-(1 << 23), 1 << 23), 1 << rnd.randint(0, 30)) for _ in range(500)]
    r = dot_product([from_real(v, MS) for v in xs], [from_real(v, MS) for v in ys], pol)
    assert r.counters.normalizations > 0
    assert abs(r.result - oracle.exact_dot(xs, ys)) <= r.budget.total
    # one budget event per normalization or lossy sync
    assert r.budget.count == r.counters.normalizations + r.counters.syncs_lossy
    assert r.budget.consistent()


def test_matmul_identity_and_integers():
    rnd = random.Random(2)
    a = [[from_real(Fraction(rnd.randint(-99, 99), 8), MS) for _ in range(5)] for _ in range(5)]
    eye = [[from_integer(int(i == j), MS) for j in range(5)] for i in range(5)]
    r = matmul(a, eye, POL, workers=1)
    assert [[phi(v) for v in row] for row in r.value] == [[phi(v) for v in row] for row in a]

    ia = [[rnd.randint(-50, 50) for _ in range(4)] for _ in range(4)]
    ib = [[rnd.randint(-50, 50) for _ in range(4)] for _ in range(4)]
    r = matmul([[from_integer(v, MS) for v in row] for row in ia], [[from_integer(v, MS) for v in row] for row in ib], POL)
    assert r.result == (np.array(ia) @ np.array(ib)).tolist()
    assert r.counters.normalizations == 0


def test_matmul_shapes():
    one = from_integer(1, MS)
    with pytest.raises(DimensionMismatch):
        matmul([[one, one]], [[one, one]], POL)
    with pytest.raises(DimensionMismatch):
        matmul([], [[one]], POL)


def test_matmul_parallel_matches_sequential():
    rnd = np.random.default_rng(4)
    a = np.exp2(rnd.uniform(-20, 20, (6, 7))).astype(np.float32) * rnd.choice([-1, 1], (6, 7))
    b = np.exp2(rnd.uniform(-20, 20, (7, 5))).astype(np.float32) * rnd.choice([-1, 1], (7, 5))
    ha = [to_hybrid(r, MS) for r in a]
    hb = [to_hybrid(r, MS) for r in b]
    seq = matmul(ha, hb, POL, workers=1)
    par = matmul(ha, hb, POL, workers=3)
    assert seq.value == par.value and seq.budget == par.budget and seq.counters == par.counters
    assert seq.element_budgets == par.element_budgets


def test_worker_count_env(monkeypatch):
    from hrfna.errors import HrfnaError
    from hrfna.kernels import worker_count

    monkeypatch.setenv("HRFNA_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("HRFNA_THREADS", "0")
    with pytest.raises(HrfnaError):
        worker_count()


def test_from_dyadic():
    assert phi(from_dyadic(Fraction(-3, 1024), MS)) == Fraction(-3, 1024)
    assert from_dyadic(Fraction(8), MS).exponent == 3
    with pytest.raises(NonDyadicStep):
        from_dyadic(Fraction(1, 3), MS)


def test_ode_problem_validation():
    with pytest.raises(NonDyadicStep):
        OdeProblem("logistic", 0.5, Fraction(1, 10), 10)
    with pytest.raises(UnsupportedRhs):
        OdeProblem("sine", 0.5, Fraction(1, 8), 10)
    with pytest.raises(UnsupportedRhs):
        OdeProblem("linear_decay", 0.5, Fraction(1, 8), 10)


def test_rk4_zero_rhs_is_constant_and_exact():
    r = rk4_integrate(OdeProblem("zero", Fraction(3, 8), Fraction(1, 4), 50, checkpoint_every=10), POL, MS)
    assert all(cp.value == Fraction(3, 8) for cp in r.checkpoints)
    assert r.budget.total == 0


@pytest.mark.parametrize(
    "rhs,params,y0",
    [("logistic", {}, Fraction(1, 2)), ("linear_decay", {"lam": Fraction(3, 2)}, Fraction(1)), ("cubic_damping", {}, Fraction(1, 4))],
)
def test_rk4_budget_dominance(rhs, params, y0):
    prob = OdeProblem(rhs, y0, Fraction(1, 128), 600, params=params, checkpoint_every=128)
    ref = oracle.highprec_rk4(rhs, y0, prob.h, prob.steps, params=params, checkpoint_every=128)
    r = rk4_integrate(prob, POL, MS, reference=ref)
    assert [cp.step for cp in r.checkpoints] == [0, 128, 256, 384, 512, 600]
    for cp in r.checkpoints:
        assert cp.error <= cp.budget + Fraction(1, 1 << 200)
    assert r.counters.coeff_charges >= prob.steps
    c = r.counters
    assert r.budget.count == c.normalizations + c.syncs_lossy + c.coeff_charges


def test_rk4_logistic_10k_steps_tracks_oracle():
    prob = OdeProblem("logistic", Fraction(1, 2), Fraction(1, 128), 10_000, checkpoint_every=1024)
    ref = oracle.highprec_rk4("logistic", prob.y0, prob.h, prob.steps, checkpoint_every=1024)
    r = rk4_integrate(prob, POL, MS, reference=ref)
    rel = max(cp.error / ref[cp.step] for cp in r.checkpoints)
    assert rel <= max(cp.budget for cp in r.checkpoints)
    assert rel < Fraction(1, 1 << 50)
