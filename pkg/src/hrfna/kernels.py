"""Composite workloads built from hybrid primitives.

* :func:`dot_product` follows the exponent-coherent accumulation loop:
  one MAC per element, threshold checks every ``policy.check_every``
  elements, a single reconstruction at the end.
* :func:`matmul` runs one such dot product per output element. Rows may be
  spread across worker processes (``HRFNA_THREADS``); the per-element
  arithmetic order never changes, so results do not depend on the worker
  count.
* :func:`rk4_integrate` is classical fixed-step RK4 on a small catalog of
  scalar right-hand sides that need only add and multiply.
"""
from __future__ import annotations

import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

from .core import ModulusSet, crt_reconstruct, zeros
from .errors import DimensionMismatch, HrfnaError, LengthMismatch, NonDyadicStep, UnsupportedRhs
from .hybrid import (
    EMPTY,
    BudgetEvent,
    BudgetTally,
    ErrorBudget,
    HybridNumber,
    NormalizationPolicy,
    add,
    audit,
    from_real,
    mac,
    multiply,
    needs_normalization,
    negate,
    normalize,
    phi,
    zero,
)
from .telemetry import Counters


@dataclass
class KernelResult:
    """Output of a kernel run.

    ``value`` holds the hybrid result (a number, a matrix of numbers, or the
    final ODE state); ``result`` its exact value from the final
    reconstruction. For matmul ``element_budgets[i][j]`` is the error budget
    of output ``(i, j)``.
    """

    value: Any
    result: Any
    budget: ErrorBudget
    counters: Counters
    element_budgets: list | None = None
    checkpoints: list | None = None


def _checked(acc: HybridNumber, policy: NormalizationPolicy, counters: Counters):
    # tracker first, interval audit second, normalization last
    if not needs_normalization(acc, policy):
        return acc, EMPTY
    acc = audit(acc, counters)
    if not needs_normalization(acc, policy):
        return acc, EMPTY
    return normalize(acc, policy, counters)


def dot_product(
    xs: Sequence[HybridNumber],
    ys: Sequence[HybridNumber],
    policy: NormalizationPolicy,
    *,
    log_limit: int | None = 100_000,
) -> KernelResult:
    if len(xs) != len(ys):
        raise LengthMismatch(f"vector lengths {len(xs)} and {len(ys)} differ")
    if not xs:
        raise LengthMismatch("dot product needs at least one element")
    counters = Counters()
    tally = BudgetTally(log_limit)
    every = policy.check_every
    first_x, first_y = xs[0], ys[0]
    # zero accumulator whose exponent matches the first product
    acc = HybridNumber(zeros(first_x.ms), first_x.exponent + first_y.exponent, 0)
    for j in range(len(xs)):
        acc, delta = mac(acc, xs[j], ys[j], policy, counters, check=False)
        tally.add(delta)
        if (j + 1) % every == 0:
            acc, delta = _checked(acc, policy, counters)
            tally.add(delta)
    acc, delta = _checked(acc, policy, counters)
    tally.add(delta)
    if acc.bound == 0:
        acc = zero(acc.ms)
    value = phi(acc)
    counters.record("reconstructions")
    return KernelResult(acc, value, tally.freeze(), counters)


def worker_count() -> int:
    env = os.environ.get("HRFNA_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise HrfnaError(f"HRFNA_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise HrfnaError("HRFNA_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1


def _rows(rows, cols, policy):
    out = []
    for row in rows:
        line = []
        for col in cols:
            r = dot_product(row, col, policy)
            line.append((r.value, r.result, r.budget, r.counters))
        out.append(line)
    return out


def matmul(
    a: Sequence[Sequence[HybridNumber]],
    b: Sequence[Sequence[HybridNumber]],
    policy: NormalizationPolicy,
    *,
    workers: int | None = None,
) -> KernelResult:
    if not a or not b:
        raise DimensionMismatch("empty matrix")
    inner = len(a[0])
    if any(len(r) != inner for r in a) or any(len(r) != len(b[0]) for r in b):
        raise DimensionMismatch("ragged matrix")
    if inner != len(b):
        raise DimensionMismatch(f"inner dimensions {inner} and {len(b)} differ")
    cols = [[b[k][j] for k in range(inner)] for j in range(len(b[0]))]
    workers = worker_count() if workers is None else workers
    workers = max(1, min(workers, len(a)))
    if workers == 1:
        lines = _rows(a, cols, policy)
    else:
        step = -(-len(a) // workers)
        chunks = [a[i : i + step] for i in range(0, len(a), step)]
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(_rows, chunks, [cols] * len(chunks), [policy] * len(chunks)))
        lines = [line for part in parts for line in part]

    counters = Counters()
    tally = BudgetTally()
    values, results, budgets = [], [], []
    for line in lines:
        values.append([v for v, _, _, _ in line])
        results.append([r for _, r, _, _ in line])
        budgets.append([bud.total for _, _, bud, _ in line])
        for _, _, bud, c in line:
            tally.add(bud)
            counters = counters.merge(c)
    return KernelResult(values, results, tally.freeze(), counters, element_budgets=budgets)


# ----------------------------------------------------------------------------
# RK4

CATALOG = {
    "zero": (),
    "linear_decay": ("lam",),
    "logistic": (),
    "cubic_damping": (),
}


def _is_dyadic(v: Fraction) -> bool:
    d = v.denominator
    return d & (d - 1) == 0


@dataclass
class OdeProblem:
    rhs: str
    y0: Fraction
    h: Fraction
    steps: int
    params: Mapping[str, Fraction] = field(default_factory=dict)
    checkpoint_every: int = 1024

    def __post_init__(self):
        self.y0 = Fraction(self.y0)
        self.h = Fraction(self.h)
        self.params = {k: Fraction(v) for k, v in self.params.items()}
        if self.rhs not in CATALOG:
            raise UnsupportedRhs(f"unknown right-hand side {self.rhs!r}; choose from {sorted(CATALOG)}")
        missing = [p for p in CATALOG[self.rhs] if p not in self.params]
        if missing:
            raise UnsupportedRhs(f"{self.rhs} needs parameters {missing}")
        if self.h <= 0:
            raise HrfnaError("step size must be positive")
        if not _is_dyadic(self.h):
            raise NonDyadicStep(f"step size {self.h} is not a dyadic rational")
        if self.steps < 1:
            raise HrfnaError("need at least one step")
        if self.checkpoint_every < 1:
            raise HrfnaError("checkpoint_every must be positive")


@dataclass(frozen=True)
class Checkpoint:
    step: int
    value: Fraction
    budget: Fraction
    error: Fraction | None = None


def from_dyadic(v: Fraction, ms: ModulusSet) -> HybridNumber:
    """Exact encoding of a dyadic rational with the shortest mantissa."""
    v = Fraction(v)
    if not _is_dyadic(v):
        raise NonDyadicStep(f"{v} is not dyadic")
    n = v.numerator
    f = -(v.denominator.bit_length() - 1)
    if n == 0:
        return zero(ms)
    while n % 2 == 0:
        n //= 2
        f += 1
    return from_real(v, ms, max(1, abs(n).bit_length()))


class _Constant:
    """A constant encoded once; non-dyadic values carry a representation error."""

    def __init__(self, v: Fraction, ms: ModulusSet, bits: int):
        v = Fraction(v)
        if _is_dyadic(v) and (v == 0 or abs(v.numerator).bit_length() <= bits):
            self.value = from_dyadic(v, ms)
        else:
            self.value = from_real(v, ms, bits)
        self.error = abs(phi(self.value) - v)

    def times(self, x, policy, counters):
        """``self * x``, charging the representation error times ``|x|``."""
        z, budget = multiply(self.value, x, policy, counters)
        if self.error:
            counters.record("coeff_charges")
            charge = self.error * x.magnitude_bound()
            event = BudgetEvent(counters.total_ops(), "coefficient", 0, x.exponent, charge)
            budget = budget.merge(ErrorBudget.of(event))
        return z, budget


def _rhs(prob: OdeProblem, consts: dict, y: HybridNumber, policy, counters):
    """k = f(y) for the catalog entry; returns (k, budget)."""
    name = prob.rhs
    if name == "zero":
        return zero(y.ms), EMPTY
    if name == "linear_decay":
        return consts["neg_lam"].times(y, policy, counters)
    if name == "logistic":
        one_minus, b1 = add(consts["one"], negate(y), policy, counters)
        k, b2 = multiply(y, one_minus, policy, counters)
        return k, b1.merge(b2)
    if name == "cubic_damping":
        sq, b1 = multiply(y, y, policy, counters)
        cube, b2 = multiply(sq, y, policy, counters)
        k, b3 = add(y, negate(cube), policy, counters)
        return k, b1.merge(b2).merge(b3)
    raise UnsupportedRhs(name)


def rk4_integrate(
    prob: OdeProblem,
    policy: NormalizationPolicy,
    ms: ModulusSet,
    *,
    reference: Mapping[int, Fraction] | None = None,
    log_limit: int = 4096,
) -> KernelResult:
    """Classical RK4; checkpoints every ``prob.checkpoint_every`` steps.

    The step size is exact. The h/6 weight is rounded once to
    ``policy.target_bits`` bits and its representation error is charged at
    every use. With ``reference`` (step -> oracle value) each checkpoint
    also records ``|y - reference|``.
    """
    counters = Counters()
    tally = BudgetTally(log_limit)
    bits = policy.target_bits
    h = from_dyadic(prob.h, ms)
    half_h = from_dyadic(prob.h / 2, ms)
    h_sixth = _Constant(prob.h / 6, ms, bits)
    consts = {"one": from_dyadic(Fraction(1), ms)}
    if prob.rhs == "linear_decay":
        consts["neg_lam"] = _Constant(-prob.params["lam"], ms, bits)

    y = from_real(prob.y0, ms, bits) if not _is_dyadic(prob.y0) else from_dyadic(prob.y0, ms)
    y0_err = abs(phi(y) - prob.y0)
    if y0_err:
        counters.record("coeff_charges")
        tally.add(ErrorBudget.of(BudgetEvent(0, "coefficient", 0, y.exponent, y0_err)))

    checkpoints = []

    def snapshot(step):
        value = phi(y)
        counters.record("reconstructions")
        err = None
        if reference is not None and step in reference:
            err = abs(value - Fraction(reference[step]))
        checkpoints.append(Checkpoint(step, value, tally.total, err))

    snapshot(0)
    for step in range(1, prob.steps + 1):
        k1, d = _rhs(prob, consts, y, policy, counters)
        tally.add(d)
        t, d = multiply(half_h, k1, policy, counters)
        tally.add(d)
        y2, d = add(y, t, policy, counters)
        tally.add(d)
        k2, d = _rhs(prob, consts, y2, policy, counters)
        tally.add(d)
        t, d = multiply(half_h, k2, policy, counters)
        tally.add(d)
        y3, d = add(y, t, policy, counters)
        tally.add(d)
        k3, d = _rhs(prob, consts, y3, policy, counters)
        tally.add(d)
        t, d = multiply(h, k3, policy, counters)
        tally.add(d)
        y4, d = add(y, t, policy, counters)
        tally.add(d)
        k4, d = _rhs(prob, consts, y4, policy, counters)
        tally.add(d)

        s = k1
        for term in (k2, k2, k3, k3, k4):
            s, d = add(s, term, policy, counters)
            tally.add(d)
        incr, d = h_sixth.times(s, policy, counters)
        tally.add(d)
        y, d = add(y, incr, policy, counters)
        tally.add(d)
        if step % prob.checkpoint_every == 0 or step == prob.steps:
            snapshot(step)

    return KernelResult(y, checkpoints[-1].value, tally.freeze(), counters, checkpoints=checkpoints)
