"""Seeded inputs and the experiment drivers behind the CLI.

Random streams come from numpy's PCG64 seeded through ``SeedSequence`` with
the entropy ``[seed, distribution id, size, repeat, stream]``. The algorithm
and the derivation are part of the report contract: changing either changes
every generated input.

Distributions (both exact in binary32 and in 24-bit hybrid mantissas):

* ``uniform``: ``k / 2**23`` with ``k`` uniform on ``[-2**23, 2**23]``.
* ``loguniform``: ``+-2**u`` with ``u`` uniform on ``[-20, 20]``, rounded to
  binary32 (random sign).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import oracle
from .core import ModulusSet
from .errors import HrfnaError
from .hybrid import HybridNumber, NormalizationPolicy, from_real, max_input_bits, phi
from .kernels import OdeProblem, dot_product, matmul, rk4_integrate
from .telemetry import Counters, amortization_report

DISTRIBUTIONS = {"uniform": 0, "loguniform": 1}
INPUT_BITS = 24
UNIFORM_BITS = 23
LOG_RANGE = 20
STREAM_X, STREAM_Y = 0, 1


def rng_for(seed: int, dist: str, size: int, repeat: int = 0, stream: int = 0) -> np.random.Generator:
    if dist not in DISTRIBUTIONS:
        raise HrfnaError(f"unknown distribution {dist!r}; choose from {sorted(DISTRIBUTIONS)}")
    ss = np.random.SeedSequence([int(seed), DISTRIBUTIONS[dist], int(size), int(repeat), int(stream)])
    return np.random.Generator(np.random.PCG64(ss))


def sample(rng: np.random.Generator, dist: str, n: int) -> np.ndarray:
    """``n`` dyadic samples as float64 (every value is exact in binary32)."""
    if dist == "uniform":
        k = rng.integers(-(1 << UNIFORM_BITS), (1 << UNIFORM_BITS) + 1, size=n)
        return np.ldexp(k.astype(np.float64), -UNIFORM_BITS)
    if dist == "loguniform":
        u = rng.uniform(-LOG_RANGE, LOG_RANGE, size=n)
        sign = np.where(rng.integers(0, 2, size=n) == 1, 1.0, -1.0)
        return (sign * np.exp2(u)).astype(np.float32).astype(np.float64)
    raise HrfnaError(f"unknown distribution {dist!r}")


def vector_pair(seed: int, dist: str, n: int, repeat: int = 0) -> tuple[np.ndarray, np.ndarray]:
    x = sample(rng_for(seed, dist, n, repeat, STREAM_X), dist, n)
    y = sample(rng_for(seed, dist, n, repeat, STREAM_Y), dist, n)
    return x, y


def matrix_pair(seed: int, dist: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    a = sample(rng_for(seed, dist, n * n, 0, STREAM_X), dist, n * n).reshape(n, n)
    b = sample(rng_for(seed, dist, n * n, 0, STREAM_Y), dist, n * n).reshape(n, n)
    return a, b


def to_hybrid(values, ms: ModulusSet, bits: int = INPUT_BITS) -> list[HybridNumber]:
    bits = min(bits, max_input_bits(ms))
    return [from_real(float(v), ms, bits) for v in values]


def encoded_exactly(values, hs: Sequence[HybridNumber]) -> bool:
    return all(phi(h) == Fraction(float(v)) for v, h in zip(values, hs))


def fraction_str(v: Fraction) -> str:
    """Exact text form: an integer, or ``a*2^e`` for dyadic values."""
    v = Fraction(v)
    if v.denominator == 1:
        return str(v.numerator)
    d = v.denominator
    if d & (d - 1) == 0:
        return f"{v.numerator}*2^-{d.bit_length() - 1}"
    return f"{v.numerator}/{v.denominator}"


def budget_summary(budget) -> dict:
    return {
        "total": float(budget.total),
        "total_exact": fraction_str(budget.total),
        "events": budget.count,
    }


@dataclass
class Baselines:
    binary32: bool = True
    binary64: bool = True
    bfp: bool = True
    bfp_config: oracle.BfpConfig = field(default_factory=oracle.BfpConfig)

    @classmethod
    def parse(cls, names: Sequence[str], bfp_config: oracle.BfpConfig | None = None) -> "Baselines":
        known = {"binary32", "binary64", "bfp"}
        names = [n.strip().lower() for n in names if n.strip()]
        bad = [n for n in names if n not in known and n != "none"]
        if bad:
            raise HrfnaError(f"unknown baselines {bad}; choose from {sorted(known)} or none")
        return cls(
            binary32="binary32" in names,
            binary64="binary64" in names,
            bfp="bfp" in names,
            bfp_config=bfp_config or oracle.BfpConfig(),
        )


class _Timer:
    def __init__(self):
        self.times: dict[str, float] = {}

    def run(self, key, fn, *args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        self.times[key] = self.times.get(key, 0.0) + time.perf_counter() - t0
        return out


def _systems(baselines: Baselines) -> list[str]:
    out = ["hrfna"]
    for name in ("binary32", "binary64", "bfp"):
        if getattr(baselines, name):
            out.append(name)
    return out


# ----------------------------------------------------------------------------
# experiments


def run_dot_case(
    x: np.ndarray,
    y: np.ndarray,
    ms: ModulusSet,
    policy: NormalizationPolicy,
    baselines: Baselines,
    timer: _Timer | None = None,
) -> dict:
    """One dot product through every arithmetic system.

    Returns exact/approximate values (Fractions and floats), the hybrid
    budget and counters.
    """
    timer = timer or _Timer()
    hx, hy = to_hybrid(x, ms), to_hybrid(y, ms)
    if not (encoded_exactly(x, hx) and encoded_exactly(y, hy)):
        raise HrfnaError("inputs are not exactly representable with the configured moduli")
    exact = timer.run("oracle", oracle.exact_dot, [Fraction(float(v)) for v in x], [Fraction(float(v)) for v in y])
    res = timer.run("hrfna", dot_product, hx, hy, policy)
    out = {"exact": exact, "hrfna": res.result, "budget": res.budget, "counters": res.counters}
    if baselines.binary64:
        out["binary64"] = Fraction(timer.run("binary64", oracle.float_dot, x, y, "binary64"))
    if baselines.binary32:
        out["binary32"] = Fraction(timer.run("binary32", oracle.float_dot, x, y, "binary32"))
    if baselines.bfp:
        out["bfp"] = timer.run("bfp", oracle.bfp_dot, x, y, baselines.bfp_config)
    return out


def _metrics_rows(samples: dict, systems: list[str], exact_key: str = "exact") -> list[dict]:
    rows = []
    for sysname in systems:
        m = oracle.rms_error(samples[sysname], samples[exact_key])
        rows.append({"system": sysname, "oracle": exact_key, **m.as_dict()})
    return rows


def dot_experiment(
    ms: ModulusSet,
    policy: NormalizationPolicy,
    *,
    lengths: Sequence[int],
    distributions: Sequence[str],
    repeats: int,
    seed: int,
    baselines: Baselines,
) -> tuple[list[dict], dict]:
    """Seeded dot products; one entry per (distribution, length)."""
    timer = _Timer()
    systems = _systems(baselines)
    entries = []
    for dist in distributions:
        for n in lengths:
            samples: dict[str, list] = {k: [] for k in systems + ["exact"]}
            counters = Counters()
            budgets = []
            dominance = True
            for r in range(repeats):
                x, y = vector_pair(seed, dist, n, r)
                case = run_dot_case(x, y, ms, policy, baselines, timer)
                for k in samples:
                    samples[k].append(case[k])
                counters = counters.merge(case["counters"])
                budgets.append(case["budget"])
                dominance &= abs(case["hrfna"] - case["exact"]) <= case["budget"].total
            rows = _metrics_rows(samples, systems)
            if baselines.binary64:
                m = oracle.rms_error(samples["hrfna"], samples["binary64"])
                rows.append({"system": "hrfna", "oracle": "binary64", **m.as_dict()})
            budget_rms = oracle.rms_error([b.total for b in budgets], [0] * len(budgets)).rms
            ref_rms = oracle.rms_error(samples["exact"], [0] * len(budgets)).rms
            entries.append(
                {
                    "workload": "dotprod",
                    "distribution": dist,
                    "n": n,
                    "repeats": repeats,
                    "metrics": rows,
                    "budget_total": float(sum(b.total for b in budgets)),
                    "budget_nrms": budget_rms / ref_rms if ref_rms else budget_rms,
                    "budget_events": sum(b.count for b in budgets),
                    "budget_dominance": bool(dominance),
                    "counters": counters.as_dict(),
                    "amortization": amortization_report(counters),
                }
            )
    return entries, timer.times


def dot_from_values(
    x: Sequence[Fraction], y: Sequence[Fraction], ms: ModulusSet, policy: NormalizationPolicy, baselines: Baselines
) -> tuple[list[dict], dict]:
    """Dot product of user-supplied vectors (exact dyadic values)."""
    from .kernels import from_dyadic

    timer = _Timer()
    hx = [from_dyadic(v, ms) for v in x]
    hy = [from_dyadic(v, ms) for v in y]
    exact = timer.run("oracle", oracle.exact_dot, x, y)
    res = timer.run("hrfna", dot_product, hx, hy, policy)
    samples = {"exact": [exact], "hrfna": [res.result]}
    systems = ["hrfna"]
    fx = np.array([float(v) for v in x])
    fy = np.array([float(v) for v in y])
    if baselines.binary64:
        samples["binary64"] = [Fraction(oracle.float_dot(fx, fy, "binary64"))]
        systems.append("binary64")
    if baselines.binary32:
        samples["binary32"] = [Fraction(oracle.float_dot(fx, fy, "binary32"))]
        systems.append("binary32")
    if baselines.bfp:
        samples["bfp"] = [oracle.bfp_dot(fx, fy, baselines.bfp_config)]
        systems.append("bfp")
    entry = {
        "workload": "dotprod",
        "distribution": "file",
        "n": len(x),
        "repeats": 1,
        "exact": fraction_str(exact),
        "result": fraction_str(res.result),
        "metrics": _metrics_rows(samples, systems),
        "budget_total": float(res.budget.total),
        "budget_events": res.budget.count,
        "budget_dominance": abs(res.result - exact) <= res.budget.total,
        "counters": res.counters.as_dict(),
        "amortization": amortization_report(res.counters),
    }
    return [entry], timer.times


def matmul_case(
    a, b, ms: ModulusSet, policy: NormalizationPolicy, baselines: Baselines, timer: _Timer, workers=None
) -> dict:
    ha = [to_hybrid(row, ms) for row in a]
    hb = [to_hybrid(row, ms) for row in b]
    fa = [[Fraction(float(v)) for v in row] for row in a]
    fb = [[Fraction(float(v)) for v in row] for row in b]
    exact = timer.run("oracle", oracle.exact_matmul, fa, fb)
    res = timer.run("hrfna", matmul, ha, hb, policy, workers=workers)
    flat = lambda m: [v for row in m for v in row]  # noqa: E731
    samples = {"exact": flat(exact), "hrfna": flat(res.result)}
    if baselines.binary64:
        samples["binary64"] = [Fraction(float(v)) for v in flat(timer.run("binary64", oracle.float_matmul, a, b, "binary64"))]
    if baselines.binary32:
        samples["binary32"] = [Fraction(float(v)) for v in flat(timer.run("binary32", oracle.float_matmul, a, b, "binary32"))]
    if baselines.bfp:
        samples["bfp"] = flat(timer.run("bfp", oracle.bfp_matmul, a, b, baselines.bfp_config))
    return {"samples": samples, "result": res, "budgets": flat(res.element_budgets)}


def matmul_experiment(
    ms: ModulusSet,
    policy: NormalizationPolicy,
    *,
    sizes: Sequence[int],
    distribution: str,
    seed: int,
    baselines: Baselines,
    workers: int | None = None,
) -> tuple[list[dict], dict]:
    timer = _Timer()
    systems = _systems(baselines)
    entries = []
    for n in sizes:
        a, b = matrix_pair(seed, distribution, n)
        case = matmul_case(a, b, ms, policy, baselines, timer, workers)
        samples, res, budgets = case["samples"], case["result"], case["budgets"]
        exact = samples["exact"]
        dominance = all(abs(h - e) <= bud for h, e, bud in zip(samples["hrfna"], exact, budgets))
        rows = _metrics_rows(samples, systems)
        if baselines.binary64:
            m = oracle.rms_error(samples["hrfna"], samples["binary64"])
            rows.append({"system": "hrfna", "oracle": "binary64", **m.as_dict()})
        zeros_ = [0] * len(exact)
        ref_rms = oracle.rms_error(exact, zeros_).rms
        budget_rms = oracle.rms_error(budgets, zeros_).rms
        entries.append(
            {
                "workload": "matmul",
                "distribution": distribution,
                "n": n,
                "metrics": rows,
                "budget_total": float(res.budget.total),
                "budget_max_element": float(max(budgets)),
                "budget_nrms": budget_rms / ref_rms if ref_rms else budget_rms,
                "budget_events": res.budget.count,
                "budget_dominance": bool(dominance),
                "counters": res.counters.as_dict(),
                "amortization": amortization_report(res.counters),
            }
        )
    return entries, timer.times


def rk4_experiment(
    ms: ModulusSet,
    policy: NormalizationPolicy,
    prob: OdeProblem,
    *,
    oracle_bits: int = 256,
    check_bits: int | None = None,
) -> tuple[list[dict], dict]:
    """RK4 against a high-precision reference of the same scheme.

    The reference's own error is bounded by ``2**-(oracle_bits - 56)``
    relative (a generous allowance for rounding over the horizon); this
    slack is added to the budget in the dominance check and reported.
    """
    timer = _Timer()
    ref = timer.run(
        "oracle",
        oracle.highprec_rk4,
        prob.rhs,
        prob.y0,
        prob.h,
        prob.steps,
        params=prob.params,
        prec_bits=oracle_bits,
        checkpoint_every=prob.checkpoint_every,
    )
    res = timer.run("hrfna", rk4_integrate, prob, policy, ms, reference=ref)
    slack_rel = Fraction(1, 1 << (oracle_bits - 56))
    points = []
    dominance = True
    for cp in res.checkpoints:
        slack = slack_rel * max(abs(ref[cp.step]), 1)
        ok = cp.error <= cp.budget + slack
        dominance &= ok
        points.append(
            {
                "step": cp.step,
                "value": float(cp.value),
                "reference": float(ref[cp.step]),
                "error": float(cp.error),
                "budget": float(cp.budget),
                "dominated": bool(ok),
            }
        )
    entry = {
        "workload": "rk4",
        "rhs": prob.rhs,
        "y0": fraction_str(prob.y0),
        "h": fraction_str(prob.h),
        "steps": prob.steps,
        "checkpoint_every": prob.checkpoint_every,
        "oracle": f"rk4-{oracle_bits}bit",
        "oracle_slack_rel": float(slack_rel),
        "final_value": fraction_str(res.result),
        "max_error": max(p["error"] for p in points),
        "final_budget": float(res.budget.total),
        "budget_events": res.budget.count,
        "budget_dominance": bool(dominance),
        "checkpoints": points,
        "counters": res.counters.as_dict(),
        "amortization": amortization_report(res.counters),
    }
    if check_bits:
        ref2 = timer.run(
            "oracle_check",
            oracle.highprec_rk4,
            prob.rhs,
            prob.y0,
            prob.h,
            prob.steps,
            params=prob.params,
            prec_bits=check_bits,
            checkpoint_every=prob.checkpoint_every,
        )
        entry["oracle_agreement_bits"] = min(oracle.agreement_bits(ref[k], ref2[k]) for k in ref)
    return [entry], timer.times
