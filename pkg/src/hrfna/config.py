"""Run configuration (INI text) and JSON-lines data files.

Big integers travel as decimal strings. Numbers in data files are either
decimals (``"0.375"``, ``"-3"``) or exact dyadics written ``"a*2^e"``.
"""
from __future__ import annotations

import configparser
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from .core import DEFAULT_FRAC_PRECISION, DEFAULT_MODULI, ModulusSet, RoundingMode, make_modulus_set
from .errors import ConfigError, HrfnaError
from .hybrid import NormalizationPolicy, default_target_bits
from .oracle import BfpConfig
from .workloads import DISTRIBUTIONS, fraction_str

# exact inverse of parse_number for dyadic values
format_number = fraction_str

DEFAULT_SEED = 20240601

DEFAULT_CONFIG = f"""\
[arithmetic]
moduli = {", ".join(str(m) for m in DEFAULT_MODULI)}
frac_precision = {DEFAULT_FRAC_PRECISION}
tau = M/4
target_bits = auto
rounding = nearest-even
check_every = 16
fixed_shift =

[run]
seed = {DEFAULT_SEED}
baselines = binary32, binary64, bfp

[dotprod]
lengths = 1024, 4096, 16384
long_lengths = 1024, 4096, 16384, 65536
distributions = uniform, loguniform
repeats = 4
x =
y =

[matmul]
sizes = 64, 128
distribution = uniform

[rk4]
rhs = logistic
y0 = 0.5
h = 1*2^-7
steps = 100000
long_steps = 1000000
checkpoint_every = 1024
oracle_bits = 256
lam =

[bfp]
block_size = 16
mantissa_bits = 24
acc_bits =
"""

_DYADIC = re.compile(r"^\s*([+-]?\d+)\s*\*\s*2\s*\^\s*([+-]?\d+)\s*$")


def parse_number(text: str) -> Fraction:
    """Exact value of ``"a*2^e"``, an integer, a decimal or ``"p/q"``."""
    if not isinstance(text, str):
        raise HrfnaError(f"expected a string, got {type(text).__name__}")
    m = _DYADIC.match(text)
    if m:
        a, e = int(m.group(1)), int(m.group(2))
        return Fraction(a) * Fraction(2) ** e
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise HrfnaError(f"cannot parse number {text!r}") from None


def _ints(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"{what}: expected integers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [t.strip() for t in text.replace(",", " ").split() if t.strip()]


@dataclass
class RunConfig:
    ms: ModulusSet
    policy: NormalizationPolicy
    seed: int = DEFAULT_SEED
    baselines: list[str] = field(default_factory=lambda: ["binary32", "binary64", "bfp"])
    dot_lengths: list[int] = field(default_factory=lambda: [1024, 4096, 16384])
    dot_long_lengths: list[int] = field(default_factory=lambda: [1024, 4096, 16384, 65536])
    dot_distributions: list[str] = field(default_factory=lambda: ["uniform", "loguniform"])
    dot_repeats: int = 4
    dot_x: str | None = None
    dot_y: str | None = None
    matmul_sizes: list[int] = field(default_factory=lambda: [64, 128])
    matmul_distribution: str = "uniform"
    rk4_rhs: str = "logistic"
    rk4_y0: Fraction = Fraction(1, 2)
    rk4_h: Fraction = Fraction(1, 128)
    rk4_steps: int = 100_000
    rk4_long_steps: int = 1_000_000
    rk4_checkpoint_every: int = 1024
    rk4_oracle_bits: int = 256
    rk4_params: dict = field(default_factory=dict)
    bfp: BfpConfig = field(default_factory=BfpConfig)
    echo: dict = field(default_factory=dict)


def load_config(path: str | Path | None = None, text: str | None = None) -> RunConfig:
    """Defaults overlaid with the file (or text); raises ConfigError."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.read_string(DEFAULT_CONFIG)
    try:
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh, source=str(path))
        if text is not None:
            cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    for section in cp.sections():
        known = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        known.read_string(DEFAULT_CONFIG)
        if not known.has_section(section):
            raise ConfigError(f"unknown config section [{section}]")
        extra = set(cp[section]) - set(known[section])
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(extra)}")
    try:
        return _build(cp)
    except ConfigError:
        raise
    except HrfnaError as exc:
        raise ConfigError(str(exc)) from None


def _build(cp: configparser.ConfigParser) -> RunConfig:
    ar = cp["arithmetic"]
    moduli = _ints(ar["moduli"], "moduli")
    try:
        frac = int(ar["frac_precision"])
    except ValueError:
        raise ConfigError("frac_precision must be an integer") from None
    ms = make_modulus_set(moduli, frac)

    tau_text = ar["tau"].strip().replace(" ", "")
    if tau_text.upper().startswith("M/"):
        try:
            tau = ms.composite // int(tau_text[2:])
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"bad tau {ar['tau']!r}") from None
    else:
        try:
            tau = int(tau_text)
        except ValueError:
            raise ConfigError(f"tau must be a decimal integer or M/<k>, got {ar['tau']!r}") from None
    tb = ar["target_bits"].strip().lower()
    try:
        target_bits = default_target_bits(ms) if tb in ("", "auto") else int(tb)
        check_every = int(ar["check_every"])
        fixed = int(ar["fixed_shift"]) if ar["fixed_shift"].strip() else None
    except ValueError as exc:
        raise ConfigError(f"[arithmetic]: {exc}") from None
    policy = NormalizationPolicy(
        tau=tau,
        target_bits=target_bits,
        mode=RoundingMode.parse(ar["rounding"]),
        check_every=check_every,
        fixed_shift=fixed,
    ).validate(ms)

    run = cp["run"]
    try:
        seed = int(run["seed"])
    except ValueError:
        raise ConfigError("seed must be an integer") from None

    dp = cp["dotprod"]
    dists = _names(dp["distributions"])
    for d in dists:
        if d not in DISTRIBUTIONS:
            raise ConfigError(f"unknown distribution {d!r}")
    mm = cp["matmul"]
    if mm["distribution"].strip() not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {mm['distribution']!r}")

    rk = cp["rk4"]
    params = {}
    if rk["lam"].strip():
        params["lam"] = parse_number(rk["lam"])
    bf = cp["bfp"]
    try:
        bfp = BfpConfig(
            block_size=int(bf["block_size"]),
            mantissa_bits=int(bf["mantissa_bits"]),
            acc_bits=int(bf["acc_bits"]) if bf["acc_bits"].strip() else None,
        )
        dot_repeats = int(dp["repeats"])
        steps = int(rk["steps"])
        long_steps = int(rk["long_steps"])
        every = int(rk["checkpoint_every"])
        oracle_bits = int(rk["oracle_bits"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(
        ms=ms,
        policy=policy,
        seed=seed,
        baselines=_names(run["baselines"]),
        dot_lengths=_ints(dp["lengths"], "lengths"),
        dot_long_lengths=_ints(dp["long_lengths"], "long_lengths"),
        dot_distributions=dists,
        dot_repeats=dot_repeats,
        dot_x=dp["x"].strip() or None,
        dot_y=dp["y"].strip() or None,
        matmul_sizes=_ints(mm["sizes"], "sizes"),
        matmul_distribution=mm["distribution"].strip(),
        rk4_rhs=rk["rhs"].strip(),
        rk4_y0=parse_number(rk["y0"]),
        rk4_h=parse_number(rk["h"]),
        rk4_steps=steps,
        rk4_long_steps=long_steps,
        rk4_checkpoint_every=every,
        rk4_oracle_bits=oracle_bits,
        rk4_params=params,
        bfp=bfp,
    )
    if bool(cfg.dot_x) != bool(cfg.dot_y):
        raise ConfigError("[dotprod] x and y must be given together")
    if cfg.dot_repeats < 1 or any(n < 1 for n in cfg.dot_lengths + cfg.dot_long_lengths + cfg.matmul_sizes):
        raise ConfigError("sizes and repeats must be positive")
    cfg.echo = {s: dict(cp[s]) for s in cp.sections()}
    cfg.echo["arithmetic"]["tau_value"] = str(tau)
    cfg.echo["arithmetic"]["target_bits_value"] = str(target_bits)
    return cfg


# ----------------------------------------------------------------------------
# JSON lines


def read_records(path: str | Path) -> Iterable[tuple[int, dict]]:
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise HrfnaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise HrfnaError(f"{path}:{lineno}: expected an object")
            yield lineno, rec


def read_values(path: str | Path) -> list[Fraction]:
    out = []
    for lineno, rec in read_records(path):
        if "v" not in rec:
            raise HrfnaError(f"{path}:{lineno}: missing key 'v'")
        try:
            out.append(parse_number(rec["v"]))
        except HrfnaError as exc:
            raise HrfnaError(f"{path}:{lineno}: {exc}") from None
    return out


def read_matrix(path: str | Path) -> list[list[Fraction]]:
    """Header ``{"rows": r, "cols": c}`` then ``r*c`` value records, row-major."""
    recs = list(read_records(path))
    if not recs or "rows" not in recs[0][1]:
        raise HrfnaError(f"{path}:1: matrix file needs a header with rows and cols")
    head = recs[0][1]
    try:
        rows, cols = int(head["rows"]), int(head["cols"])
    except (KeyError, TypeError, ValueError):
        raise HrfnaError(f"{path}:{recs[0][0]}: bad matrix header") from None
    body = recs[1:]
    if len(body) != rows * cols:
        raise HrfnaError(f"{path}: expected {rows * cols} values, found {len(body)}")
    vals = []
    for lineno, rec in body:
        try:
            vals.append(parse_number(rec["v"]))
        except (KeyError, HrfnaError) as exc:
            raise HrfnaError(f"{path}:{lineno}: {exc}") from None
    return [vals[i * cols : (i + 1) * cols] for i in range(rows)]


def write_lines(path: str | Path | None, records: Iterable[dict]) -> str:
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if path is not None:
        from .report import atomic_write

        atomic_write(path, text)
    return text
