"""``hrfna`` command line.

Subcommands: dotprod, matmul, rk4, convert, selftest, bench. Exit codes:
0 success, 1 selftest failure, 2 bad configuration or arguments, 3 I/O
error, 4 kernel error. Errors are also written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

from . import checks, report
from .config import RunConfig, format_number, load_config, parse_number, read_records, read_values, write_lines
from .errors import ConfigError, HrfnaError
from .hybrid import from_real, from_record, max_input_bits, phi, to_record
from .kernels import OdeProblem, from_dyadic, worker_count
from .workloads import Baselines, dot_experiment, dot_from_values, matmul_experiment, rk4_experiment

EXIT_OK, EXIT_SELFTEST, EXIT_CONFIG, EXIT_IO, EXIT_KERNEL = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hrfna", description="Hybrid residue/floating arithmetic benchmarks")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults are built in)")
    common.add_argument("--seed", type=int, help="override [run] seed")
    common.add_argument("--out", help="report path; writes PATH.json, PATH.txt and PATH.csv")
    common.add_argument("--long", action="store_true", help="64k dot products and the long RK4 horizon")
    common.add_argument("--baselines", help="comma list of binary32, binary64, bfp (or none)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (
        ("dotprod", "seeded dot products (or [dotprod] x/y files)"),
        ("matmul", "seeded square matrix products"),
        ("rk4", "RK4 against a high-precision reference"),
        ("selftest", "run the invariant suites at reduced size"),
        ("bench", "dotprod, matmul and rk4 in one report"),
    ):
        sub.add_parser(name, parents=[common], help=text)
    conv = sub.add_parser("convert", parents=[common], help="JSONL numbers <-> hybrid records")
    conv.add_argument("input", help="JSONL input file")
    conv.add_argument(
        "--direction",
        choices=("to-hybrid", "to-decimal"),
        default="to-hybrid",
        help="to-hybrid reads {'v': ...} records; to-decimal reads hybrid records",
    )
    return p


def _emit_error(code: int, kind: str, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}) + "\n")
    return code


def _setup(args) -> tuple[RunConfig, Baselines]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.echo["run"]["seed"] = str(args.seed)
    names = cfg.baselines
    if args.baselines is not None:
        names = [n for n in args.baselines.split(",")]
        cfg.echo["run"]["baselines"] = args.baselines
    try:
        baselines = Baselines.parse(names, cfg.bfp)
    except HrfnaError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, baselines


def _dot(cfg: RunConfig, baselines: Baselines, long: bool):
    if cfg.dot_x:
        x, y = read_values(cfg.dot_x), read_values(cfg.dot_y)
        if len(x) != len(y):
            raise HrfnaError(f"vector files hold {len(x)} and {len(y)} values")
        return dot_from_values(x, y, cfg.ms, cfg.policy, baselines)
    return dot_experiment(
        cfg.ms,
        cfg.policy,
        lengths=cfg.dot_long_lengths if long else cfg.dot_lengths,
        distributions=cfg.dot_distributions,
        repeats=cfg.dot_repeats,
        seed=cfg.seed,
        baselines=baselines,
    )


def _matmul(cfg: RunConfig, baselines: Baselines, long: bool):
    return matmul_experiment(
        cfg.ms,
        cfg.policy,
        sizes=cfg.matmul_sizes,
        distribution=cfg.matmul_distribution,
        seed=cfg.seed,
        baselines=baselines,
        workers=worker_count(),
    )


def _rk4(cfg: RunConfig, baselines: Baselines, long: bool):
    prob = OdeProblem(
        cfg.rk4_rhs,
        cfg.rk4_y0,
        cfg.rk4_h,
        cfg.rk4_long_steps if long else cfg.rk4_steps,
        params=cfg.rk4_params,
        checkpoint_every=cfg.rk4_checkpoint_every,
    )
    return rk4_experiment(cfg.ms, cfg.policy, prob, oracle_bits=cfg.rk4_oracle_bits)


def _finish(command: str, cfg: RunConfig, entries, timing, args, extra=None) -> dict:
    rep = report.make_report(command, cfg.echo, cfg.seed, entries, timing, extra)
    if args.out:
        report.write_report(rep, args.out)
    sys.stdout.write(report.to_text(rep))
    return rep


def _run_workloads(command: str, args) -> int:
    cfg, baselines = _setup(args)
    t0 = time.perf_counter()
    runners = {"dotprod": (_dot,), "matmul": (_matmul,), "rk4": (_rk4,), "bench": (_dot, _matmul, _rk4)}[command]
    entries, timing = [], {}
    for fn in runners:
        e, t = fn(cfg, baselines, args.long)
        entries.extend(e)
        for k, v in t.items():
            timing[f"{fn.__name__.strip('_')}.{k}"] = v
    timing["wall_seconds"] = time.perf_counter() - t0
    timing["workers"] = worker_count()
    _finish(command, cfg, entries, timing, args, {"long": bool(args.long)})
    return EXIT_OK


def _selftest(args) -> int:
    cfg, _ = _setup(args)
    t0 = time.perf_counter()
    results = checks.run_all(cfg.ms, cfg.policy.mode, scale=1.0)
    rep = report.make_report(
        "selftest",
        cfg.echo,
        cfg.seed,
        [],
        {"wall_seconds": time.perf_counter() - t0},
        {"selftest": {r.name: r.as_dict() for r in results}},
    )
    if args.out:
        report.write_report(rep, args.out)
    sys.stdout.write(report.to_text(rep))
    return EXIT_OK if all(r.ok for r in results) else EXIT_SELFTEST


def _convert(args) -> int:
    cfg, _ = _setup(args)
    out = []
    if args.direction == "to-hybrid":
        bits = max_input_bits(cfg.ms)
        for lineno, rec in read_records(args.input):
            try:
                v = parse_number(rec["v"]) if "v" in rec else None
                if v is None:
                    raise HrfnaError("missing key 'v'")
                # dyadic values are encoded exactly, anything else is rounded
                d = v.denominator
                x = from_dyadic(v, cfg.ms) if d & (d - 1) == 0 else from_real(v, cfg.ms, bits)
            except HrfnaError as exc:
                raise HrfnaError(f"{args.input}:{lineno}: {exc}") from None
            out.append(to_record(x))
    else:
        for lineno, rec in read_records(args.input):
            try:
                x = from_record(rec, cfg.ms)
            except HrfnaError as exc:
                raise HrfnaError(f"{args.input}:{lineno}: {exc}") from None
            out.append({"v": format_number(phi(x))})
    text = write_lines(args.out, out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _emit_error(EXIT_CONFIG, "usage", exc)
    try:
        if args.command == "selftest":
            return _selftest(args)
        if args.command == "convert":
            return _convert(args)
        return _run_workloads(args.command, args)
    except ConfigError as exc:
        return _emit_error(EXIT_CONFIG, "config", exc)
    except OSError as exc:
        return _emit_error(EXIT_IO, "io", exc)
    except HrfnaError as exc:
        return _emit_error(EXIT_KERNEL, "kernel", exc)


if __name__ == "__main__":
    sys.exit(main())
