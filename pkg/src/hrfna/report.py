"""Run reports: JSON (machine), aligned text (human) and CSV (metric table).

A report is ``{"body": ..., "timing": ...}``. Everything that depends only
on the config and seed lives in ``body``; wall-clock figures live in
``timing`` so bodies can be compared byte for byte across runs.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

REPORT_VERSION = 1
METRIC_FIELDS = ("workload", "distribution", "n", "system", "oracle", "rms", "nrms", "max_abs", "max_rel", "samples")


def _clean(obj):
    # JSON has no inf/nan; spell them out so the output stays strict
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def make_report(command: str, config_echo: dict, seed: int, entries: list, timing: dict, extra: dict | None = None) -> dict:
    body = {
        "version": REPORT_VERSION,
        "command": command,
        "seed": seed,
        "config": config_echo,
        "rng": "numpy PCG64 via SeedSequence([seed, distribution, size, repeat, stream])",
        "workloads": entries,
    }
    if extra:
        body.update(extra)
    return {"body": _clean(body), "timing": _clean(timing)}


def body_bytes(report: dict) -> bytes:
    return json.dumps(report["body"], sort_keys=True, separators=(",", ":")).encode()


def to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def metric_rows(report: dict) -> list[dict]:
    rows = []
    for w in report["body"]["workloads"]:
        for m in w.get("metrics", []):
            rows.append(
                {
                    "workload": w["workload"],
                    "distribution": w.get("distribution", ""),
                    "n": w.get("n", ""),
                    "system": m["system"],
                    "oracle": m["oracle"],
                    "rms": m["rms"],
                    "nrms": m["nrms"],
                    "max_abs": m["max_abs"],
                    "max_rel": m["max_rel"],
                    "samples": m["n"],
                }
            )
    return rows


def to_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRIC_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in metric_rows(report):
        writer.writerow(row)
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3e}"
    return str(v)


def to_text(report: dict) -> str:
    body = report["body"]
    lines = [f"hrfna {body['command']}  seed={body['seed']}"]
    rows = metric_rows(report)
    if rows:
        cols = ("workload", "distribution", "n", "system", "oracle", "rms", "nrms", "max_abs")
        table = [cols] + [tuple(_fmt(r[c]) for c in cols) for r in rows]
        widths = [max(len(t[i]) for t in table) for i in range(len(cols))]
        for t in table:
            lines.append("  ".join(s.rjust(w) for s, w in zip(t, widths)))
    for w in body["workloads"]:
        tag = f"{w['workload']} {w.get('distribution', w.get('rhs', ''))} n={w.get('n', w.get('steps', ''))}"
        if "budget_dominance" in w:
            lines.append(f"{tag}: budget dominance {'ok' if w['budget_dominance'] else 'VIOLATED'}")
        if "amortization" in w:
            a = w["amortization"]
            lines.append(
                f"{tag}: {a['ops']} ops, {a['normalizations']} normalizations, "
                f"{_fmt(float(a['ops_per_normalization']))} ops/event"
            )
        if w["workload"] == "rk4":
            lines.append(f"{tag}: max error {_fmt(w['max_error'])}, final budget {_fmt(w['final_budget'])}")
    for name, res in body.get("selftest", {}).items():
        lines.append(f"selftest {name}: {'pass' if res['ok'] else 'FAIL'}  {res.get('detail', '')}")
    return "\n".join(lines) + "\n"


def atomic_write(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_report(report: dict, out: str | Path) -> list[Path]:
    """``out`` names the JSON file; ``.txt`` and ``.csv`` siblings are added."""
    out = Path(out)
    stem = out.with_suffix("") if out.suffix == ".json" else out
    targets = [
        (stem.with_name(stem.name + ".json"), to_json(report)),
        (stem.with_name(stem.name + ".txt"), to_text(report)),
        (stem.with_name(stem.name + ".csv"), to_csv(report)),
    ]
    for p, text in targets:
        atomic_write(p, text)
    return [p for p, _ in targets]
