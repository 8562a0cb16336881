"""Text formats: ring-configuration documents, CSV tables, verification reports.

Every decimal is written with 17 significant digits so binary64 values
survive a round trip, and nothing time-dependent goes into data files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Sequence, TextIO

from .errors import DomainError
from .kernel import KernelParams
from .rings import RingConfig

CONFIG_KEYS = ("d", "alpha", "rate", "origin_mass", "rings")


def fmt(x) -> str:
    """17-significant-digit decimal; integers and strings pass through."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, str):
        return x
    return "%.17g" % float(x)


# --- ranges --------------------------------------------------------------------

def parse_range(text: str) -> list[float]:
    """``start:end:step`` (inclusive when the step divides exactly), or a comma list."""
    text = text.strip()
    try:
        if ":" not in text:
            return [float(Decimal(p)) for p in text.split(",") if p.strip()]
        parts = text.split(":")
        if len(parts) != 3:
            raise DomainError(f"range must look like start:end:step, got {text!r}")
        start, end, step = (Decimal(p) for p in parts)
    except InvalidOperation as exc:
        raise DomainError(f"cannot parse range {text!r}") from exc
    if not step > 0:
        raise DomainError("range step must be positive")
    if end < start:
        raise DomainError("range end must be >= start")
    count = int((end - start) // step) + 1
    return [float(start + i * step) for i in range(count)]


# --- configuration documents ---------------------------------------------------

def config_to_text(config: RingConfig) -> str:
    rate = "null" if config.rate is None else fmt(config.rate)
    lines = [
        "{",
        f'  "d": {config.params.d},',
        f'  "alpha": {fmt(config.params.alpha)},',
        f'  "rate": {rate},',
        f'  "origin_mass": {fmt(config.origin_mass)},',
    ]
    rings = [
        f'    {{"radius": {fmt(r)}, "mass": {fmt(m)}}}'
        for r, m in zip(config.radii.tolist(), config.masses.tolist())
    ]
    if rings:
        lines.append('  "rings": [')
        lines.append(",\n".join(rings))
        lines.append("  ]")
    else:
        lines.append('  "rings": []')
    lines.append("}")
    return "\n".join(lines) + "\n"


def params_for(d: int, alpha: float) -> KernelParams:
    """Kernel parameters, switching to limiting mode on the boundary ``alpha = 2 - d``."""
    if isinstance(d, int) and d >= 2 and abs(d + alpha - 2) <= 1e-12:
        return KernelParams.at_limit(d)
    return KernelParams(d, alpha)


def config_from_text(text: str) -> RingConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DomainError("config document must be an object")
    missing = [k for k in CONFIG_KEYS if k not in doc]
    if missing:
        raise DomainError(f"config document lacks keys: {', '.join(missing)}")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise DomainError(f"config document has unknown keys: {', '.join(unknown)}")
    d = doc["d"]
    if not isinstance(d, int) or isinstance(d, bool):
        raise DomainError("config key 'd' must be an integer")
    try:
        alpha = float(doc["alpha"])
        origin = float(doc["origin_mass"])
        rate = None if doc["rate"] is None else float(doc["rate"])
        rings = doc["rings"]
        radii = [float(item["radius"]) for item in rings]
        masses = [float(item["mass"]) for item in rings]
    except (TypeError, KeyError, ValueError) as exc:
        raise DomainError(f"malformed config document: {exc}") from exc
    return RingConfig(params_for(d, alpha), radii, masses, origin, rate)


def write_config(config: RingConfig, path: str | Path) -> None:
    Path(path).write_text(config_to_text(config), encoding="utf-8", newline="\n")


def read_config(path: str | Path) -> RingConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    return config_from_text(text)


# --- CSV -------------------------------------------------------------------------------

def write_csv(
    out: TextIO,
    header: Sequence[str],
    rows: Iterable[Sequence],
    comments: Iterable[str] = (),
) -> None:
    for c in comments:
        out.write(f"# {c}\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def csv_text(header, rows, comments=()) -> str:
    buf = io.StringIO()
    write_csv(buf, header, rows, comments)
    return buf.getvalue()


def read_csv(text: str) -> tuple[list[str], list[list[str]], list[str]]:
    """Header, data rows and comment lines (without the leading ``# ``)."""
    comments, data = [], []
    for line in text.splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line:
            data.append(line)
    rows = list(csv.reader(data))
    return rows[0], rows[1:], comments


def trajectory_text(traj, comments: Sequence[str] = ()) -> str:
    """One row per ring per stored time; events appear as comment lines in time order."""
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "ring_index", "radius", "mass", "origin_mass"])
    events = list(traj.events)
    pending = 0
    for t, st in zip(traj.times, traj.states):
        while pending < len(events) and events[pending].time <= t:
            ev = events[pending]
            idx = " ".join(str(i) for i in ev.indices)
            buf.write(f"# event t={fmt(ev.time)} kind={ev.kind} indices={idx} detail={ev.detail}\n")
            pending += 1
        for k, (r, m) in enumerate(zip(st.radii.tolist(), st.masses.tolist())):
            w.writerow([fmt(t), k, fmt(r), fmt(m), fmt(st.origin_mass)])
    for ev in events[pending:]:
        idx = " ".join(str(i) for i in ev.indices)
        buf.write(f"# event t={fmt(ev.time)} kind={ev.kind} indices={idx} detail={ev.detail}\n")
    return buf.getvalue()


# --- verification reports ----------------------------------------------------------------

REPORT_HEADER = ["claim_id", "d", "alpha", "label", "r", "value", "expected", "margin", "pass"]


def report_rows(reports) -> list[list]:
    rows = []
    for rep in reports:
        d, a = rep.params_grid[0] if rep.params_grid else ("", "")
        if rep.error is not None:
            rows.append([rep.claim_id, d, a, "error", "", "", rep.error, "", "false"])
        for p in rep.results:
            r = "" if p.r is None else p.r
            rows.append([rep.claim_id, d, a, p.label, r, p.value, p.expected, p.margin,
                         "true" if p.passed else "false"])
    return rows


def _json_number(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return x


def summary_document(reports) -> str:
    from .verify import worst_result

    worst = worst_result(reports)
    per = []
    for rep in reports:
        s = dict(rep.summary)
        s["d"], s["alpha"] = rep.params_grid[0] if rep.params_grid else (None, None)
        s["worst_margin"] = _json_number(s["worst_margin"])
        per.append(s)
    doc = {
        "reports": len(reports),
        "failed_reports": sum(not r.passed for r in reports),
        "failed_points": sum(s["failed"] for s in per) + sum(s["error"] is not None for s in per),
        "worst": None if worst is None else {
            "claim_id": worst[0].claim_id,
            "d": worst[0].params_grid[0][0],
            "alpha": worst[0].params_grid[0][1],
            "label": worst[1].label,
            "r": worst[1].r,
            "margin": _json_number(worst[1].margin),
        },
        "claims": per,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
