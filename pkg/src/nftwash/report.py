"""Text rendering of a JSON report."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd

from .errors import SchemaError
from .ingest import read_text

SECTIONS = ("cleaning", "detection", "patterns", "marketplaces", "profit")


def load_report(path) -> dict:
    path = Path(path)
    try:
        report = json.loads(read_text(path))
    except json.JSONDecodeError as e:
        raise SchemaError(path, e.lineno, f"invalid JSON: {e.msg}") from None
    missing = [s for s in SECTIONS if s not in report]
    if missing:
        raise SchemaError(path, 1, f"not a report, missing: {', '.join(missing)}")
    return report


def _table(rows, columns=None, index=None) -> str:
    if not rows:
        return "  (none)"
    return pd.DataFrame(rows, columns=columns, index=index).to_string()


def _money(value) -> str:
    if value is None:
        return "-"
    return f"{float(value):,.2f}"


def render_text(report: dict) -> str:
    out = []
    detection = report["detection"]

    out.append("== Cleaning ==")
    cleaning = report["cleaning"]
    out.append(_table([cleaning[s] for s in cleaning], index=list(cleaning)))

    out.append("")
    out.append(f"== Detection: {detection['confirmed']} confirmed, {detection['unconfirmed']} unconfirmed ==")
    out.append(_table([{"evidence": k, "events": v} for k, v in detection["overlap"].items()]))
    out.append(_table([{"kind": k, "events": v} for k, v in detection["kind_counts"].items()]))
    if detection["exchange_funded_unconfirmed"]:
        out.append("Funded by exchanges:")
        out.append(_table([{"service": k, **v} for k, v in detection["exchange_funded_unconfirmed"].items()]))

    out.append("")
    out.append("== Patterns ==")
    out.append(_table([{"pattern": k, "events": v} for k, v in report["patterns"].items() if v]))

    out.append("")
    out.append("== Marketplaces ==")
    out.append(_table([{"marketplace": name, "events": row["events"], "usd_volume": _money(row["usd_volume"]),
                        "share": "-" if row["share"] is None else f"{float(row['share']):.2%}"}
                       for name, row in report["marketplaces"].items()]))

    lifetimes = report.get("lifetime_cdf", {})
    if lifetimes.get("within_1_day") is not None:
        out.append("")
        out.append(f"Lifetime <= 1 day: {lifetimes['within_1_day']:.1%}, "
                   f"<= 10 days: {lifetimes['within_10_days']:.1%}")

    out.append("")
    out.append("== Reward profit ==")
    rows = []
    for marketplace, table in report["profit"]["rewards"].items():
        for verdict, row in table.items():
            rows.append({"marketplace": marketplace, "verdict": verdict, "count": row["count"],
                         "mean_usd": _money(row["balance_usd"]["mean"]),
                         "total_usd": _money(row["balance_usd"]["total"])})
    out.append(_table(rows))

    resale = report["profit"]["resale"]
    out.append("")
    out.append(f"== Resale: {resale['resold']} of {resale['events']} events resold ==")
    out.append(_table([{"measure": k, "successful": v["successful"], "failed": v["failed"],
                        "total": _money(v["total"])}
                       for k, v in resale.items() if isinstance(v, dict)]))
    return "\n".join(out) + "\n"
