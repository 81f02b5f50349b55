"""Rendering of Monte Carlo statistics: text table, CSV, and figures.

The CSV form (header ``metric,aggregate,min,max``) is the persistence format;
the table form mirrors the four-row confusion layout with one column block
per criterion plus the per-bus ranges. Figures are rendered to PNG files next
to the delimited output when requested.
"""

from __future__ import annotations

from math import isnan, nan
from pathlib import Path

from .montecarlo import ConfusionStats

CSV_HEADER = "metric,aggregate,min,max"

_LABELS = {
    "1d_mf": "1D MF",
    "2d_mf": "2D MF",
    "dci": "DCI",
    "cci": "CCI",
    "pipeline": "Pipeline",
    "refined": "Refined",
}

_METRICS = (
    "detected_attacks_pct",
    "not_detected_pct",
    "detected_absence_pct",
    "false_alarms_pct",
)

_METRIC_TITLES = {
    "detected_attacks_pct": "Detected attacks %",
    "not_detected_pct": "Not detected attacks %",
    "detected_absence_pct": "Detected absence %",
    "false_alarms_pct": "False alarms %",
}


def stats_rows(stats: ConfusionStats) -> tuple[dict[str, str], list[tuple[str, float, float, float]]]:
    """Normalize a stats object into (meta, metric rows) for rendering."""
    rows: list[tuple[str, float, float, float]] = []
    for key, crit in stats.criteria.items():
        det_lo, det_hi = crit.detected_range()
        fa_lo, fa_hi = crit.false_alarms_range()
        rows.append((f"detected_attacks_pct[{key}]", crit.detected_pct, det_lo, det_hi))
        rows.append(
            (
                f"not_detected_pct[{key}]",
                crit.not_detected_pct,
                100.0 - det_hi if not isnan(det_hi) else nan,
                100.0 - det_lo if not isnan(det_lo) else nan,
            )
        )
        rows.append(
            (
                f"detected_absence_pct[{key}]",
                crit.detected_absence_pct,
                100.0 - fa_hi if not isnan(fa_hi) else nan,
                100.0 - fa_lo if not isnan(fa_lo) else nan,
            )
        )
        rows.append((f"false_alarms_pct[{key}]", crit.false_alarms_pct, fa_lo, fa_hi))
    meta = dict(stats.meta)
    meta["attacked_total"] = str(stats.attacked_total)
    meta["clean_total"] = str(stats.clean_total)
    meta["stealth_all"] = str(int(stats.stealth_all))
    return meta, rows


def render_csv(stats: ConfusionStats) -> str:
    meta, rows = stats_rows(stats)
    return rows_to_csv(meta, rows)


def rows_to_csv(meta: dict[str, str], rows: list[tuple[str, float, float, float]]) -> str:
    lines = [CSV_HEADER]
    for name, aggregate, lo, hi in rows:
        lines.append(f"{name},{aggregate:.4f},{lo:.4f},{hi:.4f}")
    for key in sorted(meta):
        lines.append(f"meta[{key}],{meta[key]},,")
    return "\n".join(lines) + "\n"


def parse_stats_csv(text: str) -> tuple[dict[str, str], list[tuple[str, float, float, float]]]:
    """Read back a persisted stats CSV into (meta, metric rows)."""
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"unexpected stats header {lines[0] if lines else ''!r}")
    meta: dict[str, str] = {}
    rows: list[tuple[str, float, float, float]] = []
    for line in lines[1:]:
        name, aggregate, lo, hi = line.split(",")
        if name.startswith("meta["):
            meta[name[5:-1]] = aggregate
        else:
            rows.append((name, float(aggregate), float(lo), float(hi)))
    return meta, rows


def _fmt(value: float) -> str:
    return "-" if isnan(value) else f"{value:.2f}"


def render_table(stats: ConfusionStats) -> str:
    meta, rows = stats_rows(stats)
    return rows_to_table(meta, rows)


def rows_to_table(meta: dict[str, str], rows: list[tuple[str, float, float, float]]) -> str:
    by_metric: dict[str, dict[str, tuple[float, float, float]]] = {m: {} for m in _METRICS}
    keys: list[str] = []
    for name, aggregate, lo, hi in rows:
        metric, _, rest = name.partition("[")
        key = rest.rstrip("]")
        if metric in by_metric:
            by_metric[metric][key] = (aggregate, lo, hi)
            if key not in keys:
                keys.append(key)
    labels = [_LABELS.get(key, key) for key in keys]
    width = max(24, *(len(lbl) + 2 for lbl in labels)) if labels else 24

    header_meta = " ".join(f"{k}={v}" for k, v in sorted(meta.items()))
    lines = ["Monte Carlo detection summary", header_meta, ""]
    head = "Criteria".ljust(26) + "".join(lbl.rjust(width) for lbl in labels)
    lines.append(head)
    for metric in _METRICS:
        row = _METRIC_TITLES[metric].ljust(26)
        row += "".join(_fmt(by_metric[metric][key][0]).rjust(width) for key in keys)
        lines.append(row)
    lines.append("")
    lines.append("Per-bus ranges, % (min-max)")
    lines.append(head)
    for metric in _METRICS:
        row = _METRIC_TITLES[metric].ljust(26)
        for key in keys:
            _, lo, hi = by_metric[metric][key]
            cell = "-" if isnan(lo) else f"{lo:.2f}-{hi:.2f}"
            row += cell.rjust(width)
        lines.append(row)
    return "\n".join(lines) + "\n"


def render_report(stats: ConfusionStats, format: str) -> str:
    """Render stats in the requested format ("table" or "csv")."""
    if format == "table":
        return render_table(stats)
    if format == "csv":
        return render_csv(stats)
    raise ValueError(f"unknown report format {format!r}")


def render_figures(
    meta: dict[str, str], rows: list[tuple[str, float, float, float]], outdir: str | Path
) -> list[Path]:
    """Render bar charts of the confusion statistics to PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    by_metric: dict[str, list[tuple[str, float, float, float]]] = {m: [] for m in _METRICS}
    for name, aggregate, lo, hi in rows:
        metric, _, rest = name.partition("[")
        if metric in by_metric:
            by_metric[metric].append((rest.rstrip("]"), aggregate, lo, hi))

    written: list[Path] = []
    panels = [
        ("detected_attacks_pct", "detection_rates.png", "Detected attacks"),
        ("false_alarms_pct", "false_alarm_rates.png", "False alarms"),
    ]
    for metric, filename, title in panels:
        entries = [e for e in by_metric[metric] if not isnan(e[1])]
        if not entries:
            continue
        labels = [_LABELS.get(key, key) for key, *_ in entries]
        values = [aggregate for _, aggregate, _, _ in entries]
        lower = [max(0.0, aggregate - lo) for _, aggregate, lo, _ in entries]
        upper = [max(0.0, hi - aggregate) for _, aggregate, _, hi in entries]
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        ax.bar(labels, values, color="#33658a", width=0.6)
        ax.errorbar(
            labels, values, yerr=[lower, upper], fmt="none",
            ecolor="#f26419", capsize=4, elinewidth=1.2,
        )
        ax.set_ylabel("% of measurements")
        ax.set_ylim(0, 105)
        ax.set_title(f"{title} (bars: aggregate, whiskers: per-bus range)")
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        path = outdir / filename
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
