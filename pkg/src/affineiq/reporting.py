"""Result tables (markdown + CSV) and plot-data bundles.

Tables carry explicit boolean match columns instead of typography, and every
physical value is annotated with its units and the viewing geometry it was
computed under. CSV values round-trip: parse_threshold_csv(render(...))
reconstructs the same rows.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .chromatic import Ellipse, ellipse_outline
from .imaging import Chromaticity
from .reference import load_human_reference

THRESHOLD_FIELDS = (
    "metric",
    "family",
    "dataset",
    "center",
    "lo",
    "hi",
    "open_ended",
    "units",
    "pixels_per_degree",
    "human_literature",
    "human_natural",
    "literature_match",
    "natural_match",
)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)


def _parse_field(name: str, text: str):
    if name in ("literature_match", "natural_match", "open_ended"):
        return text == "true"
    if name in ("center", "lo", "hi", "pixels_per_degree", "human_literature", "human_natural"):
        if text == "":
            return None
        return math.inf if text == "inf" else float(text)
    return text


def threshold_rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(THRESHOLD_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row.get(f)) for f in THRESHOLD_FIELDS])
    return buf.getvalue()


def parse_threshold_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        {name: _parse_field(name, row[name]) for name in THRESHOLD_FIELDS}
        for row in reader
    ]


def _interval_cell(row: dict) -> str:
    if math.isinf(row["center"]):
        return f"more invariant than humans (no crossing up to grid max)"
    lo = "?" if math.isinf(row["lo"]) else f"{row['lo']:.4g}"
    hi = "open" if math.isinf(row["hi"]) else f"{row['hi']:.4g}"
    return f"{row['center']:.4g} [{lo}, {hi}]"


def render_tables(thresholds: dict, sensitivity: dict, ellipses: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = thresholds["rows"]

    (out_dir / "table_thresholds.csv").write_text(threshold_rows_to_csv(rows))

    md = []
    md.append("# Invisibility threshold report\n")
    md.append(
        f"Common-scale threshold d_tau = {thresholds['d_tau']!r} "
        f"(quartiles {thresholds['d_tau_quartiles']!r}); "
        f"viewing geometry {thresholds['pixels_per_degree']!r} px/deg; "
        f"seed {thresholds['seed']}.\n"
    )

    md.append("## Metric thresholds in physical units\n")
    md.append(
        "| metric | family | dataset | threshold [lo, hi] | units | literature_match | natural_match |"
    )
    md.append("|---|---|---|---|---|---|---|")
    for row in rows:
        md.append(
            f"| {row['metric']} | {row['family']} | {row['dataset']} | "
            f"{_interval_cell(row)} | {row['units']} | "
            f"{_fmt(row['literature_match'])} | {_fmt(row['natural_match'])} |"
        )
    md.append("")

    md.append("## Invisibility thresholds in metric units\n")
    md.append("| metric | invisibility threshold |")
    md.append("|---|---|")
    unit_rows = sorted(thresholds["metric_unit"].items())
    for name, value in unit_rows:
        md.append(f"| {name} | {value:.4g} |")
    md.append("")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "invisibility_threshold"])
    for name, value in unit_rows:
        w.writerow([name, repr(value)])
    (out_dir / "table_invisibility.csv").write_text(buf.getvalue())

    md.append("## Sensitivity orderings\n")
    md.append(
        "| dataset | subject | ordering (most to least sensitive) | exact_match | "
        "kendall_distance | geometric_over_chromatic | rg_vs_yb_match |"
    )
    md.append("|---|---|---|---|---|---|---|")
    sens_csv = io.StringIO()
    w = csv.writer(sens_csv, lineterminator="\n")
    w.writerow(
        [
            "dataset",
            "subject",
            "ordering",
            "exact_match",
            "kendall_distance",
            "geometric_over_chromatic",
            "rg_vs_yb_match",
        ]
    )
    for ds_name in sorted(sensitivity["datasets"]):
        entry = sensitivity["datasets"][ds_name]
        human = " > ".join(entry["human_order"])
        md.append(f"| {ds_name} | human | {human} |  |  |  |  |")
        w.writerow([ds_name, "human", human, "", "", "", ""])
        for m_name in sorted(entry["metrics"]):
            m = entry["metrics"][m_name]
            order = " > ".join(m["order"])
            md.append(
                f"| {ds_name} | {m_name} | {order} | {_fmt(m['exact_match'])} | "
                f"{m['kendall_distance']} | {_fmt(m['geometric_over_chromatic'])} | "
                f"{_fmt(m['rg_vs_yb_match'])} |"
            )
            w.writerow(
                [
                    ds_name,
                    m_name,
                    order,
                    _fmt(m["exact_match"]),
                    m["kendall_distance"],
                    _fmt(m["geometric_over_chromatic"]),
                    _fmt(m["rg_vs_yb_match"]),
                ]
            )
    md.append("")
    (out_dir / "table_sensitivity.csv").write_text(sens_csv.getvalue())

    md.append("## Chromatic discrimination ellipses\n")
    md.append(
        "| dataset | metric | semi_major | semi_minor | angle | err_macadam | "
        "err_experimental | best_macadam | best_experimental |"
    )
    md.append("|---|---|---|---|---|---|---|---|---|")
    ell_csv = io.StringIO()
    w = csv.writer(ell_csv, lineterminator="\n")
    w.writerow(
        [
            "dataset",
            "metric",
            "semi_major",
            "semi_minor",
            "angle",
            "err_macadam",
            "err_experimental",
            "best_macadam",
            "best_experimental",
        ]
    )
    for ds_name in sorted(ellipses.get("datasets", {})):
        for m_name in sorted(ellipses["datasets"][ds_name]):
            e = ellipses["datasets"][ds_name][m_name]
            if "error" in e:
                md.append(f"| {ds_name} | {m_name} | {e['error']} | | | | | | |")
                w.writerow([ds_name, m_name, e["error"], "", "", "", "", "", ""])
                continue
            md.append(
                f"| {ds_name} | {m_name} | {e['semi_major']:.4g} | {e['semi_minor']:.4g} | "
                f"{e['angle']:.4g} | {e['err_macadam']:.4g} | {e['err_experimental']:.4g} | "
                f"{_fmt(e['best_macadam'])} | {_fmt(e['best_experimental'])} |"
            )
            w.writerow(
                [
                    ds_name,
                    m_name,
                    repr(e["semi_major"]),
                    repr(e["semi_minor"]),
                    repr(e["angle"]),
                    repr(e["err_macadam"]),
                    repr(e["err_experimental"]),
                    _fmt(e["best_macadam"]),
                    _fmt(e["best_experimental"]),
                ]
            )
    md.append("")
    (out_dir / "table_ellipses.csv").write_text(ell_csv.getvalue())
    (out_dir / "report.md").write_text("\n".join(md))


def emit_plot_data(cfg, thresholds: dict, sensitivity: dict, ellipses: dict, out_dir: Path) -> None:
    """Per-figure series: exactly what a plot of each result would draw."""
    from .pipeline import _dump_json, load_curve, load_fits
    from .transduction import transduce

    out_dir.mkdir(parents=True, exist_ok=True)
    fits = load_fits(cfg)
    ref = load_human_reference(cfg.human_reference)

    for ds in cfg.datasets:
        for family in cfg.families:
            if family == "illuminant":
                continue
            series = {}
            thetas = None
            for metric in cfg.metrics:
                curve = transduce(load_curve(cfg, ds.name, metric.name, family), fits[metric.name])
                thetas = list(curve.thetas)
                series[metric.name] = list(curve.equalized)
            human = ref.physical.get(family)
            identity = thetas[0] if thetas else 0.0
            _dump_json(
                out_dir / f"curves__{ds.name}__{family}.json",
                {
                    "dataset": ds.name,
                    "family": family,
                    "theta_axis": thetas,
                    "identity": [identity, 0.0],
                    "series": series,
                    "d_tau": {
                        "center": thresholds["d_tau"],
                        "quartiles": thresholds["d_tau_quartiles"],
                    },
                    "human_threshold": {
                        "literature": human.literature if human else None,
                        "natural": human.natural if human else None,
                    },
                },
            )

        entry = sensitivity["datasets"][ds.name]
        for metric in cfg.metrics:
            m = entry["metrics"][metric.name]
            _dump_json(
                out_dir / f"energy__{ds.name}__{metric.name}.json",
                {
                    "dataset": ds.name,
                    "metric": metric.name,
                    "series": m["energy_series"],
                    "human_energy_lines": entry["human_energies"],
                },
            )

        if "illuminant" in cfg.families:
            outlines = {}
            for m_name, e in ellipses["datasets"][ds.name].items():
                if "error" in e:
                    continue
                ell = Ellipse(
                    Chromaticity(*e["center"]), e["semi_major"], e["semi_minor"], e["angle"]
                )
                outlines[m_name] = [[float(x), float(y)] for x, y in ellipse_outline(ell)]
            refs = {
                name: [[float(x), float(y)] for x, y in ellipse_outline(e)]
                for name, e in ref.ellipses.items()
            }
            _dump_json(
                out_dir / f"ellipses__{ds.name}.json",
                {
                    "dataset": ds.name,
                    "samples": 360,
                    "metrics": outlines,
                    "references": refs,
                },
            )
