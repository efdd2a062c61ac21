"""Pipeline stages: stimuli -> distances -> equalization -> thresholds ->
ellipses -> sensitivity -> report.

Every stage reads and writes files under the run's output directory, so each
is independently re-runnable and a full run is reproducible byte-for-byte
given the same config and seed. Stage failures raise PipelineStageError with
the stage name; artifacts of completed stages are preserved.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chromatic import ellipse_rmse, metric_ellipse
from .config import RunConfig
from .errors import (
    ConfigError,
    InsufficientDataError,
    MetricEvaluationError,
    PipelineStageError,
)
from .imaging import (
    WHITE_E,
    ImageBuffer,
    load_image,
    pad_black,
    rmse_energy,
    save_image,
    to_rgb,
)
from .metrics import MetricHandle, batch_distances, builtin_handle
from .psychophysics import fit_psychometric, load_trials
from .reference import HumanReference, load_human_reference
from .sensitivity import (
    SensitivityRecord,
    compare_orderings,
    human_sensitivity,
    metric_sensitivity,
    rank_families,
)
from .transduction import (
    EqualizationFit,
    ResponseCurve,
    fit_equalization,
    group_specs_by_axis,
    invert_threshold,
    metric_unit_threshold,
    normalize_dmos,
    transduce,
)
from .transforms import (
    GridConfig,
    TransformSpec,
    ViewingGeometry,
    apply_illuminant,
    apply_transform,
    hue_direction,
    hue_path,
    theta_grid,
)

GEOMETRIC = ("translation", "rotation", "scale")
MANIFEST_FIELDS = ("source", "family", "theta", "direction", "output", "pixels_per_degree")


def _dump_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _fmt_dir(direction) -> str:
    if direction is None:
        return ""
    return f"{direction[0]!r}:{direction[1]!r}"


def _parse_dir(text: str):
    if not text:
        return None
    a, b = text.split(":")
    return (float(a), float(b))


def _grid_config(cfg: RunConfig, base_size: int) -> GridConfig:
    return GridConfig(base_size=base_size, **cfg.grid_overrides)


def _dataset_paths(ds) -> list[Path]:
    paths = sorted(p for p in Path(ds.dir).iterdir() if p.suffix.lower() == ".png")
    if not paths:
        raise ConfigError(f"dataset '{ds.name}': no PNG files in {ds.dir}")
    return paths[: ds.sample_count]


def _prep_image(img: ImageBuffer, ds) -> ImageBuffer:
    if ds.pad_to:
        img = pad_black(img, ds.pad_to, ds.pad_to)
    if ds.force_rgb:
        img = to_rgb(img)
    return img


def resolve_d_tau(cfg: RunConfig, ref: HumanReference) -> tuple[float, tuple[float, float]]:
    if cfg.d_tau.source == "builtin":
        return ref.d_tau, ref.d_tau_quartiles
    fit = fit_psychometric(load_trials(cfg.d_tau.path))
    return fit.tau, (fit.quartile_lo, fit.quartile_hi)


# ---------------------------------------------------------------- stimuli


def stage_stimuli(cfg: RunConfig) -> None:
    """Write preprocessed references, distorted stimuli, and manifests."""
    out = cfg.output_dir
    _dump_json(out / "resolved_config.json", {"seed": cfg.seed, **cfg.raw})
    for ds in cfg.datasets:
        paths = _dataset_paths(ds)
        images = [_prep_image(load_image(p), ds) for p in paths]
        shapes = {(i.height, i.width) for i in images}
        if len(shapes) != 1:
            raise ConfigError(
                f"dataset '{ds.name}': images must share dimensions, got {sorted(shapes)}"
            )
        h, w = shapes.pop()
        if "scale" in cfg.families and w % 2 != 0:
            raise ConfigError(f"dataset '{ds.name}': scale grids need an even image size")
        grid_cfg = _grid_config(cfg, w)
        geom = ViewingGeometry(cfg.pixels_per_degree)
        root = out / "stimuli" / ds.name
        stems = [p.stem for p in paths]

        needs_rgb = "illuminant" in cfg.families
        if needs_rgb and images[0].channels != 3:
            images_rgb = [to_rgb(i) for i in images]
        else:
            images_rgb = images

        refs_plain = []
        for stem, img in zip(stems, images):
            ref = root / "ref" / "plain" / f"{stem}.png"
            save_image(img, ref)
            refs_plain.append(ref)
        refs_desat = []
        if "illuminant" in cfg.families:
            for stem, img in zip(stems, images_rgb):
                ref = root / "ref" / "desat" / f"{stem}.png"
                save_image(apply_illuminant(img, WHITE_E), ref)
                refs_desat.append(ref)

        rows = []
        for family in cfg.families:
            if family == "illuminant":
                ref_imgs = [load_image(p) for p in refs_desat]
                specs = []
                for hidx in range(grid_cfg.hue_count):
                    specs.extend(hue_path(hidx, grid_cfg))
                ref_paths = refs_desat
            else:
                ref_imgs = images
                specs = theta_grid(family, grid_cfg)
                ref_paths = refs_plain
            for sidx, spec in enumerate(specs):
                for stem, ref_path, img in zip(stems, ref_paths, ref_imgs):
                    if spec.is_identity:
                        out_path = ref_path
                    else:
                        out_path = root / family / f"s{sidx:04d}" / f"{stem}.png"
                        save_image(apply_transform(img, spec, geom), out_path)
                    rows.append(
                        {
                            "source": str(ref_path.relative_to(out)),
                            "family": family,
                            "theta": repr(
                                spec.axis_value if family != "rotation" else spec.theta
                            ),
                            "direction": _fmt_dir(spec.direction),
                            "output": str(out_path.relative_to(out)),
                            "pixels_per_degree": repr(cfg.pixels_per_degree),
                        }
                    )
        manifest = root / "manifest.csv"
        manifest.parent.mkdir(parents=True, exist_ok=True)
        with open(manifest, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
            writer.writeheader()
            writer.writerows(rows)


# ---------------------------------------------------------------- respond


def _manifest_rows(cfg: RunConfig, dataset: str) -> list[dict]:
    manifest = cfg.output_dir / "stimuli" / dataset / "manifest.csv"
    if not manifest.is_file():
        raise ConfigError(f"missing manifest {manifest}; run the stimuli stage first")
    with open(manifest, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@dataclass
class _SpecGroup:
    family: str
    theta: float
    direction: tuple[float, float] | None
    pairs: list[tuple[Path, Path]]

    def spec(self) -> TransformSpec:
        if self.family == "illuminant":
            d = self.direction or (1.0, 0.0)
            target = (WHITE_E[0] + self.theta * d[0], WHITE_E[1] + self.theta * d[1])
            return TransformSpec("illuminant", target, direction=self.direction)
        return TransformSpec(self.family, self.theta, direction=self.direction)


def _collect_groups(cfg: RunConfig, rows: list[dict], family: str) -> list[_SpecGroup]:
    groups: dict[tuple, _SpecGroup] = {}
    out = cfg.output_dir
    for row in rows:
        if row["family"] != family:
            continue
        key = (row["theta"], row["direction"])
        g = groups.get(key)
        if g is None:
            g = _SpecGroup(
                family=family,
                theta=float(row["theta"]),
                direction=_parse_dir(row["direction"]),
                pairs=[],
            )
            groups[key] = g
        g.pairs.append((out / row["source"], out / row["output"]))
    return list(groups.values())


def _curves_for_family(
    cfg: RunConfig, dataset: str, family: str, metric: MetricHandle, energy_cache: dict
) -> list[ResponseCurve]:
    """Response curves from materialized stimuli (one batch per metric)."""
    rows = _manifest_rows(cfg, dataset)
    groups = _collect_groups(cfg, rows, family)
    if not groups:
        return []
    all_pairs = [p for g in groups for p in g.pairs]
    theta_of_pair = [g.theta for g in groups for _ in g.pairs]
    try:
        values = np.asarray(batch_distances(metric, all_pairs))
    except MetricEvaluationError as exc:
        if exc.index is not None:
            raise MetricEvaluationError(
                f"metric '{metric.name}' failed at {family} theta="
                f"{theta_of_pair[exc.index]}: {exc}",
                transcript=exc.transcript,
                index=exc.index,
            ) from exc
        raise
    ck = (dataset, family)
    if ck not in energy_cache:
        energy_cache[ck] = np.asarray(batch_distances(builtin_handle("rmse"), all_pairs))
    energies = energy_cache[ck]
    means, e_means = [], []
    offset = 0
    for g in groups:
        n = len(g.pairs)
        means.append(float(np.mean(values[offset : offset + n])))
        e_means.append(float(np.mean(energies[offset : offset + n])))
        offset += n

    geom = cfg.pixels_per_degree
    if family == "illuminant":
        by_hue: dict[tuple[float, float], list[int]] = {}
        identity_idx = None
        for i, g in enumerate(groups):
            if g.theta == 0.0:
                identity_idx = i
            else:
                by_hue.setdefault(g.direction, []).append(i)
        if identity_idx is None:
            raise ConfigError("illuminant manifest is missing the identity row")
        curves = []
        for direction in sorted(by_hue):
            idxs = sorted(by_hue[direction], key=lambda i: groups[i].theta)
            thetas = [0.0] + [groups[i].theta for i in idxs]
            raw = [means[identity_idx]] + [means[i] for i in idxs]
            en = [e_means[identity_idx]] + [e_means[i] for i in idxs]
            curves.append(
                ResponseCurve(
                    metric=metric.name,
                    family="illuminant",
                    thetas=np.asarray(thetas),
                    raw=np.asarray(raw),
                    n_images=len(groups[identity_idx].pairs),
                    energies=np.asarray(en),
                    dataset=dataset,
                    direction=direction,
                )
            )
        return curves

    specs = [g.spec() for g in groups]
    axis_groups = group_specs_by_axis(specs)
    thetas = [ax for ax, _ in axis_groups]
    raw = [float(np.mean([means[i] for i in idxs])) for _, idxs in axis_groups]
    en = [float(np.mean([e_means[i] for i in idxs])) for _, idxs in axis_groups]
    return [
        ResponseCurve(
            metric=metric.name,
            family=family,
            thetas=np.asarray(thetas),
            raw=np.asarray(raw),
            n_images=len(groups[0].pairs),
            energies=np.asarray(en),
            dataset=dataset,
        )
    ]


def _curve_payload(curve: ResponseCurve, geom: float, hue_index: int | None = None) -> dict:
    payload = {
        "dataset": curve.dataset,
        "metric": curve.metric,
        "family": curve.family,
        "n_images": curve.n_images,
        "pixels_per_degree": geom,
        "thetas": list(curve.thetas),
        "raw": list(curve.raw),
        "energies": list(curve.energies) if curve.energies is not None else None,
        "equalized": list(curve.equalized) if curve.equalized is not None else None,
        "direction": list(curve.direction) if curve.direction else None,
    }
    if hue_index is not None:
        payload["hue_index"] = hue_index
    return payload


def _curve_from_payload(payload: dict) -> ResponseCurve:
    return ResponseCurve(
        metric=payload["metric"],
        family=payload["family"],
        thetas=np.asarray(payload["thetas"]),
        raw=np.asarray(payload["raw"]),
        n_images=payload["n_images"],
        equalized=np.asarray(payload["equalized"]) if payload.get("equalized") else None,
        energies=np.asarray(payload["energies"]) if payload.get("energies") else None,
        dataset=payload["dataset"],
        direction=tuple(payload["direction"]) if payload.get("direction") else None,
    )


def stage_respond(cfg: RunConfig) -> None:
    """Compute response curves for every dataset/metric/family from stimuli."""
    out = cfg.output_dir
    for ds in cfg.datasets:
        energy_cache: dict = {}
        for metric in cfg.metrics:
            for family in cfg.families:
                curves = _curves_for_family(cfg, ds.name, family, metric, energy_cache)
                if family == "illuminant":
                    for h, curve in enumerate(curves):
                        _dump_json(
                            out / "curves" / f"{ds.name}__{metric.name}__illuminant_h{h:02d}.json",
                            _curve_payload(curve, cfg.pixels_per_degree, hue_index=h),
                        )
                else:
                    for curve in curves:
                        _dump_json(
                            out / "curves" / f"{ds.name}__{metric.name}__{family}.json",
                            _curve_payload(curve, cfg.pixels_per_degree),
                        )


def load_curve(cfg: RunConfig, dataset: str, metric: str, family: str) -> ResponseCurve:
    path = cfg.output_dir / "curves" / f"{dataset}__{metric}__{family}.json"
    if not path.is_file():
        raise ConfigError(f"missing curve {path}; run the respond stage first")
    return _curve_from_payload(_load_json(path))


def load_hue_curves(cfg: RunConfig, dataset: str, metric: str) -> list[ResponseCurve]:
    curves = []
    for path in sorted((cfg.output_dir / "curves").glob(f"{dataset}__{metric}__illuminant_h*.json")):
        curves.append(_curve_from_payload(_load_json(path)))
    if not curves:
        raise ConfigError(
            f"no illuminant curves for {dataset}/{metric}; run the respond stage first"
        )
    return curves


# ---------------------------------------------------------------- equalize


def read_rated_csv(cfg: RunConfig) -> list[dict]:
    if cfg.rated is None:
        raise ConfigError("config has no rated_database; equalization needs one")
    with open(cfg.rated.csv, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for field in ("reference", "distorted", "mos"):
        if rows and field not in rows[0]:
            raise ConfigError(f"rated csv must have a '{field}' column")
    if not rows:
        raise ConfigError(f"rated csv {cfg.rated.csv} is empty")
    return rows


def stage_equalize(cfg: RunConfig) -> None:
    """Fit the power-law equalization of every metric on the rated database."""
    rows = read_rated_csv(cfg)
    root = cfg.rated.image_root
    pairs = [(root / r["reference"], root / r["distorted"]) for r in rows]
    mos = np.asarray([float(r["mos"]) for r in rows])
    if not cfg.rated.mos_higher_is_better:
        mos = -mos
    D = normalize_dmos(mos)

    distances = {}
    fits = {}
    for metric in cfg.metrics:
        d = np.asarray(batch_distances(metric, pairs))
        distances[metric.name] = d
        fit = fit_equalization(d, D)
        fits[metric.name] = {
            "a": fit.a,
            "b": fit.b,
            "residual": fit.residual,
            "n_pairs": fit.n_pairs,
        }

    out = cfg.output_dir / "equalization"
    out.mkdir(parents=True, exist_ok=True)
    metric_names = sorted(distances)
    with open(out / "distances.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["reference", "distorted", "mos", "D", *metric_names])
        for i, row in enumerate(rows):
            writer.writerow(
                [row["reference"], row["distorted"], row["mos"], repr(float(D[i]))]
                + [repr(float(distances[m][i])) for m in metric_names]
            )
    _dump_json(cfg.output_dir / "equalization" / "fits.json", fits)


def load_fits(cfg: RunConfig) -> dict[str, EqualizationFit]:
    path = cfg.output_dir / "equalization" / "fits.json"
    if not path.is_file():
        raise ConfigError(f"missing {path}; run the equalize stage first")
    payload = _load_json(path)
    return {
        name: EqualizationFit(
            a=entry["a"], b=entry["b"], residual=entry["residual"], n_pairs=entry["n_pairs"]
        )
        for name, entry in payload.items()
    }


# ---------------------------------------------------------------- thresholds


def stage_thresholds(cfg: RunConfig) -> None:
    """Invert every geometric transduction at the human common-scale threshold."""
    ref = load_human_reference(cfg.human_reference)
    d_tau, quartiles = resolve_d_tau(cfg, ref)
    fits = load_fits(cfg)
    rows = []
    for ds in cfg.datasets:
        for metric in cfg.metrics:
            for family in cfg.families:
                if family == "illuminant":
                    continue
                curve = load_curve(cfg, ds.name, metric.name, family)
                curve = transduce(curve, fits[metric.name])
                interval = invert_threshold(
                    curve, d_tau, quartiles, pixels_per_degree=cfg.pixels_per_degree
                )
                human = ref.physical.get(family)
                lit = human.literature if human else None
                nat = human.natural if human else None
                rows.append(
                    {
                        "metric": metric.name,
                        "family": family,
                        "dataset": ds.name,
                        "center": interval.center,
                        "lo": interval.lo,
                        "hi": interval.hi,
                        "open_ended": interval.open_ended,
                        "pixels_per_degree": cfg.pixels_per_degree,
                        "units": human.units if human else "",
                        "human_literature": lit,
                        "human_natural": nat,
                        "literature_match": (
                            lit is not None and interval.lo <= lit <= interval.hi
                        ),
                        "natural_match": (
                            nat is not None and interval.lo <= nat <= interval.hi
                        ),
                    }
                )
    metric_unit = {
        name: metric_unit_threshold(fit, d_tau) for name, fit in sorted(fits.items())
    }
    _dump_json(
        cfg.output_dir / "thresholds" / "thresholds.json",
        {
            "d_tau": d_tau,
            "d_tau_quartiles": list(quartiles),
            "seed": cfg.seed,
            "pixels_per_degree": cfg.pixels_per_degree,
            "rows": rows,
            "metric_unit": metric_unit,
        },
    )


# ---------------------------------------------------------------- ellipses


def stage_ellipses(cfg: RunConfig) -> None:
    """Fit per-metric discrimination ellipses and compare to the references."""
    if "illuminant" not in cfg.families:
        _dump_json(cfg.output_dir / "ellipses" / "ellipses.json", {"datasets": {}})
        return
    ref = load_human_reference(cfg.human_reference)
    d_tau, _ = resolve_d_tau(cfg, ref)
    fits = load_fits(cfg)
    payload = {"d_tau": d_tau, "seed": cfg.seed, "datasets": {}}
    for ds in cfg.datasets:
        entries = {}
        for metric in cfg.metrics:
            curves = load_hue_curves(cfg, ds.name, metric.name)
            try:
                result = metric_ellipse(curves, fits[metric.name], d_tau)
            except InsufficientDataError as exc:
                entries[metric.name] = {"error": str(exc)}
                continue
            e = result.result.ellipse
            entries[metric.name] = {
                "center": [e.center.x, e.center.y],
                "semi_major": e.semi_major,
                "semi_minor": e.semi_minor,
                "angle": e.angle,
                "fit_residual": result.result.residual,
                "n_directions": len(result.radii),
                "n_dropped": len(result.dropped),
                "err_macadam": ellipse_rmse(e, ref.ellipses["macadam"]),
                "err_experimental": ellipse_rmse(e, ref.ellipses["experimental"]),
            }
        for key in ("err_macadam", "err_experimental"):
            valid = {m: v[key] for m, v in entries.items() if "error" not in v}
            best = min(valid, key=valid.get) if valid else None
            for m, v in entries.items():
                if "error" not in v:
                    v["best_" + key.removeprefix("err_")] = m == best
        payload["datasets"][ds.name] = entries
    _dump_json(cfg.output_dir / "ellipses" / "ellipses.json", payload)


# ---------------------------------------------------------------- sensitivity


def _axis_hue_indices(direction, hue_count) -> tuple[int, int]:
    """Hue indices closest to +direction and -direction."""
    best = {}
    for sign in (1.0, -1.0):
        target = (sign * direction[0], sign * direction[1])
        scores = []
        for h in range(hue_count):
            d = hue_direction(h, hue_count)
            scores.append(d[0] * target[0] + d[1] * target[1])
        best[sign] = int(np.argmax(scores))
    return best[1.0], best[-1.0]


def _average_curves(a: ResponseCurve, b: ResponseCurve) -> ResponseCurve:
    if not np.allclose(a.thetas, b.thetas):
        raise ConfigError("opposite hue curves sample different radii")
    return ResponseCurve(
        metric=a.metric,
        family=a.family,
        thetas=a.thetas,
        raw=(a.raw + b.raw) / 2.0,
        n_images=a.n_images,
        energies=(
            (a.energies + b.energies) / 2.0
            if a.energies is not None and b.energies is not None
            else None
        ),
        dataset=a.dataset,
    )


def _human_specs(family: str, ref: HumanReference, grid_cfg: GridConfig):
    """Transforms at the natural human threshold, one per symmetric direction."""
    if family == "translation":
        th = ref.physical["translation"].natural
        return [
            TransformSpec("translation", th, direction=d)
            for d in ((1, 0), (-1, 0), (0, 1), (0, -1))
        ]
    if family == "rotation":
        th = ref.physical["rotation"].natural
        return [TransformSpec("rotation", th), TransformSpec("rotation", -th)]
    if family == "scale":
        return [TransformSpec("scale", ref.physical["scale"].natural)]
    # chromatic axes: radius along +/- the axis direction
    axes = ref.chromatic_axis_directions()
    radii = ref.threshold_specs_axes()
    d = axes[family]
    r = radii[family]
    specs = []
    for sign in (1.0, -1.0):
        target = (WHITE_E[0] + sign * r * d[0], WHITE_E[1] + sign * r * d[1])
        specs.append(TransformSpec("illuminant", target, direction=(sign * d[0], sign * d[1])))
    return specs


def stage_sensitivity(cfg: RunConfig) -> None:
    """Per-family sensitivities for humans and metrics, plus ordering reports."""
    ref = load_human_reference(cfg.human_reference)
    fits = load_fits(cfg)
    geom = ViewingGeometry(cfg.pixels_per_degree)
    families = [f for f in ("scale", "rotation", "translation") if f in cfg.families]
    chromatic_axes = ["rg", "yb"] if "illuminant" in cfg.families else []
    payload = {"seed": cfg.seed, "datasets": {}}
    axes_dirs = ref.chromatic_axis_directions()

    for ds in cfg.datasets:
        plain_dir = cfg.output_dir / "stimuli" / ds.name / "ref" / "plain"
        desat_dir = cfg.output_dir / "stimuli" / ds.name / "ref" / "desat"
        plain = [load_image(p) for p in sorted(plain_dir.glob("*.png"))]
        if not plain:
            raise ConfigError(f"no references for {ds.name}; run the stimuli stage first")
        grid_cfg = _grid_config(cfg, plain[0].width)

        human_records = []
        human_energies = {}
        for family in families:
            specs = _human_specs(family, ref, grid_cfg)
            rec = human_sensitivity(family, specs, plain, geom)
            human_records.append(rec)
            human_energies[family] = (
                math.inf if math.isinf(rec.sensitivity) else 1.0 / rec.sensitivity
            )
        if chromatic_axes:
            desat = [load_image(p) for p in sorted(desat_dir.glob("*.png"))]
            for axis in chromatic_axes:
                specs = _human_specs(axis, ref, grid_cfg)
                rec = human_sensitivity(axis, specs, desat, geom)
                human_records.append(rec)
                human_energies[axis] = (
                    math.inf if math.isinf(rec.sensitivity) else 1.0 / rec.sensitivity
                )

        ds_payload = {
            "human_order": rank_families(human_records),
            "human_sensitivities": {r.family: r.sensitivity for r in human_records},
            "human_energies": human_energies,
            "metrics": {},
        }

        for metric in cfg.metrics:
            fit = fits[metric.name]
            records = []
            series = {}
            for family in families:
                curve = transduce(load_curve(cfg, ds.name, metric.name, family), fit)
                records.append(
                    metric_sensitivity(curve, k_lowest=cfg.k_lowest, family=family)
                )
                series[family] = {
                    "energy": list(curve.energies),
                    "D": list(curve.equalized),
                }
            if chromatic_axes:
                hue_curves = load_hue_curves(cfg, ds.name, metric.name)
                for axis in chromatic_axes:
                    i_pos, i_neg = _axis_hue_indices(axes_dirs[axis], grid_cfg.hue_count)
                    avg = _average_curves(hue_curves[i_pos], hue_curves[i_neg])
                    curve = transduce(avg, fit)
                    records.append(
                        metric_sensitivity(curve, k_lowest=cfg.k_lowest, family=axis)
                    )
                    series[axis] = {
                        "energy": list(curve.energies),
                        "D": list(curve.equalized),
                    }
            report = compare_orderings(human_records, records)
            ds_payload["metrics"][metric.name] = {
                "order": list(report.metric_order),
                "sensitivities": {r.family: r.sensitivity for r in records},
                "exact_match": report.exact_match,
                "kendall_distance": report.kendall_distance,
                "geometric_over_chromatic": report.geometric_over_chromatic_metric,
                "geometric_over_chromatic_preserved": report.geometric_over_chromatic_preserved,
                "rg_vs_yb_match": report.rg_vs_yb_match,
                "energy_series": series,
            }
        payload["datasets"][ds.name] = ds_payload
    _dump_json(cfg.output_dir / "sensitivity" / "sensitivity.json", payload)


# ---------------------------------------------------------------- report


def stage_report(cfg: RunConfig) -> None:
    from .reporting import emit_plot_data, render_tables

    out = cfg.output_dir
    thresholds = _load_json(out / "thresholds" / "thresholds.json")
    ellipses = _load_json(out / "ellipses" / "ellipses.json")
    sensitivity = _load_json(out / "sensitivity" / "sensitivity.json")
    render_tables(thresholds, sensitivity, ellipses, out / "report")
    emit_plot_data(cfg, thresholds, sensitivity, ellipses, out / "plots")


STAGES = (
    ("stimuli", stage_stimuli),
    ("respond", stage_respond),
    ("equalize", stage_equalize),
    ("thresholds", stage_thresholds),
    ("ellipses", stage_ellipses),
    ("sensitivity", stage_sensitivity),
    ("report", stage_report),
)


def run_pipeline(cfg: RunConfig) -> Path:
    """Run every stage in order; any failure halts with the stage name."""
    for name, stage in STAGES:
        try:
            stage(cfg)
        except PipelineStageError:
            raise
        except Exception as exc:
            raise PipelineStageError(name, exc) from exc
    return cfg.output_dir
