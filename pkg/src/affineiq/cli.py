"""Command-line interface.

Each pipeline stage is its own subcommand so any step can be re-run from the
artifacts of the previous one; ``run`` chains them all. Exit codes: 0 on
success, 2 for configuration errors, 3 for stage failures.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path

import click

from .config import load_config
from .errors import AffineIQError, ConfigError, PipelineStageError
from . import pipeline as pl


def _run_stage(config_path: str, stage_name: str) -> None:
    cfg = load_config(config_path)
    stage = dict(pl.STAGES)[stage_name]
    try:
        stage(cfg)
    except Exception as exc:
        raise PipelineStageError(stage_name, exc) from exc
    click.echo(f"{stage_name}: ok ({cfg.output_dir})")


def _wrap(fn):
    try:
        fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    except PipelineStageError as exc:
        click.echo(f"pipeline error: {exc}", err=True)
        sys.exit(3)
    except AffineIQError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)


@click.group()
def main():
    """Invisibility thresholds for image-quality metrics under affine transforms."""


def _stage_command(name, help_text):
    @main.command(name=name, help=help_text)
    @click.option("--config", "config_path", required=True, type=click.Path(exists=True))
    def cmd(config_path):
        _wrap(lambda: _run_stage(config_path, name))

    return cmd


_stage_command("stimuli", "Generate distorted stimuli and their manifest.")
_stage_command("respond", "Compute metric response curves from the stimuli.")
_stage_command("equalize", "Fit equalization functions on the rated database.")
_stage_command("thresholds", "Invert transductions at the human threshold.")
_stage_command("ellipses", "Fit chromatic discrimination ellipses per metric.")
_stage_command("sensitivity", "Compute sensitivities and ordering comparisons.")
_stage_command("report", "Render result tables and plot-data bundles.")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def run(config_path):
    """Run the whole pipeline: stimuli through report."""

    def inner():
        cfg = load_config(config_path)
        out = pl.run_pipeline(cfg)
        click.echo(f"run: ok ({out})")

    _wrap(inner)


@main.command()
@click.argument("logs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--axis", default="D", help="Level axis label recorded in the fit.")
@click.option("--out", "out_path", default=None, type=click.Path(), help="Write the fit as JSON.")
@click.option("--boot", default=1000, show_default=True, help="Bootstrap resamples.")
def psychofit(logs, axis, out_path, boot):
    """Fit the psychometric function to one or more trial logs."""

    def inner():
        from .psychophysics import fit_psychometric, load_trials

        trials = []
        for log in logs:
            trials.extend(load_trials(log))
        fit = fit_psychometric(trials, axis=axis, n_boot=boot)
        payload = asdict(fit)
        click.echo(
            f"tau = {fit.tau:.4f}  quartiles [{fit.quartile_lo:.4f}, {fit.quartile_hi:.4f}]  "
            f"k = {fit.k:.2f}  n = {fit.n_trials}"
        )
        if out_path:
            Path(out_path).write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")

    _wrap(inner)


@main.command("experiment-serve")
@click.option("--data-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8750, show_default=True)
@click.option("--ui", "ui_dir", default=None, type=click.Path(file_okay=False))
def experiment_serve(data_dir, host, port, ui_dir):
    """Serve 2AFC sessions over HTTP (and the browser UI, if provided)."""

    def inner():
        import uvicorn

        from .service.app import create_app

        app = create_app(Path(data_dir), Path(ui_dir) if ui_dir else None)
        uvicorn.run(app, host=host, port=port, log_level="warning")

    _wrap(inner)


@main.command("experiment-prep")
@click.option("--data-dir", required=True, type=click.Path(file_okay=False))
@click.option("--rated-csv", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--image-root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--name", default="internal-d", show_default=True)
@click.option("--levels", default=20, show_default=True)
@click.option("--reps", default=15, show_default=True)
@click.option("--mos-higher-is-better/--mos-lower-is-better", default=True)
def experiment_prep(data_dir, rated_csv, image_root, name, levels, reps, mos_higher_is_better):
    """Build a 2AFC experiment on the common scale from a rated database.

    Pairs are binned into equally spaced normalized-opinion levels; stimuli
    are copied byte-for-byte under the service's stimulus root.
    """

    def inner():
        import csv
        import shutil

        import numpy as np

        from .transduction import normalize_dmos

        data = Path(data_dir)
        stimuli = data / "stimuli" / name
        stimuli.mkdir(parents=True, exist_ok=True)
        (data / "experiments").mkdir(parents=True, exist_ok=True)
        with open(rated_csv, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ConfigError(f"{rated_csv} is empty")
        mos = np.asarray([float(r["mos"]) for r in rows])
        if not mos_higher_is_better:
            mos = -mos
        D = normalize_dmos(mos)
        centers = np.linspace(0.0, 1.0, levels + 1)[1:]
        bins = [[] for _ in centers]
        for i, row in enumerate(rows):
            j = int(np.argmin(np.abs(centers - D[i])))
            bins[j].append((row, float(D[i])))

        def copy_in(rel: str) -> str:
            src = Path(image_root) / rel
            key = f"{name}/{rel.replace('/', '__')}"
            dst = data / "stimuli" / key
            if not dst.exists():
                dst.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(src, dst)
            return key

        level_specs = []
        for center, bucket in zip(centers, bins):
            if not bucket:
                continue
            pairs = [
                {"ref": copy_in(row["reference"]), "dist": copy_in(row["distorted"])}
                for row, _ in bucket
            ]
            level_specs.append({"level": float(center), "pairs": pairs})
        if len(level_specs) < 2:
            raise ConfigError("fewer than 2 populated levels; check the rated csv")
        manifest = {
            "kind": "internal-d",
            "axis": "D",
            "reps": reps,
            "levels": level_specs,
        }
        out = data / "experiments" / f"{name}.json"
        out.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
        click.echo(f"experiment '{name}': {len(level_specs)} levels -> {out}")

    _wrap(inner)


@main.command("demo-data")
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--images", default=10, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
def demo_data(out_dir, images, size, seed):
    """Generate a toy dataset, synthetic rated database, and ready-made config."""

    def inner():
        from .demo import make_demo_workspace

        config_path = make_demo_workspace(Path(out_dir), n_images=images, size=size, seed=seed)
        click.echo(f"demo workspace ready: {config_path}")

    _wrap(inner)


if __name__ == "__main__":
    main()
