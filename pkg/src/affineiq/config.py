"""Run configuration: JSON or YAML file, documented key set.

Top-level keys:

    seed                 int, recorded in every output (default 0)
    output_dir           artifact directory
    pixels_per_degree    viewing geometry (default 32)
    datasets             [{name, dir, sample_count=250, pad_to=null, force_rgb=false}]
    rated_database       {csv, image_root, mos_higher_is_better=true}
    metrics              [{name, kind=builtin|external, command=[...], timeout=60}]
    families             subset of [translation, rotation, scale, illuminant]
    grid                 overrides for the intensity grids (see GridConfig)
    d_tau                {source: builtin} or {source: log, path: trials.jsonl}
    human_reference      optional path to a replacement constants file
    sensitivity          {k_lowest: 5}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .metrics import BUILTIN_METRICS, MetricHandle, builtin_handle
from .transforms import FAMILIES

DEFAULT_SAMPLE_COUNT = 250


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    dir: Path
    sample_count: int = DEFAULT_SAMPLE_COUNT
    pad_to: int | None = None
    force_rgb: bool = False


@dataclass(frozen=True)
class RatedDatabaseConfig:
    csv: Path
    image_root: Path
    mos_higher_is_better: bool = True


@dataclass(frozen=True)
class DTauConfig:
    source: str = "builtin"  # builtin | log
    path: Path | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int
    output_dir: Path
    pixels_per_degree: float
    datasets: tuple[DatasetConfig, ...]
    rated: RatedDatabaseConfig | None
    metrics: tuple[MetricHandle, ...]
    families: tuple[str, ...]
    grid_overrides: dict
    d_tau: DTauConfig
    human_reference: Path | None
    k_lowest: int
    raw: dict = field(default_factory=dict, repr=False)


def _require(payload: dict, key: str):
    if key not in payload:
        raise ConfigError(f"missing required config key '{key}'")
    return payload[key]


def parse_config(payload: dict, base: Path) -> RunConfig:
    def respath(p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else base / p

    datasets = []
    for entry in _require(payload, "datasets"):
        d = DatasetConfig(
            name=str(_require(entry, "name")),
            dir=respath(_require(entry, "dir")),
            sample_count=int(entry.get("sample_count", DEFAULT_SAMPLE_COUNT)),
            pad_to=entry.get("pad_to"),
            force_rgb=bool(entry.get("force_rgb", False)),
        )
        if not d.dir.is_dir():
            raise ConfigError(f"dataset '{d.name}': directory {d.dir} does not exist")
        if d.sample_count < 1:
            raise ConfigError(f"dataset '{d.name}': sample_count must be >= 1")
        datasets.append(d)
    if not datasets:
        raise ConfigError("at least one dataset is required")
    if len({d.name for d in datasets}) != len(datasets):
        raise ConfigError("dataset names must be unique")

    rated = None
    if "rated_database" in payload:
        entry = payload["rated_database"]
        rated = RatedDatabaseConfig(
            csv=respath(_require(entry, "csv")),
            image_root=respath(_require(entry, "image_root")),
            mos_higher_is_better=bool(entry.get("mos_higher_is_better", True)),
        )
        if not rated.csv.is_file():
            raise ConfigError(f"rated database csv {rated.csv} does not exist")
        if not rated.image_root.is_dir():
            raise ConfigError(f"rated image root {rated.image_root} does not exist")

    metrics = []
    for entry in payload.get("metrics", [{"name": m} for m in BUILTIN_METRICS]):
        kind = entry.get("kind", "builtin")
        if kind == "builtin":
            metrics.append(builtin_handle(str(_require(entry, "name"))))
        else:
            metrics.append(
                MetricHandle(
                    name=str(_require(entry, "name")),
                    kind="external",
                    polarity=entry.get("polarity", "distance"),
                    adapter_command=tuple(str(a) for a in _require(entry, "command")),
                    timeout=float(entry.get("timeout", 60.0)),
                )
            )
    if len({m.name for m in metrics}) != len(metrics):
        raise ConfigError("metric names must be unique")

    families = tuple(payload.get("families", list(FAMILIES)))
    for fam in families:
        if fam not in FAMILIES:
            raise ConfigError(f"unknown family '{fam}'")

    d_tau_entry = payload.get("d_tau", {"source": "builtin"})
    source = d_tau_entry.get("source", "builtin")
    if source not in ("builtin", "log"):
        raise ConfigError(f"d_tau source must be 'builtin' or 'log', got '{source}'")
    d_tau_path = None
    if source == "log":
        d_tau_path = respath(_require(d_tau_entry, "path"))
        if not d_tau_path.is_file():
            raise ConfigError(f"d_tau trial log {d_tau_path} does not exist")

    href = payload.get("human_reference")
    href_path = respath(href) if href else None
    if href_path is not None and not href_path.is_file():
        raise ConfigError(f"human reference file {href_path} does not exist")

    return RunConfig(
        seed=int(payload.get("seed", 0)),
        output_dir=respath(_require(payload, "output_dir")),
        pixels_per_degree=float(payload.get("pixels_per_degree", 32.0)),
        datasets=tuple(datasets),
        rated=rated,
        metrics=tuple(metrics),
        families=families,
        grid_overrides=dict(payload.get("grid", {})),
        d_tau=DTauConfig(source=source, path=d_tau_path),
        human_reference=href_path,
        k_lowest=int(payload.get("sensitivity", {}).get("k_lowest", 5)),
        raw=payload,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        payload = yaml.safe_load(text)
    else:
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return parse_config(payload, path.parent.resolve())
