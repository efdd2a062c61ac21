"""Built-in human threshold constants and reference ellipses."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .chromatic import Ellipse
from .errors import ConfigError
from .imaging import Chromaticity


@dataclass(frozen=True)
class PhysicalThreshold:
    units: str
    literature: float
    natural: float
    natural_halfwidth: float


@dataclass(frozen=True)
class HumanReference:
    version: int
    d_tau: float
    d_tau_quartiles: tuple[float, float]
    physical: dict[str, PhysicalThreshold]
    ellipses: dict[str, Ellipse]

    def threshold_specs_axes(self) -> dict[str, float]:
        """Natural-threshold radii of the chromatic axes (yb = major, rg = minor)."""
        exp = self.ellipses["experimental"]
        return {"yb": exp.semi_major, "rg": exp.semi_minor}

    def chromatic_axis_directions(self) -> dict[str, tuple[float, float]]:
        exp = self.ellipses["experimental"]
        yb = (math.cos(exp.angle), math.sin(exp.angle))
        rg = (-yb[1], yb[0])
        return {"yb": yb, "rg": rg}


def _parse(payload: dict) -> HumanReference:
    try:
        d_tau = payload["d_tau"]
        physical = {
            fam: PhysicalThreshold(
                units=entry["units"],
                literature=float(entry["literature"]),
                natural=float(entry["natural"]),
                natural_halfwidth=float(entry["natural_halfwidth"]),
            )
            for fam, entry in payload["physical"].items()
        }
        ellipses = {
            name: Ellipse(
                center=Chromaticity(*entry["center"]),
                semi_major=float(entry["semi_major"]),
                semi_minor=float(entry["semi_minor"]),
                angle=float(entry["angle"]),
            )
            for name, entry in payload["ellipses"].items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed human reference file: {exc}") from exc
    return HumanReference(
        version=int(payload.get("version", 0)),
        d_tau=float(d_tau["center"]),
        d_tau_quartiles=(float(d_tau["quartile_lo"]), float(d_tau["quartile_hi"])),
        physical=physical,
        ellipses=ellipses,
    )


def load_human_reference(path: str | Path | None = None) -> HumanReference:
    """Load the bundled constants, or a user-supplied replacement file."""
    if path is None:
        text = resources.files("affineiq.data").joinpath("human_reference.json").read_text()
    else:
        text = Path(path).read_text()
    return _parse(json.loads(text))
