"""Self-contained toy workspace: images, a synthetic rated database, a config.

The rated pairs use generic distortions (noise, contrast, blur) with opinion
scores that fall off nonlinearly with distortion amplitude, which is enough
to exercise equalization end to end without any external download.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
from scipy import ndimage

from .imaging import ImageBuffer, save_image


def _toy_image(rng, size: int) -> ImageBuffer:
    data = rng.random((size, size, 3))
    data = ndimage.gaussian_filter(data, sigma=(2.0, 2.0, 0))
    lo, hi = data.min(), data.max()
    return ImageBuffer((data - lo) / (hi - lo))


def _distort(img: ImageBuffer, kind: int, amplitude: float, rng) -> ImageBuffer:
    data = img.data
    if kind == 0:
        out = data + rng.normal(0, amplitude, data.shape)
    elif kind == 1:
        out = 0.5 + (data - 0.5) * (1.0 - amplitude)
    else:
        out = ndimage.gaussian_filter(data, sigma=(4.0 * amplitude, 4.0 * amplitude, 0))
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def make_demo_workspace(out_dir: Path, n_images: int = 10, size: int = 64, seed: int = 0) -> Path:
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)

    images_dir = out_dir / "data" / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    images = []
    for i in range(n_images):
        img = _toy_image(rng, size)
        save_image(img, images_dir / f"img{i:03d}.png")
        images.append(img)

    rated_dir = out_dir / "data" / "rated"
    rated_images = rated_dir / "images"
    rated_images.mkdir(parents=True, exist_ok=True)
    rows = []
    amplitudes = np.linspace(0.02, 0.45, 8)
    for i, img in enumerate(images):
        ref_rel = f"ref{i:03d}.png"
        save_image(img, rated_images / ref_rel)
        for j, amp in enumerate(amplitudes):
            kind = (i + j) % 3
            dist = _distort(img, kind, float(amp), rng)
            dist_rel = f"ref{i:03d}_d{j}.png"
            save_image(dist, rated_images / dist_rel)
            # opinion falls quickly at small amplitudes, then saturates
            visibility = min(1.0, (amp / 0.45) ** 0.55)
            mos = 9.0 - 8.0 * visibility + float(rng.normal(0, 0.08))
            rows.append({"reference": ref_rel, "distorted": dist_rel, "mos": f"{mos:.4f}"})
    with open(rated_dir / "rated.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["reference", "distorted", "mos"])
        writer.writeheader()
        writer.writerows(rows)

    config = {
        "seed": seed,
        "output_dir": "out",
        "pixels_per_degree": 32.0,
        "datasets": [{"name": "toy", "dir": "data/images", "sample_count": n_images}],
        "rated_database": {"csv": "data/rated/rated.csv", "image_root": "data/rated/images"},
        "metrics": [{"name": "rmse"}, {"name": "ssim"}],
        "families": ["translation", "rotation", "scale", "illuminant"],
        "grid": {
            "rotation_step": 0.5,
            "translation_steps": 6,
            "scale_max": 1.6,
            "hue_count": 20,
            "saturation_steps": 8,
        },
        "d_tau": {"source": "builtin"},
    }
    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(config, sort_keys=True, indent=1) + "\n")
    return config_path
