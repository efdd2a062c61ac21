import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

from affineiq.imaging import ImageBuffer, save_image


def random_image(rng, h=32, w=32, channels=3, smooth=True):
    """A random natural-ish patch: smoothed noise has content at all scales."""
    data = rng.random((h, w, channels))
    if smooth:
        from scipy import ndimage

        data = ndimage.gaussian_filter(data, sigma=(1.5, 1.5, 0))
        lo, hi = data.min(), data.max()
        data = (data - lo) / (hi - lo) if hi > lo else data
    return ImageBuffer(data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_toy_dataset(root: Path, n=10, size=64, seed=7, channels=3):
    """PNG image set used across pipeline-level tests."""
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(n):
        img = random_image(rng, size, size, channels)
        p = root / f"img{i:03d}.png"
        save_image(img, p)
        paths.append(p)
    return paths


def write_stub_adapter(path: Path, body: str) -> list[str]:
    """Create an executable stub adapter script and return its command."""
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


ECHO_ADAPTER = """\
    import sys

    values = {values!r}
    i = 0
    for line in sys.stdin:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "HELLO":
            print("READY {name} {polarity}", flush=True)
        elif parts[0] == "PAIR":
            print("DIST " + repr(values[i % len(values)]), flush=True)
            i += 1
        elif parts[0] == "BYE":
            sys.exit(0)
"""


def echo_adapter_command(tmp_path: Path, values, name="stub", polarity="distance"):
    script = tmp_path / "echo_adapter.py"
    return write_stub_adapter(
        script, ECHO_ADAPTER.format(values=list(values), name=name, polarity=polarity)
    )
