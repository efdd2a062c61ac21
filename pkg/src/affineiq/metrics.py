"""Distance metrics: built-in RMSE and SSIM, plus external adapter processes.

External (deep) metrics run out of process and speak a line-oriented protocol
over stdin/stdout:

    parent: HELLO 1
    child:  READY <name> <distance|similarity>
    parent: PAIR <ref_path> <dist_path>     (repeated, one outstanding at a time)
    child:  DIST <decimal float>
    parent: BYE                              (child exits 0)

Any other reply is a protocol error. Paths must not contain whitespace.
Similarity replies s are converted to distances 1 - s.
"""

from __future__ import annotations

import math
import queue
import subprocess
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import ArgumentError, MetricEvaluationError
from .imaging import ImageBuffer, load_image, luminance, rmse_energy, save_image, srgb_to_linear

BUILTIN_METRICS = ("rmse", "ssim")

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass(frozen=True)
class MetricHandle:
    """Identifies a metric and how to evaluate it."""

    name: str
    kind: str = "builtin"  # builtin | external
    polarity: str = "distance"  # distance | similarity
    adapter_command: tuple[str, ...] | None = None
    timeout: float = 60.0

    def __post_init__(self):
        if self.kind == "builtin":
            if self.name not in BUILTIN_METRICS:
                raise ArgumentError(f"unknown builtin metric '{self.name}'")
        elif self.kind == "external":
            if not self.adapter_command:
                raise ArgumentError("external metric needs an adapter command")
            object.__setattr__(self, "adapter_command", tuple(self.adapter_command))
        else:
            raise ArgumentError(f"unknown metric kind '{self.kind}'")
        if self.polarity not in ("distance", "similarity"):
            raise ArgumentError(f"unknown polarity '{self.polarity}'")


def builtin_handle(name: str) -> MetricHandle:
    polarity = "similarity" if name == "ssim" else "distance"
    return MetricHandle(name=name, kind="builtin", polarity=polarity)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


_SSIM_KERNEL = _gaussian_window()


def _windowed_mean(img: np.ndarray) -> np.ndarray:
    # separable Gaussian; only the fully-covered interior is kept
    half = SSIM_WINDOW // 2
    out = ndimage.correlate1d(img, _SSIM_KERNEL, axis=0, mode="constant")
    out = ndimage.correlate1d(out, _SSIM_KERNEL, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """SSIM map of two 2-D luminance arrays in [0, 1].

    Standard constants: 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
    dynamic range 1. Only fully-covered windows contribute.
    """
    if a.shape != b.shape:
        raise ArgumentError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ArgumentError(f"ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images")
    c1 = SSIM_K1 * SSIM_K1
    c2 = SSIM_K2 * SSIM_K2
    mu_a = _windowed_mean(a)
    mu_b = _windowed_mean(b)
    var_a = _windowed_mean(a * a) - mu_a * mu_a
    var_b = _windowed_mean(b * b) - mu_b * mu_b
    cov = _windowed_mean(a * b) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def _ssim_luminance(img: ImageBuffer) -> np.ndarray:
    return luminance(srgb_to_linear(img))


def ssim_similarity(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean SSIM over the luminance of linear RGB."""
    return float(np.mean(ssim_map(_ssim_luminance(a), _ssim_luminance(b))))


def distance(metric: MetricHandle, a: ImageBuffer, b: ImageBuffer) -> float:
    """Distance between two buffers; 0 for identical inputs.

    Similarity metrics are mapped through d = 1 - s so every metric grows
    with distortion. External metrics round-trip through temporary PNGs.
    """
    if a.data.shape != b.data.shape:
        raise ArgumentError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    if metric.kind == "builtin":
        if metric.name == "rmse":
            return rmse_energy(a, b)
        return 1.0 - ssim_similarity(a, b)
    with tempfile.TemporaryDirectory(prefix="affineiq-pair-") as td:
        pa = Path(td) / "ref.png"
        pb = Path(td) / "dist.png"
        save_image(a, pa)
        save_image(b, pb)
        return batch_distances(metric, [(pa, pb)])[0]


class AdapterSession:
    """One conversation with an external metric adapter process.

    A session is single-threaded: exactly one PAIR request is outstanding at
    any time. The full transcript is retained and attached to errors.
    """

    def __init__(self, command: Sequence[str], timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout
        self.transcript: list[str] = []
        self._queue: "queue.Queue[str | None]" = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise MetricEvaluationError(f"cannot start adapter {self.command}: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._send("HELLO 1")
        ready = self._recv()
        parts = ready.split()
        if len(parts) != 3 or parts[0] != "READY" or parts[2] not in ("distance", "similarity"):
            self._kill()
            raise MetricEvaluationError(
                f"bad handshake reply {ready!r}", transcript=self.transcript
            )
        self.name = parts[1]
        self.polarity = parts[2]

    def _pump(self):
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._queue.put(line.rstrip("\n"))
        self._queue.put(None)

    def _send(self, line: str):
        self.transcript.append(f"> {line}")
        try:
            assert self._proc.stdin is not None
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise MetricEvaluationError(
                f"adapter pipe closed: {exc}", transcript=self.transcript
            ) from exc

    def _recv(self) -> str:
        try:
            line = self._queue.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise MetricEvaluationError(
                f"adapter timed out after {self.timeout}s", transcript=self.transcript
            ) from None
        if line is None:
            raise MetricEvaluationError(
                "adapter closed its output stream", transcript=self.transcript
            )
        self.transcript.append(f"< {line}")
        return line

    def pair_distance(self, ref_path, dist_path) -> float:
        ref_path, dist_path = str(ref_path), str(dist_path)
        for p in (ref_path, dist_path):
            if any(ch.isspace() for ch in p):
                raise MetricEvaluationError(
                    f"path {p!r} contains whitespace, unsupported by the line protocol",
                    transcript=self.transcript,
                )
        self._send(f"PAIR {ref_path} {dist_path}")
        reply = self._recv()
        parts = reply.split()
        if len(parts) != 2 or parts[0] != "DIST":
            raise MetricEvaluationError(
                f"bad adapter reply {reply!r}", transcript=self.transcript
            )
        try:
            value = float(parts[1])
        except ValueError:
            raise MetricEvaluationError(
                f"non-numeric adapter value {parts[1]!r}", transcript=self.transcript
            ) from None
        if not math.isfinite(value):
            raise MetricEvaluationError(
                f"non-finite adapter value {value}", transcript=self.transcript
            )
        if self.polarity == "similarity":
            value = 1.0 - value
        return value

    def close(self):
        if self._proc.poll() is None:
            try:
                self._send("BYE")
            except MetricEvaluationError:
                pass
        try:
            code = self._proc.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            self._kill()
            raise MetricEvaluationError(
                "adapter did not exit after BYE", transcript=self.transcript
            ) from None
        if code != 0:
            raise MetricEvaluationError(
                f"adapter exited with status {code}", transcript=self.transcript
            )

    def _kill(self):
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._kill()
        return False


def batch_distances(metric: MetricHandle, pairs: Sequence[tuple]) -> list[float]:
    """Distances for (reference, distorted) path pairs, order-preserving.

    External adapters receive the whole batch over one session. Any failing
    pair aborts the batch; the error carries the failing index.
    """
    pairs = list(pairs)
    if not pairs:
        return []
    if metric.kind == "builtin":
        out = []
        for i, (ra, rb) in enumerate(pairs):
            try:
                out.append(distance(metric, load_image(ra), load_image(rb)))
            except Exception as exc:
                raise MetricEvaluationError(
                    f"builtin metric '{metric.name}' failed on pair {i}: {exc}", index=i
                ) from exc
        return out
    with AdapterSession(metric.adapter_command, timeout=metric.timeout) as session:
        out = []
        for i, (ra, rb) in enumerate(pairs):
            try:
                out.append(session.pair_distance(ra, rb))
            except MetricEvaluationError as exc:
                exc.index = i
                raise
        return out
