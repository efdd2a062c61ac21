"""Reference adapter shim: wraps a built-in metric behind the line protocol.

Run as ``python -m affineiq.adapter_shim rmse`` (or ``ssim``). Deep metrics
living in other environments can copy this file as a template: read PAIR
lines, compute a value, print DIST lines.
"""

from __future__ import annotations

import sys

from .imaging import load_image
from .metrics import builtin_handle, distance


def serve(metric_name: str, reported_name: str | None = None, scale: float = 1.0) -> int:
    handle = builtin_handle(metric_name)
    reported = reported_name or metric_name
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "HELLO":
            print(f"READY {reported} distance", flush=True)
        elif parts[0] == "PAIR":
            if len(parts) != 3:
                print("ERR malformed PAIR", flush=True)
                return 1
            value = scale * distance(handle, load_image(parts[1]), load_image(parts[2]))
            print(f"DIST {value!r}", flush=True)
        elif parts[0] == "BYE":
            return 0
        else:
            print(f"ERR unknown command {parts[0]}", flush=True)
            return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0] not in ("rmse", "ssim"):
        print("usage: python -m affineiq.adapter_shim {rmse|ssim} [--name NAME] [--scale S]", file=sys.stderr)
        return 2
    name = None
    scale = 1.0
    i = 1
    while i < len(argv):
        if argv[i] == "--name" and i + 1 < len(argv):
            name = argv[i + 1]
            i += 2
        elif argv[i] == "--scale" and i + 1 < len(argv):
            scale = float(argv[i + 1])
            i += 2
        else:
            print(f"unknown argument {argv[i]!r}", file=sys.stderr)
            return 2
    return serve(argv[0], name, scale)


if __name__ == "__main__":
    sys.exit(main())
