"""Adapter entry point.

    pyvictim --mock [--scene DIR] [--gain G]
    pyvictim --model random-cnn [--seed N] [--depth-scale S] [--device D]
    pyvictim --model <hf-checkpoint-id> [--depth-scale S] [--device D]

Serves the JSON-lines protocol on stdin/stdout until stdin closes.
Startup failures (for example an unloadable checkpoint) exit nonzero with
a message on stderr before any protocol traffic.
"""

from __future__ import annotations

import argparse
import sys

from .backends import BackendError, HfDepthBackend, MockBrightnessBackend, RandomCnnBackend
from .protocol import serve

DEFAULT_MODEL = "depth-anything/Depth-Anything-V2-Small-hf"


def build_backend(args):
    if args.mock:
        return MockBrightnessBackend(scene_dir=args.scene, gain=args.gain)
    model = args.model or DEFAULT_MODEL
    if model == "random-cnn":
        return RandomCnnBackend(seed=args.seed, depth_scale=args.depth_scale, device=args.device)
    return HfDepthBackend(model, depth_scale=args.depth_scale, device=args.device)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="pyvictim", description=__doc__)
    parser.add_argument("--mock", action="store_true",
                        help="serve the analytic brightness-biased estimator (no ML deps)")
    parser.add_argument("--scene", default=None,
                        help="scene bundle directory for the mock (depth_orig.pfm, depth_back.pfm)")
    parser.add_argument("--gain", type=float, default=1.0, help="mock brightness gain")
    parser.add_argument("--model", default=None,
                        help="'random-cnn' or a depth-estimation checkpoint id")
    parser.add_argument("--seed", type=int, default=0, help="weight seed for random-cnn")
    parser.add_argument("--depth-scale", type=float, default=10.0,
                        help="range relative depth is normalized onto")
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)

    try:
        backend = build_backend(args)
    except (BackendError, OSError, ValueError) as exc:
        print(f"pyvictim: cannot start backend: {exc}", file=sys.stderr)
        return 1

    print(f"pyvictim: serving {backend.name}", file=sys.stderr)
    serve(backend, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
