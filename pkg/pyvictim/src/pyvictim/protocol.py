"""The stdio serve loop for protocol version 1.

One JSON document per line on stdin, one per line on stdout:

    -> {"cmd": "hello", "version": 1}
    <- {"ok": true, "version": 1, "model": ..., "max_width": ..., "max_height": ...,
        "depth_scale": ..., "deterministic": ...}
    -> {"cmd": "estimate", "width": W, "height": H, "pixels": [...]}
    <- {"ok": true, "width": W, "height": H, "depth": [...]}

Malformed requests and backend failures answer {"ok": false, "error": ...}
and the loop keeps serving; it exits when stdin closes.
"""

from __future__ import annotations

import json

import numpy as np

from . import PROTOCOL_VERSION
from .backends import BackendError


def handle_request(backend, line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"ok": False, "error": f"malformed request: {exc}"}
    if not isinstance(msg, dict):
        return {"ok": False, "error": "request must be a JSON object"}

    cmd = msg.get("cmd")
    if cmd == "hello":
        if msg.get("version") != PROTOCOL_VERSION:
            return {"ok": False, "error": f"unsupported protocol version {msg.get('version')!r}"}
        return {
            "ok": True,
            "version": PROTOCOL_VERSION,
            "model": backend.name,
            "max_width": backend.max_width,
            "max_height": backend.max_height,
            "depth_scale": backend.depth_scale,
            "deterministic": bool(getattr(backend, "deterministic", False)),
        }
    if cmd == "estimate":
        return _estimate(backend, msg)
    return {"ok": False, "error": f"unknown command {cmd!r}"}


def _estimate(backend, msg: dict) -> dict:
    try:
        w, h = int(msg["width"]), int(msg["height"])
        pixels = msg["pixels"]
    except (KeyError, TypeError, ValueError) as exc:
        return {"ok": False, "error": f"bad estimate request: {exc}"}
    if w < 1 or h < 1:
        return {"ok": False, "error": "width and height must be positive"}
    if w > backend.max_width or h > backend.max_height:
        return {"ok": False, "error": f"{w}x{h} exceeds limits {backend.max_width}x{backend.max_height}"}
    if not isinstance(pixels, list) or len(pixels) != w * h * 3:
        got = len(pixels) if isinstance(pixels, list) else type(pixels).__name__
        return {"ok": False, "error": f"expected {w * h * 3} pixel values, got {got}"}
    try:
        image = np.asarray(pixels, dtype=np.float64).reshape(h, w, 3)
        depth = np.asarray(backend.estimate(image), dtype=np.float64)
    except BackendError as exc:
        return {"ok": False, "error": str(exc)}
    except Exception as exc:  # keep serving whatever the model throws
        return {"ok": False, "error": f"estimation failed: {type(exc).__name__}: {exc}"}
    if depth.shape != (h, w):
        return {"ok": False, "error": f"backend produced shape {depth.shape}, expected {(h, w)}"}
    depth = np.maximum(np.where(np.isfinite(depth), depth, 0.0), 0.0)
    return {"ok": True, "width": w, "height": h, "depth": depth.reshape(-1).tolist()}


def serve(backend, in_stream, out_stream) -> None:
    """Answer requests until the input stream closes."""
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        reply = handle_request(backend, line)
        out_stream.write(json.dumps(reply) + "\n")
        out_stream.flush()
