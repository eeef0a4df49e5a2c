"""Minimal PFM/PGM readers for scene bundles.

Only what the mock backend needs: grayscale/color PFM (bottom-up rows,
negative scale = little-endian) and binary 8-bit PGM masks.
"""

from __future__ import annotations

import numpy as np


def _read_token(f) -> bytes:
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            if tok:
                return tok
            raise ValueError("unexpected end of header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise ValueError(f"not a PFM file: magic {magic!r}")
        width = int(_read_token(f))
        height = int(_read_token(f))
        scale = float(_read_token(f))
        if scale == 0.0:
            raise ValueError("zero PFM scale")
        raw = f.read(width * height * channels * 4)
    if len(raw) != width * height * channels * 4:
        raise ValueError("truncated PFM data")
    endian = "<" if scale < 0 else ">"
    data = np.frombuffer(raw, dtype=f"{endian}f4").astype(np.float64)
    data = data.reshape(height, width, channels)[::-1]
    return data[:, :, 0] if channels == 1 else data


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(2) != b"P5":
            raise ValueError("not a binary PGM file")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if not (0 < maxval <= 255):
            raise ValueError(f"unsupported PGM maxval {maxval}")
        raw = f.read(width * height)
    if len(raw) != width * height:
        raise ValueError("truncated PGM data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()
