"""Readers and writers for binary Netpbm images (PPM/PGM) and Portable FloatMaps (PFM).

All array data is exchanged as numpy arrays with shape (height, width) or
(height, width, 3), rows top to bottom. 8-bit Netpbm samples map to floats
via /maxval on read and round(v * 255) on write. PFM files follow the
de-facto standard: float32 samples, rows stored bottom to top, scale line
sign encoding endianness (negative = little-endian).
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "read_ppm",
    "write_ppm",
    "read_pgm",
    "write_pgm",
    "read_pfm",
    "write_pfm",
]


class NetpbmError(ValueError):
    """Malformed or unsupported image file."""


def _read_token(f) -> bytes:
    # Netpbm headers are whitespace-delimited tokens; '#' starts a comment
    # that runs to end of line.
    tok = b""
    while True:
        c = f.read(1)
        if not c:
            if tok:
                return tok
            raise NetpbmError("unexpected end of header")
        if c == b"#":
            while c not in (b"\n", b""):
                c = f.read(1)
            continue
        if c.isspace():
            if tok:
                return tok
            continue
        tok += c


def _read_header(f, magic: bytes, n_fields: int) -> tuple[int, ...]:
    got = f.read(2)
    if got != magic:
        raise NetpbmError(f"bad magic {got!r}, expected {magic!r}")
    fields = []
    for _ in range(n_fields):
        tok = _read_token(f)
        try:
            fields.append(int(tok))
        except ValueError:
            raise NetpbmError(f"non-integer header field {tok!r}") from None
    return tuple(fields)


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM into a float64 (H, W, 3) array scaled to [0, 1]."""
    with open(path, "rb") as f:
        width, height, maxval = _read_header(f, b"P6", 3)
        if not (0 < maxval <= 255):
            raise NetpbmError(f"unsupported maxval {maxval} (8-bit only)")
        raw = f.read(width * height * 3)
    if len(raw) != width * height * 3:
        raise NetpbmError("truncated pixel data")
    img = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return img.astype(np.float64) / maxval


def write_ppm(path, image: np.ndarray) -> None:
    """Write a float (H, W, 3) array in [0, 1] as a binary P6 PPM."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise NetpbmError(f"expected (H, W, 3) array, got {image.shape}")
    q = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 PGM into a uint8 (H, W) array (raw sample values)."""
    with open(path, "rb") as f:
        width, height, maxval = _read_header(f, b"P5", 3)
        if not (0 < maxval <= 255):
            raise NetpbmError(f"unsupported maxval {maxval} (8-bit only)")
        raw = f.read(width * height)
    if len(raw) != width * height:
        raise NetpbmError("truncated pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, image: np.ndarray) -> None:
    """Write a uint8-compatible (H, W) array as a binary P5 PGM."""
    q = np.asarray(image)
    if q.ndim != 2:
        raise NetpbmError(f"expected (H, W) array, got {q.shape}")
    if q.dtype != np.uint8:
        q = np.clip(np.rint(q), 0, 255).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(q.tobytes())


def read_pfm(path) -> np.ndarray:
    """Read a PFM file into a float64 array, (H, W) for Pf or (H, W, 3) for PF."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic == b"PF":
            channels = 3
        elif magic == b"Pf":
            channels = 1
        else:
            raise NetpbmError(f"bad magic {magic!r}, expected b'PF' or b'Pf'")
        width = int(_read_token(f))
        height = int(_read_token(f))
        scale = float(_read_token(f))
        if scale == 0.0:
            raise NetpbmError("zero scale factor")
        count = width * height * channels
        raw = f.read(count * 4)
    if len(raw) != count * 4:
        raise NetpbmError("truncated sample data")
    endian = "<" if scale < 0 else ">"
    data = np.frombuffer(raw, dtype=f"{endian}f4").astype(np.float64)
    data = data.reshape(height, width, channels)
    data = data[::-1]  # PFM rows run bottom to top
    return data[:, :, 0] if channels == 1 else data


def write_pfm(path, data: np.ndarray) -> None:
    """Write a float (H, W) or (H, W, 3) array as a little-endian PFM (scale -1.0)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        magic, samples = b"Pf", data[:, :, None]
    elif data.ndim == 3 and data.shape[2] == 3:
        magic, samples = b"PF", data
    else:
        raise NetpbmError(f"expected (H, W) or (H, W, 3) array, got {data.shape}")
    h, w = samples.shape[:2]
    body = samples[::-1].astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(magic + f"\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(body)


def write_png(path, image: np.ndarray) -> None:
    """Write a float image in [0, 1] ((H, W) or (H, W, 3)) as an 8-bit PNG preview."""
    from PIL import Image  # previews only; keep import local

    q = np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0)
    Image.fromarray(q.astype(np.uint8)).save(path)
