"""Binary PGM (P5) reading and writing.

The pipeline's universal pixel carrier is an 8-bit single-channel raster,
held as a 2-D uint8 numpy array (row-major, y-down).
"""

from __future__ import annotations

import numpy as np

from .exceptions import ParseError


def as_gray(img) -> np.ndarray:
    """Validate and return a 2-D grayscale raster.

    Accepts uint8 rasters as well as float rasters (useful for synthetic
    analysis inputs); no copy when the input already qualifies.
    """
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        from .exceptions import DimensionError

        raise DimensionError(f"expected a 2-D raster, got shape {arr.shape}")
    return arr


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM file into a uint8 array of shape (h, w)."""
    with open(path, "rb") as fh:
        data = fh.read()

    # header: magic, width, height, maxval — whitespace separated with
    # optional '#' comments; pixel data starts after the single whitespace
    # byte that terminates maxval
    pos = 0
    fields = []
    while len(fields) < 4:
        if pos >= len(data):
            raise ParseError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            fields.append(data[start:pos])
    pos += 1  # whitespace byte after maxval

    if fields[0] != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError as exc:
        raise ParseError(f"{path}: bad PGM header field") from exc
    if maxval <= 0 or maxval > 255:
        raise ParseError(f"{path}: unsupported maxval {maxval}")

    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise ParseError(f"{path}: expected {width * height} pixels, got {pixels.size}")
    return pixels.reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write a uint8 raster as binary PGM; floats are clipped to [0, 255]."""
    arr = as_gray(img)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(arr.tobytes())
