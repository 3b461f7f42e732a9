"""Byte-exact PPM image I/O.

Images are written as binary PPM (P6), 8-bit, row-major, no comments, so a
raster has exactly one on-disk form and file digests are stable. Masks are
read from P5 (graymap) or P6 files and thresholded at 128.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import SpecParseError, ValidationError
from .scales import ImageRaster


def ppm_bytes(raster: ImageRaster) -> bytes:
    h, w = raster.size
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    return header + raster.pixels.tobytes()


def write_ppm(raster: ImageRaster, path) -> str:
    """Write a P6 file and return its content digest."""
    data = ppm_bytes(raster)
    Path(path).write_bytes(data)
    return digest_bytes(data)


def digest_bytes(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def digest_file(path) -> str:
    return digest_bytes(Path(path).read_bytes())


def _parse_header(data: bytes, path) -> tuple[bytes, int, int, int]:
    # header = magic, width, height, maxval separated by single whitespace
    fields = []
    pos = 0
    while len(fields) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 4:
        raise SpecParseError(f"{path}: truncated PPM header")
    magic = fields[0]
    try:
        w, h, maxval = (int(f) for f in fields[1:4])
    except ValueError as exc:
        raise SpecParseError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit (maxval 255) PPM supported")
    return magic, w, h, pos + 1


def read_ppm(path) -> ImageRaster:
    data = Path(path).read_bytes()
    magic, w, h, offset = _parse_header(data, path)
    if magic != b"P6":
        raise SpecParseError(f"{path}: expected P6 magic, got {magic!r}")
    body = data[offset : offset + 3 * w * h]
    if len(body) != 3 * w * h:
        raise SpecParseError(f"{path}: pixel payload truncated")
    pixels = np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
    return ImageRaster(pixels.copy())


def read_mask(path) -> np.ndarray:
    """Read a P5 or P6 file as a binary mask: value >= 128 is foreground (1)."""
    data = Path(path).read_bytes()
    magic, w, h, offset = _parse_header(data, path)
    if magic == b"P5":
        body = data[offset : offset + w * h]
        if len(body) != w * h:
            raise SpecParseError(f"{path}: mask payload truncated")
        gray = np.frombuffer(body, dtype=np.uint8).reshape(h, w).astype(np.float64)
    elif magic == b"P6":
        gray = read_ppm(path).pixels.mean(axis=-1)
    else:
        raise SpecParseError(f"{path}: expected P5 or P6 magic, got {magic!r}")
    return (gray >= 128).astype(np.uint8)
