"""PGM (P2/P5) image files and raw float32 rasters.

PGM is the bit-exact interchange format: 8-bit or big-endian 16-bit
grayscale, normalized to [0, 1] on load. The ``.f32`` sidecar format keeps
unclipped float values for training (little-endian, header of width and
height as u32, then row-major float32 payload).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .image import Image


class ImageIoError(Exception):
    """Base class for image file errors."""


class UnsupportedFormatError(ImageIoError):
    pass


class MalformedHeaderError(ImageIoError):
    pass


class TruncatedPayloadError(ImageIoError):
    pass


def _read_header_tokens(buf: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """Read whitespace-separated integer tokens, skipping '#' comments."""
    tokens: list[int] = []
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeaderError("unexpected end of header")
        tok = buf[start:pos]
        try:
            tokens.append(int(tok))
        except ValueError:
            raise MalformedHeaderError(f"non-numeric header token {tok!r}") from None
    return tokens, pos


def load_image(path) -> Image:
    """Load a P2 (ASCII) or P5 (binary) PGM file, normalized to [0, 1]."""
    buf = Path(path).read_bytes()
    if len(buf) < 2:
        raise MalformedHeaderError("file too short for a PGM header")
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedFormatError(f"unsupported magic {magic!r}")
    try:
        (width, height, maxval), pos = _read_header_tokens(buf, 3, 2)
    except MalformedHeaderError:
        raise
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if maxval not in (255, 65535):
        raise MalformedHeaderError(f"unsupported maxval {maxval}")

    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        bytes_per = 1 if maxval == 255 else 2
        need = width * height * bytes_per
        payload = buf[pos : pos + need]
        if len(payload) < need:
            raise TruncatedPayloadError(
                f"expected {need} payload bytes, got {len(payload)}"
            )
        dtype = np.uint8 if maxval == 255 else np.dtype(">u2")
        values = np.frombuffer(payload, dtype=dtype).astype(np.float64)
    else:
        try:
            values_list, _ = _read_header_tokens(buf, width * height, pos)
        except MalformedHeaderError:
            raise TruncatedPayloadError("ASCII payload ended early") from None
        values = np.asarray(values_list, dtype=np.float64)
    if np.any(values < 0) or np.any(values > maxval):
        raise TruncatedPayloadError("sample value outside [0, maxval]")
    return Image(values.reshape(height, width) / maxval)


def save_image(img: Image, path, depth: str = "8bit") -> None:
    """Write binary P5; values are clamped to [0, 1] and rounded."""
    if depth not in ("8bit", "16bit"):
        raise ValueError(f"depth must be '8bit' or '16bit', got {depth!r}")
    maxval = 255 if depth == "8bit" else 65535
    q = np.rint(np.clip(img.data, 0.0, 1.0) * maxval)
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    payload = q.astype(np.uint8 if maxval == 255 else np.dtype(">u2")).tobytes()
    Path(path).write_bytes(header + payload)


def save_f32(img: Image, path) -> None:
    """Raw float32 raster: width u32, height u32, row-major payload (LE)."""
    header = struct.pack("<II", img.width, img.height)
    Path(path).write_bytes(header + img.data.astype("<f4").tobytes())


def load_f32(path) -> Image:
    buf = Path(path).read_bytes()
    if len(buf) < 8:
        raise MalformedHeaderError("f32 file too short for a header")
    width, height = struct.unpack("<II", buf[:8])
    need = 8 + 4 * width * height
    if len(buf) < need:
        raise TruncatedPayloadError(f"expected {need} bytes, got {len(buf)}")
    data = np.frombuffer(buf[8:need], dtype="<f4").astype(np.float64)
    return Image(data.reshape(height, width))
