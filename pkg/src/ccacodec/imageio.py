"""Binary PPM (P6) reading and writing for 8-bit RGB images."""

from __future__ import annotations

import os

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    out, pos = [], 0
    while len(out) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PPM header")
        out.append(buf[start:pos])
    return out, pos + 1


def decode_ppm(buf: bytes) -> np.ndarray:
    toks, pos = _tokens(buf, 4)
    if toks[0] != b"P6":
        raise ImageFormatError(f"not a binary PPM (magic {toks[0]!r})")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise ImageFormatError("malformed PPM header") from None
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM supported (maxval {maxval})")
    need = w * h * 3
    data = buf[pos:pos + need]
    if len(data) != need:
        raise ImageFormatError(f"PPM payload truncated: {len(data)} of {need} bytes")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ImageFormatError(f"expected HxWx3 uint8 image, got {img.shape} {img.dtype}")
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_ppm(f.read())


def write_ppm(path, img: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(img))


def list_images(path) -> list[str]:
    if os.path.isfile(path):
        return [os.fspath(path)]
    return sorted(os.path.join(path, f) for f in os.listdir(path) if f.lower().endswith(".ppm"))


def to_nchw(img: np.ndarray) -> np.ndarray:
    """HxWx3 uint8 -> (1, 3, H, W) float64 in [0, 255]."""
    return np.asarray(img, dtype=np.float64).transpose(2, 0, 1)[None]


def from_nchw(x: np.ndarray) -> np.ndarray:
    """(1, 3, H, W) float -> HxWx3 uint8, rounded and clamped."""
    return np.clip(np.round(np.asarray(x)[0].transpose(1, 2, 0)), 0, 255).astype(np.uint8)
