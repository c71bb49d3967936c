"""Binary PPM (P6) and PGM (P5) reading and writing, 8-bit only."""

import numpy as np

from .errors import FormatError


def _read_tokens(data, count):
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated netpbm header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def _parse(data, magic, planes):
    if data[:2] != magic:
        raise FormatError(f"expected {magic.decode()} netpbm file, found {data[:2]!r}")
    tokens, offset = _read_tokens(data, 3)
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError("non-numeric netpbm header") from None
    if maxval != 255:
        raise FormatError(f"only 8-bit netpbm supported (maxval {maxval})")
    size = w * h * planes
    pixels = np.frombuffer(data, dtype=np.uint8, count=size, offset=offset) if len(data) - offset >= size else None
    if pixels is None:
        raise FormatError(f"netpbm payload truncated: need {size} bytes")
    return pixels, w, h


def read_ppm(path):
    """Return an RGB image as float64 (3, H, W) in [0, 1]."""
    with open(path, "rb") as f:
        pixels, w, h = _parse(f.read(), b"P6", 3)
    return pixels.reshape(h, w, 3).transpose(2, 0, 1) / 255.0


def write_ppm(path, image):
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    rgb = np.rint(img * 255.0).astype(np.uint8).transpose(1, 2, 0)
    h, w = rgb.shape[:2]
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(rgb.tobytes())


def read_pgm(path):
    """Return an (H, W) int64 array of 8-bit gray values (semantic labels)."""
    with open(path, "rb") as f:
        pixels, w, h = _parse(f.read(), b"P5", 1)
    return pixels.reshape(h, w).astype(np.int64)


def write_pgm(path, values):
    arr = np.asarray(values)
    if arr.min() < 0 or arr.max() > 255:
        raise ValueError("PGM values must lie in [0, 255]")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(arr.astype(np.uint8).tobytes())
