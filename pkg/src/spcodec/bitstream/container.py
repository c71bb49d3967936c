"""``.spc`` container: header plus three length-prefixed segments.

Byte layout, all integers big-endian:

====== ============ ===================================================
offset size         field
====== ============ ===================================================
0      4            magic ``SPC1``
4      1            version (1)
5      4            width W
9      4            height H
13     2            class count N
15     2            prior channels C
17     4            quantization step, IEEE-754 binary32
21     ceil(N/8)    presence bitmap, class 0 in the MSB of the first byte
...    4 + len      map segment
...    4 + len      hyperprior segment
...    4 + len      prior segment
====== ============ ===================================================
"""

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import FormatError

MAGIC = b"SPC1"
VERSION = 1
_FIXED = struct.Struct(">4sBIIHHf")
SEGMENTS = ("map", "hyperprior", "prior")


@dataclass
class CodedImage:
    width: int
    height: int
    num_classes: int
    channels: int
    delta: float
    presence: np.ndarray
    map_segment: bytes
    hyper_segment: bytes
    prior_segment: bytes

    def segments(self):
        return dict(zip(SEGMENTS, (self.map_segment, self.hyper_segment, self.prior_segment)))

    @property
    def header_bytes(self):
        return _FIXED.size + bitmap_size(self.num_classes) + 4 * len(SEGMENTS)

    @property
    def total_bytes(self):
        return self.header_bytes + sum(len(s) for s in self.segments().values())


def bitmap_size(num_classes):
    return (num_classes + 7) // 8


def as_f32(value):
    return float(np.float32(value))


def pack(coded):
    """Serialize a :class:`CodedImage`."""
    if not coded.delta > 0:
        raise FormatError(f"quantization step must be positive, got {coded.delta}")
    presence = np.asarray(coded.presence, dtype=bool)
    if presence.shape != (coded.num_classes,):
        raise FormatError(f"presence has {presence.size} flags for {coded.num_classes} classes")
    out = bytearray(_FIXED.pack(MAGIC, VERSION, coded.width, coded.height,
                                coded.num_classes, coded.channels, coded.delta))
    out += np.packbits(presence).tobytes()
    for segment in coded.segments().values():
        out += struct.pack(">I", len(segment)) + bytes(segment)
    return bytes(out)


def unpack(data):
    """Parse ``.spc`` bytes into a :class:`CodedImage`; raises :class:`FormatError`."""
    data = bytes(data)
    if len(data) < _FIXED.size:
        raise FormatError(f"container header truncated ({len(data)} bytes)")
    magic, version, w, h, n, c, delta = _FIXED.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    if not (np.isfinite(delta) and delta > 0):
        raise FormatError(f"invalid quantization step {delta}")
    if w < 1 or h < 1 or n < 1 or c < 1:
        raise FormatError(f"invalid dimensions {w}x{h}, N={n}, C={c}")
    pos = _FIXED.size
    nbm = bitmap_size(n)
    if len(data) < pos + nbm:
        raise FormatError("presence bitmap truncated")
    presence = np.unpackbits(np.frombuffer(data, np.uint8, nbm, pos))[:n].astype(bool)
    pos += nbm
    segments = []
    for name in SEGMENTS:
        if len(data) < pos + 4:
            raise FormatError(f"{name} segment: length prefix truncated")
        (size,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if len(data) < pos + size:
            raise FormatError(f"{name} segment truncated: need {size} bytes, have {len(data) - pos}")
        segments.append(data[pos:pos + size])
        pos += size
    if pos != len(data):
        raise FormatError(f"{len(data) - pos} trailing bytes after prior segment")
    return CodedImage(w, h, n, c, float(delta), presence, *segments)
