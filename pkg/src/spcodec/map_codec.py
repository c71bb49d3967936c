"""Lossless coding of semantic label maps.

Labels are visited in raster order and coded with an adaptive frequency model
selected by the (left, above) neighbour pair; neighbours outside the frame
count as label 0. Every count starts at 1 and the coded symbol's count grows
by ``INCREMENT``; counts are halved once a context total would exceed 2**16.
When context coding would be larger than the raw label bytes, the raw bytes
are stored instead.

Segment layout (big-endian)::

    u16 width | u16 height | u8 num_classes | u8 mode | u32 payload_len | payload
"""

import struct

import numpy as np

from .errors import DecodeError, FormatError
from .range_coder import RangeDecoder, RangeEncoder

MODE_CONTEXT = 0
MODE_RAW = 1
INCREMENT = 32
LIMIT = 1 << 16
_HEADER = struct.Struct(">HHBBI")


class _Model:
    __slots__ = ("counts", "total")

    def __init__(self, n):
        self.counts = [1] * n
        self.total = n

    def update(self, s):
        self.counts[s] += INCREMENT
        self.total += INCREMENT
        if self.total > LIMIT:
            self.counts = [(c + 1) >> 1 for c in self.counts]
            self.total = sum(self.counts)


def _context_payload(labels, n):
    h, w = labels.shape
    models = {}
    enc = RangeEncoder()
    rows = labels.tolist()
    prev = [0] * w
    for row in rows:
        left = 0
        for x, s in enumerate(row):
            key = left * n + prev[x]
            model = models.get(key)
            if model is None:
                model = models[key] = _Model(n)
            counts = model.counts
            enc.encode(sum(counts[:s]), counts[s], model.total)
            model.update(s)
            left = s
        prev = row
    return enc.finish()


def encode_map(labels, num_classes):
    """Serialize an (H, W) integer label array with labels < ``num_classes``."""
    labels = np.asarray(labels)
    if labels.ndim != 2 or min(labels.shape) < 1:
        raise ValueError(f"label map must be 2-D and non-empty, got shape {labels.shape}")
    h, w = labels.shape
    if not 1 <= num_classes <= 255:
        raise ValueError(f"num_classes must be in [1, 255], got {num_classes}")
    if h > 0xFFFF or w > 0xFFFF:
        raise ValueError(f"map {w}x{h} exceeds 65535 pixels per side")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError(f"labels must lie in [0, {num_classes})")
    labels = labels.astype(np.int64)
    payload = _context_payload(labels, num_classes)
    mode = MODE_CONTEXT
    if len(payload) > h * w:
        payload, mode = labels.astype(np.uint8).tobytes(), MODE_RAW
    return _HEADER.pack(w, h, num_classes, mode, len(payload)) + payload


def segment_length(data, offset=0):
    """Total byte length of the map segment starting at ``offset``."""
    if len(data) - offset < _HEADER.size:
        raise FormatError("map segment: truncated header")
    return _HEADER.size + _HEADER.unpack_from(data, offset)[4]


def decode_map(data):
    """Inverse of :func:`encode_map`; returns ``(labels, num_classes)``."""
    if len(data) < _HEADER.size:
        raise FormatError("map segment: truncated header")
    w, h, n, mode, size = _HEADER.unpack_from(data)
    payload = bytes(data[_HEADER.size:])
    if len(payload) != size:
        raise FormatError(f"map segment: payload is {len(payload)} bytes, header says {size}")
    if w < 1 or h < 1 or n < 1:
        raise FormatError(f"map segment: invalid dimensions {w}x{h}, {n} classes")
    if mode == MODE_RAW:
        if size != w * h:
            raise FormatError("map segment: raw payload size mismatch")
        labels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w).astype(np.int64)
        if labels.max() >= n:
            raise DecodeError("map segment: label out of range")
        return labels, n
    if mode != MODE_CONTEXT:
        raise FormatError(f"map segment: unknown mode {mode}")
    dec = RangeDecoder(payload)
    models = {}
    out = []
    prev = [0] * w
    for _ in range(h):
        row = []
        left = 0
        for x in range(w):
            key = left * n + prev[x]
            model = models.get(key)
            if model is None:
                model = models[key] = _Model(n)
            counts = model.counts
            target = dec.decode_target(model.total)
            s, start = 0, 0
            while start + counts[s] <= target:
                start += counts[s]
                s += 1
            dec.consume(start, counts[s], model.total)
            model.update(s)
            row.append(s)
            left = s
        out.append(row)
        prev = row
    dec.finish()
    return np.array(out, dtype=np.int64), n
