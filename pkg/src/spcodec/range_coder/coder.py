"""Integer range coder with 64-bit low and byte-wise renormalization.

The encoder keeps ``low`` in a 64-bit window and ``range`` in [2**56, 2**64].
Carries are propagated directly into the bytes already written. The flush
writes exactly as many bytes as needed to pin a point inside the final
interval, so the stream length L obeys H <= L < H + 8 bits where H is the
table cross-entropy of the coded symbols.
"""

import bisect
import math

from ..errors import DecodeError
from .tables import PRECISION_BITS

WINDOW = 64
MASK = (1 << WINDOW) - 1
BOTTOM = 1 << (WINDOW - 8)
FULL = 1 << WINDOW
RAW_BITS = 16


def _flush_bytes(range_):
    return max(0, -(-(WINDOW + 1 - range_.bit_length()) // 8))


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = FULL
        self.out = bytearray()

    def _carry(self):
        self.low -= FULL
        i = len(self.out) - 1
        while self.out[i] == 0xFF:
            self.out[i] = 0
            i -= 1
        self.out[i] += 1

    def encode(self, start, freq, total):
        r = self.range // total
        self.low += r * start
        self.range = r * freq
        if self.low > MASK:
            self._carry()
        while self.range < BOTTOM:
            self.out.append(self.low >> (WINDOW - 8))
            self.low = (self.low << 8) & MASK
            self.range <<= 8

    def encode_symbol(self, value, table):
        index = value - table.q_min
        if 0 <= index < table.num_symbols:
            cdf = table.cdf
            self.encode(cdf[index], cdf[index + 1] - cdf[index], table.total)
            return
        if not table.has_escape:
            raise ValueError(f"symbol {value} outside [{table.q_min}, {table.q_max}] and table has no escape")
        if not -(1 << 31) <= value < (1 << 31):
            raise ValueError(f"escaped symbol {value} does not fit 32 bits")
        esc = table.num_symbols
        self.encode(table.cdf[esc], table.cdf[esc + 1] - table.cdf[esc], table.total)
        self.encode_raw(value & 0xFFFFFFFF, 32)

    def encode_raw(self, value, bits):
        for shift in range(bits - RAW_BITS, -1, -RAW_BITS):
            self.encode((value >> shift) & 0xFFFF, 1, 1 << RAW_BITS)

    def finish(self):
        k = _flush_bytes(self.range)
        unit = 1 << (WINDOW - 8 * k)
        value = -(-self.low // unit) * unit
        if value > MASK:
            self.low = value
            self._carry()
            value = self.low
        for i in range(k):
            self.out.append((value >> (WINDOW - 8 - 8 * i)) & 0xFF)
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data):
        self.data = bytes(data)
        self.range = FULL
        self.shifted = 0
        self.diff = int.from_bytes(self.data[:8].ljust(8, b"\0"), "big")
        self.pos = 8

    def _next_byte(self):
        b = self.data[self.pos] if self.pos < len(self.data) else 0
        self.pos += 1
        return b

    def decode_target(self, total):
        r = self.range // total
        target = self.diff // r
        if target >= total:
            raise DecodeError("range decoder: code value outside the interval (corrupt stream)")
        return target

    def consume(self, start, freq, total):
        r = self.range // total
        self.diff -= r * start
        self.range = r * freq
        while self.range < BOTTOM:
            self.diff = (self.diff << 8) | self._next_byte()
            self.range <<= 8
            self.shifted += 1
        if self.shifted > len(self.data):
            raise DecodeError("range decoder: read past end of stream")

    def decode_symbol(self, table):
        target = self.decode_target(table.total)
        cdf = table.cdf
        index = bisect.bisect_right(cdf, target) - 1
        start = cdf[index]
        self.consume(start, cdf[index + 1] - start, table.total)
        if index < table.num_symbols:
            return table.q_min + index
        raw = self.decode_raw(32)
        return raw - (1 << 32) if raw >= (1 << 31) else raw

    def decode_raw(self, bits):
        value = 0
        for _ in range(bits // RAW_BITS):
            chunk = self.decode_target(1 << RAW_BITS)
            self.consume(chunk, 1, 1 << RAW_BITS)
            value = (value << RAW_BITS) | chunk
        return value

    def finish(self):
        expected = self.shifted + _flush_bytes(self.range)
        if expected != len(self.data):
            raise DecodeError(f"range decoder: stream has {len(self.data)} bytes, symbols account for {expected}")


def _table_for(tables, i):
    return tables if hasattr(tables, "cdf") else tables[i]


def encode(symbols, tables):
    """Code ``symbols`` with one table per symbol (or one shared table)."""
    enc = RangeEncoder()
    for i, value in enumerate(symbols):
        enc.encode_symbol(int(value), _table_for(tables, i))
    return enc.finish()


def decode(data, tables, count=None):
    """Inverse of :func:`encode`. ``count`` defaults to ``len(tables)``."""
    if count is None:
        if hasattr(tables, "cdf"):
            raise ValueError("count is required with a single shared table")
        count = len(tables)
    dec = RangeDecoder(data)
    try:
        out = [dec.decode_symbol(_table_for(tables, i)) for i in range(count)]
    except IndexError as exc:
        raise DecodeError(f"range decoder: {exc}") from None
    dec.finish()
    return out


def table_cross_entropy(symbols, tables):
    """Ideal code length in bits of ``symbols`` under the integer tables."""
    bits = 0.0
    for i, value in enumerate(symbols):
        table = _table_for(tables, i)
        index = int(value) - table.q_min
        if not 0 <= index < table.num_symbols:
            index = table.num_symbols
            bits += 32
        freq = table.cdf[index + 1] - table.cdf[index]
        bits += PRECISION_BITS - math.log2(freq)
    return bits
