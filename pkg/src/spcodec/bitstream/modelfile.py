"""``.spm`` model files.

Byte layout, all integers big-endian:

====== ========== ====================================================
size   field      notes
====== ========== ====================================================
4      magic      ``SPM1``
2      version    1
4      L          length of the configuration JSON
L      config     UTF-8 JSON object, sorted keys
4      count      number of tensors
...    tensors    per tensor: u16 name length, UTF-8 name, u8 ndim,
                  ndim x u32 extents, float64 values (row-major)
32     checksum   SHA-256 of every preceding byte
====== ========== ====================================================
"""

import hashlib
import json
import struct

import numpy as np

from ..errors import ChecksumError, FormatError
from ..model import CodecConfig, expected_shapes
from ..numerics import ParamStore

MAGIC = b"SPM1"
VERSION = 1


def dumps(params, config):
    body = bytearray(MAGIC + struct.pack(">H", VERSION))
    cfg = json.dumps(config.to_dict(), sort_keys=True).encode()
    body += struct.pack(">I", len(cfg)) + cfg
    body += struct.pack(">I", len(params.params))
    for name in sorted(params.params):
        value = params.params[name]
        encoded = name.encode()
        body += struct.pack(">H", len(encoded)) + encoded
        body += struct.pack(">B", value.ndim) + struct.pack(f">{value.ndim}I", *value.shape)
        body += value.astype(">f8").tobytes()
    return bytes(body) + hashlib.sha256(body).digest()


def loads(data):
    """Return ``(params, config)``; verifies the checksum and declared shapes."""
    data = bytes(data)
    if len(data) < 4 + 2 + 4 + 32:
        raise FormatError("model file truncated")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("model file checksum mismatch")
    if body[:4] != MAGIC:
        raise FormatError(f"bad model magic {body[:4]!r}")
    (version,) = struct.unpack_from(">H", body, 4)
    if version != VERSION:
        raise FormatError(f"unsupported model version {version}")
    pos = 6
    try:
        (size,) = struct.unpack_from(">I", body, pos)
        config = CodecConfig(**json.loads(body[pos + 4:pos + 4 + size]))
        pos += 4 + size
        (count,) = struct.unpack_from(">I", body, pos)
        pos += 4
        store = ParamStore()
        for _ in range(count):
            (nlen,) = struct.unpack_from(">H", body, pos)
            name = body[pos + 2:pos + 2 + nlen].decode()
            pos += 2 + nlen
            (ndim,) = struct.unpack_from(">B", body, pos)
            shape = struct.unpack_from(f">{ndim}I", body, pos + 1)
            pos += 1 + 4 * ndim
            n = int(np.prod(shape))
            values = np.frombuffer(body, dtype=">f8", count=n, offset=pos).astype(np.float64)
            pos += 8 * n
            store.add(name, values.reshape(shape))
    except (struct.error, ValueError, TypeError, UnicodeDecodeError) as exc:
        raise FormatError(f"malformed model file: {exc}") from None
    if pos != len(body):
        raise FormatError("trailing bytes in model file")
    shapes = expected_shapes(config, factorized_prior="density.t.matrix0" in store)
    for name, shape in shapes.items():
        if name not in store or store[name].shape != shape:
            raise FormatError(f"parameter {name!r} missing or mis-shaped for the stored configuration")
    return store, config


def save_model(path, params, config):
    with open(path, "wb") as f:
        f.write(dumps(params, config))


def load_model(path):
    with open(path, "rb") as f:
        return loads(f.read())
