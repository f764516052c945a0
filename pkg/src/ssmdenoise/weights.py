"""Binary weight files.

Layout (all integers little-endian)::

    b"ATNN"  u32 version  u32 record_count
    record_count x { u16 name_len, name (utf-8), u8 dtype_tag, u8 rank,
                     u32 dims[rank], payload (little-endian, C order) }

dtype tags: 1 = float32, 2 = float64, 3 = uint8. The network config is
stored as a uint8 record named ``meta.config`` holding its JSON text, so a
file can be loaded without knowing the config in advance.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import default_config, dumps_config, loads_config
from .errors import ShapeMismatchError, VersionMismatchError, WeightFileError
from .network import Network, expected_shapes

MAGIC = b"ATNN"
VERSION = 1
CONFIG_RECORD = "meta.config"
DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("u1")}
TAGS = {v.str: k for k, v in DTYPES.items()}


def encode_records(records):
    out = [MAGIC, struct.pack("<II", VERSION, len(records))]
    for name, arr in records.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype
        tag = TAGS.get(np.dtype(dt).str)
        if tag is None:
            raise TypeError(f"{name}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<BB", tag, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=DTYPES[tag]).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise WeightFileError(f"weight file truncated at byte {self.pos} (needed {n} more)")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_records(data):
    rd = _Reader(data)
    if bytes(rd.take(4)) != MAGIC:
        raise WeightFileError("bad magic: not a weight file")
    version, count = rd.unpack("<II")
    if version != VERSION:
        raise VersionMismatchError(f"weight file version {version}, expected {VERSION}")
    records = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<H")
        try:
            name = bytes(rd.take(name_len)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightFileError("corrupt record name") from exc
        tag, rank = rd.unpack("<BB")
        if tag not in DTYPES:
            raise WeightFileError(f"{name}: unknown dtype tag {tag}")
        dims = rd.unpack(f"<{rank}I")
        dt = DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        records[name] = np.frombuffer(rd.take(nbytes), dtype=dt).reshape(dims).copy()
    if rd.pos != len(rd.data):
        raise WeightFileError(f"{len(rd.data) - rd.pos} trailing bytes after last record")
    return records


def network_records(net):
    records = {CONFIG_RECORD: np.frombuffer(dumps_config(net.config).encode(), dtype=np.uint8)}
    records.update(net.params)
    records.update(net.buffers)
    return records


def save_weights(net, sink):
    """Write ``net`` to a path or binary file object."""
    data = encode_records(network_records(net))
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        with open(sink, "wb") as f:
            f.write(data)


def load_weights(source, config=None):
    """Read a network from a path, bytes or binary file object.

    ``config`` overrides the embedded config (files without one fall back to
    the default config). Every expected tensor must be present with the
    expected shape.
    """
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as f:
            data = f.read()
    records = decode_records(data)
    meta = records.pop(CONFIG_RECORD, None)
    if config is None:
        config = loads_config(meta.tobytes().decode("utf-8")) if meta is not None else default_config()
    want_params, want_buffers = expected_shapes(config)
    want = {**want_params, **want_buffers}
    missing = sorted(set(want) - set(records))
    extra = sorted(set(records) - set(want))
    if missing or extra:
        raise ShapeMismatchError(f"tensor names do not match config (missing {missing[:5]}, unexpected {extra[:5]})")
    for name, shape in want.items():
        if records[name].shape != tuple(shape):
            raise ShapeMismatchError(f"{name}: file has shape {records[name].shape}, config needs {tuple(shape)}")
    params = {k: records[k].astype(np.float64, copy=False) for k in want_params}
    buffers = {k: records[k].astype(np.float64, copy=False) for k in want_buffers}
    return Network(config, params, buffers)
