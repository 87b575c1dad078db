"""Binary checkpoint format.

All integers little-endian::

    magic      4 bytes  b"GGCK"
    version    u16      (1)
    count      u32      number of records
    record * count:
        name_len u16, name (utf-8), dtype u8, rank u8, dims u32 * rank,
        raw values (little-endian, C order)
    flag       u8       1 if Adam state follows, else 0
    [step u64, then for each float record in order: m values, v values]

dtype codes: 1 = float32, 2 = float64, 3 = uint8. A uint8 record named
``__config__`` carries the model configuration text so a checkpoint is
self-describing.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .optim import ParamStore

MAGIC = b"GGCK"
VERSION = 1
CONFIG_RECORD = "__config__"

_CODES = {np.dtype("<f4"): 1, np.dtype("<f8"): 2, np.dtype("u1"): 3}
_DTYPES = {v: k for k, v in _CODES.items()}


class CheckpointError(ValueError):
    pass


def _write_record(buf: bytearray, name: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr, order="C")
    dt = arr.dtype.newbyteorder("<") if arr.dtype.itemsize > 1 else arr.dtype
    code = _CODES.get(np.dtype(dt))
    if code is None:
        raise CheckpointError(f"unsupported dtype {arr.dtype} for {name!r}")
    raw_name = name.encode("utf-8")
    buf += struct.pack("<H", len(raw_name)) + raw_name
    buf += struct.pack("<BB", code, arr.ndim)
    buf += struct.pack(f"<{arr.ndim}I", *arr.shape)
    buf += arr.astype(dt, copy=False).tobytes()


def dumps(store: ParamStore, config_text: str | None = None, with_moments: bool = True) -> bytes:
    buf = bytearray()
    buf += MAGIC + struct.pack("<H", VERSION)
    count = len(store) + (1 if config_text is not None else 0)
    buf += struct.pack("<I", count)
    if config_text is not None:
        _write_record(buf, CONFIG_RECORD, np.frombuffer(config_text.encode("utf-8"), dtype=np.uint8))
    for name, t in store.items():
        _write_record(buf, name, t.data)
    has_moments = with_moments and bool(store.m)
    buf += struct.pack("<B", 1 if has_moments else 0)
    if has_moments:
        buf += struct.pack("<Q", store.step)
        dt = store.dtype.newbyteorder("<")
        for name in store:
            buf += store.m[name].astype(dt).tobytes()
            buf += store.v[name].astype(dt).tobytes()
    return bytes(buf)


def save(path, store: ParamStore, config_text: str | None = None, with_moments: bool = True) -> None:
    Path(path).write_bytes(dumps(store, config_text, with_moments))


def loads(data: bytes) -> tuple[ParamStore, str | None]:
    try:
        return _parse(data)
    except (struct.error, UnicodeDecodeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt or truncated checkpoint: {exc}") from None


def _parse(data: bytes) -> tuple[ParamStore, str | None]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 4
    (version,) = struct.unpack_from("<H", data, pos)
    pos += 2
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    records: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode("utf-8")
        pos += nlen
        code, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for {name!r}")
        dt = _DTYPES[code]
        n = int(np.prod(dims)) if rank else 1
        nbytes = n * dt.itemsize
        if pos + nbytes > len(data):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(data, dtype=dt, count=n, offset=pos).reshape(dims).copy()
        pos += nbytes
        records.append((name, arr))

    config_text = None
    float_records = []
    for name, arr in records:
        if name == CONFIG_RECORD:
            config_text = arr.tobytes().decode("utf-8")
        else:
            float_records.append((name, arr))
    dtype = float_records[0][1].dtype if float_records else np.dtype("<f8")
    store = ParamStore(dtype.newbyteorder("="))
    for name, arr in float_records:
        store.add(name, arr)

    (flag,) = struct.unpack_from("<B", data, pos)
    pos += 1
    if flag:
        (store.step,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        for name, t in store.items():
            n = t.data.size
            for target in (store.m, store.v):
                if pos + n * dtype.itemsize > len(data):
                    raise CheckpointError("truncated checkpoint (optimiser state)")
                arr = np.frombuffer(data, dtype=dtype, count=n, offset=pos)
                target[name] = arr.reshape(t.shape).astype(store.dtype)
                pos += n * dtype.itemsize
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after checkpoint")
    return store, config_text


def load(path) -> tuple[ParamStore, str | None]:
    return loads(Path(path).read_bytes())
