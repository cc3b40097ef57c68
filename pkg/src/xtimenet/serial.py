"""Binary container used for checkpoints and preprocessed datasets.

Layout (all integers little-endian):

    bytes 0..7    magic b"XTNETC01" (container format version 1)
    bytes 8..15   uint64 header length H
    bytes 16..16+H  UTF-8 JSON header
    remainder     raw array payload

The JSON header carries ``kind`` (e.g. "checkpoint", "windows"), a
free-form ``meta`` dict, and a ``tensors`` table of
``{name, dtype, shape, offset}`` entries pointing into the payload.
Arrays are stored C-order with explicit little-endian dtypes, so a
write/read round trip is bit-exact. Header JSON is emitted with sorted
keys, making the bytes a pure function of the content.
"""

import json

import numpy as np

MAGIC = b"XTNETC01"

_DTYPES = {"<f8", "<f4", "<i8", "<i4"}


def write_container(path, kind, meta, arrays):
    """Write named arrays plus metadata; `arrays` is {name: ndarray}."""
    table = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype = arr.dtype.newbyteorder("<").str
        if dtype not in _DTYPES:
            raise ValueError(f"unsupported dtype {arr.dtype} for {name!r}")
        raw = np.ascontiguousarray(arr).astype(dtype, copy=False).tobytes()
        table.append({"name": name, "dtype": dtype,
                      "shape": list(arr.shape), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"format_version": 1, "kind": kind, "meta": meta,
                         "tensors": table}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for raw in chunks:
            fh.write(raw)


def read_container(path, expect_kind=None):
    """Return (meta, {name: ndarray}) from a container file."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != MAGIC:
            raise ValueError(f"{path}: not an xtimenet container "
                             f"(bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode())
        payload = fh.read()
    if header.get("format_version") != 1:
        raise ValueError(f"{path}: unsupported container version "
                         f"{header.get('format_version')}")
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise ValueError(f"{path}: expected kind {expect_kind!r}, found "
                         f"{header.get('kind')!r}")
    arrays = {}
    for entry in header["tensors"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        data = np.frombuffer(payload, dtype=dtype, count=count, offset=start)
        arrays[entry["name"]] = data.reshape(shape).copy()
    return header["meta"], arrays
