"""FIDR binary record format and CSV interchange.

Layout (little endian):

    magic   4s   b"FIDR"
    version u32  = 1
    fs      f64  sample rate, Hz
    bits    u32  digitiser bit depth (0 encodes float mode)
    scale   f64  volts per code (NaN in float mode)
    count   u64  total sample count
    seg     3*u64  segment start offsets: detector-only, probe-on, FID
    payload count signed integers, bit depth rounded up to 16 or 32 bits
            (float mode: count f64 volts)

A JSON sidecar ``<path>.json`` carries the metadata dictionary and the
reference phase.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .signalsim import PolarimeterRecord

MAGIC = b"FIDR"
VERSION = 1
_HEADER = struct.Struct("<4sIdIdQQQQ")


def _container_dtype(bit_depth: int | None):
    if bit_depth is None:
        return np.dtype("<f8")
    if bit_depth <= 16:
        return np.dtype("<i2")
    return np.dtype("<i4")


def write_record(record: PolarimeterRecord, path) -> Path:
    """Write record + JSON sidecar; returns the binary path."""
    path = Path(path)
    bits = 0 if record.bit_depth is None else record.bit_depth
    scale = math.nan if record.scale is None else record.scale
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        record.fs,
        bits,
        scale,
        len(record.codes),
        0,
        record.probe_start,
        record.fid_start,
    )
    payload = np.asarray(record.codes).astype(_container_dtype(record.bit_depth))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.tobytes())
    sidecar = {
        "phi_0": record.phi_0,
        "metadata": _jsonable(record.metadata),
        "fs": record.fs,
        "bit_depth": record.bit_depth,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path


def read_record(path) -> PolarimeterRecord:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise ValidationError(f"{path}: truncated FIDR header")
    magic, version, fs, bits, scale, count, seg0, seg1, seg2 = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise ValidationError(f"{path}: not a FIDR file")
    if version != VERSION:
        raise ValidationError(f"{path}: unsupported FIDR version {version}")
    if seg0 != 0:
        raise ValidationError(f"{path}: malformed segment table")
    bit_depth = None if bits == 0 else int(bits)
    dtype = _container_dtype(bit_depth)
    expected = _HEADER.size + count * dtype.itemsize
    if len(blob) < expected:
        raise ValidationError(f"{path}: truncated FIDR payload")
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=_HEADER.size)
    codes = raw.astype(np.float64) if bit_depth is None else raw.astype(np.int32)

    phi_0 = 0.0
    metadata: dict = {}
    sidecar_path = Path(str(path) + ".json")
    if sidecar_path.exists():
        sidecar = json.loads(sidecar_path.read_text())
        phi_0 = sidecar.get("phi_0", 0.0)
        metadata = sidecar.get("metadata", {})
    return PolarimeterRecord(
        codes=codes,
        scale=None if bit_depth is None else scale,
        fs=fs,
        bit_depth=bit_depth,
        probe_start=int(seg1),
        fid_start=int(seg2),
        phi_0=phi_0,
        metadata=metadata,
    )


def write_record_csv(record: PolarimeterRecord, path) -> Path:
    """(t, V) export of the full record for interoperability."""
    path = Path(path)
    t = np.arange(len(record.codes)) / record.fs
    np.savetxt(path, np.column_stack([t, record.volts]), delimiter=",", header="t_s,v_volt", comments="")
    return path


def write_trace_csv(trace, path) -> Path:
    """(t, B) export of a field trace."""
    path = Path(path)
    np.savetxt(path, np.column_stack([trace.t, trace.samples]), delimiter=",", header="t_s,b_t", comments="")
    return path


def write_columns_csv(path, header: str, *columns) -> Path:
    path = Path(path)
    np.savetxt(path, np.column_stack(columns), delimiter=",", header=header, comments="")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
