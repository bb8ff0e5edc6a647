"""Binary symbol-record format and JSON sidecar.

One acquisition run produces a flat little-endian binary file of fixed
31-byte records plus a JSON sidecar carrying run metadata.  Record layout
(struct format '<QIBBddB'):

    offset  size  field
    0       8     index   u64  global slot counter within the run
    8       4     frame   u32  frame number
    12      1     role    u8   0 reference, 1 guard, 2 signal, 3 vacuum
    13      1     symbol  u8   QPSK index 0..3, 255 when not applicable
    14      8     re      f64  measured quadrature Re(zeta), shot-noise units
    22      8     im      f64  measured quadrature Im(zeta)
    30      1     flags   u8   bit 0: disclosed for parameter estimation
                               bit 1: discarded by the key map

The file holds the simulation's joint view; per-party views (Alice never
sees zeta, Bob never sees symbol) are projections taken at load time by the
post-processing pipeline.  Dark calibration traces are stored as separate
files whose records all carry the vacuum role and a sidecar kind of
"dark".
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

RECORD_FORMAT = "<QIBBddB"
RECORD_SIZE = 31

RECORD_DTYPE = np.dtype([
    ("index", "<u8"),
    ("frame", "<u4"),
    ("role", "u1"),
    ("symbol", "u1"),
    ("re", "<f8"),
    ("im", "<f8"),
    ("flags", "u1"),
])
assert RECORD_DTYPE.itemsize == RECORD_SIZE

SYMBOL_NONE = 255
FLAG_DISCLOSED = 0x01
FLAG_DISCARDED = 0x02

SIDECAR_VERSION = 1


def make_records(index, frame, role, symbol, zeta, flags) -> np.ndarray:
    """Assemble a structured record array from per-field arrays.

    Integer inputs are cast to their exact field types directly; a float64
    intermediate would silently corrupt indices near 2^64.
    """
    n = len(np.atleast_1d(index))
    rec = np.zeros(n, dtype=RECORD_DTYPE)
    rec["index"] = np.asarray(index, dtype=np.uint64)
    rec["frame"] = np.asarray(frame, dtype=np.uint32)
    rec["role"] = np.asarray(role, dtype=np.uint8)
    rec["symbol"] = np.asarray(symbol, dtype=np.uint8)
    zeta = np.asarray(zeta)
    rec["re"] = zeta.real
    rec["im"] = zeta.imag
    rec["flags"] = np.asarray(flags, dtype=np.uint8)
    return rec


def zeta_of(records: np.ndarray) -> np.ndarray:
    return records["re"] + 1j * records["im"]


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(Path(path).suffix + ".json")


def write_records(path, records: np.ndarray, meta: dict) -> None:
    """Write the binary record file and its JSON sidecar.

    meta is stored under "meta"; the sidecar also records the format
    version, record count and byte layout so the file is self-describing.
    """
    path = Path(path)
    if records.dtype != RECORD_DTYPE:
        raise ValueError("records must use the canonical record dtype")
    records.tofile(path)
    sidecar = {
        "format": "dmcv-qkd symbol records",
        "version": SIDECAR_VERSION,
        "record_size": RECORD_SIZE,
        "struct": RECORD_FORMAT,
        "count": int(records.size),
        "meta": meta,
    }
    sidecar_path(path).write_text(json.dumps(sidecar, indent=1, sort_keys=True))


def read_records(path):
    """Read a record file; returns (records, meta).

    Validates the sidecar's record size and count against the binary file.
    A missing sidecar is an error: the metadata is part of the format.
    """
    path = Path(path)
    sc_path = sidecar_path(path)
    if not sc_path.exists():
        raise FileNotFoundError(f"missing sidecar {sc_path}")
    sidecar = json.loads(sc_path.read_text())
    if sidecar.get("record_size") != RECORD_SIZE:
        raise ValueError("sidecar record size mismatch")
    records = np.fromfile(path, dtype=RECORD_DTYPE)
    if sidecar.get("count") != records.size:
        raise ValueError(
            f"sidecar count {sidecar.get('count')} != file count {records.size}")
    return records, sidecar["meta"]


def signal_records(records: np.ndarray) -> np.ndarray:
    from .pulse import ROLE_SIGNAL

    return records[records["role"] == ROLE_SIGNAL]


def vacuum_records(records: np.ndarray) -> np.ndarray:
    from .pulse import ROLE_VACUUM

    return records[records["role"] == ROLE_VACUUM]


def disclosed_mask(records: np.ndarray) -> np.ndarray:
    return (records["flags"] & FLAG_DISCLOSED) != 0
