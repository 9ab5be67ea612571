"""Binary and CSV persistence for CIR datasets.

Binary layout, little-endian throughout::

    b"CIR1"  version:u16
    scenario   9 x f64, 3 x u32           (see _SCENARIO_F64 / _SCENARIO_U32)
    geometry   has:u8 [n:u32 alice:u32 bob:2xf64 positions:n x 2 x f64]
    metadata   seed:i64 kind:u8 eve_interval:u32
    count:u64
    records    node_id:u32 time_index:u32 is_alice:u8 then D x (re:f64, im:f64)
    crc32:u32  over every preceding byte
"""

from __future__ import annotations

import csv
import struct
import zlib

import numpy as np

from .channel import CirRecord, Dataset, NodeGeometry, ScenarioParams, static_scenario

MAGIC = b"CIR1"
VERSION = 1
KINDS = ("static", "mobile", "file")

_SCENARIO_F64 = ("carrier_frequency", "k_factor_db", "path_loss_exponent", "rms_delay_spread",
                 "mean_delay", "temporal_correlation", "noise_floor", "bandwidth",
                 "static_fraction")
_SCENARIO_U32 = ("num_taps", "cir_dim", "oversampling")


class DatasetFormatError(ValueError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class VersionError(DatasetFormatError):
    pass


class ChecksumError(DatasetFormatError):
    pass


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("node_id", "<u4"), ("time_index", "<u4"), ("is_alice", "u1"),
                     ("cir", "<f8", (dim, 2))])


def dumps(ds: Dataset) -> bytes:
    sc = ds.scenario
    dim = sc.cir_dim
    parts = [MAGIC, struct.pack("<H", VERSION),
             struct.pack("<9d", *(float(getattr(sc, f)) for f in _SCENARIO_F64)),
             struct.pack("<3I", *(int(getattr(sc, f)) for f in _SCENARIO_U32))]
    geo = ds.geometry
    if geo is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BII2d", 1, geo.num_nodes, geo.alice_node, *geo.bob_position))
        parts.append(np.ascontiguousarray(geo.node_positions, dtype="<f8").tobytes())
    parts.append(struct.pack("<qBI", ds.seed, KINDS.index(ds.kind), ds.eve_interval))
    parts.append(struct.pack("<Q", len(ds.records)))
    rec = np.zeros(len(ds.records), dtype=_record_dtype(dim))
    for i, r in enumerate(ds.records):
        if r.cir.shape != (dim,):
            raise DatasetFormatError(f"record {i} has length {r.cir.shape}, expected {dim}")
        rec[i] = (r.node_id, r.time_index, int(r.is_alice), np.column_stack([r.cir.real, r.cir.imag]))
    parts.append(rec.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(f"file truncated while reading {what}: need {n} bytes at "
                                     f"offset {self.pos}, only {len(self.buf) - self.pos} left")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def loads(buf: bytes) -> Dataset:
    rd = _Reader(buf)
    if rd.take(4, "magic") != MAGIC:
        raise DatasetFormatError("not a CIR dataset: bad magic")
    (version,) = rd.unpack("<H", "version")
    if version != VERSION:
        raise VersionError(f"unsupported dataset version {version}, expected {VERSION}")
    f64 = rd.unpack("<9d", "scenario block")
    u32 = rd.unpack("<3I", "scenario block")
    try:
        scenario = ScenarioParams(**dict(zip(_SCENARIO_F64, f64)), **dict(zip(_SCENARIO_U32, u32)))
    except ValueError as exc:
        raise DatasetFormatError(f"malformed scenario block: {exc}") from exc
    (has_geo,) = rd.unpack("<B", "geometry flag")
    geometry = None
    if has_geo == 1:
        n, alice, bx, by = rd.unpack("<II2d", "geometry block")
        pos = np.frombuffer(rd.take(16 * n, "node positions"), dtype="<f8").reshape(n, 2)
        try:
            geometry = NodeGeometry(pos.copy(), np.array([bx, by]), alice)
        except ValueError as exc:
            raise DatasetFormatError(f"malformed geometry block: {exc}") from exc
    elif has_geo != 0:
        raise DatasetFormatError(f"bad geometry flag {has_geo}")
    seed, kind, interval = rd.unpack("<qBI", "metadata")
    if kind >= len(KINDS):
        raise DatasetFormatError(f"unknown dataset kind code {kind}")
    (count,) = rd.unpack("<Q", "record count")
    dt = _record_dtype(scenario.cir_dim)
    rec = np.frombuffer(rd.take(count * dt.itemsize, "records"), dtype=dt)
    body_end = rd.pos
    (crc,) = rd.unpack("<I", "checksum")
    if rd.pos != len(buf):
        raise DatasetFormatError(f"{len(buf) - rd.pos} trailing bytes after checksum")
    if zlib.crc32(buf[:body_end]) != crc:
        raise ChecksumError("dataset checksum mismatch")
    records = [CirRecord(int(r["node_id"]), int(r["time_index"]),
                         r["cir"][:, 0] + 1j * r["cir"][:, 1], bool(r["is_alice"]))
               for r in rec]
    return Dataset(scenario, geometry, records, seed, KINDS[kind], interval)


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(ds))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return loads(fh.read())


def import_csv(path, scenario: ScenarioParams | None = None, seed: int = 0) -> Dataset:
    """Read externally measured CIRs: ``node_id,time_index,is_alice,re_0,im_0,...``.

    The CIR length comes from the header. Without ``scenario`` a placeholder
    with that ``cir_dim`` is attached; geometry is unknown and left ``None``.
    """
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None or header[:3] != ["node_id", "time_index", "is_alice"]:
            raise DatasetFormatError("CSV header must start with node_id,time_index,is_alice")
        pairs = header[3:]
        dim = len(pairs) // 2
        expected = [f"{p}_{i}" for i in range(dim) for p in ("re", "im")]
        if dim == 0 or pairs != expected:
            raise DatasetFormatError("CSV header must continue re_0,im_0,re_1,im_1,...")
        records = []
        for line, row in enumerate(rows, start=2):
            if len(row) != 3 + 2 * dim:
                raise DatasetFormatError(f"line {line}: expected {3 + 2 * dim} fields, got {len(row)}")
            try:
                vals = np.array(row[3:], dtype=float)
                flag = row[2].strip().lower()
                if flag not in ("0", "1", "true", "false"):
                    raise ValueError(f"is_alice must be 0/1/true/false, got {row[2]!r}")
                records.append(CirRecord(int(row[0]), int(row[1]), vals[0::2] + 1j * vals[1::2],
                                         flag in ("1", "true")))
            except ValueError as exc:
                raise DatasetFormatError(f"line {line}: {exc}") from exc
    if not records:
        raise DatasetFormatError("CSV contains no records")
    if scenario is None:
        scenario = static_scenario(cir_dim=dim, num_taps=min(dim, 24))
    elif scenario.cir_dim != dim:
        raise DatasetFormatError(f"CSV has {dim} taps but scenario cir_dim is {scenario.cir_dim}")
    return Dataset(scenario, None, records, seed, "file", 0)


def export_csv(ds: Dataset, path) -> None:
    dim = ds.scenario.cir_dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node_id", "time_index", "is_alice"]
                   + [f"{p}_{i}" for i in range(dim) for p in ("re", "im")])
        for r in ds.records:
            vals = np.column_stack([r.cir.real, r.cir.imag]).ravel()
            w.writerow([r.node_id, r.time_index, int(r.is_alice)] + [repr(float(v)) for v in vals])
