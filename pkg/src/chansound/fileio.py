"""Campaign file formats: snapshot bursts, calibration, PDP records, JSON helpers.

Snapshot file (little-endian)::

    magic  b"CSND"        4s
    version               u16
    reserved              u16
    m, j                  u32, u32
    timestamp             f64
    N_f                   u32
    subcarrier spacing    f64
    repetitions           u32
    header crc32          u32   (over the preceding bytes)
    payload crc32         u32
    payload               N_f * R complex128 as interleaved f64, frequency-major
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import LosState
from .pipeline import CalibrationRecord, PowerDelayProfile

MAGIC = b"CSND"
VERSION = 1
_HEAD = struct.Struct("<4sHHIIdIdI")
_CRC = struct.Struct("<II")


class CorruptFile(ValueError):
    """Malformed or checksum-failing campaign file."""


@dataclass(frozen=True)
class SnapshotHeader:
    m: int
    j: int
    timestamp: float
    n_subcarriers: int
    subcarrier_spacing: float
    repetitions: int
    version: int = VERSION


def snapshot_name(m: int, j: int) -> str:
    return f"snap_m{m:06d}_rx{j:02d}.csnd"


def write_snapshot(path, header: SnapshotHeader, spectra) -> Path:
    """``spectra`` is ``(R, N_f)``; it is stored frequency-major."""
    Y = np.atleast_2d(np.asarray(spectra, dtype=complex))
    if Y.shape != (header.repetitions, header.n_subcarriers):
        raise ValueError(f"spectra shape {Y.shape} does not match header")
    iq = np.empty((header.n_subcarriers, header.repetitions, 2), dtype="<f8")
    iq[..., 0] = Y.T.real
    iq[..., 1] = Y.T.imag
    payload = iq.tobytes()
    head = _HEAD.pack(MAGIC, header.version, 0, header.m, header.j, header.timestamp,
                      header.n_subcarriers, header.subcarrier_spacing, header.repetitions)
    path = Path(path)
    path.write_bytes(head + _CRC.pack(zlib.crc32(head), zlib.crc32(payload)) + payload)
    return path


def read_snapshot(path) -> tuple[SnapshotHeader, np.ndarray]:
    raw = Path(path).read_bytes()
    n0 = _HEAD.size + _CRC.size
    if len(raw) < n0:
        raise CorruptFile(f"{path}: truncated header")
    head = raw[:_HEAD.size]
    magic, ver, _, m, j, ts, nf, df, reps = _HEAD.unpack(head)
    crc_h, crc_p = _CRC.unpack(raw[_HEAD.size:n0])
    if magic != MAGIC:
        raise CorruptFile(f"{path}: bad magic")
    if zlib.crc32(head) != crc_h:
        raise CorruptFile(f"{path}: header checksum mismatch")
    if ver != VERSION:
        raise CorruptFile(f"{path}: unsupported version {ver}")
    payload = raw[n0:]
    if len(payload) != nf * reps * 16:
        raise CorruptFile(f"{path}: payload length {len(payload)} != {nf * reps * 16}")
    if zlib.crc32(payload) != crc_p:
        raise CorruptFile(f"{path}: payload checksum mismatch")
    iq = np.frombuffer(payload, dtype="<f8").reshape(nf, reps, 2)
    Y = (iq[..., 0] + 1j * iq[..., 1]).T.copy()
    return SnapshotHeader(m, j, ts, nf, df, reps, ver), Y


# -- calibration -------------------------------------------------------------

def write_calibration(path, cal: CalibrationRecord) -> Path:
    path = Path(path)
    doc = {"tx_port": cal.tx_port, "rx_port": cal.rx_port,
           "re": np.real(cal.H_cal).tolist(), "im": np.imag(cal.H_cal).tolist()}
    path.write_text(json.dumps(doc, sort_keys=True))
    return path


def read_calibration(path) -> CalibrationRecord:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing calibration record {path}")
    try:
        doc = json.loads(path.read_text())
        H = np.asarray(doc["re"], dtype=float) + 1j * np.asarray(doc["im"], dtype=float)
    except (KeyError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return CalibrationRecord(H, doc.get("tx_port", 0), doc.get("rx_port", 0))


# -- PDP records -------------------------------------------------------------

def pdp_names(j: int) -> tuple[str, str]:
    return f"pdp_rx{j:02d}.f64", f"pdp_rx{j:02d}.json"


def write_pdp_records(directory, j: int, records: list[dict], pdps: list[PowerDelayProfile],
                      n_bins: int) -> tuple[Path, Path]:
    """One row of ``n_bins`` float64 per window, with per-window metadata in JSON."""
    directory = Path(directory)
    bin_name, meta_name = pdp_names(j)
    rows = np.zeros((len(pdps), n_bins), dtype="<f8")
    for r, p in zip(rows, pdps):
        k = min(n_bins, len(p.power))
        r[:k] = p.power[:k]
    (directory / bin_name).write_bytes(rows.tobytes())
    doc = {"receiver": j, "n_bins": n_bins, "windows": records}
    (directory / meta_name).write_text(dump_json(doc))
    return directory / bin_name, directory / meta_name


def read_pdp_records(directory, j: int) -> list[tuple[dict, PowerDelayProfile]]:
    directory = Path(directory)
    bin_name, meta_name = pdp_names(j)
    doc = json.loads((directory / meta_name).read_text())
    raw = (directory / bin_name).read_bytes()
    n_bins = doc["n_bins"]
    wins = doc["windows"]
    if len(raw) != len(wins) * n_bins * 8:
        raise CorruptFile(f"{bin_name}: size does not match its metadata")
    rows = np.frombuffer(raw, dtype="<f8").reshape(len(wins), n_bins)
    out = []
    for meta, row in zip(wins, rows):
        f = {k: load_float(meta[k]) for k in ("noise_floor", "threshold", "gate_delay",
                                               "dynamic_range_db", "peak_fraction")}
        pdp = PowerDelayProfile(row.copy(), meta["delay_bin"], meta["oversample"], meta["resolution"],
                                window=meta["window"], **f)
        meta = dict(meta, los_state=LosState(meta["los_state"]))
        out.append((meta, pdp))
    return out


def list_pdp_receivers(directory) -> list[int]:
    return sorted(int(p.stem[len("pdp_rx"):]) for p in Path(directory).glob("pdp_rx*.json"))


# -- JSON ------------------------------------------------------------------

def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, LosState):
        return x.value
    return x


def dump_json(doc) -> str:
    """Deterministic JSON (sorted keys, non-finite floats as strings or null)."""
    return json.dumps(_clean(doc), indent=1, sort_keys=True, allow_nan=False) + "\n"


def load_float(x) -> float | None:
    """Inverse of the non-finite encoding used by :func:`dump_json`."""
    return None if x is None else float(x)
