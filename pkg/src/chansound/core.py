"""Shared domain types, scenario geometry and LOS/NLOS classification."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from shapely.geometry import LineString, Point, Polygon

# Sounder convention: delays and distances are converted with c = 3e8 m/s so that
# 1/350 MHz maps to 0.857 m and 8 us to 2400 m.
SPEED_OF_LIGHT = 3.0e8


class LosState(str, enum.Enum):
    LOS = "LOS"
    NLOS = "NLOS"


@dataclass(frozen=True)
class WaveformSpec:
    """Multitone sounding numerology.

    The occupied band spans ``(n_subcarriers - 1) * subcarrier_spacing``; this is
    the bandwidth used for the delay resolution.
    """

    n_subcarriers: int = 2801
    subcarrier_spacing: float = 125e3
    center_frequency: float = 3.5e9
    repetitions_per_burst: int = 10

    def __post_init__(self):
        if self.n_subcarriers < 1:
            raise ValueError("n_subcarriers must be >= 1")
        if self.subcarrier_spacing <= 0:
            raise ValueError("subcarrier_spacing must be positive")
        if self.repetitions_per_burst < 1:
            raise ValueError("repetitions_per_burst must be >= 1")

    @property
    def duration(self) -> float:
        return 1.0 / self.subcarrier_spacing

    @property
    def bandwidth(self) -> float:
        return max(self.n_subcarriers - 1, 1) * self.subcarrier_spacing

    @property
    def resolution(self) -> float:
        """Resolvable delay bin (s) before window broadening."""
        return 1.0 / self.bandwidth

    @property
    def max_excess_delay(self) -> float:
        return self.duration

    @property
    def unambiguous_range(self) -> float:
        return SPEED_OF_LIGHT * self.duration

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    def baseband_offsets(self) -> np.ndarray:
        """Integer subcarrier offsets from the centre tone."""
        return np.arange(self.n_subcarriers) - self.n_subcarriers // 2

    def frequencies(self) -> np.ndarray:
        return self.center_frequency + self.baseband_offsets() * self.subcarrier_spacing

    def to_dict(self) -> dict:
        return {
            "n_subcarriers": self.n_subcarriers,
            "subcarrier_spacing": self.subcarrier_spacing,
            "center_frequency": self.center_frequency,
            "repetitions_per_burst": self.repetitions_per_burst,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WaveformSpec":
        return cls(
            n_subcarriers=int(d.get("n_subcarriers", 2801)),
            subcarrier_spacing=float(d.get("subcarrier_spacing", 125e3)),
            center_frequency=float(d.get("center_frequency", 3.5e9)),
            repetitions_per_burst=int(d.get("repetitions_per_burst", 10)),
        )


def _check_polygon(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    if not Polygon(v).is_valid:
        raise ValueError("polygon is not simple")
    return v


@dataclass(frozen=True)
class Building:
    vertices: np.ndarray
    height: float

    def __post_init__(self):
        object.__setattr__(self, "vertices", _check_polygon(self.vertices))
        if self.height <= 0:
            raise ValueError("building height must be positive")

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)


@dataclass(frozen=True)
class Foliage:
    """Soft obstruction: a canopy prism between ``bottom`` and ``top`` metres."""

    vertices: np.ndarray
    top: float
    bottom: float = 0.0
    attenuation_db: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "vertices", _check_polygon(self.vertices))
        if self.top <= self.bottom:
            raise ValueError("foliage top must exceed bottom")
        if self.attenuation_db < 0:
            raise ValueError("foliage attenuation must be non-negative")

    @property
    def polygon(self) -> Polygon:
        return Polygon(self.vertices)


@dataclass(frozen=True)
class Scenario:
    buildings: tuple = ()
    ap_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    ap_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ue_positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    carrier_frequency: float = 3.5e9
    foliage: tuple = ()
    ue_ids: tuple = ()
    notes: str = ""

    def __post_init__(self):
        ap = np.asarray(self.ap_positions, dtype=float).reshape(-1, 3)
        t = np.asarray(self.ap_times, dtype=float).reshape(-1)
        ue = np.asarray(self.ue_positions, dtype=float).reshape(-1, 3)
        if len(ap) != len(t):
            raise ValueError("ap_positions and ap_times differ in length")
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("trajectory timestamps must be strictly increasing")
        if len(ap) and len(ue) and ap[:, 2].min() <= ue[:, 2].max():
            raise ValueError("AP heights must exceed UE heights")
        ids = tuple(self.ue_ids) if self.ue_ids else tuple(range(len(ue)))
        if len(ids) != len(ue):
            raise ValueError("ue_ids length mismatch")
        object.__setattr__(self, "ap_positions", ap)
        object.__setattr__(self, "ap_times", t)
        object.__setattr__(self, "ue_positions", ue)
        object.__setattr__(self, "ue_ids", ids)
        object.__setattr__(self, "buildings", tuple(self.buildings))
        object.__setattr__(self, "foliage", tuple(self.foliage))

    @property
    def n_snapshots(self) -> int:
        return len(self.ap_positions)

    @property
    def n_receivers(self) -> int:
        return len(self.ue_positions)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    def along_track(self) -> np.ndarray:
        """Cumulative AP distance travelled (m) at each snapshot."""
        steps = np.linalg.norm(np.diff(self.ap_positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    def link(self, m: int, j: int) -> "LinkGeometry":
        ap = self.ap_positions[m]
        ue = self.ue_positions[j]
        state, olos, _ = classify_link(self, ap, ue)
        return LinkGeometry(m, j, link_distance(ap, ue), state, olos,
                            ap_height=float(ap[2]), ue_height=float(ue[2]))

    # -- serialisation -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "carrier_frequency": self.carrier_frequency,
            "notes": self.notes,
            "buildings": [{"vertices": b.vertices.tolist(), "height": b.height}
                          for b in self.buildings],
            "foliage": [{"vertices": f.vertices.tolist(), "top": f.top, "bottom": f.bottom,
                         "attenuation_db": f.attenuation_db} for f in self.foliage],
            "ap_trajectory": [{"x": p[0], "y": p[1], "z": p[2], "t": t}
                              for p, t in zip(self.ap_positions.tolist(), self.ap_times.tolist())],
            "ues": [{"x": p[0], "y": p[1], "z": p[2], "id": i}
                    for p, i in zip(self.ue_positions.tolist(), self.ue_ids)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        traj = d.get("ap_trajectory", [])
        ues = d.get("ues", [])
        return cls(
            buildings=[Building(b["vertices"], b["height"]) for b in d.get("buildings", [])],
            foliage=[Foliage(f["vertices"], f["top"], f.get("bottom", 0.0),
                             f.get("attenuation_db", 10.0)) for f in d.get("foliage", [])],
            ap_positions=[[p["x"], p["y"], p["z"]] for p in traj],
            ap_times=[p["t"] for p in traj],
            ue_positions=[[u["x"], u["y"], u["z"]] for u in ues],
            ue_ids=tuple(u.get("id", i) for i, u in enumerate(ues)),
            carrier_frequency=float(d.get("carrier_frequency", 3.5e9)),
            notes=d.get("notes", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class LinkGeometry:
    m: int
    j: int
    distance: float
    los_state: LosState
    olos: bool = False
    ap_height: float | None = None
    ue_height: float | None = None

    def __post_init__(self):
        if self.ap_height is not None and self.ue_height is not None:
            if self.distance < abs(self.ap_height - self.ue_height) - 1e-9:
                raise ValueError("distance shorter than height difference")

    @property
    def delay(self) -> float:
        return self.distance / SPEED_OF_LIGHT


def link_distance(ap, ue) -> float:
    return float(np.linalg.norm(np.asarray(ap, dtype=float) - np.asarray(ue, dtype=float)))


def _crossing_params(poly: Polygon, a: np.ndarray, b: np.ndarray) -> list[tuple[float, float]]:
    """Parameter intervals [t0, t1] of segment a->b (ground plane) inside ``poly``."""
    d = b[:2] - a[:2]
    length = math.hypot(d[0], d[1])
    if length == 0.0:
        return [(0.0, 1.0)] if poly.covers(Point(a[:2])) else []
    inter = poly.intersection(LineString([a[:2], b[:2]]))
    if inter.is_empty:
        return []
    pieces = getattr(inter, "geoms", [inter])
    out = []
    for g in pieces:
        coords = np.asarray(g.coords)
        ts = ((coords - a[:2]) @ d) / (length * length)
        out.append((float(np.clip(ts.min(), 0, 1)), float(np.clip(ts.max(), 0, 1))))
    return out


def _blocked(poly: Polygon, bottom: float, top: float, a: np.ndarray, b: np.ndarray) -> bool:
    for t0, t1 in _crossing_params(poly, a, b):
        z0 = a[2] + t0 * (b[2] - a[2])
        z1 = a[2] + t1 * (b[2] - a[2])
        # segment height is linear in t: overlap with [bottom, top) over [t0, t1]
        if min(z0, z1) < top and max(z0, z1) >= bottom:
            return True
    return False


def classify_link(scenario: Scenario, ap, ue) -> tuple[LosState, bool, float]:
    """Return ``(state, olos, foliage_loss_db)`` for the straight AP-UE segment.

    NLOS if any building prism blocks the segment. Links crossing only foliage
    stay LOS but are flagged OLOS and carry the summed canopy attenuation.
    """
    a = np.asarray(ap, dtype=float)
    b = np.asarray(ue, dtype=float)
    if np.array_equal(a, b):
        raise ValueError("coincident endpoints")
    for bld in scenario.buildings:
        if _blocked(bld.polygon, -math.inf, bld.height, a, b):
            return LosState.NLOS, False, 0.0
    loss = 0.0
    olos = False
    for f in scenario.foliage:
        if _blocked(f.polygon, f.bottom, f.top, a, b):
            olos = True
            loss += f.attenuation_db
    return LosState.LOS, olos, loss


def classify_los(scenario: Scenario, ap, ue) -> LosState:
    return classify_link(scenario, ap, ue)[0]


def straight_trajectory(start, stop, speed: float = 0.5, burst_rate: float = 10.0,
                        t0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """AP samples along a straight line at constant speed; one sample per burst."""
    start = np.asarray(start, dtype=float)
    stop = np.asarray(stop, dtype=float)
    length = np.linalg.norm(stop - start)
    spacing = speed / burst_rate
    n = int(math.floor(length / spacing)) + 1
    s = np.arange(n) * spacing
    pos = start + np.outer(s / max(length, 1e-12), stop - start)
    return pos, t0 + s / speed


def polyline_trajectory(waypoints: Sequence, speed: float = 0.5,
                        burst_rate: float = 10.0) -> tuple[np.ndarray, np.ndarray]:
    wp = np.asarray(waypoints, dtype=float)
    seg = np.linalg.norm(np.diff(wp, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.arange(0.0, cum[-1] + 1e-9, speed / burst_rate)
    pos = np.column_stack([np.interp(s, cum, wp[:, k]) for k in range(3)])
    return pos, s / speed


def demo_scenario(n_snapshots: int | None = None, n_ues: int = 8,
                  speed: float = 0.5, burst_rate: float = 10.0) -> Scenario:
    """Two-block street layout with a tree line; a compact stand-in campaign."""
    buildings = [
        Building([[10, 10], [60, 10], [60, 50], [10, 50]], 16.0),
        Building([[70, 10], [120, 10], [120, 50], [70, 50]], 20.0),
        Building([[10, -60], [120, -60], [120, -20], [10, -20]], 14.0),
    ]
    foliage = [Foliage([[75, 55], [95, 55], [95, 60], [75, 60]], top=16.0, bottom=8.0,
                       attenuation_db=8.0)]
    waypoints = [[0, -5, 13], [130, -5, 13], [130, 57, 13], [0, 57, 13], [0, -5, 13]]
    pos, t = polyline_trajectory(waypoints, speed, burst_rate)
    if n_snapshots is not None:
        pos, t = pos[:n_snapshots], t[:n_snapshots]
    ue_x = np.linspace(20, 110, n_ues)
    ues = np.column_stack([ue_x, np.full(n_ues, 0.0), np.full(n_ues, 1.0)])
    return Scenario(buildings, pos, t, ues, 3.5e9, foliage,
                    notes="demo: street grid with a tree line")
