"""Campaign configuration and the synth -> process -> stats chain.

Every stage reads and writes files under ``<outdir>/{snapshots,pdps,reports}``.
Work is distributed per receiver; each worker owns its output files and the
reports are merged single-threaded, so results do not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import fileio
from .core import SPEED_OF_LIGHT, LosState, Scenario, WaveformSpec, demo_scenario
from .fileio import CorruptFile, SnapshotHeader
from .pipeline import (
    CalibrationRecord,
    ThresholdConfig,
    apply_drift,
    compute_pdp,
    estimate_drift,
    estimate_noise_floor,
    first_peak_delay,
    preprocess_spectra,
    remove_precursors,
    ssa_average,
    threshold_and_gate,
)
from .stats import (
    EmpiricalCDF,
    FitError,
    LowDynamicRange,
    average_path_gain,
    fit_ds_distribution,
    fit_ds_vs_distance,
    fit_pathloss,
    path_gain,
    q_tap,
    q_window,
    rms_delay_spread,
    to_dbs,
)
from .synth import (
    ImpairmentConfig,
    PathConfig,
    drift_series,
    inject_impairments,
    noise_floor_series,
    paths_to_transfer_function,
    synth_paths,
)
from .waveform import generate_multitone

log = logging.getLogger(__name__)

REASONS = ("CENSORED", "LOW_DYNAMIC_RANGE", "DRIFT_EXTRAPOLATED", "EMPTY_WINDOW", "CORRUPT_FILE",
           "OLOS_EXCLUDED")


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


class FitFailure(RuntimeError):
    pass


def _default_stats() -> dict:
    return {
        "pathloss_bin_width": 2.0,
        "ds_bin_width": 5.0,
        "sir_db": [5.0, 10.0, 15.0, 20.0],
        "outage_percentile": 90.0,
        "pool_olos": True,
        "ci": "bootstrap",
        "n_bootstrap": 1000,
        "restrict_ranges": False,
        "los_range": [12.0, 178.0],
        "nlos_range": [20.0, 262.0],
        "min_dynamic_range_db": 20.0,
        "min_ds_samples": 30,
    }


def _default_processing() -> dict:
    return {"oversample": 10, "kaiser_beta": 3.0, "drift_correction": True, "precursor_removal": True,
            "drift_search_m": 15.0}


@dataclass
class CampaignConfig:
    """All numeric settings of a campaign run.

    ``scenario`` points to a scenario JSON; when ``None`` the built-in demo
    layout is used with the ``demo`` parameters. Sub-dictionaries map onto
    :class:`WaveformSpec`, :class:`PathConfig`, :class:`ImpairmentConfig` and
    :class:`ThresholdConfig` field names.
    """

    outdir: str = "campaign"
    seed: int = 0
    scenario: str | None = None
    demo: dict = field(default_factory=lambda: {"n_snapshots": None, "n_ues": 8, "speed": 0.5,
                                                "burst_rate": 10.0})
    waveform: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)
    impairments: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=lambda: {"ripple_db": 0.0})
    threshold: dict = field(default_factory=dict)
    processing: dict = field(default_factory=_default_processing)
    stats: dict = field(default_factory=_default_stats)
    ground_truth_paths: bool = True

    def __post_init__(self):
        self.processing = {**_default_processing(), **self.processing}
        self.stats = {**_default_stats(), **self.stats}
        self.validate()

    # -- construction -----------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def with_override(self, key: str, value) -> "CampaignConfig":
        """Return a copy with dotted ``key`` (e.g. ``stats.sir_db``) set to ``value``."""
        d = json.loads(json.dumps(self.to_dict()))
        parts = key.split(".")
        node = d
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"cannot override {key!r}")
            node = node[p]
        if len(parts) == 1 and parts[0] not in d:
            raise ConfigError(f"unknown config key {key!r}")
        node[parts[-1]] = value
        return CampaignConfig.from_dict(d)

    def validate(self) -> None:
        try:
            self.waveform_spec()
            self.path_config()
            self.impairment_config()
            self.threshold_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.stats["sir_db"]:
            raise ConfigError("SIR list must not be empty")
        if self.scenario is not None and not Path(self.scenario).exists():
            raise ConfigError(f"scenario file {self.scenario} does not exist")
        if int(self.processing["oversample"]) < 1:
            raise ConfigError("oversample must be >= 1")

    # -- typed views -------------------------------------------------------
    def waveform_spec(self) -> WaveformSpec:
        return WaveformSpec(**self.waveform)

    def path_config(self) -> PathConfig:
        return PathConfig(**self.paths)

    def impairment_config(self) -> ImpairmentConfig:
        imp = dict(self.impairments)
        imp.setdefault("repetitions", self.waveform_spec().repetitions_per_burst)
        return ImpairmentConfig(**imp)

    def threshold_config(self) -> ThresholdConfig:
        t = dict(self.threshold)
        if "noise_region" in t:
            t["noise_region"] = tuple(t["noise_region"])
        return ThresholdConfig(**t)

    def build_scenario(self) -> Scenario:
        if self.scenario is not None:
            return Scenario.load(self.scenario)
        return demo_scenario(**self.demo)

    def calibration_record(self, spec: WaveformSpec) -> CalibrationRecord:
        """Identity, or a smooth deterministic gain/phase ripple for testing de-embedding."""
        ripple = float(self.calibration.get("ripple_db", 0.0))
        n = spec.n_subcarriers
        if ripple == 0:
            return CalibrationRecord.identity(n)
        k = np.arange(n) / n
        gain = 10 ** (ripple * np.sin(2 * np.pi * 3 * k) / 20)
        return CalibrationRecord(gain * np.exp(0.3j * np.sin(2 * np.pi * 2 * k)))

    @property
    def dirs(self) -> tuple[Path, Path, Path]:
        root = Path(self.outdir)
        return root / "snapshots", root / "pdps", root / "reports"


def _map(fn, args: list, jobs: int) -> list:
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futs = [pool.submit(fn, *a) for a in args]
        return [f.result() for f in futs]


# -- synth ------------------------------------------------------------------

def _synth_receiver(cfg_dict: dict, j: int, drift: list, floors: list) -> list:
    cfg = CampaignConfig.from_dict(cfg_dict)
    sc = cfg.build_scenario()
    spec = cfg.waveform_spec()
    pcfg, icfg = cfg.path_config(), cfg.impairment_config()
    sounding = generate_multitone(spec).spectrum * cfg.calibration_record(spec).H_cal
    snapdir = cfg.dirs[0]
    truth = []
    for m in range(sc.n_snapshots):
        paths = synth_paths(sc, m, j, cfg.seed, pcfg)
        geo = sc.link(m, j)
        H = paths_to_transfer_function(paths, spec, float(sc.ap_times[m]))
        Y = inject_impairments(H, icfg, geo, cfg.seed, drift[m], floors[m])
        hdr = SnapshotHeader(m, j, float(sc.ap_times[m]), spec.n_subcarriers, spec.subcarrier_spacing,
                             icfg.repetitions)
        fileio.write_snapshot(snapdir / fileio.snapshot_name(m, j), hdr, Y.H * sounding)
        entry = {"m": m, "j": j, "los_state": geo.los_state.value, "olos": geo.olos,
                 "distance": geo.distance}
        if cfg.ground_truth_paths:
            entry["paths"] = paths.to_dict()["paths"]
        truth.append(entry)
    return truth


def cmd_synth(cfg: CampaignConfig, jobs: int = 1) -> dict:
    """Write one snapshot file per (m, j), the scenario, calibration and ground truth.

    Noise is added to the channel before the sounding sequence and
    calibration response are applied, i.e. it is referred to the channel.
    """
    snapdir = cfg.dirs[0]
    try:
        snapdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"unwritable output {snapdir}: {exc}") from exc
    sc = cfg.build_scenario()
    spec = cfg.waveform_spec()
    icfg = cfg.impairment_config()
    sc.save(snapdir / "scenario.json")
    fileio.write_calibration(snapdir / "calibration.json", cfg.calibration_record(spec))
    track = sc.along_track()
    drift = drift_series(sc.ap_times, track, icfg, cfg.seed)
    floors = noise_floor_series(sc.n_snapshots, icfg, cfg.seed)
    floors_arg = [None if not np.isfinite(f) else float(f) for f in floors]
    cfg_dict = cfg.to_dict()
    results = _map(_synth_receiver, [(cfg_dict, j, drift.tolist(), floors_arg)
                                     for j in range(sc.n_receivers)], jobs)
    links = [e for r in results for e in r]
    truth = {"seed": cfg.seed, "impairments": icfg.to_dict(), "waveform": spec.to_dict(),
             "drift_s": drift.tolist(), "drift_m": (drift * SPEED_OF_LIGHT).tolist(),
             "noise_floor_db": floors.tolist(), "along_track_m": track.tolist(), "links": links}
    (snapdir / "ground_truth.json").write_text(fileio.dump_json(truth))
    return {"files": sc.n_snapshots * sc.n_receivers, "snapshots": sc.n_snapshots,
            "receivers": sc.n_receivers}


# -- process ----------------------------------------------------------------

_SNAP_RE = re.compile(r"snap_m(\d+)_rx(\d+)\.csnd$")


def _snapshot_files(snapdir: Path) -> dict[int, list[tuple[int, Path]]]:
    out: dict[int, list] = {}
    for p in sorted(snapdir.glob("snap_*.csnd")):
        mt = _SNAP_RE.search(p.name)
        if mt:
            out.setdefault(int(mt.group(2)), []).append((int(mt.group(1)), p))
    return out


def _load(cfg: CampaignConfig, path: Path, spec: WaveformSpec, cal: CalibrationRecord, sounding):
    hdr, Y = fileio.read_snapshot(path)
    if hdr.n_subcarriers != spec.n_subcarriers or not math.isclose(hdr.subcarrier_spacing,
                                                                    spec.subcarrier_spacing):
        raise CorruptFile(f"{path.name}: waveform mismatch")
    spec_r = WaveformSpec(spec.n_subcarriers, spec.subcarrier_spacing, spec.center_frequency,
                          hdr.repetitions)
    H = preprocess_spectra(Y, cal, spec_r, cfg.processing["kaiser_beta"], int(cfg.processing["oversample"]),
                           sounding, hdr.m, hdr.j, hdr.timestamp)
    return hdr, H


def _anchor_receiver(cfg_dict: dict, j: int, files: list) -> tuple[dict, list]:
    """Stage 1: measured LOS offsets (m) for one receiver plus corrupt files."""
    cfg = CampaignConfig.from_dict(cfg_dict)
    snapdir = cfg.dirs[0]
    sc = Scenario.load(snapdir / "scenario.json")
    spec = cfg.waveform_spec()
    cal = fileio.read_calibration(snapdir / "calibration.json")
    sounding = generate_multitone(spec).spectrum
    search = cfg.processing["drift_search_m"] / SPEED_OF_LIGHT
    offsets, corrupt = {}, []
    for m, path in files:
        try:
            hdr, H = _load(cfg, path, spec, cal, sounding)
        except CorruptFile as exc:
            corrupt.append({"file": path.name, "reason": "CORRUPT_FILE", "detail": str(exc)})
            continue
        geo = sc.link(hdr.m, hdr.j)
        if geo.los_state != LosState.LOS:
            continue
        try:
            d = first_peak_delay(compute_pdp(H), geo.delay, search)
        except ValueError:
            continue
        offsets[hdr.m] = (d - geo.delay) * SPEED_OF_LIGHT
    return offsets, corrupt


def _process_receiver(cfg_dict: dict, j: int, files: list, drift_m: list, unreliable: list) -> dict:
    """Stage 2: drift-corrected PDPs, SSA windows, threshold/gate, records on disk."""
    cfg = CampaignConfig.from_dict(cfg_dict)
    snapdir, pdpdir, _ = cfg.dirs
    sc = Scenario.load(snapdir / "scenario.json")
    spec = cfg.waveform_spec()
    thr = cfg.threshold_config()
    cal = fileio.read_calibration(snapdir / "calibration.json")
    sounding = generate_multitone(spec).spectrum
    track = sc.along_track()
    pdps, ms = [], []
    for m, path in files:
        try:
            hdr, H = _load(cfg, path, spec, cal, sounding)
        except CorruptFile:
            continue
        if cfg.processing["drift_correction"]:
            H = apply_drift(H, drift_m[hdr.m])
        pdps.append(compute_pdp(H))
        ms.append(hdr.m)
    windows = ssa_average(pdps, track[ms], thr.ssa_window, origin=0.0) if pdps else []
    records, kept, events = [], [], []
    n_bins = 0
    for w in windows:
        if w.empty:
            events.append({"receiver": j, "window": w.index, "reason": "EMPTY_WINDOW"})
            continue
        members = [ms[k] for k in w.members]
        geos = [sc.link(m, j) for m in members]
        n_los = sum(g.los_state == LosState.LOS for g in geos)
        state = LosState.LOS if 2 * n_los >= len(geos) else LosState.NLOS
        los_delay = float(np.mean([g.delay for g in geos]))
        pdp = w.pdp
        nf = estimate_noise_floor(pdp, thr.noise_region)
        if cfg.processing["precursor_removal"] and state == LosState.LOS:
            pdp = remove_precursors(pdp, los_delay, thr.precursor_guard_bins)
        pdp = threshold_and_gate(pdp, thr, noise_floor=nf)
        n_bins = int(math.floor(thr.gate_delay / pdp.delay_bin)) + 1
        records.append({
            "window": w.index, "receiver": j, "center_m": w.center, "members": members,
            "los_state": state.value, "olos": any(g.olos for g in geos),
            "distance": float(np.mean([g.distance for g in geos])), "los_delay": los_delay,
            "drift_unreliable": bool(cfg.processing["drift_correction"]
                                     and any(unreliable[m] for m in members)),
            "noise_floor": pdp.noise_floor, "threshold": pdp.threshold, "gate_delay": pdp.gate_delay,
            "dynamic_range_db": pdp.dynamic_range_db, "peak_fraction": pdp.peak_fraction,
            "delay_bin": pdp.delay_bin, "oversample": pdp.oversample, "resolution": pdp.resolution,
        })
        kept.append(pdp)
    fileio.write_pdp_records(pdpdir, j, records, kept, n_bins)
    return {"receiver": j, "windows": len(records), "events": events}


def cmd_process(cfg: CampaignConfig, jobs: int = 1) -> dict:
    """Snapshot files -> per-receiver PDP records plus ``processing_log.json``."""
    snapdir, pdpdir, _ = cfg.dirs
    if not (snapdir / "calibration.json").exists():
        raise DataError(f"missing calibration record in {snapdir}")
    if not (snapdir / "scenario.json").exists():
        raise DataError(f"missing scenario in {snapdir}")
    groups = _snapshot_files(snapdir)
    if not groups:
        raise DataError(f"no snapshot files in {snapdir}")
    pdpdir.mkdir(parents=True, exist_ok=True)
    sc = Scenario.load(snapdir / "scenario.json")
    cfg_dict = cfg.to_dict()
    receivers = sorted(groups)
    stage1 = _map(_anchor_receiver, [(cfg_dict, j, groups[j]) for j in receivers], jobs)
    corrupt = [c for _, cs in stage1 for c in cs]
    for c in corrupt:
        log.warning("skipped %s: %s", c["file"], c["detail"])
    per_snap: dict[int, list] = {}
    for offs, _ in stage1:
        for m, v in offs.items():
            per_snap.setdefault(m, []).append(v)
    measured = np.full(sc.n_snapshots, np.nan)
    for m, vals in per_snap.items():
        measured[m] = float(np.median(vals))
    corr = estimate_drift(sc.ap_times, measured, sc.along_track())
    stage2 = _map(_process_receiver, [(cfg_dict, j, groups[j], corr.offsets.tolist(),
                                       corr.unreliable.tolist()) for j in receivers], jobs)
    events = [e for r in stage2 for e in r["events"]]
    doc = {
        "corrupt_files": corrupt,
        "events": events,
        "warnings": len(corrupt),
        "drift": {"anchors": int(corr.anchor.sum()), "unreliable": int(corr.unreliable.sum()),
                  "offsets_m": corr.offsets.tolist(), "measured_m": measured.tolist(),
                  "residual_rms_m": list(corr.residual_rms),
                  "residual_decorrelation_m": list(corr.residual_decorrelation)},
        "windows": {str(r["receiver"]): r["windows"] for r in stage2},
    }
    (pdpdir / "processing_log.json").write_text(fileio.dump_json(doc))
    return {"windows": sum(r["windows"] for r in stage2), "warnings": len(corrupt),
            "anchors": int(corr.anchor.sum())}


# -- stats ------------------------------------------------------------------

def _csv(rows: list, header: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


@dataclass
class StatsResult:
    pathloss: dict
    ds: dict
    qrows: list
    exclusions: list
    pl_rows: list
    ds_rows: list
    failures: list


def collect_stats(records: list, cfg: CampaignConfig, wavelength: float) -> StatsResult:
    """Reduce PDP records to fits, Q tables and the exclusion log.

    ``records`` is a list of ``(meta, pdp)`` pairs in receiver/window order.
    Each excluded window appears once in the exclusion log: drift
    extrapolation excludes it entirely; censored windows enter the pathloss
    fit only as censored samples; low dynamic range keeps it out of DS and Q.
    """
    st = cfg.stats
    exclusions, failures = [], []
    by_rx: dict[int, list] = {}
    eligible = []
    for meta, pdp in records:
        key = (meta["receiver"], meta["window"])
        state = meta["los_state"]
        if meta.get("drift_unreliable"):
            exclusions.append((*key, "DRIFT_EXTRAPOLATED"))
            continue
        if meta.get("olos") and not st["pool_olos"]:
            exclusions.append((*key, "OLOS_EXCLUDED"))
            continue
        s = path_gain(pdp, meta["distance"], state, meta["window"], meta["receiver"])
        by_rx.setdefault(meta["receiver"], []).append((meta["center_m"], s))
        if s.censored:
            exclusions.append((*key, "CENSORED"))
            continue
        try:
            ds = rms_delay_spread(pdp, st["min_dynamic_range_db"])
        except LowDynamicRange:
            exclusions.append((*key, "LOW_DYNAMIC_RANGE"))
            continue
        eligible.append((meta, pdp, ds))

    pg_window = cfg.threshold_config().pg_window_wavelengths * wavelength
    pg_samples = []
    for j in sorted(by_rx):
        centers = [c for c, _ in by_rx[j]]
        pg_samples.extend(average_path_gain([s for _, s in by_rx[j]], centers, pg_window))
    pl_rows = [(s.receiver, s.window, s.los_state.value, s.distance, s.pl_db, int(s.censored))
               for s in pg_samples]

    pathloss = {}
    for state, rng_key in ((LosState.LOS, "los_range"), (LosState.NLOS, "nlos_range")):
        samples = [s for s in pg_samples if s.los_state == state]
        if not samples:
            pathloss[state.value] = {"skipped": "no samples"}
            continue
        try:
            fit = fit_pathloss(samples, st["pathloss_bin_width"], state, ci=st["ci"],
                               n_bootstrap=int(st["n_bootstrap"]),
                               distance_range=tuple(st[rng_key]) if st["restrict_ranges"] else None,
                               seed=cfg.seed)
            pathloss[state.value] = fit.to_dict()
        except FitError as exc:
            pathloss[state.value] = {"failed": str(exc)}
            failures.append(f"pathloss {state.value}: {exc}")

    ds_out, qrows, ds_rows = {}, [], []
    for state in (LosState.LOS, LosState.NLOS):
        items = [e for e in eligible if e[0]["los_state"] == state]
        if not items:
            ds_out[state.value] = {"skipped": "no samples"}
            continue
        dbs = to_dbs(np.array([e[2] for e in items]))
        dist = np.array([e[0]["distance"] for e in items])
        block: dict = {"n_windows": len(items)}
        try:
            block["fit"] = fit_ds_distribution(dbs, state, int(st["min_ds_samples"])).to_dict()
        except FitError as exc:
            block["fit"] = {"failed": str(exc)}
            failures.append(f"ds {state.value}: {exc}")
        try:
            block["distance_fit"] = fit_ds_vs_distance(dbs, dist, st["ds_bin_width"]).to_dict()
        except FitError as exc:
            block["distance_fit"] = {"failed": str(exc)}
            failures.append(f"ds-distance {state.value}: {exc}")
        outage = {}
        for sir in st["sir_db"]:
            qw, qt = [], []
            for meta, pdp, _ in items:
                a, b = q_window(pdp, sir), q_tap(pdp, sir)
                qw.append(a)
                qt.append(b)
                qrows.append((f"{meta['receiver']}-{meta['window']}", state.value, float(sir), a, b))
            p = st["outage_percentile"] / 100
            outage[repr(float(sir))] = {"Q_win": EmpiricalCDF(qw).quantile(p),
                                        "Q_tap": EmpiricalCDF(qt).quantile(p)}
        block["q_outage"] = outage
        block["outage_percentile"] = st["outage_percentile"]
        ds_out[state.value] = block
        ds_rows.extend((state.value, float(d), float(x)) for d, x in zip(dist, dbs))
    qrows.sort(key=lambda r: (r[1], r[2], r[0]))
    return StatsResult(pathloss, ds_out, qrows, exclusions, pl_rows, ds_rows, failures)


def cmd_stats(cfg: CampaignConfig) -> dict:
    """PDP records -> report bundle. Raises :class:`FitFailure` after writing if any fit failed."""
    snapdir, pdpdir, repdir = cfg.dirs
    receivers = fileio.list_pdp_receivers(pdpdir) if pdpdir.exists() else []
    if not receivers:
        raise DataError(f"no PDP records in {pdpdir}")
    records = [r for j in receivers for r in fileio.read_pdp_records(pdpdir, j)]
    if not records:
        raise DataError("PDP records contain no windows")
    repdir.mkdir(parents=True, exist_ok=True)
    wavelength = cfg.waveform_spec().wavelength
    res = collect_stats(records, cfg, wavelength)

    (repdir / "pathloss_fit.json").write_text(fileio.dump_json(res.pathloss))
    (repdir / "ds_stats.json").write_text(fileio.dump_json(res.ds))
    (repdir / "qparams.csv").write_text(_csv(res.qrows, ["window_id", "state", "SIR_dB", "Q_win", "Q_tap"]))
    (repdir / "exclusions.csv").write_text(_csv(sorted(res.exclusions), ["receiver", "window", "reason"]))
    (repdir / "plot_pl_vs_distance.csv").write_text(
        _csv(res.pl_rows, ["receiver", "window", "state", "distance_m", "pl_db", "censored"]))
    (repdir / "plot_ds_vs_distance.csv").write_text(_csv(res.ds_rows, ["state", "distance_m", "ds_dbs"]))

    cdf_ds = []
    for state in (LosState.LOS, LosState.NLOS):
        vals = [x for s, _, x in res.ds_rows if s == state.value]
        if vals:
            cdf_ds.extend(EmpiricalCDF(vals).rows(state.value))
    (repdir / "cdf_ds.csv").write_text(_csv(cdf_ds, ["state", "ds_dbs", "cdf"]))
    cdf_q = []
    for state in ("LOS", "NLOS"):
        for sir in cfg.stats["sir_db"]:
            for col, name in ((3, "Q_win"), (4, "Q_tap")):
                vals = [r[col] for r in res.qrows if r[1] == state and r[2] == float(sir)]
                if vals:
                    cdf_q.extend((state, float(sir), name, x, f)
                                 for _, x, f in EmpiricalCDF(vals).rows())
    (repdir / "cdf_q.csv").write_text(_csv(cdf_q, ["state", "SIR_dB", "param", "bins", "cdf"]))
    plog = pdpdir / "processing_log.json"
    if plog.exists():
        dec = json.loads(plog.read_text())["drift"]["residual_decorrelation_m"]
        if dec:
            (repdir / "cdf_drift_decorrelation.csv").write_text(
                _csv(EmpiricalCDF(dec).rows("LOS"), ["state", "distance_m", "cdf"]))
    summary = {"windows": len(records), "excluded": len(res.exclusions), "failures": res.failures}
    (repdir / "summary.json").write_text(fileio.dump_json(summary))
    if res.failures:
        raise FitFailure("; ".join(res.failures))
    return summary


def cmd_all(cfg: CampaignConfig, jobs: int = 1) -> dict:
    out = {"synth": cmd_synth(cfg, jobs), "process": cmd_process(cfg, jobs)}
    out["stats"] = cmd_stats(cfg)
    return out
