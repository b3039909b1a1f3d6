"""Experiment orchestration: calibration, defocus and filter sweeps, reports.

Every random draw comes from a counter-based stream keyed by integers, so a
result depends only on the configuration and master seed, never on the
order in which work items run. Stream keys:

* calibration exposure ``i``: ``(seed, CAL_TAG, i, role)``
* measurement frame ``f``: ``frame_seed = SeedSequence([seed, f])`` and then
  ``(frame_seed, dz_nm, plane, role)`` with ``plane`` 0 for +dz, 1 for -dz.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import fourier_shift

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigError
from .io import write_pgm
from .metrics import ensemble_stats, pearson, phase_step_estimate
from .optics import (PhaseMap, crop_center, defocused_intensities, embed_center,
                     gaussian_illumination, partial_coherence_blur, uniform_illumination)
from .photons import (add_read_noise, alpha_estimate, averaging_filter, filter_centroid_offset,
                      sample_multi_frame, sample_twin_frames)
from .samples import SAMPLE_VERSION, default_rois, make_sample
from .tie import (QuantumCorrection, TieOptions, axial_derivative, k_opt_from_stacks,
                  predicted_noise_reduction, quantum_subtract, solve_tie)

CAL_TAG = 0xCA1
# stream roles
SIGNAL_NOISE, IDLER_NOISE, TWIN, MULTI = 1, 2, 3, 4

METRIC_COLUMNS = ("dz_um", "mode", "d", "frame_seed", "pearson", "phase_step", "alpha", "k_opt")
SUMMARY_COLUMNS = ("dz_um", "mode", "d", "n", "pearson_mean", "pearson_std", "pearson_se",
                   "step_mean", "step_std", "step_se", "alpha", "k_opt")


def frame_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def dz_key(dz: float) -> int:
    """Integer stream key for a defocus, in nanometres."""
    return int(round(dz * 1000))


class Simulation:
    """Noiseless forward model for one configuration.

    Propagation runs on the enlarged simulation grid with the illumination
    extending over it, then the detection window is cropped. The Gaussian
    envelope is scaled so that the in-focus window mean equals ``n_mean``.
    """

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.grid = cfg.grid()
        self.sim_grid = cfg.sim_grid()
        self.src = cfg.source()
        self.sample = make_sample(cfg.sample_kind, cfg.step_rad, self.grid, cfg.sample_path)
        self.rois = default_rois(cfg.sample_kind, self.grid.shape)
        self._phase_big = PhaseMap(self.sim_grid, embed_center(self.sample.values, self.sim_grid.shape))
        if cfg.illumination == "uniform":
            illum = uniform_illumination(self.sim_grid, cfg.n_mean)
        else:
            illum = gaussian_illumination(self.sim_grid, cfg.resolved_fwhm(), 1.0)
            scale = cfg.n_mean / crop_center(illum.intensity, self.grid.shape).mean()
            illum = gaussian_illumination(self.sim_grid, cfg.resolved_fwhm(), scale)
        self._illum = illum
        self.in_focus = crop_center(illum.intensity, self.grid.shape).copy()
        self._cache = {}

    def defocus_pair(self, dz: float):
        """Noiseless window intensities ``(I(+dz), I(-dz))``."""
        key = dz_key(dz)
        if key not in self._cache:
            ip, im, _ = defocused_intensities(self._illum, self._phase_big, dz)
            if self.cfg.partial_coherence:
                sig = self.cfg.resolved_coherence_sigma()
                ip = partial_coherence_blur(ip, self.sim_grid, dz, sig)
                im = partial_coherence_blur(im, self.sim_grid, dz, sig)
            ip = np.maximum(crop_center(ip, self.grid.shape), 0.0)
            im = np.maximum(crop_center(im, self.grid.shape), 0.0)
            self._cache[key] = (ip, im)
        return self._cache[key]

    def alpha(self, dz: float) -> float:
        return alpha_estimate(self.in_focus, self.defocus_pair(dz)[0])

    def exposure(self, mean_signal, key):
        """Read-noise-added signal and aligned idler frames for one exposure."""
        twin = sample_twin_frames(mean_signal, self.in_focus, self.src, self.grid, (*key, TWIN))
        rn = self.src.read_noise_e
        sig = add_read_noise(twin.signal, rn, (*key, SIGNAL_NOISE))
        idl = add_read_noise(twin.aligned_idler(), rn, (*key, IDLER_NOISE))
        return sig, idl


@dataclass
class CalibrationRecord:
    """Object-free calibration of the twin-beam subtraction, per filter size.

    ``k_opt`` holds the gain used for reconstruction (scalar or map, before
    the alpha correction); ``eta_measured`` the pooled scalar gain, which
    estimates the heralding efficiency; ``noise_reduction`` the measured
    residual-to-signal variance ratio with that gain.
    """

    n_frames: int
    eta0: float
    k_opt: dict
    eta_measured: dict
    noise_reduction: dict
    idler_mean: dict = field(repr=False)
    signal_mean: dict = field(repr=False)
    alpha: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def scal(v):
            return float(v) if np.ndim(v) == 0 else float(np.mean(v))

        return {
            "n_frames": self.n_frames,
            "eta0": self.eta0,
            "k_opt": {str(d): scal(v) for d, v in self.k_opt.items()},
            "eta_measured": {str(d): v for d, v in self.eta_measured.items()},
            "noise_reduction": {str(d): v for d, v in self.noise_reduction.items()},
            "predicted_noise_reduction": {
                str(d): predicted_noise_reduction(min(max(v, 0.0), 1.0), 0.0)
                for d, v in self.eta_measured.items()},
            "alpha": {repr(dz): a for dz, a in self.alpha.items()},
        }


def calibrate(cfg: ExperimentConfig, n_frames: int | None = None, sim: Simulation | None = None) -> CalibrationRecord:
    """Estimate the subtraction gain from object-free twin exposures."""
    n = int(cfg.calibration_frames if n_frames is None else n_frames)
    if n < 2:
        raise ConfigError("calibration needs at least 2 frames")
    sim = sim or Simulation(cfg)
    frames = [sim.exposure(sim.in_focus, (cfg.seed, CAL_TAG, i)) for i in range(n)]
    rec = CalibrationRecord(n, sim.src.eta0, {}, {}, {}, {}, {})
    for d in cfg.filter_d:
        s = np.stack([averaging_filter(f[0], d).counts for f in frames])
        i = np.stack([averaging_filter(f[1], d).counts for f in frames])
        k_pool = k_opt_from_stacks(s, i)
        rec.eta_measured[d] = k_pool
        if cfg.k_mode == "map":
            rec.k_opt[d] = np.clip(k_opt_from_stacks(s, i, per_pixel=True), 0.0, 1.0)
        else:
            rec.k_opt[d] = float(np.clip(k_pool, 0.0, 1.0))
        i_mean = i.mean(axis=0)
        s_mean = s.mean(axis=0)
        resid = (s - s_mean) - k_pool * (i - i_mean)
        rec.noise_reduction[d] = float(np.sum(resid**2) / np.sum((s - s_mean) ** 2))
        rec.idler_mean[d] = i_mean
        rec.signal_mean[d] = s_mean
    rec.alpha = {dz: sim.alpha(dz) for dz in cfg.dz_um}
    return rec


def gain_for(cfg: ExperimentConfig, cal: CalibrationRecord, d: int, dz: float):
    """Subtraction gain used at filter ``d`` and defocus ``dz``."""
    if cfg.k_override is not None:
        return float(cfg.k_override)
    k = cal.k_opt[d]
    if cfg.k_alpha_correction:
        k = (1.0 - cal.alpha[dz]) * k
    return k


def recenter(phase: PhaseMap, d: int) -> PhaseMap:
    """Undo the sub-pixel shift of an even-sized averaging filter (periodic)."""
    off = filter_centroid_offset(d)
    if off == 0:
        return phase
    shifted = np.fft.ifft2(fourier_shift(np.fft.fft2(phase.values), (off, off))).real
    return PhaseMap(phase.grid, shifted)


def reconstruct_pair(plus, minus, dz: float, k_wave: float, in_focus, cfg: ExperimentConfig,
                     d: int = 1) -> PhaseMap:
    opts = TieOptions(dz=dz, k_wave=k_wave, regularization_eps=cfg.regularization_eps,
                      illum_mean=in_focus, mirror=cfg.tie_mirror)
    phi = solve_tie(axial_derivative(plus, minus, dz), opts)
    return recenter(phi, d) if cfg.filter_recenter else phi


@dataclass
class FrameResult:
    rows: list
    phases: dict = field(default_factory=dict, repr=False)


def process_frame(sim: Simulation, cal: CalibrationRecord, dz: float, index: int,
                  keep_phases: bool = False) -> FrameResult:
    """All modes and filter sizes for one measurement frame at one defocus."""
    cfg = sim.cfg
    fseed = frame_seed(cfg.seed, index)
    ip, im = sim.defocus_pair(dz)
    modes = cfg.parsed_modes()
    base = (fseed, dz_key(dz))
    need_twin = any(m in ("classical", "quantum") for m, _ in modes)
    if need_twin:
        sp, idp = sim.exposure(ip, (*base, 0))
        sm, idm = sim.exposure(im, (*base, 1))
    multi = {}
    for name, n in modes:
        if name.startswith("multi_frame"):
            multi[name] = (
                sample_multi_frame(ip, n, sim.src.read_noise_e, sim.grid, (*base, 0, MULTI, n)),
                sample_multi_frame(im, n, sim.src.read_noise_e, sim.grid, (*base, 1, MULTI, n)),
            )
    alpha = cal.alpha[dz]
    out = FrameResult([])
    for d in cfg.filter_d:
        if need_twin:
            fsp, fsm = averaging_filter(sp, d), averaging_filter(sm, d)
        k = gain_for(cfg, cal, d, dz)
        for name, _ in modes:
            if name == "classical":
                a, b, k_used = fsp, fsm, 0.0
            elif name == "quantum":
                corr = QuantumCorrection(k)
                a = quantum_subtract(fsp, averaging_filter(idp, d), cal.idler_mean[d], corr)
                b = quantum_subtract(fsm, averaging_filter(idm, d), cal.idler_mean[d], corr)
                k_used = float(np.mean(k))
            else:
                a, b = (averaging_filter(f, d) for f in multi[name])
                k_used = 0.0
            phi = reconstruct_pair(a, b, dz, sim.grid.k, cal.signal_mean[d], cfg, d)
            c = pearson(phi, sim.sample, cfg.pearson_border_px)
            step = phase_step_estimate(phi, *sim.rois) if sim.rois else math.nan
            out.rows.append({"dz_um": dz, "mode": name, "d": d, "frame_seed": fseed,
                             "pearson": c, "phase_step": step, "alpha": alpha, "k_opt": k_used})
            if keep_phases:
                out.phases[(dz, name, d)] = phi.values
    return out


@dataclass
class RunReport:
    """Metrics table, per-point summary, provenance and the files written."""

    rows: list
    summary: list
    provenance: dict
    calibration: dict
    files: list = field(default_factory=list)
    out_dir: Path | None = None

    def select(self, mode=None, d=None, dz=None):
        return [r for r in self.rows
                if (mode is None or r["mode"] == mode) and (d is None or r["d"] == d)
                and (dz is None or r["dz_um"] == dz)]


def summarize(rows) -> list:
    groups = {}
    for r in rows:
        groups.setdefault((r["dz_um"], r["mode"], r["d"]), []).append(r)
    out = []
    for (dz, mode, d), rs in groups.items():
        p = [r["pearson"] for r in rs]
        s = [r["phase_step"] for r in rs]
        entry = {"dz_um": dz, "mode": mode, "d": d, "n": len(rs), "alpha": rs[0]["alpha"],
                 "k_opt": rs[0]["k_opt"]}
        for tag, vals in (("pearson", p), ("step", s)):
            if len(vals) >= 2 and not any(math.isnan(v) for v in vals):
                st = ensemble_stats(vals)
                entry.update({f"{tag}_mean": st.mean, f"{tag}_std": st.std_dev, f"{tag}_se": st.std_error})
            else:
                entry.update({f"{tag}_mean": float(np.mean(vals)), f"{tag}_std": math.nan,
                              f"{tag}_se": math.nan})
        out.append(entry)
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def read_table(path) -> list:
    """Read a CSV written by :func:`write_table`, converting numeric columns."""
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {}
            for key, val in rec.items():
                if key == "mode":
                    row[key] = val
                elif key in ("d", "n", "frame_seed"):
                    row[key] = int(val)
                else:
                    row[key] = float(val)
            out.append(row)
    return out


# worker-process state for the pool
_WORKER = {}


def _init_worker(cfg_dict, cal):
    _WORKER["sim"] = Simulation(ExperimentConfig.from_dict(cfg_dict))
    _WORKER["cal"] = cal


def _work(task):
    dz, index = task
    return process_frame(_WORKER["sim"], _WORKER["cal"], dz, index).rows


def simulate_rows(cfg: ExperimentConfig, sim: Simulation, cal: CalibrationRecord):
    """Metric rows in (dz, mode, d, frame) order plus frame-0 phase maps."""
    tasks = [(dz, f) for dz in cfg.dz_um for f in range(cfg.frames)]
    first = {}
    by_task = {}
    threads = max(1, int(cfg.threads))
    if threads == 1:
        for dz, f in tasks:
            res = process_frame(sim, cal, dz, f, keep_phases=(f == 0))
            by_task[(dz, f)] = res.rows
            first.update(res.phases)
    else:
        for dz in cfg.dz_um:
            res = process_frame(sim, cal, dz, 0, keep_phases=True)
            by_task[(dz, 0)] = res.rows
            first.update(res.phases)
        rest = [t for t in tasks if t[1] != 0]
        with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(cfg.to_dict(), cal)) as ex:
            for t, rows in zip(rest, ex.map(_work, rest, chunksize=8)):
                by_task[t] = rows
    mode_order = {m: i for i, (m, _) in enumerate(cfg.parsed_modes())}
    d_order = {d: i for i, d in enumerate(cfg.filter_d)}
    dz_order = {dz: i for i, dz in enumerate(cfg.dz_um)}
    rows = [r for t in tasks for r in by_task[t]]
    index = {id(r): i for i, r in enumerate(rows)}
    rows.sort(key=lambda r: (dz_order[r["dz_um"]], mode_order[r["mode"]], d_order[r["d"]], index[id(r)]))
    return rows, first


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    """Full sweep: calibrate, simulate every (dz, frame), reconstruct, report.

    With ``write`` the run directory receives ``metrics.csv``,
    ``summary.csv``, ``calibration.json``, ``manifest.json``, phase images
    under ``images/`` and, if enabled, figures under ``figures/``.
    """
    cfg.validate()
    sim = Simulation(cfg)
    cal = calibrate(cfg, sim=sim)
    rows, first = simulate_rows(cfg, sim, cal)
    summary = summarize(rows)
    provenance = {
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "code_version": __version__,
        "sample_version": SAMPLE_VERSION,
        "eta0": sim.src.eta0,
    }
    report = RunReport(rows, summary, provenance, cal.to_dict())
    if write:
        _write_outputs(report, cfg, sim, first)
    return report


def _write_outputs(report: RunReport, cfg: ExperimentConfig, sim: Simulation, first: dict):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    write_table(out / "metrics.csv", report.rows, METRIC_COLUMNS)
    files.append("metrics.csv")
    write_table(out / "summary.csv", report.summary, SUMMARY_COLUMNS)
    files.append("summary.csv")
    (out / "calibration.json").write_text(json.dumps(report.calibration, indent=2, sort_keys=True))
    files.append("calibration.json")
    if cfg.images:
        img = out / "images"
        img.mkdir(exist_ok=True)
        write_pgm(img / "reference.pgm", sim.sample.values)
        files.append("images/reference.pgm")
        for (dz, mode, d), phi in first.items():
            name = f"images/phase_dz{dz:g}_{mode.replace('(', '').replace(')', '')}_d{d}.pgm"
            write_pgm(out / name, phi)
            files.append(name)
    if cfg.plots:
        from .plotting import render_figures

        for p in render_figures(report.summary, out / "figures"):
            files.append(os.path.relpath(p, out))
    report.files = files
    report.out_dir = out
    manifest = {**report.provenance, "config": cfg.to_dict(), "files": files}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
