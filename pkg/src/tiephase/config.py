"""Experiment configuration: a single flat JSON document.

Physical quantities carry their unit in the key (``dz_um``, ``pitch_um``).
Keys left at ``null`` are derived when the configuration is resolved:

* ``eta0`` is solved so that the heralding efficiency at an effective pixel of
  ``heralding_d`` pixels equals ``heralding_eta``;
* ``illumination_fwhm_um`` defaults to four times the detection window width;
* ``coherence_sigma_um`` defaults to ``2 * sigma_corr_um``. For a Gaussian
  pump the single-beam coherence function is the autocorrelation of the pump
  angular amplitude, twice as wide as the signal/idler position correlation.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from scipy.optimize import brentq

from .errors import ConfigError
from .optics import Grid
from .photons import FWHM_PER_SIGMA, SourceModel, heralding_efficiency

MODE_RE = re.compile(r"^multi_frame[(:](\d+)\)?$")
# fields that do not change any computed number
NON_RESULT_FIELDS = ("out_dir", "threads", "plots", "images")


@dataclass
class ExperimentConfig:
    nx: int = 80
    ny: int = 80
    pitch_um: float = 5.0
    wavelength_um: float = 0.81
    pad_factor: int = 2

    illumination: str = "gaussian"
    illumination_fwhm_um: float | None = None
    partial_coherence: bool = True
    coherence_sigma_um: float | None = None

    sample_kind: str = "pi_glyph"
    step_rad: float = 0.230
    sample_path: str | None = None

    n_mean: float = 1000.0
    eta0: float | None = None
    heralding_eta: float = 0.57
    heralding_d: int = 4
    sigma_corr_um: float = 5.0 / FWHM_PER_SIGMA
    misalignment_um: list = field(default_factory=lambda: [0.0, 0.0])
    read_noise_e: float = 4.0

    dz_um: list = field(default_factory=lambda: [25.0, 50.0, 75.0, 100.0, 150.0, 200.0, 300.0, 400.0, 500.0])
    frames: int = 100
    filter_d: list = field(default_factory=lambda: [4])
    modes: list = field(default_factory=lambda: ["classical", "quantum", "multi_frame(100)"])
    calibration_frames: int = 100
    k_mode: str = "scalar"
    k_alpha_correction: bool = True
    k_override: float | None = None
    regularization_eps: float = 0.0
    tie_mirror: bool = False
    filter_recenter: bool = True
    pearson_border_px: int = 4

    seed: int = 12345
    out_dir: str = "runs/default"
    threads: int = 1
    plots: bool = True
    images: bool = True

    def __post_init__(self):
        self.dz_um = [float(v) for v in self.dz_um]
        self.filter_d = [int(v) for v in self.filter_d]
        self.misalignment_um = [float(v) for v in self.misalignment_um]
        self.modes = [str(m) for m in self.modes]

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        data.update(overrides or {})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        cfg.validate()
        return cfg

    # ------------------------------------------------------------------
    def grid(self) -> Grid:
        return Grid(int(self.nx), int(self.ny), float(self.pitch_um), float(self.wavelength_um))

    def sim_grid(self) -> Grid:
        return self.grid().resized(int(self.nx) * int(self.pad_factor), int(self.ny) * int(self.pad_factor))

    def resolved_eta0(self) -> float:
        if self.eta0 is not None:
            return float(self.eta0)
        L = self.heralding_d * self.pitch_um
        geom = heralding_efficiency(L, tuple(self.misalignment_um), self.sigma_corr_um, 1.0)
        if self.heralding_eta > geom:
            raise ConfigError(
                f"heralding_eta={self.heralding_eta} unreachable: geometric limit is {geom:.4f}")
        return brentq(lambda e: heralding_efficiency(L, tuple(self.misalignment_um),
                                                     self.sigma_corr_um, e) - self.heralding_eta,
                      1e-9, 1.0, xtol=1e-15)

    def source(self) -> SourceModel:
        return SourceModel(
            n_mean=float(self.n_mean),
            eta0=self.resolved_eta0(),
            sigma_corr=float(self.sigma_corr_um),
            misalignment=tuple(self.misalignment_um),
            read_noise_e=float(self.read_noise_e),
        )

    def resolved_fwhm(self) -> float:
        if self.illumination_fwhm_um is not None:
            return float(self.illumination_fwhm_um)
        return 4.0 * max(self.nx, self.ny) * self.pitch_um

    def resolved_coherence_sigma(self) -> float:
        if self.coherence_sigma_um is not None:
            return float(self.coherence_sigma_um)
        return 2.0 * float(self.sigma_corr_um)

    def parsed_modes(self):
        """List of ``(name, n_frames)``; n_frames is 1 except for multi_frame."""
        out = []
        for m in self.modes:
            m = str(m).strip()
            if m in ("classical", "quantum"):
                out.append((m, 1))
                continue
            match = MODE_RE.match(m)
            if not match:
                raise ConfigError(f"unknown mode {m!r}")
            n = int(match.group(1))
            if n < 1:
                raise ConfigError("multi_frame needs N >= 1")
            out.append((f"multi_frame({n})", n))
        return out

    def validate(self):
        grid = self.grid()
        sim = self.sim_grid()
        if self.illumination not in ("gaussian", "uniform"):
            raise ConfigError(f"unknown illumination {self.illumination!r}")
        if self.sample_kind not in ("pi_glyph", "squares", "custom", "custom-file"):
            raise ConfigError(f"unknown sample kind {self.sample_kind!r}")
        if self.sample_kind.startswith("custom"):
            if not self.sample_path or not Path(self.sample_path).exists():
                raise ConfigError(f"sample file not found: {self.sample_path}")
        if not self.dz_um:
            raise ConfigError("dz_um must list at least one defocus")
        for dz in self.dz_um:
            if not dz > 0:
                raise ConfigError(f"dz values must be positive, got {dz}")
        # aliasing is a numeric error, raised by the propagation itself; check early anyway
        limit = sim.max_defocus()
        bad = [dz for dz in self.dz_um if dz > limit]
        if bad:
            from .errors import AliasingError

            raise AliasingError(bad[0], limit)
        if int(self.frames) < 1:
            raise ConfigError("frames must be >= 1")
        if int(self.calibration_frames) < 2:
            raise ConfigError("calibration_frames must be >= 2")
        for d in self.filter_d:
            if int(d) < 1 or int(d) > min(grid.shape):
                raise ConfigError(f"invalid filter size {d}")
        if self.k_mode not in ("scalar", "map"):
            raise ConfigError("k_mode must be 'scalar' or 'map'")
        if self.k_override is not None and not 0 <= self.k_override <= 1:
            raise ConfigError("k_override must lie in [0, 1]")
        if int(self.pad_factor) < 1:
            raise ConfigError("pad_factor must be >= 1")
        if len(self.misalignment_um) != 2:
            raise ConfigError("misalignment_um must have two entries")
        self.parsed_modes()
        self.source()

    def config_hash(self) -> str:
        data = {k: v for k, v in self.to_dict().items() if k not in NON_RESULT_FIELDS}
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
