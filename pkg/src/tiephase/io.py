"""Readers and writers for maps, frames and twin-frame bundles.

16-bit PGM files carry their value scale in a header comment::

    P5
    # tiephase offset=<float> scale=<float>
    <nx> <ny>
    65535

and a stored sample ``raw`` decodes to ``offset + scale * raw``. Files
without the comment decode to the raw integers.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .optics import Grid, PhaseMap
from .photons import IntensityFrame, SourceModel, TwinFrameSet

MAXVAL = 65535
_SCALE_RE = re.compile(r"offset=(\S+)\s+scale=(\S+)")


def write_pgm(path, values, offset=None, scale=None):
    """Write a 2-D array as 16-bit binary PGM; returns ``(offset, scale)``.

    By default the full value range is mapped onto 0..65535. Values outside
    ``[offset, offset + 65535*scale]`` are clamped.
    """
    a = np.asarray(values, dtype=float)
    if a.ndim != 2:
        raise ConfigError("PGM export needs a 2-D array")
    if offset is None:
        offset = float(a.min())
    if scale is None:
        span = float(a.max()) - offset
        scale = span / MAXVAL if span > 0 else 1.0
    raw = np.clip(np.rint((a - offset) / scale), 0, MAXVAL).astype(">u2")
    header = f"P5\n# tiephase offset={offset!r} scale={scale!r}\n{a.shape[1]} {a.shape[0]}\n{MAXVAL}\n"
    path = Path(path)
    path.write_bytes(header.encode("ascii") + raw.tobytes())
    return offset, scale


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    pos = 0
    tokens = []
    offset, scale = 0.0, 1.0
    while len(tokens) < 4:
        end = data.index(b"\n", pos)
        line = data[pos:end].decode("ascii")
        pos = end + 1
        if line.startswith("#"):
            m = _SCALE_RE.search(line)
            if m:
                offset, scale = float(m.group(1)), float(m.group(2))
            continue
        tokens.extend(line.split())
    if tokens[0] != "P5":
        raise ConfigError(f"{path}: not a binary PGM")
    nx, ny, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    raw = np.frombuffer(data, dtype=dtype, count=nx * ny, offset=pos).reshape(ny, nx)
    return offset + scale * raw.astype(float)


def write_frame_pgm(path, frame: IntensityFrame):
    """Counts clamped at zero; integer counts up to 65535 are stored exactly."""
    c = np.clip(frame.counts, 0, None)
    top = float(c.max()) if c.size else 0.0
    exact = top <= MAXVAL and np.all(c == np.rint(c))
    return write_pgm(path, c, offset=0.0, scale=1.0 if exact else (top / MAXVAL or 1.0))


def write_csv_map(path, values):
    np.savetxt(path, np.asarray(values, dtype=float), delimiter=",", fmt="%.17g")


def read_csv_map(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def read_map(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    if path.suffix.lower() == ".pgm":
        return read_pgm(path)
    if path.suffix.lower() in (".csv", ".txt"):
        return read_csv_map(path)
    raise ConfigError(f"unsupported map format: {path.suffix}")


def write_map(path, values):
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        write_pgm(path, values)
    elif path.suffix.lower() in (".csv", ".txt"):
        write_csv_map(path, values)
    else:
        raise ConfigError(f"unsupported map format: {path.suffix}")


def read_phase(path, grid: Grid) -> PhaseMap:
    values = read_map(path)
    if values.shape != grid.shape:
        raise ConfigError(f"{path}: shape {values.shape} does not match grid {grid.shape}")
    return PhaseMap(grid, values)


def write_twin_bundle(directory, twin: TwinFrameSet, src: SourceModel, extra=None):
    """Store a TwinFrameSet as CSV maps plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    grid = twin.signal.grid
    write_csv_map(d / "signal.csv", twin.signal.counts)
    write_csv_map(d / "idler.csv", twin.idler.counts)
    write_csv_map(d / "mean_signal.csv", twin.mean_signal)
    write_csv_map(d / "mean_idler.csv", twin.mean_idler)
    seed = twin.seed
    if isinstance(seed, tuple):
        seed = list(seed)
    manifest = {
        "grid": {"nx": grid.nx, "ny": grid.ny, "pitch_um": grid.pitch, "wavelength_um": grid.wavelength},
        "source": src.to_dict(),
        "seed": seed,
        "idler_geometry": "point_reflected",
        "files": ["signal.csv", "idler.csv", "mean_signal.csv", "mean_idler.csv"],
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def read_twin_bundle(directory):
    """Inverse of :func:`write_twin_bundle`; returns ``(twin, source, manifest)``."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise ConfigError(f"no manifest.json in {d}")
    manifest = json.loads(mpath.read_text())
    g = manifest["grid"]
    grid = Grid(g["nx"], g["ny"], g["pitch_um"], g["wavelength_um"])
    s = manifest["source"]
    src = SourceModel(s["n_mean"], s["eta0"], s["sigma_corr"], tuple(s["misalignment"]), s["read_noise_e"])
    seed = manifest.get("seed")
    twin = TwinFrameSet(
        signal=IntensityFrame(grid, read_csv_map(d / "signal.csv")),
        idler=IntensityFrame(grid, read_csv_map(d / "idler.csv")),
        mean_signal=read_csv_map(d / "mean_signal.csv"),
        mean_idler=read_csv_map(d / "mean_idler.csv"),
        seed=tuple(seed) if isinstance(seed, list) else seed,
    )
    return twin, src, manifest
