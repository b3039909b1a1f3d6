"""Phase retrieval from a defocus pair and twin-beam noise subtraction.

Fourier conventions: ``q`` is in cycles/um, the Laplacian multiplies by
``-4 pi^2 |q|^2``, and the phase solving ``-k dI/dz = I0 lap(phi)`` is

    phi~(q) = k dIdz~(q) / (4 pi^2 I0 (|q|^2 + eps q_ref^2)),   phi~(0) = 0

with ``q_ref = 1 / (nx * pitch)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .optics import Grid, PhaseMap, _check_same_grid
from .photons import IntensityFrame, averaging_filter


@dataclass(frozen=True)
class TieOptions:
    """Parameters of the TIE inversion.

    ``illum_mean`` is the in-focus intensity I0 in photons/pixel. A 2-D map
    may be given instead of a scalar; the derivative is then divided by it
    pixelwise, which keeps the uniform approximation locally correct under a
    slowly varying illumination envelope.

    ``mirror`` enables even-symmetric extension of the derivative map before
    the FFT (cropped afterwards). The default periodic solve is exact when
    the object and its defocus signal lie inside the window.
    """

    dz: float
    k_wave: float
    regularization_eps: float = 0.0
    use_uniform_approx: bool = True
    illum_mean: object = None
    mirror: bool = False

    def __post_init__(self):
        if not self.dz > 0:
            raise ConfigError("dz must be > 0")
        if not self.k_wave > 0:
            raise ConfigError("k_wave must be > 0")
        if self.regularization_eps < 0:
            raise ConfigError("regularization_eps must be >= 0")
        if not self.use_uniform_approx:
            raise ConfigError("only the uniform-intensity TIE approximation is implemented")


@dataclass(frozen=True)
class QuantumCorrection:
    """Idler subtraction gain; ``k_factor`` may be a scalar or a per-pixel map."""

    k_factor: object = 0.0
    enabled: bool = True

    def __post_init__(self):
        k = np.asarray(self.k_factor, dtype=float)
        if np.any(k < 0) or np.any(k > 1) or not np.all(np.isfinite(k)):
            raise ConfigError("k_factor must lie in [0, 1]")


@dataclass(frozen=True)
class DerivativeMap:
    """Axial intensity derivative, photons/pixel/um."""

    grid: Grid
    values: np.ndarray = field(repr=False)


def axial_derivative(i_plus: IntensityFrame, i_minus: IntensityFrame, dz: float) -> DerivativeMap:
    """Central difference ``(I+ - I-) / (2 dz)``."""
    _check_same_grid(i_plus.grid, i_minus.grid)
    if not dz > 0:
        raise ConfigError("dz must be > 0")
    return DerivativeMap(i_plus.grid, (i_plus.counts - i_minus.counts) / (2.0 * dz))


def _mirror_extend(a):
    top = np.concatenate([a, a[:, ::-1]], axis=1)
    return np.concatenate([top, top[::-1, :]], axis=0)


def solve_tie(didz: DerivativeMap, opts: TieOptions) -> PhaseMap:
    """Recover the zero-mean phase from the axial intensity derivative."""
    values = np.asarray(didz.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise NumericError("derivative map contains NaN or inf")
    i0 = opts.illum_mean
    if i0 is None or not np.all(np.asarray(i0) > 0):
        raise NumericError("uniform TIE approximation needs a positive illum_mean")
    grid = didz.grid
    if np.ndim(i0) == 2:
        i0 = np.asarray(i0, dtype=float)
        if i0.shape != values.shape:
            raise ConfigError("illum_mean map does not match the derivative map")
        values = values / i0
        i0 = 1.0
    work = _mirror_extend(values) if opts.mirror else values
    wgrid = grid.resized(work.shape[1], work.shape[0])
    q_ref2 = (1.0 / (grid.nx * grid.pitch)) ** 2
    denom = 4.0 * np.pi**2 * i0 * (wgrid.q2() + opts.regularization_eps * q_ref2)
    spec = np.fft.fft2(work)
    denom[0, 0] = 1.0
    phi_hat = opts.k_wave * spec / denom
    phi_hat[0, 0] = 0.0
    phi = np.fft.ifft2(phi_hat).real[: grid.ny, : grid.nx]
    return PhaseMap(grid, phi - phi.mean())


def quantum_subtract(signal: IntensityFrame, idler: IntensityFrame, idler_mean,
                     corr: QuantumCorrection) -> IntensityFrame:
    """Subtract the correlated idler fluctuation: ``signal - k * (idler - <idler>)``.

    ``idler`` must already be aligned to signal coordinates.
    """
    _check_same_grid(signal.grid, idler.grid)
    mean = np.asarray(idler_mean, dtype=float)
    if mean.shape != signal.counts.shape:
        raise ConfigError("idler_mean shape does not match the frames")
    if not corr.enabled:
        return signal
    k = np.asarray(corr.k_factor, dtype=float)
    return signal.with_counts(signal.counts - k * (idler.counts - mean))


def k_opt_from_stacks(signal, idler, per_pixel: bool = False):
    """Least-squares subtraction gain from stacks of shape ``(frames, ny, nx)``.

    The scalar form pools covariance and variance over all pixels.
    """
    s = np.asarray(signal, dtype=float)
    i = np.asarray(idler, dtype=float)
    if s.shape != i.shape or s.ndim != 3:
        raise ConfigError("signal and idler stacks must have equal (frames, ny, nx) shape")
    if s.shape[0] < 2:
        raise ConfigError("need at least 2 calibration frames")
    ds = s - s.mean(axis=0)
    di = i - i.mean(axis=0)
    cov = np.sum(ds * di, axis=0)
    var = np.sum(di * di, axis=0)
    if per_pixel:
        return np.divide(cov, var, out=np.zeros_like(cov), where=var > 0)
    total = var.sum()
    if not total > 0:
        raise NumericError("idler frames have no fluctuation")
    return float(cov.sum() / total)


def estimate_k_opt(calib, d: int = 1, per_pixel: bool = False):
    """Subtraction gain from calibration exposures (sequence of TwinFrameSet).

    Frames are filtered with the d x d averaging filter first, so the gain
    matches the effective pixel used in reconstruction.
    """
    calib = list(calib)
    if len(calib) < 2:
        raise ConfigError("need at least 2 calibration frames")
    sig = np.stack([averaging_filter(t.signal, d).counts for t in calib])
    idl = np.stack([averaging_filter(t.aligned_idler(), d).counts for t in calib])
    return k_opt_from_stacks(sig, idl, per_pixel=per_pixel)


def predicted_noise_reduction(eta: float, alpha: float) -> float:
    """Residual variance after idler subtraction, in units of the shot noise."""
    if not 0 <= eta <= 1 or not 0 <= alpha <= 1:
        raise ConfigError("eta and alpha must lie in [0, 1]")
    return 1.0 - (1.0 - alpha) ** 2 * eta**2


def noise_artifact_spectrum(sigma_flat: float, opts: TieOptions, grid: Grid) -> np.ndarray:
    """Predicted RMS amplitude of the phase artifact per Fourier mode.

    For white intensity noise of per-pixel std ``sigma_flat`` in each of the
    two defocused planes, with orthonormal DFT normalisation (FFT order, the
    q=0 entry is zero).
    """
    i0 = opts.illum_mean
    if i0 is None or not np.all(np.asarray(i0) > 0):
        raise NumericError("illum_mean must be positive")
    i0 = float(np.mean(i0))
    q_ref2 = (1.0 / (grid.nx * grid.pitch)) ** 2
    q2 = grid.q2() + opts.regularization_eps * q_ref2
    q2[0, 0] = np.inf
    return opts.k_wave * sigma_flat / (4.0 * np.pi**2 * np.sqrt(2.0) * i0 * opts.dz * q2)


def radial_power_spectrum(values: np.ndarray, grid: Grid, nbins: int | None = None):
    """Azimuthally averaged ``|FFT|^2`` (orthonormal) versus ``|q|``.

    Returns bin-centre frequencies and mean power, DC excluded. Bins are one
    frequency step wide up to ``q_max``.
    """
    power = np.abs(np.fft.fft2(values, norm="ortho")) ** 2
    q = np.sqrt(grid.q2())
    dq = 1.0 / (max(grid.nx, grid.ny) * grid.pitch)
    nbins = nbins or int(grid.q_max / dq)
    edges = (np.arange(nbins + 1) + 0.5) * dq
    idx = np.digitize(q.ravel(), edges) - 1
    ok = (idx >= 0) & (idx < nbins)
    sums = np.bincount(idx[ok], weights=power.ravel()[ok], minlength=nbins)
    counts = np.bincount(idx[ok], minlength=nbins)
    centres = 0.5 * (edges[:-1] + edges[1:])
    good = counts > 0
    return centres[good], sums[good] / counts[good]
