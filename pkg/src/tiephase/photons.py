"""Photon statistics of twin-beam (signal/idler) detection.

The generative model: photon pairs are emitted per source cell with Poisson
statistics, each arm of a pair is detected independently with probability
``eta0``, and the idler photon lands at the point-reflected position of its
signal twin plus an isotropic Gaussian jitter and a fixed misalignment. A
phase object in the signal arm moves part of the signal photons away from
their unperturbed position; those photons lose their idler partner.

Positions inside a pixel are uniform, so the pixel offset at which a jittered
idler photon is binned is an i.i.d. discrete random variable, separable in x
and y. Binning is therefore done with sequential binomial splitting over the
possible offsets, which has exactly the distribution of drawing every photon
position and histogramming it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError, NumericError
from .optics import Grid

FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class SourceModel:
    """Detection model of the twin-beam source.

    Parameters
    ----------
    n_mean : float
        Mean detected photons per pixel per frame.
    eta0 : float
        Single-photon detection efficiency in (0, 1].
    sigma_corr : float
        Standard deviation (um) of the Gaussian signal/idler position jitter.
    misalignment : tuple of float
        Fixed idler offset ``(dx, dy)`` in um.
    read_noise_e : float
        Electronic read noise, electrons RMS per pixel per frame.
    """

    n_mean: float = 1000.0
    eta0: float = 1.0
    sigma_corr: float = 0.0
    misalignment: tuple = (0.0, 0.0)
    read_noise_e: float = 0.0

    def __post_init__(self):
        if not 0 < self.eta0 <= 1:
            raise ConfigError(f"eta0 must be in (0, 1], got {self.eta0}")
        if self.sigma_corr < 0:
            raise ConfigError("sigma_corr must be >= 0")
        if not self.n_mean > 0:
            raise ConfigError("n_mean must be > 0")
        if self.read_noise_e < 0:
            raise ConfigError("read_noise_e must be >= 0")
        object.__setattr__(self, "misalignment", tuple(float(v) for v in self.misalignment))
        if len(self.misalignment) != 2:
            raise ConfigError("misalignment must be a 2-vector")

    @property
    def fwhm_corr(self):
        return FWHM_PER_SIGMA * self.sigma_corr

    def to_dict(self):
        d = asdict(self)
        d["misalignment"] = list(self.misalignment)
        return d


@dataclass(frozen=True)
class IntensityFrame:
    """Detected photon-equivalent counts for one exposure."""

    grid: Grid
    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=float)
        if c.shape != self.grid.shape:
            raise ConfigError(f"frame shape {c.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(c)):
            raise NumericError("frame contains non-finite counts")
        object.__setattr__(self, "counts", c)

    def with_counts(self, counts):
        return IntensityFrame(self.grid, counts)


@dataclass(frozen=True)
class TwinFrameSet:
    """One exposure of the signal and idler arms.

    ``idler`` is stored as detected, i.e. point-reflected with respect to the
    signal; :meth:`aligned_idler` undoes the reflection so that correlated
    pixels share indices. ``mean_signal`` and ``mean_idler`` are the noiseless
    maps in signal coordinates.
    """

    signal: IntensityFrame
    idler: IntensityFrame
    mean_signal: np.ndarray = field(repr=False)
    mean_idler: np.ndarray = field(repr=False)
    seed: object = None

    def aligned_idler(self) -> IntensityFrame:
        return self.idler.with_counts(point_reflect(self.idler.counts))


def point_reflect(values: np.ndarray) -> np.ndarray:
    """Map x -> -x on the array (flip both axes)."""
    return np.ascontiguousarray(values[::-1, ::-1])


def frame_rng(*key) -> np.random.Generator:
    """Counter-based generator for the stream identified by integer ``key``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in key])))


def _as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        return frame_rng(*seed)
    return frame_rng(0 if seed is None else seed)


def _ramp(t, s):
    """Antiderivative in t of the Gaussian CDF Phi(t/s); ``max(t, 0)`` for s=0."""
    t = np.asarray(t, dtype=float)
    if s == 0:
        return np.maximum(t, 0.0)
    z = t / s
    return t * ndtr(z) + s * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)


def _offset_probability(a, delta, s):
    """Probability that a photon uniform in [0, 1) shifted by N(delta, s^2) lands in [a, a+1)."""
    return _ramp(a + 1 - delta, s) - 2.0 * _ramp(a - delta, s) + _ramp(a - 1 - delta, s)


def offset_distribution(sigma_px: float, delta_px: float, tol: float = 1e-13):
    """Integer pixel offsets and their probabilities for one axis."""
    reach = int(np.ceil(9.0 * sigma_px)) + 2
    centre = int(np.floor(delta_px))
    offsets = np.arange(centre - reach, centre + reach + 1)
    p = _offset_probability(offsets.astype(float), delta_px, sigma_px)
    p = np.clip(p, 0.0, None)
    keep = p > tol
    offsets, p = offsets[keep], p[keep]
    return offsets, p / p.sum()


def heralding_efficiency(L: float, delta=(0.0, 0.0), sigma: float = 0.0, eta0: float = 1.0) -> float:
    """Probability of detecting the twin idler in the conjugate pixel of size ``L``.

    Pixel-area average of the Gaussian correlation function, offset by the
    misalignment ``delta`` (um), scaled by ``eta0``. Evaluated per axis with
    the closed-form double integral of the Gaussian over two intervals.
    """
    if not L > 0:
        raise ConfigError("pixel size L must be positive")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    dx, dy = (float(v) for v in np.broadcast_to(np.asarray(delta, dtype=float), (2,)))
    s = sigma / L
    gx = _offset_probability(0.0, dx / L, s)
    gy = _offset_probability(0.0, dy / L, s)
    return float(eta0 * gx * gy)


def _split_shift(counts, offsets, probs, axis, rng):
    """Distribute each pixel's counts over ``offsets`` along ``axis`` and re-bin."""
    out = np.zeros_like(counts)
    remaining = counts
    rest = 1.0
    last = len(probs) - 1
    for j, (a, p) in enumerate(zip(offsets, probs)):
        if j == last:
            part = remaining
        else:
            part = rng.binomial(remaining, min(p / rest, 1.0))
            remaining = remaining - part
            rest -= p
        out += np.roll(part, int(a), axis=axis)
    return out


def sample_twin_frames(mean_signal, mean_idler, src: SourceModel, grid: Grid, seed=None,
                       retained=None) -> TwinFrameSet:
    """Draw one correlated signal/idler exposure.

    Parameters
    ----------
    mean_signal : ndarray
        Noiseless mean signal counts at the detection plane (object present).
    mean_idler : ndarray
        Noiseless unperturbed map, in signal coordinates.
    src : SourceModel
    grid : Grid
        Detection grid; its pitch converts ``sigma_corr`` to pixels.
    seed : int, tuple of int or numpy Generator
        Stream identifier; the same seed always yields the same frames.
    retained : ndarray, optional
        Mean number of signal photons per pixel that stay paired with their
        idler twin. Defaults to ``min(mean_idler, mean_signal)``, the least
        redistribution compatible with the two maps.

    Returns
    -------
    TwinFrameSet
        Idler stored point-reflected, as a camera would see it.
    """
    i_z = np.asarray(mean_signal, dtype=float)
    i_0 = np.asarray(mean_idler, dtype=float)
    if i_z.shape != grid.shape or i_0.shape != grid.shape:
        raise ConfigError("mean maps must match the grid shape")
    if np.any(i_z < 0) or np.any(i_0 < 0):
        raise ConfigError("mean maps must be non-negative")
    if retained is None:
        kept = np.minimum(i_0, i_z)
    else:
        kept = np.asarray(retained, dtype=float)
        if np.any(kept < 0) or np.any(kept > np.minimum(i_0, i_z) * (1 + 1e-12) + 1e-12):
            raise ConfigError("retained map must lie in [0, min(mean_idler, mean_signal)]")
        kept = np.minimum(kept, np.minimum(i_0, i_z))
    rng = _as_rng(seed)
    eta0 = src.eta0

    ox, px = offset_distribution(src.sigma_corr / grid.pitch, src.misalignment[0] / grid.pitch)
    oy, py = offset_distribution(src.sigma_corr / grid.pitch, src.misalignment[1] / grid.pitch)
    margin = int(max(np.abs(ox).max(), np.abs(oy).max())) + 1

    src_mean = np.pad(i_0, margin, mode="edge")
    keep_frac = np.divide(np.pad(kept, margin, mode="edge"), src_mean,
                          out=np.zeros_like(src_mean), where=src_mean > 0)
    pairs = rng.poisson(src_mean / eta0)
    sig = rng.binomial(pairs, np.clip(eta0 * keep_frac, 0.0, 1.0))
    idl = rng.binomial(pairs, eta0)
    inner = (slice(margin, margin + grid.ny), slice(margin, margin + grid.nx))
    sig = sig[inner] + rng.poisson(np.maximum(i_z - kept, 0.0))
    if len(ox) > 1 or ox[0] != 0:
        idl = _split_shift(idl, ox, px, 1, rng)
    if len(oy) > 1 or oy[0] != 0:
        idl = _split_shift(idl, oy, py, 0, rng)
    idl = idl[inner]

    return TwinFrameSet(
        signal=IntensityFrame(grid, sig.astype(float)),
        idler=IntensityFrame(grid, point_reflect(idl).astype(float)),
        mean_signal=i_z,
        mean_idler=i_0,
        seed=seed if not isinstance(seed, np.random.Generator) else None,
    )


def sample_multi_frame(mean_signal, n_frames: int, read_noise_e: float, grid: Grid, seed=None) -> IntensityFrame:
    """Average of ``n_frames`` independent single-arm exposures.

    The sum of i.i.d. Poisson frames is Poisson with the summed mean, so the
    average is drawn in one step with the same distribution.
    """
    if n_frames < 1:
        raise ConfigError("n_frames must be >= 1")
    rng = _as_rng(seed)
    mean = np.asarray(mean_signal, dtype=float)
    total = rng.poisson(mean * n_frames).astype(float)
    if read_noise_e > 0:
        total += rng.normal(0.0, read_noise_e * np.sqrt(n_frames), size=mean.shape)
    return IntensityFrame(grid, total / n_frames)


def add_read_noise(frame: IntensityFrame, sigma_e: float, seed=None) -> IntensityFrame:
    """Add zero-mean Gaussian read noise; negative counts are kept."""
    if sigma_e < 0:
        raise ConfigError("sigma_e must be >= 0")
    if sigma_e == 0:
        return frame
    rng = _as_rng(seed)
    return frame.with_counts(frame.counts + rng.normal(0.0, sigma_e, size=frame.counts.shape))


def _box_mean(a: np.ndarray, d: int) -> np.ndarray:
    """d x d moving average with shrinking windows at the edges.

    The window of pixel i spans ``[i - off, i - off + d - 1]`` with
    ``off = ceil(d/2) - 1``.
    """
    off = -(-d // 2) - 1
    ny, nx = a.shape
    s = np.zeros((ny + 1, nx + 1))
    s[1:, 1:] = np.cumsum(np.cumsum(a, axis=0), axis=1)
    y0 = np.clip(np.arange(ny) - off, 0, ny)
    y1 = np.clip(np.arange(ny) - off + d, 0, ny)
    x0 = np.clip(np.arange(nx) - off, 0, nx)
    x1 = np.clip(np.arange(nx) - off + d, 0, nx)
    total = (s[y1][:, x1] - s[y0][:, x1] - s[y1][:, x0] + s[y0][:, x0])
    area = np.outer(y1 - y0, x1 - x0)
    return total / area


def averaging_filter(frame: IntensityFrame, d: int) -> IntensityFrame:
    """Replace each count by the mean over its d x d neighbourhood (same image size)."""
    d = int(d)
    if d < 1:
        raise ConfigError("filter size d must be >= 1")
    if d > min(frame.grid.shape):
        raise ConfigError(f"filter size {d} exceeds image size {frame.grid.shape}")
    if d == 1:
        return frame
    return frame.with_counts(_box_mean(frame.counts, d))


def filter_centroid_offset(d: int) -> float:
    """Position of the d x d window centroid relative to its output pixel.

    Zero for odd ``d``; +0.5 pixel along each axis for even ``d``, so the
    filtered image appears shifted by half a pixel towards the origin.
    """
    d = int(d)
    return (d - 1) / 2.0 - (-(-d // 2) - 1)


def alpha_estimate(i0_mean, idz_mean) -> float:
    """Mean fraction of photons displaced by the object: <|I0 - Idz|> / <I0>."""
    i0 = np.asarray(i0_mean, dtype=float)
    idz = np.asarray(idz_mean, dtype=float)
    if i0.shape != idz.shape:
        raise ConfigError("maps must have the same shape")
    norm = i0.mean()
    if not norm > 0:
        raise NumericError("in-focus mean intensity is zero")
    return float(np.mean(np.abs(i0 - idz)) / norm)

