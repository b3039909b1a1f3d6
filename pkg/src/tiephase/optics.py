"""Sampling grids, thin phase objects and paraxial free-space propagation.

Arrays follow the numpy image convention ``values[iy, ix]`` with shape
``(ny, nx)``. Lengths are in micrometres, spatial frequencies in cycles per
micrometre.

Sign convention (used everywhere in the package): a field ``u`` propagated by
``dz`` towards +z (away from the source) is multiplied in the Fourier domain by
``exp(-1j * pi * wavelength * dz * |q|**2)``. With this choice a converging
quadratic phase ``phi = a * |x|**2`` with ``a < 0`` brightens for ``dz > 0``,
and the intensity obeys ``-k dI/dz = div(I grad(phi))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import AliasingError, ConfigError, NumericError


@dataclass(frozen=True)
class Grid:
    """Uniform transverse sampling grid.

    Parameters
    ----------
    nx, ny : int
        Pixel counts along x (columns) and y (rows). Even and >= 8.
    pitch : float
        Sample spacing in um.
    wavelength : float
        Vacuum wavelength in um.
    """

    nx: int
    ny: int
    pitch: float
    wavelength: float

    def __post_init__(self):
        for n in (self.nx, self.ny):
            if int(n) != n or n < 8 or n % 2:
                raise ConfigError(f"grid sizes must be even integers >= 8, got {n}")
        if not (self.pitch > 0 and np.isfinite(self.pitch)):
            raise ConfigError(f"pitch must be positive, got {self.pitch}")
        if not (self.wavelength > 0 and np.isfinite(self.wavelength)):
            raise ConfigError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def k(self):
        """Wavenumber 2*pi/wavelength in rad/um."""
        return 2.0 * np.pi / self.wavelength

    @property
    def q_max(self):
        return 0.5 / self.pitch

    def coords(self):
        """Centered pixel coordinates ``(x, y)`` in um, broadcastable to ``shape``."""
        x = (np.arange(self.nx) - self.nx // 2) * self.pitch
        y = (np.arange(self.ny) - self.ny // 2) * self.pitch
        return x[np.newaxis, :], y[:, np.newaxis]

    def freqs(self):
        """FFT-ordered spatial frequencies ``(qx, qy)`` in cycles/um."""
        qx = np.fft.fftfreq(self.nx, d=self.pitch)
        qy = np.fft.fftfreq(self.ny, d=self.pitch)
        return qx[np.newaxis, :], qy[:, np.newaxis]

    def q2(self):
        qx, qy = self.freqs()
        return qx**2 + qy**2

    def resized(self, nx, ny):
        return Grid(nx, ny, self.pitch, self.wavelength)

    def max_defocus(self):
        """Largest |dz| for which the Fresnel transfer function is not aliased.

        The kernel phase ``pi*wavelength*dz*q**2`` must change by less than
        pi between adjacent frequency samples up to ``q_max``, i.e. the
        lateral walk-off ``wavelength*|dz|*q_max`` of the highest frequency
        stays within half the window ``n*pitch/2``.
        """
        n = min(self.nx, self.ny)
        return n * self.pitch / (2.0 * self.wavelength * self.q_max)


@dataclass(frozen=True)
class ComplexField:
    """Complex amplitude on a grid; ``|values|**2`` is photons per pixel."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ConfigError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def power(self):
        return float(np.sum(self.intensity))


@dataclass(frozen=True)
class PhaseMap:
    """Real phase in radians on a grid."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ConfigError(f"phase shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise NumericError("phase map contains non-finite values")
        object.__setattr__(self, "values", v)


def _check_same_grid(a: Grid, b: Grid):
    if a != b:
        raise ConfigError(f"grid mismatch: {a} vs {b}")


def fresnel_kernel(grid: Grid, dz: float) -> np.ndarray:
    return np.exp(-1j * np.pi * grid.wavelength * dz * grid.q2())


def fresnel_propagate(field: ComplexField, dz: float, pad_factor: int = 1) -> ComplexField:
    """Propagate a field by ``dz`` um with the paraxial transfer function.

    With ``pad_factor == 1`` the propagation is periodic and exactly unitary.
    A larger factor embeds the field in a zero-padded grid first and crops the
    result, which suppresses wrap-around at the cost of exact power
    conservation (light leaving the window is discarded).
    """
    if not np.isfinite(dz):
        raise NumericError(f"dz must be finite, got {dz}")
    grid = field.grid
    if dz == 0:
        return ComplexField(grid, field.values.copy())
    pad_factor = int(pad_factor)
    if pad_factor < 1:
        raise ConfigError("pad_factor must be >= 1")
    work = grid.resized(grid.nx * pad_factor, grid.ny * pad_factor)
    limit = work.max_defocus()
    if abs(dz) > limit:
        raise AliasingError(dz, limit)
    values = field.values
    if pad_factor > 1:
        values = embed_center(values, work.shape)
    out = np.fft.ifft2(np.fft.fft2(values) * fresnel_kernel(work, dz))
    if pad_factor > 1:
        out = crop_center(out, grid.shape)
    return ComplexField(grid, out)


def apply_phase_object(field: ComplexField, phase: PhaseMap) -> ComplexField:
    _check_same_grid(field.grid, phase.grid)
    return ComplexField(field.grid, field.values * np.exp(1j * phase.values))


def defocused_intensities(illumination: ComplexField, phase: PhaseMap, dz: float, pad_factor: int = 1):
    """Noiseless intensity maps ``(I_plus, I_minus, I_0)`` for a defocus pair.

    ``I_plus``/``I_minus`` are the intensities after the phase object
    propagated by ``+dz``/``-dz``; ``I_0`` is the in-focus illumination
    intensity.
    """
    if not dz > 0:
        raise ConfigError(f"dz must be positive, got {dz}")
    obj = apply_phase_object(illumination, phase)
    i_plus = fresnel_propagate(obj, dz, pad_factor).intensity
    i_minus = fresnel_propagate(obj, -dz, pad_factor).intensity
    return i_plus, i_minus, illumination.intensity


def partial_coherence_blur(intensity: np.ndarray, grid: Grid, dz: float, coherence_sigma: float) -> np.ndarray:
    """Blur a coherently propagated intensity for a partially coherent source.

    A Gaussian Schell-model illumination with coherence width
    ``coherence_sigma`` (rms, um) is a spread of plane waves with rms spatial
    frequency ``1/(2 pi coherence_sigma)``; each shifts the defocused pattern
    laterally by ``wavelength*dz*q``. For a thin object the result is the
    coherent intensity convolved with a Gaussian of rms width
    ``wavelength*|dz| / (2 pi coherence_sigma)``. Periodic boundaries.
    """
    if coherence_sigma is None or coherence_sigma <= 0 or dz == 0:
        return intensity
    width = grid.wavelength * abs(dz) / (2.0 * np.pi * coherence_sigma) / grid.pitch
    return gaussian_filter(intensity, width, mode="wrap")


def uniform_illumination(grid: Grid, intensity: float = 1.0) -> ComplexField:
    return ComplexField(grid, np.full(grid.shape, np.sqrt(intensity), dtype=complex))


def gaussian_illumination(grid: Grid, fwhm: float, peak: float = 1.0) -> ComplexField:
    """Flat-phase Gaussian beam at its waist with intensity FWHM ``fwhm`` um."""
    if not fwhm > 0:
        raise ConfigError("fwhm must be positive")
    x, y = grid.coords()
    intensity = peak * np.exp(-4.0 * np.log(2.0) * (x**2 + y**2) / fwhm**2)
    return ComplexField(grid, np.sqrt(intensity).astype(complex))


def embed_center(values: np.ndarray, shape) -> np.ndarray:
    """Place ``values`` at the centre of a zero array of ``shape``."""
    out = np.zeros(shape, dtype=values.dtype)
    oy = (shape[0] - values.shape[0]) // 2
    ox = (shape[1] - values.shape[1]) // 2
    out[oy:oy + values.shape[0], ox:ox + values.shape[1]] = values
    return out


def crop_center(values: np.ndarray, shape) -> np.ndarray:
    oy = (values.shape[0] - shape[0]) // 2
    ox = (values.shape[1] - shape[1]) // 2
    return values[oy:oy + shape[0], ox:ox + shape[1]]
