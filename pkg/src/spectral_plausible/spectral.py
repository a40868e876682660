"""Spectral grids, camera sensitivities and the linear image-formation model.

Spectra and RGBs are plain float64 numpy arrays whose last axis holds the
bands (``n``) or the three camera channels. Rasters (:class:`HyperCube`,
:class:`RgbImage`) carry their grid explicitly so that mismatches are caught.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, RankError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform wavelength sampling ``start_nm + i * step_nm`` for ``i < bands``."""

    start_nm: float = 400.0
    step_nm: float = 10.0
    bands: int = 31

    def __post_init__(self):
        if not (math.isfinite(self.start_nm) and math.isfinite(self.step_nm)):
            raise ValueError("grid start and step must be finite")
        if self.step_nm <= 0:
            raise ValueError(f"step_nm must be positive, got {self.step_nm}")
        if int(self.bands) != self.bands or self.bands < 4:
            # three sensors need at least one null direction
            raise ValueError(f"bands must be an integer >= 4, got {self.bands}")
        object.__setattr__(self, "start_nm", float(self.start_nm))
        object.__setattr__(self, "step_nm", float(self.step_nm))
        object.__setattr__(self, "bands", int(self.bands))

    @property
    def wavelengths(self) -> np.ndarray:
        return self.start_nm + self.step_nm * np.arange(self.bands, dtype=np.float64)

    @classmethod
    def from_wavelengths(cls, wavelengths, rtol=1e-9) -> SpectralGrid:
        wl = np.asarray(wavelengths, dtype=np.float64)
        if wl.ndim != 1 or wl.size < 4:
            raise ValueError("need at least 4 wavelengths")
        steps = np.diff(wl)
        if np.any(steps <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        step = float(wl[-1] - wl[0]) / (wl.size - 1)
        if not np.allclose(steps, step, rtol=rtol, atol=0):
            raise ValueError("wavelengths must be evenly spaced")
        return cls(float(wl[0]), step, wl.size)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SensitivitySet:
    """Camera sensitivities: an ``n x 3`` matrix whose column k is channel k."""

    grid: SpectralGrid
    matrix: np.ndarray

    def __post_init__(self):
        m = _readonly(self.matrix)
        if m.shape != (self.grid.bands, 3):
            raise DimensionError(
                f"sensitivity matrix must be ({self.grid.bands}, 3), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("sensitivities must be finite")
        if np.any(m < 0):
            raise ValueError("sensitivities must be non-negative")
        sv = np.linalg.svd(m, compute_uv=False)
        if sv[0] == 0 or sv[-1] / sv[0] <= RANK_TOL:
            raise RankError(
                "sensitivity matrix is rank deficient "
                f"(singular value ratio {sv[-1] / sv[0] if sv[0] else 0.0:.3e})")
        object.__setattr__(self, "matrix", m)

    @property
    def bands(self) -> int:
        return self.grid.bands

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<ddI", self.grid.start_nm, self.grid.step_nm, self.grid.bands))
        h.update(np.ascontiguousarray(self.matrix, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class HyperCube:
    """An ``H x W`` raster of spectra on ``grid``; ``data`` has shape (H, W, n)."""

    grid: SpectralGrid
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = _readonly(self.data)
        if d.ndim != 3 or d.shape[2] != self.grid.bands:
            raise DimensionError(
                f"cube data must be (H, W, {self.grid.bands}), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("cube contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def pixels(self) -> np.ndarray:
        """Spectra as an (H*W, n) array in row-major pixel order."""
        return self.data.reshape(-1, self.grid.bands)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """An ``H x W`` raster of camera responses; ``data`` has shape (H, W, 3)."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = _readonly(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise DimensionError(f"image data must be (H, W, 3), got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def pixels(self) -> np.ndarray:
        return self.data.reshape(-1, 3)


def _check_grid(grid: SpectralGrid, s: SensitivitySet):
    if grid != s.grid:
        raise DimensionError(f"grid mismatch: {grid} vs sensitivities {s.grid}")


def form_rgb(r, s: SensitivitySet) -> np.ndarray:
    """Camera response ``S^T r`` of one spectrum or a stack of spectra.

    ``r`` may have any leading shape; its last axis must match the number of
    bands of ``s``.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 0 or r.shape[-1] != s.bands:
        raise DimensionError(
            f"spectrum has {r.shape[-1] if r.ndim else 0} bands, sensitivities have {s.bands}")
    return r @ s.matrix


def form_rgb_image(cube: HyperCube, s: SensitivitySet) -> RgbImage:
    _check_grid(cube.grid, s)
    return RgbImage(form_rgb(cube.data, s))


def _check_xi(xi) -> float:
    try:
        xi = float(xi)
    except (TypeError, ValueError):
        raise ValueError(f"exposure factor must be a real number, got {xi!r}") from None
    if not math.isfinite(xi) or xi <= 0:
        raise ValueError(f"exposure factor must be positive and finite, got {xi}")
    return xi


def scale_spectrum(r, xi) -> np.ndarray:
    return np.asarray(r, dtype=np.float64) * _check_xi(xi)


def scale_rgb(rho, xi) -> np.ndarray:
    return np.asarray(rho, dtype=np.float64) * _check_xi(xi)


def scale_cube(cube: HyperCube, xi) -> HyperCube:
    return HyperCube(cube.grid, cube.data * _check_xi(xi))


def scale_image(img: RgbImage, xi) -> RgbImage:
    return RgbImage(img.data * _check_xi(xi))
