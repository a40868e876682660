"""Spectral (MRAE) and colorimetric (CIE 1976 Delta E) error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .exceptions import DimensionError
from .spectral import HyperCube, RgbImage, SensitivitySet, _check_grid, form_rgb

MRAE_EPS = 1e-6
NEUTRAL_TOL = 0.05
DEFAULT_WORST_K = 1000

# CIE constants for the Lab companding function
_DELTA = 6.0 / 29.0
_T0 = _DELTA ** 3


@dataclass(frozen=True)
class WhitePoint:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"white point entries must be positive, got {self.xyz}")

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def scaled(self, xi: float) -> WhitePoint:
        return WhitePoint(self.x * xi, self.y * xi, self.z * xi)

    @classmethod
    def parse(cls, text: str) -> WhitePoint:
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 3:
            raise ValueError(f"white point needs three comma-separated values, got {text!r}")
        return cls(*(float(p) for p in parts))


def mrae(r_gt, r_rec, eps: float = MRAE_EPS):
    """Mean relative absolute error over the last axis.

    Returns a float for single spectra and an array for stacks. Ground-truth
    values below ``eps`` are clamped to ``eps`` in the denominator.
    """
    r_gt = np.asarray(r_gt, dtype=np.float64)
    r_rec = np.asarray(r_rec, dtype=np.float64)
    if r_gt.shape != r_rec.shape:
        raise DimensionError(f"shape mismatch {r_gt.shape} vs {r_rec.shape}")
    err = np.mean(np.abs(r_gt - r_rec) / np.maximum(r_gt, eps), axis=-1)
    return float(err) if err.ndim == 0 else err


def _lab_f(t):
    return np.where(t > _T0, np.cbrt(t), t / (3.0 * _DELTA ** 2) + 4.0 / 29.0)


def xyz_to_lab(xyz, wp) -> np.ndarray:
    """CIELAB coordinates (L*, a*, b*) of tristimulus values under ``wp``.

    ``wp`` is a :class:`WhitePoint` or anything broadcastable to ``xyz``.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    white = wp.xyz if isinstance(wp, WhitePoint) else np.asarray(wp, dtype=np.float64)
    if np.any(white <= 0):
        raise ValueError("white point must be positive")
    if xyz.shape[-1] != 3:
        raise DimensionError(f"expected 3 channels, got shape {xyz.shape}")
    fx, fy, fz = np.moveaxis(_lab_f(xyz / white), -1, 0)
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def delta_e(lab1, lab2):
    """CIE 1976 color difference: Euclidean distance in Lab."""
    d = np.linalg.norm(np.asarray(lab1, dtype=np.float64) - np.asarray(lab2, dtype=np.float64),
                       axis=-1)
    return float(d) if d.ndim == 0 else d


def auto_white_point(img, tol: float = NEUTRAL_TOL) -> tuple[WhitePoint, bool]:
    """Pick the brightest near-neutral pixel as the white point.

    A pixel is near-neutral when every chromaticity coordinate ``rho_k / sum``
    is within ``tol`` of 1/3. If no pixel qualifies, the per-channel maximum
    of the image is used and the returned flag is True.
    """
    px = img.pixels() if isinstance(img, RgbImage) else np.asarray(img, dtype=np.float64).reshape(-1, 3)
    if px.size == 0 or not np.any(px > 0):
        raise ValueError("cannot pick a white point from an image with no positive pixel")
    total = px.sum(axis=1)
    pos = total > 0
    chroma = np.zeros_like(px)
    chroma[pos] = px[pos] / total[pos, None]
    neutral = pos & np.all(px >= 0, axis=1) & (np.max(np.abs(chroma - 1.0 / 3.0), axis=1) < tol)
    if np.any(neutral):
        idx = np.flatnonzero(neutral)
        best = idx[np.argmax(total[idx])]
        return WhitePoint(*px[best]), False
    return WhitePoint(*px.max(axis=0)), True


def worst_case(errors, k: int = DEFAULT_WORST_K) -> float:
    """Mean of the ``min(k, size)`` largest entries of ``errors``."""
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise ValueError("worst_case needs at least one error value")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return float(np.mean(e[-min(int(k), e.size):]))


def joint_eta(de_values, mrae_values, gamma: float):
    """Joint metric ``gamma * dE' + (1 - gamma) * MRAE'`` per model.

    Each metric is divided by its mean across the models passed in. A column
    whose mean is zero is used unnormalised; such columns are named in the
    returned list.

    Returns
    -------
    eta : ndarray, one value per model
    unnormalized : list of str
    """
    de = np.asarray(de_values, dtype=np.float64)
    mr = np.asarray(mrae_values, dtype=np.float64)
    if de.shape != mr.shape or de.ndim != 1:
        raise DimensionError("need one dE and one MRAE value per model")
    if de.size < 2:
        raise ValueError("joint_eta needs at least two models")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    unnormalized = []
    cols = []
    for name, col in (("delta_e", de), ("mrae", mr)):
        m = col.mean()
        if m == 0:
            unnormalized.append(name)
            cols.append(col)
        else:
            cols.append(col / m)
    return gamma * cols[0] + (1.0 - gamma) * cols[1], unnormalized


def eta_sweep(de_values, mrae_values, gammas=None):
    """Evaluate :func:`joint_eta` on a grid of gammas; rows are gammas."""
    if gammas is None:
        gammas = np.round(np.linspace(0.0, 1.0, 11), 10)
    return np.array([joint_eta(de_values, mrae_values, g)[0] for g in gammas]), np.asarray(gammas)


def eta_breakpoints(de_values, mrae_values) -> list[tuple[float, int, int]]:
    """Gammas in (0, 1) at which the eta-best model changes.

    Each normalised model score is a line in gamma, so the best model follows
    the lower envelope of those lines. Returns ``(gamma, old_best, new_best)``
    triples in increasing gamma.
    """
    lo = joint_eta(de_values, mrae_values, 0.0)[0]
    hi = joint_eta(de_values, mrae_values, 1.0)[0]
    slope = hi - lo
    # ties at gamma=0 go to the line that falls fastest
    current = min(range(lo.size), key=lambda i: (lo[i], slope[i]))
    gamma = 0.0
    out = []
    while True:
        best_g, best_i = None, None
        for i in range(lo.size):
            if slope[i] >= slope[current]:
                continue
            g = (lo[i] - lo[current]) / (slope[current] - slope[i])
            if g <= gamma or g >= 1.0:
                continue
            if best_g is None or g < best_g or (g == best_g and slope[i] < slope[best_i]):
                best_g, best_i = g, i
        if best_g is None:
            return out
        out.append((float(best_g), current, best_i))
        gamma, current = best_g, best_i


@dataclass
class MetricsReport:
    mean_mrae: float
    wc_mrae: float
    mean_de: float
    wc_de: float
    worst_k: int = DEFAULT_WORST_K
    n_images: int = 1
    mrae_clamped: bool = False
    white_point_fallback: bool = False
    per_exposure: dict = field(default_factory=dict)

    _SCALARS = ("mean_mrae", "wc_mrae", "mean_de", "wc_de")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "per_exposure":
                continue
            v = getattr(self, f.name)
            lines.append(f"{f.name}={_fmt(v)}")
        for xi, rep in sorted(self.per_exposure.items()):
            for name in self._SCALARS:
                lines.append(f"xi_{xi:g}.{name}={_fmt(getattr(rep, name))}")
        return "\n".join(lines) + "\n"

    def to_rows(self, **extra) -> list[dict]:
        items = sorted(self.per_exposure.items()) or [(None, self)]
        rows = []
        for xi, rep in items:
            row = dict(extra)
            row["xi"] = "" if xi is None else f"{xi:g}"
            for name in self._SCALARS:
                row[name] = getattr(rep, name)
            row["worst_k"] = rep.worst_k
            rows.append(row)
        return rows


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def pixel_errors(gt: HyperCube, rec: HyperCube, s: SensitivitySet, wp="auto"):
    """Per-pixel MRAE and Delta E maps plus the white point that was used.

    Delta E compares the reintegrated RGBs of both cubes in Lab under ``wp``;
    ``wp="auto"`` picks it from the ground-truth RGBs.
    """
    if gt.data.shape != rec.data.shape:
        raise DimensionError(f"cube shapes differ: {gt.data.shape} vs {rec.data.shape}")
    if gt.grid != rec.grid:
        raise DimensionError(f"cube grids differ: {gt.grid} vs {rec.grid}")
    _check_grid(gt.grid, s)
    rgb_gt = form_rgb(gt.data, s)
    rgb_rec = form_rgb(rec.data, s)
    fallback = False
    if isinstance(wp, str):
        if wp != "auto":
            raise ValueError(f"white point must be 'auto' or a WhitePoint, got {wp!r}")
        wp, fallback = auto_white_point(rgb_gt)
    elif not isinstance(wp, WhitePoint):
        wp = WhitePoint(*np.asarray(wp, dtype=np.float64))
    de_map = delta_e(xyz_to_lab(rgb_gt, wp), xyz_to_lab(rgb_rec, wp))
    mrae_map = mrae(gt.data, rec.data)
    return mrae_map, de_map, wp, fallback


def evaluate_cubes(gt: HyperCube, rec: HyperCube, s: SensitivitySet, wp="auto",
                   k: int = DEFAULT_WORST_K) -> MetricsReport:
    mrae_map, de_map, _, fallback = pixel_errors(gt, rec, s, wp)
    return MetricsReport(
        mean_mrae=float(np.mean(mrae_map)),
        wc_mrae=worst_case(mrae_map, k),
        mean_de=float(np.mean(de_map)),
        wc_de=worst_case(de_map, k),
        worst_k=int(k),
        mrae_clamped=bool(np.any(gt.data < MRAE_EPS)),
        white_point_fallback=fallback,
    )


def combine_reports(reports) -> MetricsReport:
    """Average per-image reports (mean of means, mean of worst cases)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to combine")
    avg = {name: float(np.mean([getattr(r, name) for r in reports]))
           for name in MetricsReport._SCALARS}
    return MetricsReport(
        **avg,
        worst_k=reports[0].worst_k,
        n_images=sum(r.n_images for r in reports),
        mrae_clamped=any(r.mrae_clamped for r in reports),
        white_point_fallback=any(r.white_point_fallback for r in reports),
    )


def exposure_report(by_xi: dict) -> MetricsReport:
    """Fold per-exposure reports into one whose scalars average over exposures."""
    top = combine_reports(by_xi.values())
    top.n_images = next(iter(by_xi.values())).n_images
    top.per_exposure = dict(by_xi)
    return top
