"""Null-space decomposition of spectra with respect to a camera.

Every spectrum ``r`` splits into a part the camera sees, ``r_par = P_S r``,
and a part it cannot see, ``r_perp = N alpha``. Given an RGB ``rho`` the
visible part is fixed, ``r_par = S (S^T S)^-1 rho``, so the set of spectra
that integrate to ``rho`` is parameterised by ``alpha`` alone. Spectra built
with :func:`reconstruct` therefore reproduce ``rho`` whatever ``alpha`` is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np
import scipy.linalg

from .exceptions import DimensionError
from .spectral import SensitivitySet, _readonly

ORTHONORMAL_TOL = 1e-12


class PlausibleDecomposition(NamedTuple):
    rho: np.ndarray
    alpha: np.ndarray


@dataclass(frozen=True, eq=False)
class NullSpaceModel:
    """Precomputed projections for one set of camera sensitivities.

    Attributes
    ----------
    sensitivities : SensitivitySet
    pinv_factor : (n, 3) array, ``S (S^T S)^-1``
    null_basis : (n, n-3) array ``N`` spanning the orthogonal complement of span(S)
    proj_s, proj_n : (n, n) projections onto span(S) and span(N)
    """

    sensitivities: SensitivitySet
    pinv_factor: np.ndarray
    null_basis: np.ndarray
    proj_s: np.ndarray
    proj_n: np.ndarray

    def __post_init__(self):
        n = self.sensitivities.bands
        shapes = {"pinv_factor": (n, 3), "null_basis": (n, n - 3),
                  "proj_s": (n, n), "proj_n": (n, n)}
        for name, shape in shapes.items():
            a = _readonly(getattr(self, name))
            if a.shape != shape:
                raise DimensionError(f"{name} must be {shape}, got {a.shape}")
            object.__setattr__(self, name, a)
        gram = self.null_basis.T @ self.null_basis
        object.__setattr__(self, "_gram", gram)
        object.__setattr__(
            self, "orthonormal",
            bool(np.max(np.abs(gram - np.eye(n - 3))) < ORTHONORMAL_TOL))

    @property
    def bands(self) -> int:
        return self.sensitivities.bands

    @property
    def n_alpha(self) -> int:
        return self.sensitivities.bands - 3

    def residuals(self) -> dict:
        """Max-abs deviations of the defining identities (all should be ~0)."""
        s = self.sensitivities.matrix
        n = self.bands
        ps, pn = self.proj_s, self.proj_n
        return {
            "st_n": float(np.max(np.abs(s.T @ self.null_basis))),
            "nt_n_minus_i": float(np.max(np.abs(self._gram - np.eye(n - 3)))),
            "ps_plus_pn_minus_i": float(np.max(np.abs(ps + pn - np.eye(n)))),
            "ps_asymmetry": float(np.max(np.abs(ps - ps.T))),
            "ps_idempotency": float(np.max(np.abs(ps @ ps - ps))),
            "st_pinv_minus_i": float(np.max(np.abs(s.T @ self.pinv_factor - np.eye(3)))),
        }


def _sign_normalize(basis: np.ndarray) -> np.ndarray:
    # first non-negligible entry of every column is made positive
    out = basis.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        tol = 1e-12 * np.max(np.abs(col))
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size and col[idx[0]] < 0:
            out[:, j] = -col
    return out


def _projector(basis: np.ndarray) -> np.ndarray:
    """``B (B^T B)^-1 B^T`` via a Cholesky solve, symmetrised."""
    gram = basis.T @ basis
    coef = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), basis.T)
    p = basis @ coef
    return 0.5 * (p + p.T)


def build_null_model(s: SensitivitySet, basis=None) -> NullSpaceModel:
    """Build the projections and null basis for ``s``.

    By default ``N`` is orthonormal: the trailing ``n - 3`` columns of the
    complete QR factorisation of ``S``, each flipped so its first nonzero entry
    is positive. A custom ``basis`` (any full-rank ``n x (n-3)`` matrix
    orthogonal to the sensitivities) may be supplied instead.
    """
    S = s.matrix
    n = s.bands
    q, r = np.linalg.qr(S, mode="complete")
    q1, r1 = q[:, :3], r[:3, :]
    # S (S^T S)^-1 = Q1 R^-T
    pinv_factor = scipy.linalg.solve_triangular(r1, q1.T, lower=False).T
    if basis is None:
        null_basis = _sign_normalize(q[:, 3:])
    else:
        null_basis = np.asarray(basis, dtype=np.float64)
        if null_basis.shape != (n, n - 3):
            raise DimensionError(f"basis must be ({n}, {n - 3}), got {null_basis.shape}")
        scale = np.linalg.norm(S, axis=0)[:, None] * np.linalg.norm(null_basis, axis=0)[None, :]
        if np.max(np.abs(S.T @ null_basis) / scale) > 1e-10:
            raise ValueError("basis is not orthogonal to the sensitivities")
        sv = np.linalg.svd(null_basis, compute_uv=False)
        if sv[-1] / sv[0] <= 1e-10:
            raise ValueError("basis columns are not linearly independent")
    proj_s = pinv_factor @ S.T
    proj_s = 0.5 * (proj_s + proj_s.T)
    return NullSpaceModel(s, pinv_factor, null_basis, proj_s, _projector(null_basis))


def _as_spectra(model: NullSpaceModel, r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 0 or r.shape[-1] != model.bands:
        raise DimensionError(f"expected spectra with {model.bands} bands, got shape {r.shape}")
    return r


def fundamental_spectrum(model: NullSpaceModel, rho) -> np.ndarray:
    """The unique spectrum in span(S) that integrates to ``rho``."""
    rho = np.asarray(rho, dtype=np.float64)
    if rho.ndim == 0 or rho.shape[-1] != 3:
        raise DimensionError(f"rgb must have 3 channels, got shape {rho.shape}")
    return rho @ model.pinv_factor.T


def extract_alpha(model: NullSpaceModel, r) -> PlausibleDecomposition:
    """Split spectra into their RGB and null-space coefficients."""
    r = _as_spectra(model, r)
    rho = r @ model.sensitivities.matrix
    proj = r @ model.null_basis
    if model.orthonormal:
        alpha = proj
    else:
        flat = proj.reshape(-1, model.n_alpha).T
        alpha = np.linalg.solve(model._gram, flat).T.reshape(proj.shape)
    return PlausibleDecomposition(rho, alpha)


def reconstruct(model: NullSpaceModel, rho, alpha) -> np.ndarray:
    """Spectra in the plausible set of ``rho`` with null coefficients ``alpha``.

    ``rho`` and ``alpha`` broadcast over leading axes. The result integrates
    back to ``rho`` for any ``alpha``.
    """
    rho = np.asarray(rho, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim == 0 or alpha.shape[-1] != model.n_alpha:
        raise DimensionError(
            f"alpha must have {model.n_alpha} entries, got shape {alpha.shape}")
    r = fundamental_spectrum(model, rho) + alpha @ model.null_basis.T
    # one refinement step removes rounding leakage of N alpha into span(S)
    r = r + (rho - r @ model.sensitivities.matrix) @ model.pinv_factor.T
    return r


@dataclass(frozen=True)
class Recentering:
    """Affine map ``alpha_tilde = (alpha + offset) / divisor``."""

    offset: float = 1.0
    divisor: float = 2.0

    def __post_init__(self):
        if not self.divisor > 0:
            raise ValueError(f"divisor must be positive, got {self.divisor}")

    def apply(self, alpha):
        return (np.asarray(alpha, dtype=np.float64) + self.offset) / self.divisor

    def invert(self, alpha_tilde):
        return np.asarray(alpha_tilde, dtype=np.float64) * self.divisor - self.offset


UNAUGMENTED_RECENTERING = Recentering(1.0, 2.0)
AUGMENTED_RECENTERING = Recentering(10.0, 20.0)


def recenter(alpha, rc: Recentering = UNAUGMENTED_RECENTERING):
    return rc.apply(alpha)


def unrecenter(alpha_tilde, rc: Recentering = UNAUGMENTED_RECENTERING):
    return rc.invert(alpha_tilde)


def alpha_range_report(model: NullSpaceModel, spectra: Iterable) -> tuple[float, float]:
    """Global min and max of the null coefficients over a stream of spectra.

    Each item of ``spectra`` may be a single spectrum or any stack of them
    (e.g. a cube's ``data``).
    """
    lo, hi = np.inf, -np.inf
    seen = False
    for r in spectra:
        alpha = extract_alpha(model, r).alpha
        if alpha.size == 0:
            continue
        seen = True
        lo = min(lo, float(alpha.min()))
        hi = max(hi, float(alpha.max()))
    if not seen:
        raise ValueError("alpha_range_report needs at least one spectrum")
    return lo, hi


def recentering_for_range(lo: float, hi: float, margin: float = 0.05) -> Recentering:
    """Smallest symmetric recentering that maps ``[lo, hi]`` inside ``(0, 1)``."""
    bound = max(abs(lo), abs(hi)) * (1.0 + margin)
    if bound == 0:
        bound = 1.0
    return Recentering(bound, 2.0 * bound)
