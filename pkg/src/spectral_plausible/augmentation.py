"""Log-uniform exposure scaling used to augment training pairs."""

from __future__ import annotations

import numpy as np

RNG_ALGORITHM = "numpy.PCG64"


class ExposureSampler:
    """Draws exposure factors ``xi = beta ** u`` with ``u ~ Uniform(-1, 1)``.

    A sampler owns its generator; give every consumer its own instance.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, beta: float = 10.0, seed: int = 0):
        if not beta > 1:
            raise ValueError(f"beta must be > 1, got {beta}")
        self.beta = float(beta)
        self.seed = int(seed)
        self._rng = np.random.Generator(np.random.PCG64(self.seed))

    def __repr__(self):
        return f"ExposureSampler(beta={self.beta}, seed={self.seed})"

    def sample_xi(self, size=None):
        u = self._rng.uniform(-1.0, 1.0, size=size)
        xi = np.power(self.beta, u)
        # pow rounding can land a hair outside the closed interval
        return np.clip(xi, 1.0 / self.beta, self.beta)


def sample_xi(sampler: ExposureSampler, size=None):
    return sampler.sample_xi(size)


def augment_pair(sampler: ExposureSampler, rho, r):
    """Scale an (rgb, spectrum) pair by one fresh exposure factor.

    Returns ``(xi * rho, xi * r, xi)``. Because image formation is linear the
    scaled pair stays consistent.
    """
    xi = float(sampler.sample_xi())
    return np.asarray(rho, dtype=np.float64) * xi, np.asarray(r, dtype=np.float64) * xi, xi
