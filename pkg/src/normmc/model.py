"""Observation model for matrix completion from uniformly sampled entries.

A target matrix is observed through a list of standard-basis measurements
with additive sub-Gaussian noise.  This module holds the sampling law, the
measurement operator and its adjoint, and the spikiness ratio that controls
identifiability under uniform sampling.

Index convention: observation indices are 0-based everywhere inside the
package; the 1-based convention appears only in MatrixMarket files (see
:mod:`normmc.io`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ObservationSet",
    "NoiseModel",
    "stream_rng",
    "sample_omega",
    "project_omega",
    "adjoint_omega",
    "spikiness",
    "generate_observations",
]

# Exact sub-Gaussian norms sup_{p>=1} p^{-1/2} (E|X|^p)^{1/p} of the three
# unit-variance noise families (the supremum sits at p = 1 for each).
PSI2_NORMS = {
    "gaussian": math.sqrt(2.0 / math.pi),
    "rademacher": 1.0,
    "uniform-bounded": math.sqrt(3.0) / 2.0,
}


def stream_rng(seed, stream=0):
    """Counter-based generator for reproducible parallel Monte Carlo streams.

    Distinct ``stream`` ids on the same ``seed`` yield statistically
    independent, replayable generators (Philox keyed through a spawned
    SeedSequence).
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def as_matrix(X):
    """Validate and return a 2-D float array with finite entries."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={X.ndim}")
    if X.size == 0:
        raise ValueError("matrix must be nonempty")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix entries must be finite")
    return X


@dataclass(frozen=True)
class ObservationSet:
    """Ordered multiset of observed cells of a d1 x d2 matrix.

    Duplicates are allowed and significant: observation k is identified by
    its position in ``rows``/``cols``, and the adjoint accumulates repeated
    cells.
    """

    d1: int
    d2: int
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("matrix dimensions must be positive")
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        if rows.shape != cols.shape or rows.ndim != 1:
            raise ValueError("rows/cols must be 1-D arrays of equal length")
        if rows.size and (rows.min() < 0 or rows.max() >= self.d1):
            raise ValueError("row index out of bounds")
        if cols.size and (cols.min() < 0 or cols.max() >= self.d2):
            raise ValueError("column index out of bounds")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        rows.setflags(write=False)
        cols.setflags(write=False)

    @property
    def m(self):
        return int(self.rows.size)

    @property
    def shape(self):
        return (self.d1, self.d2)

    def multiplicities(self):
        """Per-cell observation counts as a dense d1 x d2 array."""
        out = np.zeros((self.d1, self.d2))
        np.add.at(out, (self.rows, self.cols), 1.0)
        return out


def full_observation(d1, d2):
    """Every cell observed exactly once, row-major order."""
    ii, jj = np.meshgrid(np.arange(d1), np.arange(d2), indexing="ij")
    return ObservationSet(d1, d2, ii.ravel(), jj.ravel())


@dataclass(frozen=True)
class NoiseModel:
    """Unit-variance sub-Gaussian noise family scaled by ``nu``.

    ``b`` is the sub-Gaussian norm of the unscaled family, frozen from the
    closed-form moment computation (see PSI2_NORMS).
    """

    kind: str = "gaussian"
    nu: float = 0.0
    b: float = field(init=False)

    def __post_init__(self):
        if self.kind not in PSI2_NORMS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.nu < 0:
            raise ValueError("noise scale must be nonnegative")
        object.__setattr__(self, "b", PSI2_NORMS[self.kind])

    def draw(self, m, rng):
        """m i.i.d. unscaled (unit-variance) noise variates."""
        if self.kind == "gaussian":
            return rng.standard_normal(m)
        if self.kind == "rademacher":
            return rng.choice([-1.0, 1.0], size=m)
        # uniform on [-sqrt(3), sqrt(3)] has variance 1
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=m)


def sample_omega(d1, d2, m, seed, stream=0):
    """Draw m cells i.i.d. uniformly with replacement.

    Deterministic given (seed, stream).
    """
    if d1 < 1 or d2 < 1:
        raise ValueError("matrix dimensions must be positive")
    if m < 0:
        raise ValueError("sample count must be nonnegative")
    rng = stream_rng(seed, stream)
    flat = rng.integers(0, d1 * d2, size=m)
    return ObservationSet(d1, d2, flat // d2, flat % d2)


def project_omega(X, omega):
    """Sample X at the observed cells: output[k] = X[i_k, j_k]."""
    X = as_matrix(X)
    if X.shape != omega.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {omega.shape}")
    return X[omega.rows, omega.cols].astype(float, copy=True)


def adjoint_omega(v, omega):
    """Adjoint of :func:`project_omega`; duplicate cells accumulate.

    Satisfies <project_omega(X), v> = <X, adjoint_omega(v)> for all X, v.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (omega.m,):
        raise ValueError(f"length mismatch: {v.shape} vs m={omega.m}")
    out = np.zeros(omega.shape)
    np.add.at(out, (omega.rows, omega.cols), v)
    return out


def spikiness(X):
    """Spikiness ratio sqrt(d1*d2) * ||X||_inf / ||X||_F, in [1, sqrt(d1*d2)].

    Scale invariant; undefined (raises) for the zero matrix.
    """
    X = as_matrix(X)
    fro = np.linalg.norm(X)
    if fro == 0.0:
        raise ValueError("spikiness is undefined for the zero matrix")
    return math.sqrt(X.size) * np.max(np.abs(X)) / fro


def generate_observations(theta, omega, noise, seed, stream=0):
    """y_k = theta[i_k, j_k] + nu * eta_k with eta i.i.d. from the noise kind."""
    clean = project_omega(theta, omega)
    if noise.nu == 0.0:
        return clean
    rng = stream_rng(seed, stream)
    return clean + noise.nu * noise.draw(omega.m, rng)
