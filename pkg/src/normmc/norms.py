"""Matrix norms for structured completion: Frobenius, nuclear, spectral k-support.

Each registered norm supplies its value, dual value, proximal operator,
subdifferential samples, and a dual-achieving direction.  The spectral
k-support norm is the vector k-support norm applied to singular values; it
interpolates between the nuclear norm (k=1) and the Frobenius norm
(k = min(d1, d2)), and its value has a closed form driven by a unique
threshold integer r splitting the sorted spectrum into a "big entry" head
(shrunk quadratically) and an averaged tail.

All operators act on and return plain ndarrays.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .model import as_matrix

__all__ = [
    "NormSpec",
    "parse_norm_spec",
    "KSupportDecomposition",
    "SubgradientSample",
    "find_kr_threshold",
    "vector_ksupport_norm",
    "vector_ksupport_prox",
    "norm_value",
    "dual_norm_value",
    "prox",
    "subgradient",
    "dual_achieving_direction",
]

log = logging.getLogger(__name__)

KINDS = ("frobenius", "nuclear", "kspectral")

# relative cutoff on sigma_1 below which singular values count as zero
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class NormSpec:
    """A registered norm: "frobenius", "nuclear", or "kspectral" with parameter k."""

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "kspectral":
            if self.k is None or self.k < 1:
                raise ValueError("kspectral requires a positive integer k")
        elif self.k is not None:
            raise ValueError(f"{self.kind} takes no parameter")

    # every registered kind supports the full capability set
    has_prox = True
    has_subdifferential = True
    has_cone_sampler = True

    def __str__(self):
        if self.kind == "kspectral":
            return f"kspectral:k={self.k}"
        return self.kind

    def check_shape(self, shape):
        if self.kind == "kspectral" and self.k > min(shape):
            raise ValueError(f"k={self.k} exceeds min{shape}")


def parse_norm_spec(text):
    """Parse the compact string form: "frobenius", "nuclear", "kspectral:k=3"."""
    text = text.strip()
    if text in ("frobenius", "nuclear"):
        return NormSpec(text)
    if text.startswith("kspectral"):
        _, _, arg = text.partition(":")
        if not arg.startswith("k="):
            raise ValueError(f"bad kspectral spec {text!r}, expected kspectral:k=<int>")
        return NormSpec("kspectral", k=int(arg[2:]))
    raise ValueError(f"unknown norm spec {text!r}")


@dataclass(frozen=True)
class KSupportDecomposition:
    """Threshold split of a sorted nonnegative vector for parameter k.

    r is the unique integer in {0..k-1} with
        sigma_{k-r-1} > (1/(r+1)) * sum_{i>=k-r} sigma_i >= sigma_{k-r}
    (1-based positions, sigma_0 = +inf).  ``head`` are the 0-based positions
    {0..k-r-2} (quadratic part), ``tail`` the positions {k-r-1..s-1} up to
    the numerical rank s; the two partition {0..s-1}.
    """

    r: int
    s: int
    head: range
    tail: range
    tail_sum: float  # sum over the full tail of sigma, zeros included


def find_kr_threshold(sigma, k):
    """Find the unique threshold integer r for a sorted nonincreasing vector.

    Raises if the input is unsorted or no unique r exists (which would
    indicate a broken invariant, not a data condition).
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 1 or sigma.size == 0:
        raise ValueError("sigma must be a nonempty vector")
    if np.any(np.diff(sigma) > 0):
        raise ValueError("sigma must be sorted nonincreasing")
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    d = sigma.size
    if not 1 <= k <= d:
        raise ValueError(f"k={k} out of range for dimension {d}")

    tail_from = np.concatenate([np.cumsum(sigma[::-1])[::-1], [0.0]])
    rs = np.arange(k)
    # 1-based position k-r-1 -> 0-based k-r-2; sigma_0 = +inf convention
    lefts = np.concatenate([[math.inf], sigma[: k - 1]])[::-1]
    rights = sigma[k - rs - 1]
    avg_tails = tail_from[k - rs - 1] / (rs + 1)
    hits = np.flatnonzero((lefts > avg_tails) & (avg_tails >= rights))
    if hits.size:
        # float ties at the defining boundary give adjacent r with equal value
        r = int(hits[0])
    else:
        violations = np.maximum(avg_tails - lefts, rights - avg_tails)
        r = int(np.argmin(np.maximum(violations, 0.0)))

    s = int(np.sum(sigma > RANK_RTOL * max(sigma[0], 1e-300)))
    head = range(0, k - r - 1)
    tail = range(k - r - 1, max(s, k - r - 1))
    return KSupportDecomposition(r, s, head, tail, float(tail_from[k - r - 1]))


def vector_ksupport_norm(z, k):
    """Vector k-support norm via the closed form on sorted absolute values."""
    z = np.abs(np.asarray(z, dtype=float))
    zs = np.sort(z)[::-1]
    dec = find_kr_threshold(zs, k)
    head_sq = float(np.sum(zs[list(dec.head)] ** 2)) if len(dec.head) else 0.0
    return math.sqrt(head_sq + dec.tail_sum**2 / (dec.r + 1))


def _dual_topk_l2(z, k):
    """Dual of the vector k-support norm: l2 norm of the k largest magnitudes."""
    a = np.abs(np.asarray(z, dtype=float))
    if k >= a.size:
        return float(np.linalg.norm(a))
    part = np.partition(a, a.size - k)[a.size - k:]
    return float(np.linalg.norm(part))


def _prox_candidates(zs, k, t):
    """Enumerate KKT-consistent candidate solutions on the sorted magnitudes.

    At the minimizer, positions split into a head (scaled by N/(N+t) with N
    the optimal norm value), a tail (shifted down by a common delta), and
    zeros.  For each candidate (r, support) the stationarity conditions pin
    N as the root of a strictly decreasing scalar equation; the roots for
    the whole (r, support) grid are bisected in parallel.  Candidates that
    pass all KKT side conditions are decided by exact objective comparison;
    if rounding leaves none, every constructed candidate is returned.
    """
    d = zs.size
    cums = np.concatenate([[0.0], np.cumsum(zs)])
    cumsq = np.concatenate([[0.0], np.cumsum(zs * zs)])
    eps = 1e-11 * (zs[0] + 1.0)
    valid = []
    fallback = [np.zeros(d)]

    # pure-l2 regime: support smaller than k, every coordinate in the head
    for s in range(1, min(k, d) + 1):
        n_opt = math.sqrt(cumsq[s]) - t
        if n_opt <= 0:
            continue
        x = np.zeros(d)
        x[:s] = zs[:s] * (n_opt / (n_opt + t))
        fallback.append(x)
        # KKT needs every dropped coordinate to be (numerically) zero
        if s == d or zs[s] <= eps:
            valid.append(x)

    # head/tail regime over the full (r, support) grid, vectorized
    rr, ss = np.meshgrid(np.arange(k), np.arange(1, d + 1), indexing="ij")
    rr, ss = rr.ravel(), ss.ravel()
    kh = k - rr - 1
    keep = ss > kh
    rr, ss, kh = rr[keep], ss[keep], kh[keep]
    q2 = cumsq[kh]
    s1 = cums[ss] - cums[kh]
    mm = (ss - kh).astype(float)
    rp1 = (rr + 1).astype(float)
    with np.errstate(divide="ignore"):
        g0 = q2 / t**2 + rp1 * s1**2 / (t * mm) ** 2 - 1.0
    keep = (s1 > 0) & (g0 > 0)
    rr, ss, kh = rr[keep], ss[keep], kh[keep]
    q2, s1, mm, rp1 = q2[keep], s1[keep], mm[keep], rp1[keep]

    if rr.size:
        lo = np.zeros(rr.size)
        hi = np.sqrt(q2) + s1 + t
        for _ in range(8):
            bad = q2 / (hi + t) ** 2 + rp1 * s1**2 / (rp1 * hi + t * mm) ** 2 > 1.0
            if not bad.any():
                break
            hi[bad] *= 2.0
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            above = q2 / (mid + t) ** 2 + rp1 * s1**2 / (rp1 * mid + t * mm) ** 2 > 1.0
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        n_opt = 0.5 * (lo + hi)
        delta = t * s1 / (rp1 * n_opt + t * mm)

        ok = zs[ss - 1] - delta >= -eps  # tail stays nonnegative
        inner = ss < d
        ok[inner] &= zs[ss[inner]] - delta[inner] <= eps  # dropped entries small
        headed = kh > 0
        if headed.any():
            head_last = zs[np.maximum(kh - 1, 0)] * n_opt / (n_opt + t)
            avg = (s1 - mm * delta) / rp1
            # threshold consistency of the split at the solution
            cons = (head_last >= avg - eps) & (avg >= zs[np.minimum(kh, d - 1)] - delta - eps)
            ok[headed] &= cons[headed]

        order = np.concatenate([np.flatnonzero(ok), np.flatnonzero(~ok)])
        for idx in order:
            if ok[idx] or not valid:
                x = np.zeros(d)
                h = kh[idx]
                x[:h] = zs[:h] * (n_opt[idx] / (n_opt[idx] + t))
                x[h:ss[idx]] = np.maximum(zs[h:ss[idx]] - delta[idx], 0.0)
                (valid if ok[idx] else fallback).append(x)

    return valid if valid else fallback


def vector_ksupport_prox(z, k, t):
    """argmin_x (1/2)||x - z||^2 + t * ||x||_{k-sp}.

    Preserves the sign pattern and magnitude ordering of z.  k=1 reduces to
    soft-thresholding by t, k=d to the block shrinkage (1 - t/||z||)_+ z.
    """
    z = np.asarray(z, dtype=float)
    d = z.size
    if not 1 <= k <= d:
        raise ValueError(f"k={k} out of range for dimension {d}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return z.copy()
    a = np.abs(z)
    order = np.argsort(-a, kind="stable")
    zs = a[order]
    if _dual_topk_l2(zs, k) <= t:
        return np.zeros(d)

    candidates = _prox_candidates(zs, k, t)
    if len(candidates) == 1:
        best = candidates[0]
    else:
        best, best_obj = None, math.inf
        for x in candidates:
            obj = 0.5 * float(np.sum((x - zs) ** 2)) + t * vector_ksupport_norm(x, k)
            if obj < best_obj:
                best, best_obj = x, obj
    xs = np.zeros(d)
    xs[order] = best
    return np.sign(z) * xs


def _svd(X):
    return np.linalg.svd(X, full_matrices=False)


def norm_value(spec, X):
    """Evaluate the norm.  Spectral k-support goes through the closed form."""
    X = as_matrix(X)
    spec.check_shape(X.shape)
    if spec.kind == "frobenius":
        return float(np.linalg.norm(X))
    sig = np.linalg.svd(X, compute_uv=False)
    if spec.kind == "nuclear":
        return float(np.sum(sig))
    return vector_ksupport_norm(sig, spec.k)


def dual_norm_value(spec, X):
    """Dual norm: Frobenius is self-dual, nuclear dualizes to the spectral
    norm, k-support to the l2 norm of the k largest singular values."""
    X = as_matrix(X)
    spec.check_shape(X.shape)
    if spec.kind == "frobenius":
        return float(np.linalg.norm(X))
    sig = np.linalg.svd(X, compute_uv=False)
    if spec.kind == "nuclear":
        return float(sig[0])
    return float(np.linalg.norm(sig[: spec.k]))


def prox(spec, Z, t):
    """argmin_X (1/2)||X - Z||_F^2 + t * R(X).

    Nuclear is singular-value soft-thresholding; spectral k-support applies
    the vector prox to the singular values and reassembles with the same
    singular vectors (orthogonal invariance).
    """
    Z = as_matrix(Z)
    spec.check_shape(Z.shape)
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0 or not Z.any():
        return Z.copy()
    if spec.kind == "frobenius":
        fro = np.linalg.norm(Z)
        return max(0.0, 1.0 - t / fro) * Z
    U, sig, Vt = _svd(Z)
    if spec.kind == "nuclear":
        shrunk = np.maximum(sig - t, 0.0)
    else:
        shrunk = vector_ksupport_prox(sig, spec.k, t)
    return (U * shrunk) @ Vt


@dataclass(frozen=True)
class SubgradientSample:
    """A member W of the subdifferential at some anchor X: <W, X> = R(X) and
    the dual norm of W is at most 1."""

    W: np.ndarray
    kind: str


def _spectral_subgradient_coeffs(sig, k, h):
    """Diagonal coefficients of a k-support subgradient in the anchor's SVD basis."""
    dec = find_kr_threshold(sig, k)
    n_val = vector_ksupport_norm(sig, k)
    dmin = sig.size
    coef = np.zeros(dmin)
    head = list(dec.head)
    tail = list(dec.tail)
    if head:
        coef[head] = sig[head]
    tail_l1 = float(np.sum(sig[tail])) if tail else 0.0
    if tail:
        coef[tail] = tail_l1 / (dec.r + 1)
    if h is not None and dec.s < dmin:
        coef[dec.s:] = (tail_l1 / (dec.r + 1)) * h
    return coef / n_val


def subgradient(spec, X, h=None):
    """A subdifferential member at X, built from the SVD of X.

    ``h`` (optional, ||h||_inf <= 1) parameterizes the freedom on the zero
    singular-value positions; omitted means h = 0.  Raises on the zero
    matrix, where the subdifferential is the whole dual ball.
    """
    X = as_matrix(X)
    spec.check_shape(X.shape)
    if not X.any():
        raise ValueError("subgradient sample requires a nonzero anchor")
    if spec.kind == "frobenius":
        if h is not None:
            raise ValueError("frobenius subgradient has no free parameter")
        return SubgradientSample(X / np.linalg.norm(X), spec.kind)

    U, sig, Vt = _svd(X)
    k = 1 if spec.kind == "nuclear" else spec.k
    s = int(np.sum(sig > RANK_RTOL * sig[0]))
    if h is not None:
        h = np.asarray(h, dtype=float)
        if h.shape != (sig.size - s,):
            raise ValueError(f"h must have length {sig.size - s} (zero positions)")
        if h.size and np.max(np.abs(h)) > 1 + 1e-12:
            raise ValueError("h must satisfy ||h||_inf <= 1")
    coef = _spectral_subgradient_coeffs(sig, k, h)
    return SubgradientSample((U * coef) @ Vt, spec.kind)


def project_norm_ball(spec, Z, radius, tol=1e-10):
    """Euclidean projection onto {X : R(X) <= radius}, via bisection on the
    prox parameter (R(prox_t(Z)) decreases monotonically in t).

    Frobenius is the exact radial closed form; the spectral norms factor Z
    once and bisect on the singular values only.
    """
    Z = as_matrix(Z)
    spec.check_shape(Z.shape)
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    if norm_value(spec, Z) <= radius:
        return Z.copy()
    if spec.kind == "frobenius":
        return (radius / np.linalg.norm(Z)) * Z

    U, sig, Vt = _svd(Z)
    if spec.kind == "nuclear":
        vec_prox = lambda t: np.maximum(sig - t, 0.0)
        vec_norm = np.sum
    else:
        vec_prox = lambda t: vector_ksupport_prox(sig, spec.k, t)
        vec_norm = lambda x: vector_ksupport_norm(x, spec.k)

    lo, hi = 0.0, 1.0
    while vec_norm(vec_prox(hi)) > radius:
        hi *= 2.0
        if hi > 1e18:
            return np.zeros(Z.shape)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if vec_norm(vec_prox(mid)) > radius:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(hi, 1.0):
            break
    return (U * vec_prox(hi)) @ Vt


def dual_achieving_direction(spec, M):
    """Y with R(Y) <= 1 attaining <M, Y> = dual_norm_value(spec, M).

    This is a subgradient of the dual norm at M, used by the Dantzig solver.
    Returns the zero matrix when M = 0.
    """
    M = as_matrix(M)
    spec.check_shape(M.shape)
    if not M.any():
        return np.zeros(M.shape)
    if spec.kind == "frobenius":
        return M / np.linalg.norm(M)
    U, sig, Vt = _svd(M)
    if spec.kind == "nuclear":
        return np.outer(U[:, 0], Vt[0, :])
    top = sig[: spec.k]
    scale = np.zeros_like(sig)
    scale[: spec.k] = top / np.linalg.norm(top)
    return (U * scale) @ Vt
