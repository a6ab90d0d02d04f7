"""Monte Carlo estimation of the cone-geometry quantities behind the
sample-complexity and error bounds: Gaussian width (lower estimates by
sampled-and-ascended suprema, upper estimates by distance to the polar cone),
partial complexity of localized measurements, the norm compatibility
constant, and an empirical restricted-strong-convexity verifier.

Conventions.  All set samplers emit unit-Frobenius directions.  For a norm R
anchored at a nonzero matrix, the descent cone is the cone of perturbations
along which R does not increase; its sphere slice is what the width
estimators sample.  Lower-bound estimators report the mean of per-draw
achieved suprema (a lower bound of the true width in expectation);
the polar-distance estimator reports the mean per-draw infimum distance,
an upper bound.  Standard errors are batch means over 10 equal batches
(local ascent makes within-batch values dependent on the shared pool).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .model import NoiseModel, as_matrix, full_observation, project_omega, adjoint_omega, sample_omega, spikiness, stream_rng
from .norms import NormSpec, find_kr_threshold, norm_value, project_norm_ball, subgradient

__all__ = [
    "GeometryEstimate",
    "GeometryError",
    "PointSet",
    "UnitSphere",
    "DescentCone",
    "gaussian_width_lower",
    "gaussian_width_upper_polar",
    "ksupport_width_bound",
    "partial_complexity",
    "compatibility_constant",
    "rsc_verify",
    "beta_threshold",
    "spiky_error_floor",
    "theorem2_ceiling",
]

log = logging.getLogger(__name__)

N_BATCHES = 10


class GeometryError(RuntimeError):
    """Sampler budget exhausted or degenerate geometry."""


@dataclass(frozen=True)
class GeometryEstimate:
    """A Monte Carlo scalar with its dispersion and bound direction."""

    value: float
    stderr: float
    samples: int
    direction: str  # "lower-bound" | "upper-bound" | "unbiased"
    seed: int

    def csv_row(self, name, wall_time=0.0):
        return (
            f"{name},{self.value!r},{self.stderr!r},{self.samples},"
            f"{self.direction},{self.seed},{wall_time!r}"
        )


def _batch_stderr(values, reduce=np.mean):
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return 0.0
    b = min(N_BATCHES, n)
    batches = np.array_split(values, b)
    stats = np.array([reduce(x) for x in batches])
    return float(stats.std(ddof=1) / math.sqrt(b))


def _unit(X):
    return X / np.linalg.norm(X)


class UnitSphere:
    """The whole unit Frobenius sphere."""

    def __init__(self, shape):
        self.shape = tuple(shape)

    def draw(self, rng):
        return _unit(rng.standard_normal(self.shape))

    def contains(self, X):
        return True


class PointSet:
    """A single unit direction."""

    def __init__(self, X0):
        X0 = as_matrix(X0)
        if not X0.any():
            raise ValueError("point set needs a nonzero direction")
        self.X0 = _unit(X0)
        self.shape = X0.shape

    def draw(self, rng):
        return self.X0.copy()

    def contains(self, X):
        return bool(np.linalg.norm(X - self.X0) <= 1e-9)


class DescentCone:
    """Sphere slice of the descent cone of a norm at a nonzero anchor.

    ``boundary-ray`` draws chords from the anchor to random points of the
    norm ball (concentrating near its boundary), so membership holds by
    construction; ``rejection`` filters raw sphere directions through the
    membership test and is kept as a cross-check mode for fat cones.
    Membership of a unit direction is certified at some positive ray scale
    (Eq. of the cone), tested numerically at a small step.
    """

    MEMBERSHIP_STEP = 1e-6
    MEMBERSHIP_RTOL = 1e-9

    def __init__(self, spec, theta_star, method="boundary-ray", budget=200):
        theta_star = as_matrix(theta_star)
        if not theta_star.any():
            raise ValueError("descent cone at the zero matrix is degenerate")
        if method not in ("boundary-ray", "rejection"):
            raise ValueError(f"unknown sampling method {method!r}")
        spec.check_shape(theta_star.shape)
        self.spec = spec
        self.theta = theta_star.copy()
        self.method = method
        self.budget = int(budget)
        self.shape = theta_star.shape
        self.r0 = norm_value(spec, theta_star)

    def contains(self, X):
        probe = self.theta + self.MEMBERSHIP_STEP * X
        return norm_value(self.spec, probe) <= self.r0 * (1.0 + self.MEMBERSHIP_RTOL)

    def draw(self, rng):
        n = self.shape[0] * self.shape[1]
        for _ in range(self.budget):
            if self.method == "boundary-ray":
                D = rng.standard_normal(self.shape)
                val = norm_value(self.spec, D)
                if val == 0.0:
                    continue
                radius = self.r0 * rng.random() ** (1.0 / n)
                chord = (radius / val) * D - self.theta
                nrm = np.linalg.norm(chord)
                if nrm < 1e-12:
                    continue
                return chord / nrm
            D = _unit(rng.standard_normal(self.shape))
            if self.contains(D):
                return D
        raise GeometryError(
            f"no cone direction found in {self.budget} attempts ({self.method})"
        )

    def chord_candidates(self, M, n_scales=6):
        """Steepest feasible chords toward a linear functional M: project
        anchor + s*M onto the norm ball over a scale grid and normalize the
        chords.  Membership holds by construction (the projection lands in
        the ball), and the small-s limit approaches the tangent-cone
        projection of M, which is where the supremum of <X, M> lives."""
        base = np.linalg.norm(M)
        if base == 0:
            return []
        out = []
        for s in np.logspace(-2.0, 1.5, n_scales):
            Y = project_norm_ball(
                self.spec, self.theta + (s / base) * M, self.r0, tol=1e-3
            )
            chord = Y - self.theta
            nrm = np.linalg.norm(chord)
            if nrm > 1e-10:
                out.append(chord / nrm)
        return out


def _arc_ascent(X0, value_fn, grad_fn, feasible, steps, init_step=0.5):
    """Maximize value_fn over unit directions, staying inside the set.

    Moves along the sphere tangent of the (sub)gradient with a shrinking
    step, accepting only feasible improvements.
    """
    X = X0
    val = value_fn(X)
    step = init_step
    for _ in range(steps):
        G = grad_fn(X)
        T = G - float(np.sum(G * X)) * X
        nrm = np.linalg.norm(T)
        if nrm < 1e-14:
            break
        T /= nrm
        improved = False
        s = step
        for _ in range(8):
            cand = _unit(X + s * T)
            if feasible(cand):
                v = value_fn(cand)
                if v > val + 1e-14:
                    X, val = cand, v
                    step = min(s * 1.3, 2.0)
                    improved = True
                    break
            s *= 0.5
        if not improved:
            step *= 0.5
            if step < 1e-8:
                break
    return X, val


def _draw_pool(sampler, n_dirs, rng):
    pool = [sampler.draw(rng) for _ in range(n_dirs)]
    if isinstance(sampler, DescentCone):
        # the ray toward the origin is always a descent direction
        pool.append(-_unit(sampler.theta))
    return pool


def _sup_linear(pool, sampler, M, n_ascent):
    """Best inner product with M over the pool (plus steepest feasible
    chords toward M, for cone samplers), refined by arc ascent."""
    candidates = list(pool)
    if hasattr(sampler, "chord_candidates"):
        candidates.extend(sampler.chord_candidates(M))
    scores = [float(np.sum(X * M)) for X in candidates]
    best = int(np.argmax(scores))
    if n_ascent <= 0:
        return scores[best]
    _, val = _arc_ascent(
        candidates[best],
        lambda X: float(np.sum(X * M)),
        lambda X: M,
        sampler.contains,
        n_ascent,
    )
    return val


def gaussian_width_lower(sampler, n_gauss, n_ascent, seed, n_dirs=64, return_samples=False):
    """Lower-bound Monte Carlo estimate of the Gaussian width of the set.

    Per Gaussian draw, the inner product is maximized over a shared pool of
    sampled directions plus local arc ascent; the mean of the per-draw
    maxima lower-bounds E sup in expectation.
    """
    if n_gauss < 30:
        raise ValueError("n_gauss must be at least 30")
    rng = stream_rng(seed, 1)
    pool = _draw_pool(sampler, n_dirs, rng)
    vals = np.empty(n_gauss)
    for i in range(n_gauss):
        G = rng.standard_normal(sampler.shape)
        vals[i] = _sup_linear(pool, sampler, G, n_ascent)
    est = GeometryEstimate(
        float(vals.mean()), _batch_stderr(vals), n_gauss, "lower-bound", seed
    )
    return (est, vals) if return_samples else est


def _polar_family(spec, theta_star):
    """Rotated-basis data for the normal-cone distance minimization.

    Returns (U, Vt, coef, s) where coef are the diagonal coefficients of the
    subdifferential family on the rank support and s is the numerical rank;
    the zero-singular-value block carries operator-norm-bounded freedom.
    """
    U, sig, Vt = np.linalg.svd(as_matrix(theta_star))
    k = 1 if spec.kind == "nuclear" else spec.k
    dec = find_kr_threshold(sig, k)
    s = dec.s
    coef = np.zeros(s)
    tail = [i for i in dec.tail if i < s]
    head = list(dec.head)
    tail_l1 = float(np.sum(sig[tail])) if tail else 0.0
    if head:
        if tail_l1 > 0:
            coef[head] = (dec.r + 1) * sig[head] / tail_l1
        else:
            # empty averaging block: the family is the ray along the gradient
            coef[head] = sig[head] / float(np.linalg.norm(sig[head]))
    if tail:
        coef[tail] = 1.0
    return U, Vt, coef, s, bool(tail)


def gaussian_width_upper_polar(spec, theta_star, n_gauss, seed, paper_choice=False,
                               return_samples=False):
    """Upper-bound width estimate via the expected distance to the polar
    (normal) cone at the anchor, E inf_{W in cone(dR)} ||G - W||_F.

    The minimization runs over the subdifferential family in the anchor's
    SVD basis: scale t >= 0 on the fixed head/tail coefficients and an
    operator-norm ball of radius t on the zero-singular-value block.  With
    ``paper_choice`` the scale is pinned to the operator norm of the
    orthogonal block and the free parameters to its singular-value profile
    instead of being optimized.
    """
    theta_star = as_matrix(theta_star)
    if not theta_star.any():
        raise ValueError("polar-cone width needs a nonzero anchor")
    if not spec.has_subdifferential:
        raise ValueError("spec lacks a subdifferential")
    rng = stream_rng(seed, 2)

    if spec.kind == "frobenius":
        That = _unit(theta_star)
        dists = np.empty(n_gauss)
        for i in range(n_gauss):
            G = rng.standard_normal(theta_star.shape)
            t = max(0.0, float(np.sum(G * That)))
            dists[i] = math.sqrt(max(np.linalg.norm(G) ** 2 - t**2, 0.0))
        est = GeometryEstimate(
            float(dists.mean()), _batch_stderr(dists), n_gauss, "upper-bound", seed
        )
        return (est, dists) if return_samples else est

    U, Vt, coef, s, has_tail = _polar_family(spec, theta_star)
    if paper_choice and not has_tail:
        raise ValueError("paper scale choice requires a nonempty averaging block")
    k = 1 if spec.kind == "nuclear" else spec.k
    sig = np.linalg.svd(theta_star, compute_uv=False)
    dec = find_kr_threshold(sig, k)
    tail = [i for i in dec.tail if i < s]
    head = list(dec.head)
    if has_tail:
        tail_l1 = float(np.sum(sig[tail]))
        ratio_incl = (dec.r + 1) ** 2 * float(np.sum(sig[head] ** 2)) / tail_l1**2 + len(tail)

    dists = np.empty(n_gauss)
    for i in range(n_gauss):
        G = rng.standard_normal(theta_star.shape)
        Gh = U.T @ G @ Vt.T
        diag = np.array([Gh[j, j] for j in range(s)])
        perp = Gh[s:, s:]
        sig_perp = np.linalg.svd(perp, compute_uv=False) if perp.size else np.zeros(0)
        const = np.linalg.norm(G) ** 2 - float(np.sum(diag**2))
        if perp.size:
            const -= float(np.sum(perp**2))

        if paper_choice:
            t = float(sig_perp[0]) if sig_perp.size else 0.0
            dists[i] = math.sqrt(max(const + float(np.sum((diag - t * coef) ** 2)), 0.0))
            continue

        def dist_sq(t):
            head_tail = float(np.sum((diag - t * coef) ** 2))
            clipped = float(np.sum(np.maximum(sig_perp - t, 0.0) ** 2))
            return const + head_tail + clipped

        hi = max(
            float(sig_perp[0]) if sig_perp.size else 0.0,
            float(np.max(np.abs(diag) / np.maximum(coef, 1e-12))) if s else 0.0,
            1.0,
        )
        res = minimize_scalar(dist_sq, bounds=(0.0, 2.0 * hi), method="bounded",
                              options={"xatol": 1e-10})
        dists[i] = math.sqrt(max(min(res.fun, dist_sq(0.0)), 0.0))

    est = GeometryEstimate(
        float(dists.mean()), _batch_stderr(dists), n_gauss, "upper-bound", seed
    )
    return (est, dists) if return_samples else est


def ksupport_width_bound(sigma_star, k, dbar):
    """Closed-form width-squared bound for the spectral k-support descent
    cone at a rank-s anchor with spectrum sigma_star (sorted nonincreasing).

    The empty-averaging-block edge case (rank below the threshold split)
    zeroes the ratio term; the bound stays finite and the case is logged.
    """
    sigma = np.asarray(sigma_star, dtype=float)
    if sigma.size > dbar:
        raise ValueError("spectrum longer than the ambient dimension")
    if not 1 <= k <= dbar:
        raise ValueError(f"k={k} out of range")
    if not sigma.any():
        raise ValueError("zero spectrum has no descent cone")
    padded = np.zeros(dbar)
    padded[: sigma.size] = sigma
    dec = find_kr_threshold(padded, k)
    s = dec.s
    head = list(dec.head)
    tail = [i for i in dec.tail if i < s]
    if tail:
        tail_l1 = float(np.sum(padded[tail]))
        ratio = (dec.r + 1) ** 2 * float(np.sum(padded[head] ** 2)) / tail_l1**2
    else:
        ratio = 0.0
        log.warning(
            "ksupport_width_bound: empty averaging block (rank %d, k=%d, r=%d); "
            "ratio term set to 0", s, k, dec.r,
        )
    return s * (2 * dbar - s) + (ratio + len(tail)) * (2 * dbar - s)


def partial_complexity(sampler, m, eta_kind, n_outer, n_ascent, seed,
                       full_observation_mode=False, n_dirs=64, return_samples=False):
    """Partial complexity of the sampled set: per outer draw, a fresh
    observation multiset and noise vector are drawn and 2 <X, P*(eta)> is
    maximized over the set (the symmetric-set convention, so the full-
    observation Gaussian case reduces to twice the Gaussian width).
    """
    if eta_kind not in ("gaussian", "rademacher"):
        raise ValueError("eta kind must be gaussian or rademacher")
    if m < 1:
        raise ValueError("m must be positive")
    d1, d2 = sampler.shape
    noise = NoiseModel(eta_kind, 1.0)
    rng = stream_rng(seed, 3)
    pool = _draw_pool(sampler, n_dirs, rng)
    vals = np.empty(n_outer)
    for i in range(n_outer):
        if full_observation_mode:
            om = full_observation(d1, d2)
        else:
            om = sample_omega(d1, d2, m, seed, stream=1000 + i)
        eta = noise.draw(om.m, rng)
        M = adjoint_omega(eta, om)
        vals[i] = 2.0 * _sup_linear(pool, sampler, M, n_ascent)
    est = GeometryEstimate(
        float(vals.mean()), _batch_stderr(vals), n_outer, "lower-bound", seed
    )
    return (est, vals) if return_samples else est


def compatibility_constant(sampler, spec, n, seed, n_ascent=25, n_dirs=None):
    """Lower estimate of sup R(X)/||X||_F over the sampled cone, by the max
    of sampled-and-ascended directions (all unit Frobenius, so the ratio is
    the norm value itself)."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = stream_rng(seed, 4)
    vals = np.empty(n)
    for i in range(n):
        X = sampler.draw(rng)
        _, vals[i] = _arc_ascent(
            X,
            lambda Y: norm_value(spec, Y),
            lambda Y: subgradient(spec, Y).W,
            sampler.contains,
            n_ascent,
        )
    est = GeometryEstimate(
        float(vals.max()),
        _batch_stderr(vals, reduce=np.max),
        n,
        "lower-bound",
        seed,
    )
    return est


def rsc_verify(omega, sampler, beta, n, seed):
    """Empirical restricted-strong-convexity constant: the minimum of
    (d1 d2/m) ||P(X)||^2 over n sampled non-spiky unit cone directions.

    An upper bound on the true restricted infimum.  Raises GeometryError if
    no direction with spikiness below beta is found.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if beta <= 0:
        raise ValueError("beta must be positive")
    d1, d2 = omega.shape
    if (d1, d2) != tuple(sampler.shape):
        raise ValueError("sampler and observation shapes differ")
    rng = stream_rng(seed, 5)
    scale = d1 * d2 / omega.m
    kept = []
    for _ in range(n):
        X = sampler.draw(rng)
        if spikiness(X) < beta:
            kept.append(scale * float(np.sum(project_omega(X, omega) ** 2)))
    if not kept:
        raise GeometryError(
            f"no direction with spikiness below beta={beta:.3g} in {n} draws"
        )
    vals = np.array(kept)
    return GeometryEstimate(
        float(vals.min()),
        _batch_stderr(vals, reduce=np.min),
        len(kept),
        "upper-bound",
        seed,
    )


def beta_threshold(m, w_sq, d, c0):
    """Spikiness threshold separating the identifiable regime:
    beta = (m / (c0^2 w^2 log d))^(1/4)."""
    if min(m, w_sq, d, c0) <= 0:
        raise ValueError("all inputs must be positive")
    return (m / (c0**2 * w_sq * math.log(d))) ** 0.25


def spiky_error_floor(alpha_star, c0, w_sq, d, m):
    """Squared-error floor from unidentifiability of spiky error matrices:
    4 alpha*^2 sqrt(c0^2 w^2 log d / m) (equals 4 alpha*^2 / beta^2)."""
    if min(alpha_star, c0, w_sq, d, m) <= 0:
        raise ValueError("all inputs must be positive")
    return 4.0 * alpha_star**2 * math.sqrt(c0**2 * w_sq * math.log(d) / m)


def theorem2_ceiling(w_partial, w_gauss, m, shape, linf_diameter, factor=4.0):
    """Property-test ceiling for the partial-complexity bound: checks
    w_partial <= factor * (sqrt(m/(d1 d2)) * 2 w_gauss + linf_diameter).

    The universal constants are unknown, so an exceedance is flagged and
    logged with the raw ratio rather than treated as a failure.
    """
    d1, d2 = shape
    ceiling = factor * (math.sqrt(m / (d1 * d2)) * 2.0 * w_gauss + linf_diameter)
    ratio = w_partial / ceiling if ceiling > 0 else math.inf
    if ratio > 1.0:
        log.warning("theorem-2 ceiling exceeded: ratio %.3f at m=%d", ratio, m)
    return ratio <= 1.0, ratio


def linf_diameter(pool):
    """sup ||X - Y||_inf over a finite direction pool (entrywise range)."""
    stack = np.stack(pool)
    return float(np.max(stack.max(axis=0) - stack.min(axis=0)))
