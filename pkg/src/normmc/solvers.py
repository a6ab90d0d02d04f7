"""Convex estimators over the spikiness box.

Three programs share one first-order skeleton:

* constrained norm minimizer:  min R(T) s.t. ||P(T) - y||_2 <= lam, T in box
* matrix Dantzig selector:     min R(T) s.t. rho * R*(P*(P(T) - y)) <= lam,
  T in box, with rho = sqrt(d1 d2)/m
* GLM regularized estimator:   min (d1 d2/m) L(T) + lam * R(T), T in box

where box = {||T||_inf <= alpha*/sqrt(d1 d2)}.  The constrained programs run
a penalized path: proximal gradient on mu*R + (1/2)(constraint violation)^2
with the composed prox (box intersected with the norm term) computed by
Dykstra alternation, and bisection on mu until the constraint is active
within tolerance.  The path value mu*R + violation^2/2 at the penalized
minimizer lower-bounds mu * (optimal R), which is what the certificate
reports.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ObservationSet, adjoint_omega, project_omega, stream_rng
from .norms import NormSpec, dual_norm_value, norm_value, prox

__all__ = [
    "GlmLoss",
    "EstimatorConfig",
    "SolveResult",
    "solve_constrained_norm",
    "solve_dantzig",
    "solve_glm",
    "auto_lambda",
]

ESTIMATORS = ("constrained-norm", "dantzig", "glm-regularized")


@dataclass(frozen=True)
class GlmLoss:
    """Natural exponential-family log-partition A and its derivatives."""

    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in ("gaussian", "bernoulli-logistic", "poisson"):
            raise ValueError(f"unknown GLM loss {self.kind!r}")

    def value(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return 0.5 * u**2
        if self.kind == "bernoulli-logistic":
            return np.logaddexp(0.0, u)
        return np.exp(u)

    def grad(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return u
        if self.kind == "bernoulli-logistic":
            from scipy.special import expit

            return expit(u)
        return np.exp(u)

    def curvature(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "gaussian":
            return np.ones_like(u)
        if self.kind == "bernoulli-logistic":
            from scipy.special import expit

            p = expit(u)
            return p * (1.0 - p)
        return np.exp(u)

    def max_curvature(self, radius):
        """max A'' over the box [-radius, radius]."""
        if self.kind == "gaussian":
            return 1.0
        if self.kind == "bernoulli-logistic":
            return 0.25
        return math.exp(radius)

    def validate(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "bernoulli-logistic" and not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("bernoulli-logistic observations must be in {0, 1}")
        if self.kind == "poisson":
            if np.any(y < 0) or np.any(y != np.round(y)):
                raise ValueError("poisson observations must be nonnegative integers")


@dataclass(frozen=True)
class EstimatorConfig:
    estimator: str
    lam: float
    alpha_star: float
    loss: GlmLoss | None = None
    max_iter: int = 20_000
    objective_tol: float = 1e-8
    constraint_tol: float = 1e-6

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.alpha_star < 1:
            raise ValueError("alpha_star must be >= 1 (unit-Frobenius spikiness floor)")
        if self.objective_tol <= 0 or self.constraint_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.lam < 0:
            raise ValueError("regularization level must be nonnegative")
        if self.estimator == "glm-regularized" and self.loss is None:
            raise ValueError("glm-regularized requires a GlmLoss")


@dataclass
class SolveResult:
    theta: np.ndarray
    objective: float
    constraint_residual: float
    iterations: int
    converged: bool
    certificate: float
    diagnostic: str = ""
    wall_time: float = field(default=0.0)

    def to_record(self, theta_path=None):
        """Flat key-value record for the JSON-style external interface."""
        return {
            "objective": float(self.objective),
            "constraint_residual": float(self.constraint_residual),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "certificate": float(self.certificate),
            "diagnostic": self.diagnostic,
            "wall_time": float(self.wall_time),
            "theta_path": theta_path,
        }


def box_radius(cfg, shape):
    return cfg.alpha_star / math.sqrt(shape[0] * shape[1])


def lipschitz_pomega(omega, iters=60, seed=7):
    """Largest eigenvalue of P* P by power iteration (the operator is the
    per-cell multiplicity, so this converges to the max duplicate count)."""
    rng = stream_rng(seed, 424242)
    X = rng.standard_normal(omega.shape)
    lam = 1.0
    for _ in range(iters):
        Y = adjoint_omega(project_omega(X, omega), omega)
        nrm = np.linalg.norm(Y)
        if nrm == 0:
            return 1.0
        lam = float(np.sum(X * Y) / np.sum(X * X))
        X = Y / nrm
    return max(lam, 1e-12)


def dykstra_box_norm_prox(Z, spec, t, radius, iters=300, tol=1e-12):
    """prox of t*R + indicator(||.||_inf <= radius) at Z by Dykstra alternation.

    Exit requires both alternation sequences to agree: x alone can stall
    (e.g. at zero) for several rounds while the correction terms still move.
    """
    if t == 0:
        return np.clip(Z, -radius, radius)
    x = Z.copy()
    p = np.zeros_like(Z)
    q = np.zeros_like(Z)
    scale = 1.0 + np.linalg.norm(Z)
    for _ in range(iters):
        y = np.clip(x + p, -radius, radius)
        p = x + p - y
        x_new = prox(spec, y + q, t)
        q = y + q - x_new
        if (
            np.linalg.norm(x_new - x) < tol * scale
            and np.linalg.norm(x_new - y) < math.sqrt(tol) * scale
        ):
            return x_new
        x = x_new
    return x


def _prox_gradient(theta0, value_grad, value_only, prox_fn, lip, max_iter, tol,
                   nonsmooth_value=None):
    """Accelerated backtracking proximal gradient (FISTA with adaptive restart).

    ``prox_fn(Z, step)`` must evaluate the prox of step*(nonsmooth part).
    Returns (theta, iterations, fp_residual) where the fixed-point residual
    is the normalized gradient-map norm ||x - extrapolant|| / step.  When
    ``nonsmooth_value`` is given, the best iterate by composite objective is
    returned instead of the last one (acceleration is non-monotone).
    """
    x_prev = theta0.copy()
    y = theta0.copy()
    t_mom = 1.0
    step = 1.0 / max(lip, 1e-12)
    step_cap = step * 16.0
    fp = math.inf
    it = 0
    best_x, best_f, best_fp = x_prev, math.inf, fp
    for it in range(1, max_iter + 1):
        f_y, g_y = value_grad(y)
        accepted = False
        for _ in range(60):
            x = prox_fn(y - step * g_y, step)
            diff = x - y
            sq = float(np.sum(diff * diff))
            if value_only(x) <= f_y + float(np.sum(g_y * diff)) + sq / (2 * step) + 1e-14 * (1 + abs(f_y)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # subgradient kink: accept the tiny step and keep going
            x = prox_fn(y - step * g_y, step)
            diff = x - y
            sq = float(np.sum(diff * diff))
        fp = math.sqrt(sq) / (step * (1.0 + np.linalg.norm(x)))
        if nonsmooth_value is not None:
            f_x = value_only(x) + nonsmooth_value(x)
            if f_x < best_f:
                best_x, best_f, best_fp = x, f_x, fp
        if fp <= tol:
            if nonsmooth_value is None or value_only(x) + nonsmooth_value(x) <= best_f:
                return x, it, fp
            return best_x, it, best_fp
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom**2))
        y_next = x + ((t_mom - 1.0) / t_next) * (x - x_prev)
        # adaptive restart when the momentum direction opposes progress
        if float(np.sum((y - x) * (x - x_prev))) > 0:
            t_next = 1.0
            y_next = x.copy()
        x_prev, y, t_mom = x, y_next, t_next
        step = min(step * 1.2, step_cap)
    if nonsmooth_value is not None and best_f < math.inf:
        return best_x, it, best_fp
    return x_prev, it, fp


def _solve_constrained_program(omega, spec, cfg, raw_fn, penalty_and_grad, penalty_only, lip):
    """Shared penalized path for the two constrained estimators.

    ``raw_fn`` evaluates the constraint functional (compared against lam for
    feasibility reporting); ``penalty_and_grad``/``penalty_only`` evaluate a
    smooth penalty that vanishes exactly on the feasible set, with
    ``lip``-Lipschitz gradient.
    """
    t0 = time.perf_counter()
    d1, d2 = omega.shape
    lam = cfg.lam
    radius = box_radius(cfg, (d1, d2))
    ctol = cfg.constraint_tol
    total_iter = 0

    def finish(theta, converged, fp, mu, diagnostic=""):
        theta = np.clip(theta, -radius, radius)
        resid = max(0.0, raw_fn(theta) - lam)
        cert = fp + (resid**2 / (2 * mu) if mu > 0 else 0.0)
        return SolveResult(
            theta=theta,
            objective=norm_value(spec, theta),
            constraint_residual=resid,
            iterations=total_iter,
            converged=converged and resid <= ctol,
            certificate=cert,
            diagnostic=diagnostic,
            wall_time=time.perf_counter() - t0,
        )

    # norm-minimal point of the box is 0; if feasible, done
    zero = np.zeros((d1, d2))
    if raw_fn(zero) <= lam + ctol:
        return finish(zero, True, 0.0, 0.0)

    # feasibility probe: minimize the violation alone over the box
    probe, it, fp = _prox_gradient(
        zero,
        penalty_and_grad,
        penalty_only,
        lambda Z, step: np.clip(Z, -radius, radius),
        lip,
        cfg.max_iter,
        cfg.objective_tol,
    )
    total_iter += it
    if raw_fn(probe) - lam > ctol:
        return finish(
            probe,
            False,
            fp,
            0.0,
            diagnostic=(
                "infeasible: minimal constraint violation over the box is "
                f"{raw_fn(probe) - lam:.3e} > tolerance {ctol:.1e}"
            ),
        )

    # penalized path: find mu whose solution sits in the active band
    # resid in (0.3*ctol, ctol]; secant jumps on log(resid) vs log(mu),
    # falling back to log-bisection once a bracket exists
    def solve_mu(mu, theta_init):
        nonlocal total_iter
        theta, its, fp = _prox_gradient(
            theta_init,
            penalty_and_grad,
            penalty_only,
            lambda Z, step: dykstra_box_norm_prox(Z, spec, mu * step, radius),
            lip,
            cfg.max_iter,
            cfg.objective_tol,
            nonsmooth_value=lambda T: mu * norm_value(spec, T),
        )
        total_iter += its
        return theta, max(0.0, raw_fn(theta) - lam), fp

    target = 0.65 * ctol
    mu = 1.0
    theta = probe
    lo = None  # (mu, theta, fp) with resid <= ctol, largest such mu
    hi = None  # smallest mu with resid > ctol
    for _ in range(24):
        theta, resid, fp = solve_mu(mu, theta)
        if resid <= ctol:
            if lo is None or mu > lo[0]:
                lo = (mu, theta, fp)
            if resid > 0.3 * ctol:
                break
        elif hi is None or mu < hi:
            hi = mu
        if lo is not None and hi is not None:
            if hi / lo[0] < 1.05:
                break
            mu = math.sqrt(lo[0] * hi)
        elif resid > 0:
            # secant jump toward the active band, damped to stay bracketable
            jump = min(max(target / resid, 1e-4), 1e4)
            mu *= jump
        else:
            mu *= 16.0
    if lo is None:
        return finish(theta, False, fp, mu, diagnostic="penalized path failed to reach feasibility")
    return finish(lo[1], True, lo[2], lo[0])


def solve_constrained_norm(y, omega, spec, cfg):
    """Constrained norm minimizer over the spikiness box.

    Penalty: half the squared distance of P(T) from the lam-ball around y.
    """
    if cfg.estimator != "constrained-norm":
        raise ValueError("config is not for the constrained-norm estimator")
    y = np.asarray(y, dtype=float)
    if y.shape != (omega.m,):
        raise ValueError("observation vector length mismatch")
    lam = cfg.lam

    def raw_fn(theta):
        return float(np.linalg.norm(project_omega(theta, omega) - y))

    def penalty_and_grad(theta):
        rv = project_omega(theta, omega) - y
        raw = float(np.linalg.norm(rv))
        viol = max(0.0, raw - lam)
        if viol == 0.0:
            return 0.0, np.zeros(omega.shape)
        return 0.5 * viol**2, adjoint_omega((viol / raw) * rv, omega)

    def penalty_only(theta):
        return 0.5 * max(0.0, raw_fn(theta) - lam) ** 2

    lip = lipschitz_pomega(omega)
    return _solve_constrained_program(
        omega, spec, cfg, raw_fn, penalty_and_grad, penalty_only, lip
    )


def solve_dantzig(y, omega, spec, cfg):
    """Generalized matrix Dantzig selector: dual-norm residual constraint.

    Penalty: half the squared distance of the correlated residual
    M(T) = P*(P(T) - y) from the dual-norm ball of radius lam/rho.  By
    Moreau, M - proj_ball(M) = prox of (lam/rho)*R at M, so the penalty
    gradient reuses the norm's prox at the residual (the dual-achieving
    decomposition of M).
    """
    if cfg.estimator != "dantzig":
        raise ValueError("config is not for the dantzig estimator")
    y = np.asarray(y, dtype=float)
    if y.shape != (omega.m,):
        raise ValueError("observation vector length mismatch")
    d1, d2 = omega.shape
    rho = math.sqrt(d1 * d2) / omega.m
    tau = cfg.lam / rho

    def residual_matrix(theta):
        return adjoint_omega(project_omega(theta, omega) - y, omega)

    def raw_fn(theta):
        return rho * dual_norm_value(spec, residual_matrix(theta))

    def penalty_and_grad(theta):
        S = prox(spec, residual_matrix(theta), tau)
        pen = 0.5 * float(np.sum(S * S))
        return pen, adjoint_omega(project_omega(S, omega), omega)

    def penalty_only(theta):
        S = prox(spec, residual_matrix(theta), tau)
        return 0.5 * float(np.sum(S * S))

    lip = lipschitz_pomega(omega) ** 2
    return _solve_constrained_program(
        omega, spec, cfg, raw_fn, penalty_and_grad, penalty_only, lip
    )


def solve_glm(y, omega, spec, cfg):
    """Regularized exponential-family estimator over the spikiness box."""
    if cfg.estimator != "glm-regularized":
        raise ValueError("config is not for the glm-regularized estimator")
    y = np.asarray(y, dtype=float)
    if y.shape != (omega.m,):
        raise ValueError("observation vector length mismatch")
    loss = cfg.loss
    loss.validate(y)
    t0 = time.perf_counter()
    d1, d2 = omega.shape
    scale = d1 * d2 / omega.m
    radius = box_radius(cfg, (d1, d2))
    lip = scale * lipschitz_pomega(omega) * loss.max_curvature(radius)

    def value_grad(theta):
        u = project_omega(theta, omega)
        f = scale * float(np.sum(loss.value(u) - y * u))
        g = scale * adjoint_omega(loss.grad(u) - y, omega)
        return f, g

    def value_only(theta):
        u = project_omega(theta, omega)
        return scale * float(np.sum(loss.value(u) - y * u))

    theta, its, fp = _prox_gradient(
        np.zeros((d1, d2)),
        value_grad,
        value_only,
        lambda Z, step: dykstra_box_norm_prox(Z, spec, cfg.lam * step, radius),
        lip,
        cfg.max_iter,
        cfg.objective_tol,
        nonsmooth_value=lambda T: cfg.lam * norm_value(spec, T),
    )
    theta = np.clip(theta, -radius, radius)
    obj = value_only(theta) + cfg.lam * norm_value(spec, theta)
    return SolveResult(
        theta=theta,
        objective=obj,
        constraint_residual=max(0.0, float(np.max(np.abs(theta))) - radius),
        iterations=its,
        converged=fp <= cfg.objective_tol,
        certificate=fp,
        wall_time=time.perf_counter() - t0,
    )


def auto_lambda(estimator, nu, omega, spec, draws=500, seed=0, noise_kind="gaussian"):
    """Default regularization levels.

    constrained-norm: the closed form 2*nu*sqrt(m).  dantzig: the empirical
    95th percentile of 2*nu*(sqrt(d1 d2)/m) * R*(P*(eta)) over fresh noise
    draws -- a stand-in; no closed form is available for lambda_ds.
    """
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    if estimator == "constrained-norm":
        return 2.0 * nu * math.sqrt(omega.m)
    if estimator != "dantzig":
        raise ValueError(f"no auto lambda rule for {estimator!r}")
    if nu == 0:
        return 0.0
    from .model import NoiseModel

    noise = NoiseModel(noise_kind, 1.0)
    d1, d2 = omega.shape
    rho = math.sqrt(d1 * d2) / omega.m
    rng = stream_rng(seed, 31337)
    vals = np.empty(draws)
    for i in range(draws):
        eta = noise.draw(omega.m, rng)
        vals[i] = 2.0 * nu * rho * dual_norm_value(spec, adjoint_omega(eta, omega))
    return float(np.quantile(vals, 0.95))
