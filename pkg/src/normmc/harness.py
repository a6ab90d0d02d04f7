"""Experiment harness: config-driven synthetic sweeps that measure how the
estimators' error scales against the geometry-driven predictions.

A sweep crosses an (m, nu, seed) grid on a fixed low-rank instance family.
For each trial it samples observations, selects the regularization level,
solves, and records the per-entry squared error next to the two bound
terms (noise term nu^2/kappa and the spikiness floor) computed from
measured geometry: the Monte Carlo width lower estimate for the instance's
descent cone and the empirical RSC constant of the trial's observation
multiset.  Outputs are plain CSV; summary.csv is byte-reproducible from the
config (no timing fields, fixed float repr, fixed row order).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .geometry import (
    DescentCone,
    GeometryError,
    compatibility_constant,
    gaussian_width_lower,
    gaussian_width_upper_polar,
    rsc_verify,
    spiky_error_floor,
    beta_threshold,
)
from .io import write_dense_mm
from .model import NoiseModel, generate_observations, sample_omega, spikiness, stream_rng
from .norms import parse_norm_spec
from .solvers import (
    EstimatorConfig,
    GlmLoss,
    auto_lambda,
    solve_constrained_norm,
    solve_dantzig,
    solve_glm,
)

__all__ = [
    "ExperimentConfig",
    "ConfigError",
    "TrialRecord",
    "load_config",
    "generate_instance",
    "run_sweep",
    "run_geometry",
    "report",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    d1: int
    d2: int
    m_grid: list
    nu_grid: list
    seeds: list
    rank: int = 1
    spectrum: list | None = None
    target_spikiness: float = 3.0
    norm: str = "nuclear"
    estimator: str = "constrained-norm"
    glm_loss: str | None = None
    noise_kind: str = "gaussian"
    c0: float = 2.0
    alpha_star: float | None = None
    lambda_override: float | None = None
    max_iter: int = 20_000
    objective_tol: float = 1e-7
    constraint_tol: float = 1e-6
    n_width_gauss: int = 100
    n_width_ascent: int = 20
    n_dirs: int = 64
    n_rsc: int = 200
    allow_nonconverged: bool = False

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ConfigError("dimensions must be positive")
        if not self.m_grid or not self.nu_grid or not self.seeds:
            raise ConfigError("m_grid, nu_grid and seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.spectrum is None and not 1 <= self.rank <= min(self.d1, self.d2):
            raise ConfigError("rank out of range")
        if self.target_spikiness < 1.0:
            raise ConfigError("target spikiness below 1 is unreachable")
        try:
            parse_norm_spec(self.norm)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.estimator not in ("constrained-norm", "dantzig", "glm-regularized"):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "glm-regularized" and self.glm_loss is None:
            raise ConfigError("glm-regularized requires glm_loss")

    @property
    def effective_alpha_star(self):
        return self.target_spikiness if self.alpha_star is None else self.alpha_star


def load_config(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentConfig(**data)


def _flat_orthonormal(d, rank, rng):
    # random orthonormal factors concentrated near flat columns (QR of
    # sign matrices plus noise); Haar factors are essentially never below
    # spikiness 3 at these sizes
    F = rng.choice([-1.0, 1.0], size=(d, rank)) + 0.3 * rng.standard_normal((d, rank))
    Q, _ = np.linalg.qr(F)
    return Q


def generate_instance(cfg, seed):
    """Random low-rank unit-Frobenius instance below the spikiness target.

    Redraws the orthonormal factors until the target holds (at most 100
    attempts).
    """
    spectrum = (
        np.ones(cfg.rank) if cfg.spectrum is None else np.asarray(cfg.spectrum, dtype=float)
    )
    rank = spectrum.size
    if rank > min(cfg.d1, cfg.d2):
        raise ConfigError("spectrum longer than min dimension")
    rng = stream_rng(seed, 7001)
    for _ in range(100):
        U = _flat_orthonormal(cfg.d1, rank, rng)
        V = _flat_orthonormal(cfg.d2, rank, rng)
        theta = (U * spectrum) @ V.T
        theta /= np.linalg.norm(theta)
        if spikiness(theta) <= cfg.target_spikiness:
            return theta
    raise ConfigError(
        f"spikiness target {cfg.target_spikiness} unreachable in 100 attempts"
    )


@dataclass
class TrialRecord:
    seed: int
    m: int
    nu: float
    d1: int
    d2: int
    norm: str
    estimator: str
    alpha_sp: float
    alpha_star: float
    c0: float
    lam: float
    sq_err_per_entry: float
    objective: float
    constraint_residual: float
    iterations: int
    converged: bool
    width_sq_hat: float
    kappa_hat: float | None
    noise_term: float | None
    spiky_floor: float
    bound_literal: float | None
    bound_per_entry: float | None
    within_bound: bool | None
    null_reason: str
    wall_time: float

    COLUMNS = [
        "seed", "m", "nu", "d1", "d2", "norm", "estimator", "alpha_sp",
        "alpha_star", "c0", "lam", "sq_err_per_entry", "objective",
        "constraint_residual", "iterations", "converged", "width_sq_hat",
        "kappa_hat", "noise_term", "spiky_floor", "bound_literal",
        "bound_per_entry", "within_bound", "null_reason", "wall_time",
    ]

    def row(self, with_time=True):
        vals = []
        for name in self.COLUMNS:
            if name == "wall_time" and not with_time:
                continue
            v = getattr(self, name)
            if v is None:
                vals.append("")
            elif isinstance(v, bool):
                vals.append(str(v).lower())
            elif isinstance(v, float):
                vals.append(repr(v))
            else:
                vals.append(str(v))
        return vals

    def check_finite(self):
        for name in self.COLUMNS:
            v = getattr(self, name)
            if isinstance(v, float) and not math.isfinite(v):
                raise AssertionError(f"non-finite {name} in trial record")


_PROVENANCE = (
    "# width_sq_hat: squared Monte Carlo lower width of the instance descent cone"
    " (gaussian_width_lower); kappa_hat: empirical RSC minimum over sampled"
    " non-spiky cone directions on the trial's observation multiset (rsc_verify);"
    " spiky_floor: closed form from (alpha_star, c0, width_sq_hat, d1+d2, m);"
    " noise_term: 4 nu^2 / kappa_hat; bound_literal: 4*max(nu^2/kappa_hat,"
    " spiky_floor); bound_per_entry: max(4 nu^2/kappa_hat, spiky_floor/(d1 d2));"
    " within_bound compares sq_err_per_entry to bound_literal."
)


def _solve_for(cfg, spec, y, omega, lam):
    ecfg = EstimatorConfig(
        cfg.estimator,
        lam,
        cfg.effective_alpha_star,
        loss=GlmLoss(cfg.glm_loss) if cfg.glm_loss else None,
        max_iter=cfg.max_iter,
        objective_tol=cfg.objective_tol,
        constraint_tol=cfg.constraint_tol,
    )
    if cfg.estimator == "constrained-norm":
        return solve_constrained_norm(y, omega, spec, ecfg)
    if cfg.estimator == "dantzig":
        return solve_dantzig(y, omega, spec, ecfg)
    return solve_glm(y, omega, spec, ecfg)


def _run_trial(cfg, spec, theta, w_sq, index, seed, m, nu):
    t0 = time.perf_counter()
    d1, d2 = cfg.d1, cfg.d2
    omega = sample_omega(d1, d2, m, seed=seed, stream=10_000 + index)
    noise = NoiseModel(cfg.noise_kind, nu)
    y = generate_observations(theta, omega, noise, seed=seed, stream=20_000 + index)

    if cfg.lambda_override is not None:
        lam = cfg.lambda_override
    elif cfg.estimator == "glm-regularized":
        lam = 0.01  # no noise-driven rule for GLM; override via config
    else:
        lam = auto_lambda(cfg.estimator, nu, omega, spec, seed=seed)

    res = _solve_for(cfg, spec, y, omega, lam)
    delta = res.theta - theta
    sq_err = float(np.linalg.norm(delta) ** 2 / (d1 * d2))

    null_reason = ""
    kappa = noise_term = bound_literal = bound_per_entry = within = None
    d = d1 + d2
    floor = spiky_error_floor(cfg.effective_alpha_star, cfg.c0, w_sq, d, m)
    beta = beta_threshold(m, w_sq, d, cfg.c0)
    try:
        cone = DescentCone(parse_norm_spec(cfg.norm), theta)
        kappa_est = rsc_verify(omega, cone, beta, cfg.n_rsc, seed=seed + 31 * index)
        kappa = float(kappa_est.value)
    except GeometryError as exc:
        null_reason = f"kappa_hat: {exc}"
    if kappa is not None and kappa > 0:
        noise_term = 4.0 * nu**2 / kappa
        bound_literal = 4.0 * max(nu**2 / kappa, floor)
        bound_per_entry = max(4.0 * nu**2 / kappa, floor / (d1 * d2))
        within = sq_err <= bound_literal
    elif not null_reason:
        null_reason = "kappa_hat: nonpositive"

    rec = TrialRecord(
        seed=seed, m=m, nu=nu, d1=d1, d2=d2, norm=cfg.norm,
        estimator=cfg.estimator, alpha_sp=float(spikiness(theta)),
        alpha_star=cfg.effective_alpha_star, c0=cfg.c0, lam=float(lam),
        sq_err_per_entry=sq_err, objective=float(res.objective),
        constraint_residual=float(res.constraint_residual),
        iterations=int(res.iterations), converged=bool(res.converged),
        width_sq_hat=float(w_sq), kappa_hat=kappa, noise_term=noise_term,
        spiky_floor=float(floor), bound_literal=bound_literal,
        bound_per_entry=bound_per_entry, within_bound=within,
        null_reason=null_reason, wall_time=time.perf_counter() - t0,
    )
    rec.check_finite()
    return rec


def run_sweep(cfg, out_dir=None, threads=1):
    """Run the full (m, nu, seed) grid; returns (records, summary rows).

    With ``out_dir`` writes trials.csv, summary.csv, geometry.csv and the
    per-seed instance matrices.  Trials that fail to converge are recorded
    and the sweep continues.
    """
    spec = parse_norm_spec(cfg.norm)
    instances = {}
    widths = {}
    geometry_rows = []
    for seed in cfg.seeds:
        theta = generate_instance(cfg, seed)
        instances[seed] = theta
        cone = DescentCone(spec, theta)
        west = gaussian_width_lower(
            cone, cfg.n_width_gauss, cfg.n_width_ascent, seed=seed, n_dirs=cfg.n_dirs
        )
        widths[seed] = west.value**2
        geometry_rows.append(("width_lower", seed, west))

    tasks = []
    index = 0
    for seed in cfg.seeds:
        for m in cfg.m_grid:
            for nu in cfg.nu_grid:
                tasks.append((index, seed, int(m), float(nu)))
                index += 1

    def run(task):
        idx, seed, m, nu = task
        return idx, _run_trial(cfg, spec, instances[seed], widths[seed], idx, seed, m, nu)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    records = [rec for _, rec in sorted(results, key=lambda pair: pair[0])]

    summary_rows, _ = report(records)
    if out_dir is not None:
        _write_outputs(cfg, records, summary_rows, geometry_rows, instances, out_dir)
    return records, summary_rows


def report(records):
    """Aggregate per-(m, nu) cell: mean and std of the error, mean bound,
    bound-satisfaction fraction.  Returns (rows, human-readable text)."""
    if not records:
        raise ValueError("no records to report")
    cells = {}
    for rec in records:
        cells.setdefault((rec.m, rec.nu), []).append(rec)
    rows = []
    for (m, nu) in sorted(cells):
        group = cells[(m, nu)]
        errs = np.array([r.sq_err_per_entry for r in group])
        bounds = [r.bound_literal for r in group if r.bound_literal is not None]
        within = [r.within_bound for r in group if r.within_bound is not None]
        rows.append({
            "m": m,
            "nu": nu,
            "n_trials": len(group),
            "mean_sq_err": float(errs.mean()),
            "std_sq_err": float(errs.std(ddof=1)) if errs.size > 1 else 0.0,
            "mean_bound": float(np.mean(bounds)) if bounds else None,
            "frac_within_bound": float(np.mean(within)) if within else None,
            "n_converged": int(sum(r.converged for r in group)),
        })
    lines = [
        f"{'m':>8} {'nu':>8} {'trials':>7} {'mean_err':>12} {'std':>10} "
        f"{'bound':>12} {'within':>7}"
    ]
    for r in rows:
        bound = "-" if r["mean_bound"] is None else f"{r['mean_bound']:.4g}"
        within = "-" if r["frac_within_bound"] is None else f"{r['frac_within_bound']:.2f}"
        lines.append(
            f"{r['m']:>8} {r['nu']:>8.3g} {r['n_trials']:>7} "
            f"{r['mean_sq_err']:>12.5g} {r['std_sq_err']:>10.4g} {bound:>12} {within:>7}"
        )
    return rows, "\n".join(lines)


_SUMMARY_COLUMNS = [
    "m", "nu", "n_trials", "mean_sq_err", "std_sq_err", "mean_bound",
    "frac_within_bound", "n_converged",
]


def _format_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_csv_text(summary_rows):
    buf = io.StringIO()
    buf.write(_PROVENANCE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_SUMMARY_COLUMNS)
    for row in summary_rows:
        writer.writerow([_format_cell(row[c]) for c in _SUMMARY_COLUMNS])
    return buf.getvalue()


def _write_outputs(cfg, records, summary_rows, geometry_rows, instances, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as fh:
        fh.write(_PROVENANCE + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TrialRecord.COLUMNS)
        for rec in records:
            writer.writerow(rec.row())
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        fh.write(summary_csv_text(summary_rows))
    with open(os.path.join(out_dir, "geometry.csv"), "w", newline="") as fh:
        fh.write("estimator,value,stderr,samples,direction,seed,wall_time\n")
        for name, seed, est in geometry_rows:
            fh.write(est.csv_row(name) + "\n")
    for seed, theta in instances.items():
        write_dense_mm(os.path.join(out_dir, f"theta_star_seed{seed}.mtx"), theta)


def run_geometry(cfg, out_dir=None):
    """Geometry-only run: width lower/upper, compatibility constant and RSC
    estimates for each seed's instance, written to geometry.csv."""
    spec = parse_norm_spec(cfg.norm)
    rows = []
    for seed in cfg.seeds:
        theta = generate_instance(cfg, seed)
        cone = DescentCone(spec, theta)
        lo = gaussian_width_lower(
            cone, cfg.n_width_gauss, cfg.n_width_ascent, seed=seed, n_dirs=cfg.n_dirs
        )
        up = gaussian_width_upper_polar(spec, theta, cfg.n_width_gauss, seed=seed)
        psi = compatibility_constant(cone, spec, n=max(cfg.n_dirs, 10), seed=seed)
        rows.extend([
            ("width_lower", seed, lo),
            ("width_upper_polar", seed, up),
            ("compatibility", seed, psi),
        ])
        m = int(cfg.m_grid[0])
        omega = sample_omega(cfg.d1, cfg.d2, m, seed=seed, stream=1)
        beta = beta_threshold(m, lo.value**2, cfg.d1 + cfg.d2, cfg.c0)
        try:
            kappa = rsc_verify(omega, cone, beta, cfg.n_rsc, seed=seed)
            rows.append(("rsc_kappa", seed, kappa))
        except GeometryError:
            pass
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "geometry.csv"), "w") as fh:
            fh.write("estimator,value,stderr,samples,direction,seed,wall_time\n")
            for name, seed, est in rows:
                fh.write(est.csv_row(name) + "\n")
    return rows
