"""Command-line interface.

Subcommands: ``solve`` (one estimator run from observation files), ``sweep``
(config-driven experiment grid), ``geometry`` (width / compatibility / RSC
estimates), ``verify`` (quick self-checks of the core identities).

Exit codes: 0 success, 1 config error, 2 solver non-convergence in a
required trial (or failed verification), 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .harness import ConfigError, load_config, run_geometry, run_sweep
from .io import read_observations_mm, write_dense_mm
from .model import (
    adjoint_omega,
    full_observation,
    project_omega,
    sample_omega,
    stream_rng,
)
from .norms import NormSpec, dual_norm_value, norm_value, parse_norm_spec, prox
from .solvers import (
    EstimatorConfig,
    GlmLoss,
    solve_constrained_norm,
    solve_dantzig,
    solve_glm,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2
EXIT_IO = 3


def _common_flags(parser):
    parser.add_argument("--config", help="experiment config (JSON)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--seed", type=int, help="override the config seed list")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="normmc",
        description="norm-regularized matrix completion toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a single instance from files")
    _common_flags(p_solve)
    p_solve.add_argument("--observations", required=True,
                         help="MatrixMarket coordinate file with observed values")
    p_solve.add_argument("--norm", default="nuclear",
                         help='norm spec: frobenius | nuclear | "kspectral:k=3"')
    p_solve.add_argument("--estimator", default="constrained-norm",
                         choices=("constrained-norm", "dantzig", "glm-regularized"))
    p_solve.add_argument("--lam", type=float, required=True)
    p_solve.add_argument("--alpha-star", type=float, default=3.0)
    p_solve.add_argument("--glm-loss",
                         choices=("gaussian", "bernoulli-logistic", "poisson"))

    p_sweep = sub.add_parser("sweep", help="run a config-driven sweep")
    _common_flags(p_sweep)

    p_geom = sub.add_parser("geometry", help="estimate widths, Psi and kappa")
    _common_flags(p_geom)

    p_verify = sub.add_parser("verify", help="run quick property self-checks")
    _common_flags(p_verify)

    return parser


def _cmd_solve(args):
    try:
        omega, y = read_observations_mm(args.observations)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = parse_norm_spec(args.norm)
        cfg = EstimatorConfig(
            args.estimator,
            args.lam,
            args.alpha_star,
            loss=GlmLoss(args.glm_loss) if args.glm_loss else None,
        )
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.estimator == "constrained-norm":
        res = solve_constrained_norm(y, omega, spec, cfg)
    elif args.estimator == "dantzig":
        res = solve_dantzig(y, omega, spec, cfg)
    else:
        res = solve_glm(y, omega, spec, cfg)

    try:
        os.makedirs(args.out, exist_ok=True)
        theta_path = os.path.join(args.out, "theta_hat.mtx")
        write_dense_mm(theta_path, res.theta)
        record = res.to_record(theta_path=theta_path)
        result_path = os.path.join(args.out, "result.json")
        with open(result_path, "w") as fh:
            json.dump(record, fh, indent=2)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(record))
    return EXIT_OK if res.converged else EXIT_NONCONVERGED


def _load_cfg(args):
    if not args.config:
        raise ConfigError("--config is required for this command")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def _cmd_sweep(args):
    cfg = _load_cfg(args)
    records, summary = run_sweep(cfg, out_dir=args.out, threads=args.threads)
    if args.format == "json":
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
    from .harness import report

    print(report(records)[1])
    failed = [r for r in records if not r.converged]
    if failed and not cfg.allow_nonconverged:
        print(f"{len(failed)} trial(s) did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _cmd_geometry(args):
    cfg = _load_cfg(args)
    rows = run_geometry(cfg, out_dir=args.out)
    for name, seed, est in rows:
        print(f"{name} seed={seed}: {est.value:.6g} +- {est.stderr:.2g} "
              f"({est.direction}, n={est.samples})")
    return EXIT_OK


def _verify_checks():
    rng = stream_rng(20260810)
    checks = []

    om = sample_omega(6, 7, 30, seed=3)
    X = rng.standard_normal((6, 7))
    v = rng.standard_normal(30)
    lhs = float(project_omega(X, om) @ v)
    rhs = float(np.sum(X * adjoint_omega(v, om)))
    checks.append(("adjoint identity <P(X),v> = <X,P*(v)>",
                   abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))))

    ok = True
    for spec in (NormSpec("frobenius"), NormSpec("nuclear"), NormSpec("kspectral", k=2)):
        for _ in range(20):
            A = rng.standard_normal((5, 5))
            B = rng.standard_normal((5, 5))
            ra, rb = norm_value(spec, A), norm_value(spec, B)
            ok &= norm_value(spec, A + B) <= (ra + rb) * (1 + 1e-10)
            ok &= abs(norm_value(spec, -2.0 * A) - 2 * ra) <= 1e-10 * ra
            ok &= abs(np.sum(A * B)) <= ra * dual_norm_value(spec, B) * (1 + 1e-10)
    checks.append(("norm axioms and duality on random matrices", ok))

    ok = True
    for spec in (NormSpec("nuclear"), NormSpec("kspectral", k=3)):
        for _ in range(20):
            Z = rng.standard_normal((5, 5))
            t = float(rng.uniform(0.1, 1.0))
            P = prox(spec, Z, t)
            if not P.any():
                ok &= dual_norm_value(spec, Z) <= t * (1 + 1e-9)
                continue
            G = (Z - P) / t
            ok &= abs(float(np.sum(G * P)) - norm_value(spec, P)) <= 1e-7 * (
                1 + norm_value(spec, P)
            )
            ok &= dual_norm_value(spec, G) <= 1 + 1e-6
    checks.append(("prox characterization Z - P in t*dR(P)", ok))

    from .geometry import DescentCone, rsc_verify

    theta = np.outer(rng.standard_normal(5), rng.standard_normal(5))
    theta /= np.linalg.norm(theta)
    cone = DescentCone(NormSpec("nuclear"), theta)
    r0 = norm_value(NormSpec("nuclear"), theta)
    ok = True
    for _ in range(25):
        D = cone.draw(rng)
        ok &= abs(np.linalg.norm(D) - 1) <= 1e-12
        feas = min(norm_value(NormSpec("nuclear"), theta + t * D)
                   for t in np.logspace(-6, 0.3, 30))
        ok &= feas <= r0 * (1 + 1e-9)
    checks.append(("descent-cone sampler membership", ok))

    om_full = full_observation(5, 5)
    est = rsc_verify(om_full, cone, beta=10.0, n=30, seed=5)
    checks.append(("full-observation RSC constant equals 1",
                   abs(est.value - 1.0) <= 1e-12))

    return checks


def _cmd_verify(args):
    checks = _verify_checks()
    all_ok = True
    for name, ok in checks:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        all_ok &= ok
    return EXIT_OK if all_ok else EXIT_NONCONVERGED


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "geometry":
            return _cmd_geometry(args)
        return _cmd_verify(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
