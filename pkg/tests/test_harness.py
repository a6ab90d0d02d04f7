import json

import numpy as np
import pytest

from normmc.harness import (
    ConfigError,
    ExperimentConfig,
    generate_instance,
    load_config,
    report,
    run_sweep,
    summary_csv_text,
)
from normmc.model import spikiness


def small_config(**kw):
    base = dict(
        d1=8, d2=8, rank=1, m_grid=[40], nu_grid=[0.05], seeds=[1, 2],
        target_spikiness=3.0, norm="nuclear", estimator="constrained-norm",
        n_width_gauss=40, n_width_ascent=10, n_dirs=24, n_rsc=60,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        small_config(m_grid=[])
    with pytest.raises(ConfigError):
        small_config(seeds=[1, 1])
    with pytest.raises(ConfigError):
        small_config(target_spikiness=0.5)
    with pytest.raises(ConfigError):
        small_config(norm="foo")
    with pytest.raises(ConfigError):
        small_config(estimator="glm-regularized")  # needs glm_loss


def test_load_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "d1": 6, "d2": 6, "m_grid": [10], "nu_grid": [0.1], "seeds": [3],
    }))
    cfg = load_config(path)
    assert cfg.d1 == 6 and cfg.seeds == [3]
    path.write_text(json.dumps({"d1": 6, "bogus": 1}))
    with pytest.raises(ConfigError):
        load_config(path)


def test_generate_instance_rank_one():
    cfg = small_config(rank=1)
    theta = generate_instance(cfg, seed=5)
    assert np.linalg.norm(theta) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.matrix_rank(theta) == 1


def test_generate_instance_spikiness_satisfied():
    cfg = small_config(d1=30, d2=30, rank=2, target_spikiness=3.0)
    for seed in range(50):
        theta = generate_instance(cfg, seed)
        assert spikiness(theta) <= 3.0
        assert abs(np.linalg.norm(theta) - 1.0) <= 1e-12


def test_generate_instance_unreachable_target():
    # spikiness of any 2x2 rank-1 unit matrix exceeds this target
    cfg = small_config(d1=2, d2=2, rank=1, target_spikiness=1.0000001)
    with pytest.raises(ConfigError):
        generate_instance(cfg, seed=1)


def test_sweep_noiseless_full_observation_recovers():
    cfg = small_config(
        d1=5, d2=5, m_grid=[25 * 6], nu_grid=[0.0], seeds=[4], n_rsc=40,
    )
    records, summary = run_sweep(cfg)
    assert len(records) == 1
    rec = records[0]
    assert rec.converged
    assert rec.sq_err_per_entry <= 1e-6
    assert summary[0]["n_trials"] == 1


def test_sweep_error_nondecreasing_in_nu():
    cfg = small_config(
        d1=8, d2=8, m_grid=[200], nu_grid=[0.01, 0.05, 0.1, 0.2], seeds=[1, 2, 3],
    )
    records, summary = run_sweep(cfg)
    means = [row["mean_sq_err"] for row in sorted(summary, key=lambda r: r["nu"])]
    assert all(a <= b + 1e-12 for a, b in zip(means, means[1:]))


def test_sweep_records_have_no_nan_and_full_fields():
    cfg = small_config()
    records, _ = run_sweep(cfg)
    for rec in records:
        rec.check_finite()
        for col in rec.COLUMNS:
            v = getattr(rec, col)
            assert v is not None or rec.null_reason


def test_report_single_record_equals_record():
    cfg = small_config(seeds=[1])
    records, _ = run_sweep(cfg)
    rows, text = report(records)
    assert len(rows) == 1
    assert rows[0]["mean_sq_err"] == records[0].sq_err_per_entry
    assert rows[0]["std_sq_err"] == 0.0
    assert str(rows[0]["m"]) in text


def test_report_mean_is_arithmetic_mean():
    cfg = small_config(seeds=list(range(1, 11)), m_grid=[30], nu_grid=[0.1])
    records, _ = run_sweep(cfg)
    rows, _ = report(records)
    want = np.mean([r.sq_err_per_entry for r in records])
    assert rows[0]["mean_sq_err"] == pytest.approx(want, rel=1e-12)


def test_sweep_outputs_and_determinism(tmp_path):
    cfg = small_config(seeds=[1, 2], m_grid=[30, 60], nu_grid=[0.05])
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    run_sweep(cfg, out_dir=out1)
    run_sweep(cfg, out_dir=out2)
    s1 = (out1 / "summary.csv").read_bytes()
    s2 = (out2 / "summary.csv").read_bytes()
    assert s1 == s2
    for name in ("trials.csv", "geometry.csv", "theta_star_seed1.mtx"):
        assert (out1 / name).exists()
    header = (out1 / "summary.csv").read_text().splitlines()[0]
    assert header.startswith("#") and "kappa_hat" in header


def test_sweep_threads_match_serial():
    cfg = small_config(seeds=[1, 2], m_grid=[30], nu_grid=[0.02, 0.1])
    serial, sum_serial = run_sweep(cfg, threads=1)
    parallel, sum_parallel = run_sweep(cfg, threads=4)
    assert summary_csv_text(sum_serial) == summary_csv_text(sum_parallel)
    for a, b in zip(serial, parallel):
        assert a.sq_err_per_entry == b.sq_err_per_entry


def test_sweep_dantzig_estimator_runs():
    cfg = small_config(estimator="dantzig", m_grid=[60], nu_grid=[0.05], seeds=[1])
    records, _ = run_sweep(cfg)
    assert records[0].converged
    assert records[0].lam > 0


def test_sweep_lambda_override():
    cfg = small_config(lambda_override=0.7, nu_grid=[0.1], seeds=[1])
    records, _ = run_sweep(cfg)
    assert records[0].lam == 0.7
