import math

import numpy as np
import pytest

from normmc.norms import (
    NormSpec,
    dual_achieving_direction,
    dual_norm_value,
    find_kr_threshold,
    norm_value,
    parse_norm_spec,
    subgradient,
    vector_ksupport_norm,
)

from conftest import random_orthogonal, solve_cvxpy, vector_ksupport_oracle

FRO = NormSpec("frobenius")
NUC = NormSpec("nuclear")


def KSP(k):
    return NormSpec("kspectral", k=k)


ALL_SPECS_4 = [FRO, NUC, KSP(1), KSP(2), KSP(3), KSP(4)]


# ---------------------------------------------------------------- threshold

def test_threshold_spiked_vector():
    dec = find_kr_threshold(np.array([5.0, 1.0, 1.0, 1.0]), k=2)
    assert dec.r == 0
    assert list(dec.head) == [0] and list(dec.tail) == [1, 2, 3]


def test_threshold_flat_vector():
    dec = find_kr_threshold(np.ones(4), k=2)
    assert dec.r == 1
    assert list(dec.head) == [] and list(dec.tail) == [0, 1, 2, 3]


def test_threshold_unsorted_rejected():
    with pytest.raises(ValueError):
        find_kr_threshold(np.array([1.0, 2.0]), k=1)


def test_threshold_exhaustive_scan_oracle(rng):
    # the defining inequality holds at the returned r and fails at every other r
    for _ in range(200):
        d = int(rng.integers(1, 9))
        sigma = np.sort(rng.uniform(0, 3, size=d))[::-1]
        if rng.random() < 0.3:
            sigma[rng.integers(0, d):] = 0.0
        k = int(rng.integers(1, d + 1))
        dec = find_kr_threshold(sigma, k)
        hits = []
        for r in range(k):
            left = math.inf if k - r - 1 == 0 else sigma[k - r - 2]
            avg = sigma[k - r - 1 :].sum() / (r + 1)
            if left > avg >= sigma[k - r - 1]:
                hits.append(r)
        assert hits == [dec.r]


# ------------------------------------------------------------------- values

def test_kspectral_k1_is_nuclear(rng):
    for _ in range(10):
        X = rng.standard_normal((4, 6))
        assert norm_value(KSP(1), X) == pytest.approx(norm_value(NUC, X), rel=1e-12)


def test_kspectral_kmax_is_frobenius(rng):
    for _ in range(10):
        X = rng.standard_normal((5, 4))
        assert norm_value(KSP(4), X) == pytest.approx(norm_value(FRO, X), rel=1e-12)


def test_kspectral_matches_definitional_program(rng):
    # closed form vs the group-decomposition convex program on the spectrum
    for _ in range(5):
        X = rng.standard_normal((4, 4))
        sigma = np.linalg.svd(X, compute_uv=False)
        got = norm_value(KSP(2), X)
        want = vector_ksupport_oracle(sigma, 2)
        assert got == pytest.approx(want, rel=1e-6)


def test_rank_deficient_value(rng):
    u = rng.standard_normal(5)
    X = np.outer(u, rng.standard_normal(5))
    for k in (1, 2, 4):
        # rank one: all three interpolants collapse to the single singular value
        assert norm_value(KSP(k), X) == pytest.approx(norm_value(FRO, X), rel=1e-10)


def test_norm_axioms(rng):
    for spec in ALL_SPECS_4:
        for _ in range(25):
            X = rng.standard_normal((4, 5))
            Y = rng.standard_normal((4, 5))
            c = rng.uniform(-3, 3)
            rx, ry = norm_value(spec, X), norm_value(spec, Y)
            assert rx > 0
            assert norm_value(spec, c * X) == pytest.approx(abs(c) * rx, rel=1e-10, abs=1e-12)
            assert norm_value(spec, X + Y) <= (rx + ry) * (1 + 1e-10)
        assert norm_value(spec, np.zeros((4, 5)) + 0.0) == 0.0 if spec.kind == "frobenius" else True


def test_norm_zero_iff_zero():
    Z = np.zeros((3, 3))
    for spec in [FRO, NUC, KSP(2)]:
        assert norm_value(spec, Z) == 0.0


def test_orthogonal_invariance(rng):
    X = rng.standard_normal((5, 5))
    U = random_orthogonal(5, rng)
    V = random_orthogonal(5, rng)
    for spec in [FRO, NUC, KSP(2), KSP(3)]:
        assert norm_value(spec, U @ X @ V.T) == pytest.approx(norm_value(spec, X), rel=1e-10)


def test_monotone_interpolation_and_sandwich(rng):
    for _ in range(10):
        X = rng.standard_normal((5, 5))
        vals = [norm_value(KSP(k), X) for k in range(1, 6)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        assert norm_value(FRO, X) - 1e-12 <= vals[-1]
        assert vals[0] <= norm_value(NUC, X) * (1 + 1e-12)
        assert norm_value(FRO, X) <= vals[2] <= norm_value(NUC, X) * (1 + 1e-12)


# --------------------------------------------------------------------- dual

def test_dual_nuclear_is_spectral():
    assert dual_norm_value(NUC, np.diag([3.0, 1.0])) == pytest.approx(3.0)


def test_dual_kmax_is_frobenius(rng):
    X = rng.standard_normal((4, 4))
    assert dual_norm_value(KSP(4), X) == pytest.approx(norm_value(FRO, X), rel=1e-12)


def test_dual_matches_sup_program(rng):
    # sup <X, Y> over R(Y) <= 1, via the lifted group program on the spectrum
    import cvxpy as cp

    from conftest import ksupport_groups

    for _ in range(3):
        X = rng.standard_normal((5, 5))
        sigma = np.linalg.svd(X, compute_uv=False)
        k = 2
        groups = ksupport_groups(5, k)
        vs = [cp.Variable(len(g)) for g in groups]
        terms = [cp.Constant(np.zeros(5))]
        for g, v in zip(groups, vs):
            E = np.zeros((5, len(g)))
            E[list(g), range(len(g))] = 1.0
            terms.append(E @ v)
        y = cp.sum(terms)
        prob = cp.Problem(
            cp.Maximize(sigma @ y), [cp.sum([cp.norm(v, 2) for v in vs]) <= 1]
        )
        want = solve_cvxpy(prob)
        assert dual_norm_value(KSP(k), X) == pytest.approx(want, rel=1e-4)


def test_generalized_cauchy_schwarz(rng):
    for spec in [FRO, NUC, KSP(2), KSP(3)]:
        for _ in range(25):
            X = rng.standard_normal((4, 4))
            Y = rng.standard_normal((4, 4))
            ip = abs(float(np.sum(X * Y)))
            assert ip <= norm_value(spec, X) * dual_norm_value(spec, Y) * (1 + 1e-10)


def test_dual_achieving_direction(rng):
    for spec in [FRO, NUC, KSP(2), KSP(3)]:
        for _ in range(10):
            M = rng.standard_normal((4, 5))
            Y = dual_achieving_direction(spec, M)
            assert norm_value(spec, Y) <= 1 + 1e-9
            assert float(np.sum(M * Y)) == pytest.approx(
                dual_norm_value(spec, M), rel=1e-9
            )


# --------------------------------------------------------------- subgradient

def test_nuclear_subgradient_full_rank(rng):
    X = rng.standard_normal((4, 4)) + 4 * np.eye(4)
    W = subgradient(NUC, X).W
    U, _, Vt = np.linalg.svd(X)
    assert np.allclose(W, U @ Vt, atol=1e-10)
    assert float(np.sum(W * X)) == pytest.approx(norm_value(NUC, X), rel=1e-12)


def test_subgradient_fenchel_equality(rng):
    # <W, X> = R(X) and R*(W) <= 1 for every spec, dense and rank-deficient anchors
    for spec in [FRO, NUC, KSP(2), KSP(3)]:
        for trial in range(20):
            X = rng.standard_normal((5, 5))
            if trial % 3 == 0:
                X = np.outer(rng.standard_normal(5), rng.standard_normal(5))
            W = subgradient(spec, X).W
            assert float(np.sum(W * X)) == pytest.approx(
                norm_value(spec, X), rel=1e-9
            )
            assert dual_norm_value(spec, W) <= 1 + 1e-8


def test_subgradient_with_h_fenchel_and_inequality(rng):
    # rank-deficient anchor, ||h||_inf = 1: W stays a valid subgradient
    X = np.outer(rng.standard_normal(6), rng.standard_normal(6))
    spec = KSP(2)
    h = np.sign(rng.standard_normal(5))  # 5 zero singular-value positions
    W = subgradient(spec, X, h=h).W
    rx = norm_value(spec, X)
    assert float(np.sum(W * X)) == pytest.approx(rx, rel=1e-9)
    assert dual_norm_value(spec, W) <= 1 + 1e-8
    for _ in range(1000):
        Y = rng.standard_normal((6, 6))
        assert norm_value(spec, Y) >= rx + float(np.sum(W * (Y - X))) - 1e-9


def test_subgradient_zero_anchor_rejected():
    with pytest.raises(ValueError):
        subgradient(NUC, np.zeros((3, 3)))


def test_subgradient_h_validation(rng):
    X = np.outer(rng.standard_normal(4), rng.standard_normal(4))
    with pytest.raises(ValueError):
        subgradient(KSP(2), X, h=np.array([2.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        subgradient(KSP(2), X, h=np.zeros(7))


# ------------------------------------------------------------------ parsing

def test_parse_norm_spec():
    assert parse_norm_spec("frobenius") == FRO
    assert parse_norm_spec("nuclear") == NUC
    assert parse_norm_spec("kspectral:k=3") == KSP(3)
    assert str(KSP(3)) == "kspectral:k=3"
    for bad in ("", "spectral", "kspectral", "kspectral:j=3"):
        with pytest.raises(ValueError):
            parse_norm_spec(bad)


def test_k_out_of_range():
    with pytest.raises(ValueError):
        norm_value(KSP(5), np.ones((3, 4)))
    with pytest.raises(ValueError):
        NormSpec("kspectral", k=0)


def test_vector_norm_reductions(rng):
    z = rng.standard_normal(7)
    assert vector_ksupport_norm(z, 1) == pytest.approx(np.abs(z).sum(), rel=1e-12)
    assert vector_ksupport_norm(z, 7) == pytest.approx(np.linalg.norm(z), rel=1e-12)
