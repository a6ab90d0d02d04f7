import itertools

import numpy as np
import pytest

import cvxpy as cp


def solve_cvxpy(problem):
    """Solve with the high-accuracy interior-point backend used for oracles."""
    problem.solve(solver=cp.CLARABEL)
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise RuntimeError(f"oracle solve failed: {problem.status}")
    return problem.value


def ksupport_groups(d, k):
    """All index subsets of {0..d-1} with cardinality at most k."""
    groups = []
    for size in range(1, k + 1):
        groups.extend(itertools.combinations(range(d), size))
    return groups


def vector_ksupport_oracle(sigma, k):
    """Definitional k-support norm: the group-decomposition convex program
    min sum_g ||v_g||_2 subject to sum_g v_g = sigma, supp(v_g) in g."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.size
    groups = ksupport_groups(d, k)
    vs = [cp.Variable(len(g)) for g in groups]
    expr = [cp.Constant(np.zeros(d))]
    for g, v in zip(groups, vs):
        E = np.zeros((d, len(g)))
        E[list(g), range(len(g))] = 1.0
        expr.append(E @ v)
    constraints = [cp.sum(expr) == sigma]
    prob = cp.Problem(cp.Minimize(cp.sum([cp.norm(v, 2) for v in vs])), constraints)
    return solve_cvxpy(prob)


def vector_ksupport_prox_oracle(sigma, k, t):
    """Lifted prox program min (1/2)||sum_g v_g - sigma||^2 + t sum ||v_g||_2.

    Returns (optimal objective, argmin x = sum_g v_g).
    """
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.size
    groups = ksupport_groups(d, k)
    vs = [cp.Variable(len(g)) for g in groups]
    terms = [cp.Constant(np.zeros(d))]
    for g, v in zip(groups, vs):
        E = np.zeros((d, len(g)))
        E[list(g), range(len(g))] = 1.0
        terms.append(E @ v)
    x = cp.sum(terms)
    obj = 0.5 * cp.sum_squares(x - sigma) + t * cp.sum([cp.norm(v, 2) for v in vs])
    prob = cp.Problem(cp.Minimize(obj))
    val = solve_cvxpy(prob)
    return val, np.asarray(x.value).ravel()


def random_orthogonal(n, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
