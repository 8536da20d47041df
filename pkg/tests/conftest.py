"""Shared helpers: tiny random model instances and brute-force oracles."""

import itertools

import numpy as np
import pytest
import scipy.special as sp

from mssmf import FactorStack
from mssmf.simplex import sample_dirichlet


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def random_instance(rng, max_dim=8, depth=2, sigma2=None):
    """A small random (Y, stack, betas) triple with feasible factors."""
    m = int(rng.integers(3, max_dim + 1))
    sizes = np.sort(rng.integers(2, max_dim + 1, size=depth))
    sizes[0] = min(sizes[0], m)
    n = int(rng.integers(max(2, sizes[-1]), max_dim + 3))
    basis = rng.uniform(0.05, 1.0, (m, int(sizes[0])))
    mixers = tuple(
        sample_dirichlet(np.ones(int(a)), int(b), rng)
        for a, b in zip(sizes, sizes[1:])
    )
    if sigma2 is None:
        sigma2 = float(rng.uniform(0.02, 0.5))
    stack = FactorStack(basis=basis, mixers=mixers, noise_var=sigma2)
    betas = rng.uniform(0.3, 4.0, (int(sizes[-1]), n))
    y = rng.normal(0.4, 0.3, (m, n))
    return y, stack, betas


def expanded_of(stack):
    out = stack.basis
    for s in stack.mixers:
        out = out @ s
    return out


def elbo_monte_carlo(y, b, betas, sigma2, draws, rng):
    """Independent ELBO estimate: sample the variational Dirichlets and
    average log joint minus log variational density, all via scipy.

    Returns (estimate, standard_error).
    """
    m, n = y.shape
    k = betas.shape[0]
    log_norm_const = -0.5 * m * np.log(2.0 * np.pi * sigma2)
    per_pixel_mean = np.empty(n)
    per_pixel_var = np.empty(n)
    for j in range(n):
        beta = betas[:, j]
        z = rng.standard_gamma(beta[:, None], size=(k, draws))
        z /= z.sum(axis=0)
        resid = y[:, [j]] - b @ z
        log_joint = (
            log_norm_const
            - (resid * resid).sum(axis=0) / (2.0 * sigma2)
            + sp.gammaln(k)
        )
        log_q = (
            ((beta[:, None] - 1.0) * np.log(z)).sum(axis=0)
            - sp.gammaln(beta).sum()
            + sp.gammaln(beta.sum())
        )
        vals = log_joint - log_q
        per_pixel_mean[j] = vals.mean()
        per_pixel_var[j] = vals.var(ddof=1) / draws
    return per_pixel_mean.mean(), np.sqrt(per_pixel_var.sum()) / n


def central_diff(f, x, h=1e-5):
    """Dense central finite differences of a scalar function of an array."""
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        plus = x.copy()
        plus[idx] += h
        minus = x.copy()
        minus[idx] -= h
        g[idx] = (f(plus) - f(minus)) / (2.0 * h)
    return g


def simplex_projection_bruteforce(v):
    """Exact simplex projection by scanning every support set.

    For each nonempty support S the equality-constrained minimizer is
    w_S = v_S - (sum(v_S) - 1)/|S|; the candidate is valid when w_S > 0
    and the KKT multiplier dominates every off-support coordinate.  The
    valid candidate with the smallest distance to v is the projection.
    """
    v = np.asarray(v, dtype=np.float64)
    k = v.size
    best = None
    best_dist = np.inf
    for size in range(1, k + 1):
        for support in itertools.combinations(range(k), size):
            s = list(support)
            lam = (v[s].sum() - 1.0) / size
            w = np.zeros(k)
            w[s] = v[s] - lam
            if np.any(w[s] < -1e-12):
                continue
            off = [j for j in range(k) if j not in support]
            if off and np.any(v[off] > lam + 1e-12):
                continue
            dist = float(np.sum((w - v) ** 2))
            if dist < best_dist:
                best_dist = dist
                best = w
    return best


def assignment_bruteforce(cost):
    """Exhaustive minimum-cost assignment; ties go to the smallest perm."""
    k = cost.shape[0]
    best_perm = None
    best_total = np.inf
    for perm in itertools.permutations(range(k)):
        total = sum(cost[i, perm[i]] for i in range(k))
        if total < best_total - 1e-15:
            best_total = total
            best_perm = perm
    return np.asarray(best_perm), best_total
