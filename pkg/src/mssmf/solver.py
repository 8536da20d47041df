"""Variational maximum-likelihood fitting of the multilayer factorization.

The per-pixel abundance posterior is approximated by an independent
Dirichlet for every pixel.  Coordinate ascent on the evidence lower bound
alternates four blocks per outer iteration: the Dirichlet concentrations
(projected gradient ascent with a per-pixel Armijo line search), the core
basis and each mixing layer (monotone accelerated projected gradient), and
the noise variance (closed form).  Every block is accepted only if the
bound does not decrease, so the traced objective is non-decreasing by
construction.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import FactorStack, ValidationError, as_pixel_matrix
from .simplex import (
    BETA_FLOOR,
    DirichletParam,
    dirichlet_entropy,
    log_gamma,
    project_simplex_columns,
    trigamma,
)

_ARMIJO_C1 = 1e-4
_MAX_HALVINGS = 60
_POWER_ROUNDS = 50
_POWER_TOL = 1e-10


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the outer coordinate-ascent loop.

    rel_elbo_tol stops the loop once the relative bound improvement
    (F_t - F_{t-1}) / (1 + |F_{t-1}|) falls strictly below it, so a
    tolerance of zero always runs max_outer_iters iterations.

    apg_passes_per_factor is the inner FISTA budget per factor block per
    outer iteration.  The blocks cost nothing next to the concentration
    updates (their data enters only through K_P x K_P moment sums), and a
    single pass leaves the factors far from stationary, so the default
    solves each subproblem essentially to convergence.
    """

    max_outer_iters: int = 100
    beta_steps_per_outer: int = 10
    apg_passes_per_factor: int = 100
    rel_elbo_tol: float = 1e-7
    sigma2_floor: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.max_outer_iters < 1:
            raise ValidationError("max_outer_iters must be >= 1")
        if self.beta_steps_per_outer < 1:
            raise ValidationError("beta_steps_per_outer must be >= 1")
        if self.apg_passes_per_factor < 1:
            raise ValidationError("apg_passes_per_factor must be >= 1")
        if not (self.rel_elbo_tol >= 0):
            raise ValidationError("rel_elbo_tol must be >= 0")
        if not (self.sigma2_floor > 0):
            raise ValidationError("sigma2_floor must be > 0")


@dataclass(frozen=True)
class FitTrace:
    """Per-iteration record of the fit: bound value, noise variance, wall
    time in milliseconds, and why the loop stopped."""

    elbo: np.ndarray
    sigma2: np.ndarray
    millis: np.ndarray
    stop_reason: str

    def __len__(self) -> int:
        return self.elbo.size


@dataclass(frozen=True)
class FitResult:
    stack: FactorStack
    posterior: DirichletParam
    trace: FitTrace

    @property
    def elbo(self) -> float:
        return float(self.trace.elbo[-1])

    @property
    def abundances(self) -> np.ndarray:
        """Posterior-mean abundance matrix, one simplex column per pixel."""
        return self.posterior.mean


def _expanded(stack: FactorStack) -> np.ndarray:
    mats = [stack.basis, *stack.mixers]
    return mats[0] if len(mats) == 1 else np.linalg.multi_dot(mats)


def _moment_sums(betas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean matrix and summed second moment of the per-pixel Dirichlets.

    Returns (mean, pbar) with mean of shape (K, N) and
    pbar = sum_n E[z_n z_n^T] of shape (K, K).
    """
    total = betas.sum(axis=0)
    denom = total * (total + 1.0)
    mean = betas / total
    weighted = betas / denom
    pbar = np.diag(weighted.sum(axis=1)) + betas @ weighted.T
    return mean, pbar


def _resid_sum(y: np.ndarray, b: np.ndarray, betas: np.ndarray) -> float:
    """Total expected squared reconstruction error over all pixels."""
    mean, pbar = _moment_sums(betas)
    g = b.T @ b
    return float(
        np.sum(y * y) - 2.0 * np.sum(y * (b @ mean)) + np.sum(g * pbar)
    )


def _resid_per_pixel(y: np.ndarray, b: np.ndarray, betas: np.ndarray) -> np.ndarray:
    total = betas.sum(axis=0)
    denom = total * (total + 1.0)
    g = b.T @ b
    gb = g @ betas
    tr_gp = (np.diag(g) @ betas + (betas * gb).sum(axis=0)) / denom
    return (y * y).sum(axis=0) - 2.0 * (y * (b @ (betas / total))).sum(axis=0) + tr_gp


def elbo_terms(y: np.ndarray, b: np.ndarray, betas: np.ndarray, sigma2: float) -> float:
    """Evidence lower bound from raw arrays, averaged over pixels.

    Exists alongside :func:`elbo` so tests can evaluate the bound at
    points that violate the feasibility constraints (finite-difference
    probes leave the simplex).
    """
    y = np.asarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    m, n = y.shape
    k = betas.shape[0]
    rsum = _resid_sum(y, b, betas)
    ent = dirichlet_entropy(betas).sum()
    const = n * (-0.5 * m * np.log(2.0 * np.pi * sigma2) + log_gamma(float(k)))
    return float((const - rsum / (2.0 * sigma2) + ent) / n)


def _check_state(pixels, stack: FactorStack, posterior: DirichletParam):
    px = as_pixel_matrix(pixels)
    betas = posterior.concentration
    if betas.shape != (stack.expanded_count, px.pixels):
        raise ValidationError(
            f"posterior shape {betas.shape} does not match "
            f"({stack.expanded_count}, {px.pixels})"
        )
    if stack.bands != px.bands:
        raise ValidationError(
            f"stack bands {stack.bands} do not match data bands {px.bands}"
        )
    return px, betas


def elbo(pixels, stack: FactorStack, posterior: DirichletParam) -> float:
    """Evidence lower bound of a feasible model state, averaged over pixels."""
    px, betas = _check_state(pixels, stack, posterior)
    return elbo_terms(px.data, _expanded(stack), betas, stack.noise_var)


@dataclass(frozen=True)
class ElboBreakdown:
    """The bound split into its pieces.

    total = -(bands/2)*log(2*pi*sigma2) - mean(per_pixel_residual)/(2*sigma2)
            + log_const + entropy_sum/pixels
    """

    total: float
    per_pixel_residual: np.ndarray
    entropy_sum: float
    log_const: float


def elbo_breakdown(pixels, stack: FactorStack, posterior: DirichletParam) -> ElboBreakdown:
    """Like :func:`elbo` but keeps the per-term decomposition.

    The per-pixel residual is an expectation of a squared norm, so it is
    clamped at zero to hide roundoff on perfectly reconstructed pixels.
    """
    px, betas = _check_state(pixels, stack, posterior)
    b = _expanded(stack)
    resid = np.maximum(_resid_per_pixel(px.data, b, betas), 0.0)
    ent = float(dirichlet_entropy(betas).sum())
    const = float(log_gamma(float(stack.expanded_count)))
    total = (
        -0.5 * px.bands * np.log(2.0 * np.pi * stack.noise_var)
        - resid.mean() / (2.0 * stack.noise_var)
        + const
        + ent / px.pixels
    )
    return ElboBreakdown(
        total=float(total),
        per_pixel_residual=resid,
        entropy_sum=ent,
        log_const=const,
    )


def grad_factors(
    y: np.ndarray, stack: FactorStack, betas: np.ndarray
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Gradient of the averaged bound with respect to the basis and every
    mixing layer, via the chain rule through the expanded product."""
    y = np.asarray(y, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    n = y.shape[1]
    mean, pbar = _moment_sums(betas)
    b = _expanded(stack)
    grad_b = -(b @ pbar - y @ mean.T) / (stack.noise_var * n)
    mats = [stack.basis, *stack.mixers]
    tail = _suffix_products(mats)
    grad_basis = grad_b @ tail[1].T
    grads_mix = []
    prefix = stack.basis
    for l, s in enumerate(stack.mixers):
        grads_mix.append(prefix.T @ grad_b @ tail[l + 2].T)
        prefix = prefix @ s
    return grad_basis, grads_mix


def grad_beta(y: np.ndarray, b: np.ndarray, betas: np.ndarray, sigma2: float) -> np.ndarray:
    """Gradient of the averaged bound with respect to every concentration."""
    y = np.asarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    n = y.shape[1]
    c = b.T @ y
    g = b.T @ b
    return _beta_grad_per_pixel(c, g, betas, sigma2) / n


def _suffix_products(mats: Sequence[np.ndarray]) -> List[np.ndarray]:
    """tail[i] = product of mats[i:], with tail[len] an identity."""
    k_last = mats[-1].shape[1]
    tail = [np.eye(k_last)]
    for m in reversed(mats):
        tail.append(m @ tail[-1])
    tail.reverse()
    return tail


def _beta_grad_per_pixel(
    c: np.ndarray, g: np.ndarray, betas: np.ndarray, sigma2: float
) -> np.ndarray:
    """d(per-pixel bound)/d(betas); c = B^T Y and g = B^T B are fixed."""
    k = betas.shape[0]
    total = betas.sum(axis=0)
    denom = total * (total + 1.0)
    y_b_m = (c * betas).sum(axis=0) / total
    d_resid = -2.0 * (c - y_b_m) / total
    gb = g @ betas
    tr_gp = (np.diag(g) @ betas + (betas * gb).sum(axis=0)) / denom
    d_resid += (np.diag(g)[:, None] + 2.0 * gb - (2.0 * total + 1.0) * tr_gp) / denom
    d_ent = (total - k) * trigamma(total) - (betas - 1.0) * trigamma(betas)
    return -d_resid / (2.0 * sigma2) + d_ent


def _beta_objective(c: np.ndarray, g: np.ndarray, betas: np.ndarray, sigma2: float) -> np.ndarray:
    """Per-pixel bound up to beta-independent constants."""
    total = betas.sum(axis=0)
    denom = total * (total + 1.0)
    gb = g @ betas
    tr_gp = (np.diag(g) @ betas + (betas * gb).sum(axis=0)) / denom
    partial_resid = -2.0 * (c * betas).sum(axis=0) / total + tr_gp
    return -partial_resid / (2.0 * sigma2) + dirichlet_entropy(betas)


def _beta_ascent_chunk(
    c: np.ndarray, g: np.ndarray, betas: np.ndarray, sigma2: float, passes: int
) -> np.ndarray:
    """Run `passes` clamped gradient-ascent steps on a block of pixels.

    Each pass takes one Armijo-backtracked step per pixel; a pixel whose
    search fails keeps its current concentrations, so the per-pixel bound
    never decreases.
    """
    cur = np.array(betas)
    n = cur.shape[1]
    for _ in range(passes):
        f0 = _beta_objective(c, g, cur, sigma2)
        grad = _beta_grad_per_pixel(c, g, cur, sigma2)
        step = np.ones(n)
        todo = np.arange(n)
        for _ in range(_MAX_HALVINGS):
            if todo.size == 0:
                break
            cand = np.maximum(cur[:, todo] + step[todo] * grad[:, todo], BETA_FLOOR)
            move = cand - cur[:, todo]
            gain = _beta_objective(c[:, todo], g, cand, sigma2) - f0[todo]
            ok = gain >= _ARMIJO_C1 * (grad[:, todo] * move).sum(axis=0)
            hit = todo[ok]
            cur[:, hit] = cand[:, ok]
            todo = todo[~ok]
            step[todo] *= 0.5
    return cur


def update_beta(
    y: np.ndarray,
    b: np.ndarray,
    betas: np.ndarray,
    sigma2: float,
    passes: int = 10,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Improve all per-pixel Dirichlet concentrations for a fixed model.

    Pixels are independent, so the work is split into contiguous column
    chunks; with a fixed worker count the result is deterministic because
    every chunk computes the same floating-point sequence regardless of
    scheduling.  Worker count defaults to the MSSMF_THREADS environment
    variable (1 if unset).
    """
    y = np.asarray(y, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    c = b.T @ y
    g = b.T @ b
    if workers is None:
        workers = thread_count()
    n = betas.shape[1]
    if workers <= 1 or n < 2 * workers:
        return _beta_ascent_chunk(c, g, betas, sigma2, passes)
    bounds = np.linspace(0, n, workers + 1).astype(int)
    chunks = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    out = np.empty_like(betas)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        jobs = [
            (lo, hi, pool.submit(_beta_ascent_chunk, c[:, lo:hi], g, betas[:, lo:hi], sigma2, passes))
            for lo, hi in chunks
        ]
        for lo, hi, job in jobs:
            out[:, lo:hi] = job.result()
    return out


def thread_count() -> int:
    """Worker count from MSSMF_THREADS; malformed or missing values mean 1."""
    raw = os.environ.get("MSSMF_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _spectral_norm_psd(mat: np.ndarray) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration."""
    k = mat.shape[0]
    if k == 1:
        return float(abs(mat[0, 0]))
    v = np.full(k, 1.0 / np.sqrt(k))
    lam = 0.0
    for _ in range(_POWER_ROUNDS):
        w = mat @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        new_lam = float(v @ (mat @ v))
        if abs(new_lam - lam) <= _POWER_TOL * max(1.0, new_lam):
            lam = new_lam
            break
        lam = new_lam
    return lam


def _apg_minimize(x0, grad_fn, obj_fn, lipschitz, project, passes):
    """Monotone accelerated projected gradient on a single factor block.

    A momentum step is accepted only if it does not increase the
    objective; otherwise momentum is reset and a plain projected step is
    tried with halving until acceptance or the step budget runs out, in
    which case the iterate is returned unchanged.
    """
    lip = lipschitz if lipschitz > 0 else 1.0
    x = x0
    x_prev = x0
    t = 1.0
    best = obj_fn(x0)
    for _ in range(passes):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = x + ((t - 1.0) / t_next) * (x - x_prev)
        cand = project(z - grad_fn(z) / lip)
        val = obj_fn(cand)
        if val <= best:
            x_prev, x = x, cand
            best = val
            t = t_next
            continue
        t = 1.0
        g = grad_fn(x)
        step = 1.0 / lip
        accepted = False
        for _ in range(_MAX_HALVINGS):
            cand = project(x - step * g)
            val = obj_fn(cand)
            if val <= best:
                x_prev, x = x, cand
                best = val
                accepted = True
                break
            step *= 0.5
        if not accepted:
            x_prev = x
    return x, best


def apg_update_factor(
    y: np.ndarray,
    stack: FactorStack,
    betas: np.ndarray,
    which: int,
    passes: int = 1,
) -> FactorStack:
    """One monotone APG update of a single factor block.

    which = 0 updates the core basis (nonnegativity constraint); which = l
    for l >= 1 updates mixing layer l (columns projected onto the simplex).
    """
    y = np.asarray(y, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    n = y.shape[1]
    sigma2 = stack.noise_var
    mean, pbar = _moment_sums(betas)
    ym = y @ mean.T
    yss = float(np.sum(y * y))
    scale = 2.0 * sigma2 * n
    mats = [stack.basis, *stack.mixers]
    if not 0 <= which < len(mats):
        raise ValidationError(f"no factor block {which} in a depth-{len(mats)} stack")
    tail = _suffix_products(mats)
    if which == 0:
        w = tail[1]
        q = w @ pbar @ w.T
        cmat = ym @ w.T
        lip = _spectral_norm_psd(q) / (sigma2 * n)

        def obj(a):
            return (yss - 2.0 * np.sum(a * cmat) + np.sum((a @ q) * a)) / scale

        def grad(a):
            return (a @ q - cmat) / (sigma2 * n)

        new, _ = _apg_minimize(
            stack.basis, grad, obj, lip, lambda a: np.maximum(a, 0.0), passes
        )
        return stack.replace(basis=new)

    prefix = stack.basis
    for s in stack.mixers[: which - 1]:
        prefix = prefix @ s
    v = tail[which + 1]
    gram_u = prefix.T @ prefix
    r = v @ pbar @ v.T
    cmat = prefix.T @ ym @ v.T
    lip = _spectral_norm_psd(gram_u) * _spectral_norm_psd(r) / (sigma2 * n)

    def obj(s):
        return (yss - 2.0 * np.sum(s * cmat) + np.sum((gram_u @ s @ r) * s)) / scale

    def grad(s):
        return (gram_u @ s @ r - cmat) / (sigma2 * n)

    new, _ = _apg_minimize(
        stack.mixers[which - 1], grad, obj, lip, project_simplex_columns, passes
    )
    mixers = list(stack.mixers)
    mixers[which - 1] = new
    return stack.replace(mixers=mixers)


def update_sigma2(
    y: np.ndarray, b: np.ndarray, betas: np.ndarray, floor: float = 1e-12
) -> float:
    """Closed-form noise-variance update: mean expected squared error,
    floored away from zero."""
    y = np.asarray(y, dtype=np.float64)
    m, n = y.shape
    return max(_resid_sum(y, np.asarray(b, dtype=np.float64), np.asarray(betas)) / (m * n), floor)


def fit(pixels, stack: FactorStack, betas, config: FitConfig = FitConfig()) -> FitResult:
    """Run the full coordinate-ascent loop from an initial model state.

    Per outer iteration the update order is: concentrations, core basis,
    each mixing layer in order, then the noise variance.  The traced bound
    is evaluated after the four blocks and is non-decreasing.
    """
    px = as_pixel_matrix(pixels)
    y = px.data
    if isinstance(betas, DirichletParam):
        betas = betas.concentration
    betas = np.array(betas, dtype=np.float64)
    if stack.bands != px.bands:
        raise ValidationError(
            f"stack bands {stack.bands} do not match data bands {px.bands}"
        )
    if betas.shape != (stack.expanded_count, px.pixels):
        raise ValidationError(
            f"initial concentrations {betas.shape} do not match "
            f"({stack.expanded_count}, {px.pixels})"
        )
    if np.any(betas < BETA_FLOOR):
        raise ValidationError(f"initial concentrations below floor {BETA_FLOOR:g}")
    workers = thread_count()
    elbo_hist: List[float] = []
    sigma2_hist: List[float] = []
    ms_hist: List[float] = []
    stop_reason = "max_iters"
    prev = None
    for _ in range(config.max_outer_iters):
        t0 = time.perf_counter()
        b = _expanded(stack)
        betas = update_beta(
            y, b, betas, stack.noise_var,
            passes=config.beta_steps_per_outer, workers=workers,
        )
        for block in range(stack.depth):
            stack = apg_update_factor(
                y, stack, betas, block, passes=config.apg_passes_per_factor
            )
        b = _expanded(stack)
        stack = stack.replace(
            noise_var=update_sigma2(y, b, betas, floor=config.sigma2_floor)
        )
        cur = elbo_terms(y, b, betas, stack.noise_var)
        ms_hist.append((time.perf_counter() - t0) * 1e3)
        elbo_hist.append(cur)
        sigma2_hist.append(stack.noise_var)
        if prev is not None and (cur - prev) / (1.0 + abs(prev)) < config.rel_elbo_tol:
            stop_reason = "converged"
            break
        prev = cur
    trace = FitTrace(
        elbo=np.asarray(elbo_hist),
        sigma2=np.asarray(sigma2_hist),
        millis=np.asarray(ms_hist),
        stop_reason=stop_reason,
    )
    return FitResult(stack=stack, posterior=DirichletParam(betas), trace=trace)
