"""Data-driven starting point for the solver.

The core basis and the expanded endmembers are both seeded by vertex
component analysis (pure-pixel extraction); per-pixel concentrations come
from a simplex-constrained least-squares fit against the extracted
expanded endmembers; mixing layers start at random simplex columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .model import (
    FactorStack,
    ModelDims,
    PixelMatrix,
    ValidationError,
    as_pixel_matrix,
    validate_dims,
)
from .simplex import BETA_FLOOR, DirichletParam, project_simplex_columns, sample_dirichlet
from .solver import _spectral_norm_psd, update_sigma2

RngLike = Union[int, np.random.Generator, np.random.SeedSequence]


def _as_rng(seed: RngLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _estimate_snr_db(y: np.ndarray, mean_col: np.ndarray, proj: np.ndarray) -> float:
    """Rough SNR of the data given its projection onto a low-dim subspace."""
    m, n = y.shape
    p = proj.shape[0]
    power_y = np.sum(y * y) / n
    power_x = np.sum(proj * proj) / n + float(np.vdot(mean_col, mean_col))
    den = power_y - power_x
    if den <= np.finfo(np.float64).eps * power_y:
        return np.inf
    num = power_x - (p / m) * power_y
    if num <= 0.0:
        return -np.inf
    return 10.0 * np.log10(num / den)


def vca(pixels, k: int, seed: RngLike = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Vertex component analysis: pick k pixels that span the data simplex.

    Returns (endmembers, indices) where endmembers = Y[:, indices], so the
    extracted columns are actual observed spectra.  The noise regime is
    estimated first; clean data is handled in a projective subspace of
    dimension k, noisy data in an affine subspace of dimension k - 1.

    Raises ValidationError when the mean-removed data has rank below
    k - 1 (fewer than k affinely independent spectra).
    """
    y = as_pixel_matrix(pixels).data
    m, n = y.shape
    if not 1 <= k <= min(m, n):
        raise ValidationError(f"endmember count {k} outside [1, min({m}, {n})]")
    rng = _as_rng(seed)
    mean_col = y.mean(axis=1, keepdims=True)
    centered = y - mean_col
    if np.linalg.matrix_rank(centered) < k - 1:
        raise ValidationError(
            f"insufficient spectral diversity: centered rank below {k - 1} "
            f"cannot support {k} endmembers"
        )
    if k == 1:
        u, _, _ = np.linalg.svd(centered, full_matrices=False)
        idx = int(np.argmax(np.abs(u[:, 0] @ y)))
        return y[:, [idx]].copy(), np.array([idx])

    u, _, _ = np.linalg.svd((centered @ centered.T) / n)
    proj_centered = u[:, :k].T @ centered
    snr = _estimate_snr_db(y, mean_col, proj_centered)
    snr_threshold = 15.0 + 10.0 * np.log10(k)

    if snr > snr_threshold:
        # high SNR: project the raw data onto k dims and scale each column
        # so the cloud lies on an affine hyperplane.  The basis must come
        # from the uncentered moment: the covariance is rank k-1 on simplex
        # data, so its k-th direction is arbitrary and the projective
        # scaling below would divide by near-zero, mixed-sign values.
        u_raw, _, _ = np.linalg.svd((y @ y.T) / n)
        x = u_raw[:, :k].T @ y
        anchor = x.mean(axis=1)
        scale = anchor @ x
        tiny = np.finfo(np.float64).tiny
        scale = np.where(np.abs(scale) < tiny, tiny, scale)
        work = x / scale
        d = k
    else:
        # low SNR: drop to the (k-1)-dim affine subspace and append a
        # constant coordinate so the vertices stay affinely independent
        x = u[:, : k - 1].T @ centered
        c = np.sqrt((x * x).sum(axis=0).max())
        work = np.vstack([x, np.full((1, n), c)])
        d = k

    indices = np.zeros(k, dtype=int)
    a = np.zeros((d, k))
    a[-1, 0] = 1.0
    for i in range(k):
        w = rng.standard_normal(d)
        f = w - a @ (np.linalg.pinv(a) @ w)
        f /= np.linalg.norm(f)
        indices[i] = int(np.argmax(np.abs(f @ work)))
        a[:, i] = work[:, indices[i]]
    return y[:, indices].copy(), indices


def scls(pixels, endmembers: np.ndarray) -> np.ndarray:
    """Simplex-constrained least squares, one solve per pixel.

    Minimizes ||y - B s||^2 with s on the unit simplex for every column y
    of the input (a single vector gives a single solution vector), by
    monotone accelerated projected gradient with a fixed 1/L step.  Stops
    when an exact projected-gradient step moves the iterate by less than
    1e-10 in Frobenius norm, or after 1000 iterations.
    """
    b = np.asarray(endmembers, dtype=np.float64)
    raw = pixels.data if isinstance(pixels, PixelMatrix) else np.asarray(pixels, dtype=np.float64)
    single = raw.ndim == 1
    y = raw[:, None] if single else as_pixel_matrix(raw).data
    if b.ndim != 2 or b.shape[0] != y.shape[0]:
        raise ValidationError(
            f"endmember matrix shape {b.shape} incompatible with {y.shape[0]} bands"
        )
    k, n = b.shape[1], y.shape[1]
    gram = b.T @ b
    lin = b.T @ y
    lip = _spectral_norm_psd(gram)
    if lip <= 0.0:
        out = np.full((k, n), 1.0 / k)
        return out[:, 0] if single else out

    def half_obj(z, grad):
        # 0.5 z'Gz - c'z, written with the already-computed gradient
        return 0.5 * float(np.sum(z * grad)) - 0.5 * float(np.sum(lin * z))

    z = np.full((k, n), 1.0 / k)
    z_prev = z
    gz = gram @ z - lin
    best = half_obj(z, gz)
    t = 1.0
    for _ in range(1000):
        plain = project_simplex_columns(z - gz / lip)
        if np.linalg.norm(plain - z) < 1e-10:
            z = plain
            break
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w = z + ((t - 1.0) / t_next) * (z - z_prev)
        cand = project_simplex_columns(w - (gram @ w - lin) / lip)
        g_cand = gram @ cand - lin
        f_cand = half_obj(cand, g_cand)
        if f_cand <= best:
            z_prev, z, gz, best, t = z, cand, g_cand, f_cand, t_next
        else:
            g_plain = gram @ plain - lin
            z_prev, z, gz, t = z, plain, g_plain, 1.0
            best = half_obj(plain, g_plain)
    return z[:, 0] if single else z


@dataclass(frozen=True)
class InitResult:
    """Starting state for :func:`mssmf.solver.fit`."""

    stack: FactorStack
    posterior: DirichletParam
    basis_indices: np.ndarray
    expanded_indices: np.ndarray


def init_all(pixels, layer_sizes, seed: int = 0) -> InitResult:
    """Build a full starting state from the data.

    The core basis is a VCA run at the first layer size; the per-pixel
    concentrations are the simplex least-squares abundances against a
    second VCA run at the expanded size (floored away from zero); mixing
    layers start at independent uniform-Dirichlet columns; the noise
    variance starts at its closed-form update for that state.
    """
    px = as_pixel_matrix(pixels)
    y = px.data
    layers = tuple(int(k) for k in layer_sizes)
    validate_dims(ModelDims(bands=px.bands, layers=layers, pixels=px.pixels))
    root = np.random.SeedSequence(seed)
    seed_basis, seed_expanded, seed_mixers = root.spawn(3)

    basis, basis_idx = vca(px, layers[0], np.random.default_rng(seed_basis))
    # noisy pixels can dip below zero; the basis lives in the nonneg orthant
    basis = np.maximum(basis, 0.0)
    expanded, expanded_idx = vca(px, layers[-1], np.random.default_rng(seed_expanded))
    # concentrations start at the abundances themselves (total 1 per pixel,
    # maximally diffuse); the ascent sharpens them as the factors settle
    betas = np.maximum(scls(px, expanded), BETA_FLOOR)

    rng = np.random.default_rng(seed_mixers)
    mixers = tuple(
        sample_dirichlet(np.ones(a), b, rng) for a, b in zip(layers, layers[1:])
    )
    stack = FactorStack(basis=basis, mixers=mixers, noise_var=1.0)
    b0 = stack.basis
    for s in stack.mixers:
        b0 = b0 @ s
    sigma2 = update_sigma2(y, b0, betas)
    stack = stack.replace(noise_var=sigma2)
    return InitResult(
        stack=stack,
        posterior=DirichletParam(betas),
        basis_indices=basis_idx,
        expanded_indices=expanded_idx,
    )
