"""Synthetic data with controlled endmember variability.

Ground-truth expanded endmembers are variants of a few smooth base
spectra, produced by multiplying each base with a smooth piecewise-linear
random field close to one.  Abundances are uniform-Dirichlet columns and
noise is white Gaussian calibrated to a target SNR.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .model import PixelMatrix, ValidationError
from .simplex import sample_dirichlet

RngLike = Union[int, np.random.Generator, np.random.SeedSequence]

DEFAULT_GAMMA = 0.25
DEFAULT_KNOTS = 10


def _as_rng(seed: RngLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SynthBundle:
    """One generated scene: data, ground truth, and the noise actually used."""

    pixels: PixelMatrix
    endmembers: np.ndarray
    abundances: np.ndarray
    sigma2: float
    snr_db: float
    seed: int


def builtin_bases(bands: int = 198) -> np.ndarray:
    """Three deterministic smooth base spectra on [0.05, 0.95].

    Each column is a fixed mixture of Gaussian bumps over the band axis;
    no randomness, so every caller sees identical spectra.
    """
    if bands < 2:
        raise ValidationError("builtin bases need at least 2 bands")
    x = np.linspace(0.0, 1.0, bands)

    def bump(center, width, height):
        return height * np.exp(-0.5 * ((x - center) / width) ** 2)

    curves = [
        bump(0.22, 0.10, 0.55) + bump(0.65, 0.18, 0.35) + 0.08,
        bump(0.45, 0.14, 0.60) + bump(0.85, 0.08, 0.25) + 0.10,
        bump(0.10, 0.06, 0.30) + bump(0.55, 0.25, 0.45) + bump(0.92, 0.05, 0.20) + 0.06,
    ]
    out = np.stack(curves, axis=1)
    return np.clip(out, 0.05, 0.95)


def gen_variants(
    base: np.ndarray,
    count: int,
    gamma: float = DEFAULT_GAMMA,
    knots: int = DEFAULT_KNOTS,
    seed: RngLike = 0,
) -> np.ndarray:
    """Multiplicative smooth variants of one base spectrum.

    Every variant is base * field, where the field interpolates linearly
    between `knots` equally spaced values drawn uniformly from
    [1 - gamma, 1 + gamma].  Consequently each band i of each variant v
    satisfies |v_i - base_i| <= gamma * base_i, and nonnegativity is
    preserved.
    """
    a = np.asarray(base, dtype=np.float64)
    if a.ndim != 1:
        raise ValidationError("base spectrum must be 1-D")
    if np.any(a < 0):
        raise ValidationError("base spectrum must be nonnegative")
    if not 0.0 <= gamma < 1.0:
        raise ValidationError(f"gamma must be in [0, 1), got {gamma!r}")
    if knots < 2:
        raise ValidationError(f"need at least 2 knots, got {knots}")
    if count < 1:
        raise ValidationError("count must be >= 1")
    rng = _as_rng(seed)
    m = a.size
    grid = np.arange(m, dtype=np.float64)
    knot_x = np.linspace(0.0, m - 1.0, knots)
    out = np.empty((m, count))
    for j in range(count):
        knot_vals = rng.uniform(1.0 - gamma, 1.0 + gamma, size=knots)
        out[:, j] = a * np.interp(grid, knot_x, knot_vals)
    return out


def assemble_ground_truth(
    bases: np.ndarray,
    variants_per_base: int = 200,
    pick: int = 10,
    gamma: float = DEFAULT_GAMMA,
    knots: int = DEFAULT_KNOTS,
    seed: RngLike = 0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Ground-truth expanded endmembers from a small collection of bases.

    For each base column, generates a pool of variants and picks `pick`
    of them uniformly without replacement.  Returns (endmembers, labels)
    where labels[j] is the base index variant j came from.
    """
    b = np.atleast_2d(np.asarray(bases, dtype=np.float64))
    if pick > variants_per_base:
        raise ValidationError(
            f"cannot pick {pick} from a pool of {variants_per_base} variants"
        )
    if pick < 1:
        raise ValidationError("pick must be >= 1")
    rng = _as_rng(seed)
    groups = []
    labels = []
    for idx in range(b.shape[1]):
        pool = gen_variants(b[:, idx], variants_per_base, gamma, knots, rng)
        chosen = rng.choice(variants_per_base, size=pick, replace=False)
        groups.append(pool[:, chosen])
        labels.extend([idx] * pick)
    return np.hstack(groups), np.asarray(labels, dtype=int)


def gen_dataset(
    endmembers: np.ndarray,
    n_pixels: int,
    snr_db: float,
    seed: RngLike = 0,
) -> SynthBundle:
    """Mix ground-truth endmembers with Dirichlet(1) abundances and add
    white Gaussian noise at the requested SNR (inf means noiseless)."""
    a = np.atleast_2d(np.asarray(endmembers, dtype=np.float64))
    if n_pixels < 1:
        raise ValidationError("n_pixels must be >= 1")
    if np.isnan(snr_db) or (np.isinf(snr_db) and snr_db < 0):
        raise ValidationError(f"snr_db must be finite or +inf, got {snr_db!r}")
    seed_int = seed if isinstance(seed, (int, np.integer)) else -1
    rng = _as_rng(seed)
    m, k = a.shape
    z = sample_dirichlet(np.ones(k), n_pixels, rng)
    clean = a @ z
    if np.isinf(snr_db):
        sigma2 = 0.0
        y = clean
    else:
        sigma2 = float(np.sum(clean * clean) / (10.0 ** (snr_db / 10.0) * m * n_pixels))
        y = clean + rng.normal(0.0, np.sqrt(sigma2), size=clean.shape)
    return SynthBundle(
        pixels=PixelMatrix(y),
        endmembers=a,
        abundances=z,
        sigma2=sigma2,
        snr_db=float(snr_db),
        seed=int(seed_int),
    )
