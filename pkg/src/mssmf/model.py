"""Core data model: the multilayer factor stack and its composition algebra.

A hyperspectral image is a band-by-pixel matrix whose columns are convex
mixtures of expanded endmembers.  The expanded endmember matrix itself is
generated hierarchically: a small nonnegative core basis multiplied by a
chain of column-stochastic mixing layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

COLUMN_SUM_TOL = 1e-9
NOISE_VAR_FLOOR = 1e-12


class ValidationError(ValueError):
    """Raised when data violates a structural invariant (shapes, simplex
    feasibility, layer-size ordering)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    """Own a read-only float64 copy of `a`."""
    out = np.array(a, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


def _check_column_simplex(mat: np.ndarray, what: str) -> None:
    if np.any(mat < 0):
        raise ValidationError(f"{what}: negative entries")
    sums = mat.sum(axis=0)
    bad = np.abs(sums - 1.0) > COLUMN_SUM_TOL
    if np.any(bad):
        j = int(np.argmax(bad))
        raise ValidationError(
            f"{what}: column {j} sums to {sums[j]:.12g}, not 1 within {COLUMN_SUM_TOL:g}"
        )


@dataclass(frozen=True)
class PixelMatrix:
    """Observed hyperspectral data, one column per pixel.

    Parameters
    ----------
    data : ndarray, shape (bands, pixels)
        Reflectance values; all entries must be finite.
    image_shape : (width, height), optional
        Spatial layout; ``width * height`` must equal the pixel count.
    """

    data: np.ndarray
    image_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        data = _frozen(np.atleast_2d(self.data))
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError("pixel matrix must be 2-D with at least one band and one pixel")
        if not np.all(np.isfinite(data)):
            raise ValidationError("pixel matrix contains non-finite entries")
        object.__setattr__(self, "data", data)
        if self.image_shape is not None:
            w, h = self.image_shape
            if w * h != data.shape[1]:
                raise ValidationError(
                    f"image shape {w}x{h} does not cover {data.shape[1]} pixels"
                )
            object.__setattr__(self, "image_shape", (int(w), int(h)))

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def pixels(self) -> int:
        return self.data.shape[1]


def as_pixel_matrix(y) -> PixelMatrix:
    """Coerce an array-like (or pass through a PixelMatrix) to PixelMatrix."""
    if isinstance(y, PixelMatrix):
        return y
    return PixelMatrix(np.asarray(y, dtype=np.float64))


@dataclass(frozen=True)
class ModelDims:
    """Problem dimensions: band count, latent layer sizes, pixel count.

    ``layers`` holds the latent sizes (K_1, ..., K_P); the last entry is the
    number of expanded endmembers.  Use :func:`validate_dims` to check the
    ordering constraints.
    """

    bands: int
    layers: Tuple[int, ...]
    pixels: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(int(k) for k in self.layers))
        object.__setattr__(self, "bands", int(self.bands))
        object.__setattr__(self, "pixels", int(self.pixels))

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def expanded(self) -> int:
        return self.layers[-1]


def validate_dims(dims: ModelDims) -> None:
    """Check ModelDims invariants; raise ValidationError naming the violated
    constraint."""
    if dims.bands < 1:
        raise ValidationError(f"band count must be >= 1, got {dims.bands}")
    if dims.pixels < 1:
        raise ValidationError(f"pixel count must be >= 1, got {dims.pixels}")
    if len(dims.layers) < 1:
        raise ValidationError("at least one latent layer is required")
    if any(k < 1 for k in dims.layers):
        raise ValidationError(f"layer sizes must be >= 1, got {dims.layers}")
    for a, b in zip(dims.layers, dims.layers[1:]):
        if a > b:
            raise ValidationError(
                f"layer sizes must be non-decreasing, got {a} before {b} in {dims.layers}"
            )
    if dims.layers[0] > dims.bands:
        raise ValidationError(
            f"first layer size {dims.layers[0]} exceeds band count {dims.bands}"
        )
    if dims.layers[-1] > dims.pixels:
        raise ValidationError(
            f"expanded size {dims.layers[-1]} exceeds pixel count {dims.pixels}"
        )


@dataclass(frozen=True)
class FactorStack:
    """Deterministic unknowns of the multilayer factorization.

    Parameters
    ----------
    basis : ndarray, shape (bands, K_1)
        Nonnegative core basis matrix.
    mixers : sequence of ndarray
        Mixing layers; layer l has shape (K_l, K_{l+1}) and every column
        lies on the unit simplex (within ``COLUMN_SUM_TOL``).
    noise_var : float
        Observation noise variance, at least ``NOISE_VAR_FLOOR``.
    """

    basis: np.ndarray
    mixers: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    noise_var: float = 1.0

    def __post_init__(self):
        basis = _frozen(np.atleast_2d(self.basis))
        if not np.all(np.isfinite(basis)):
            raise ValidationError("core basis contains non-finite entries")
        if np.any(basis < 0):
            raise ValidationError("core basis has negative entries")
        mixers = tuple(_frozen(np.atleast_2d(s)) for s in self.mixers)
        cols = basis.shape[1]
        for l, s in enumerate(mixers, start=1):
            if s.shape[0] != cols:
                raise ValidationError(
                    f"mixing layer {l}: expected {cols} rows, got {s.shape[0]}"
                )
            _check_column_simplex(s, f"mixing layer {l}")
            cols = s.shape[1]
        if not (self.noise_var >= NOISE_VAR_FLOOR):
            raise ValidationError(
                f"noise variance {self.noise_var!r} below floor {NOISE_VAR_FLOOR:g}"
            )
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "mixers", mixers)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @property
    def bands(self) -> int:
        return self.basis.shape[0]

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.basis.shape[1],) + tuple(s.shape[1] for s in self.mixers)

    @property
    def depth(self) -> int:
        return len(self.mixers) + 1

    @property
    def expanded_count(self) -> int:
        return self.layer_sizes[-1]

    def replace(self, basis=None, mixers=None, noise_var=None) -> "FactorStack":
        """Return a copy with the given pieces swapped in (revalidates)."""
        return FactorStack(
            basis=self.basis if basis is None else basis,
            mixers=self.mixers if mixers is None else tuple(mixers),
            noise_var=self.noise_var if noise_var is None else noise_var,
        )


@dataclass(frozen=True)
class AbundanceMatrix:
    """Per-pixel expanded abundances; every column lies on the unit simplex."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(np.atleast_2d(self.data))
        _check_column_simplex(data, "abundance matrix")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class ExpandedEndmembers:
    """Expanded endmember matrix, one column per endmember variant."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(np.atleast_2d(self.data)))

    @property
    def count(self) -> int:
        return self.data.shape[1]


def compose_expanded(stack: FactorStack) -> ExpandedEndmembers:
    """Multiply the core basis through the mixing chain.

    Returns the expanded endmember matrix; with no mixing layers this is the
    core basis itself.  Each output column is a convex combination of basis
    columns, so nonnegativity and per-column sums of the basis are preserved.
    """
    mats = [stack.basis, *stack.mixers]
    if len(mats) == 1:
        return ExpandedEndmembers(stack.basis)
    return ExpandedEndmembers(np.linalg.multi_dot(mats))


def reconstruct(stack: FactorStack, abundances: AbundanceMatrix) -> PixelMatrix:
    """Predict the pixel matrix as expanded endmembers times abundances."""
    b = compose_expanded(stack).data
    if abundances.data.shape[0] != b.shape[1]:
        raise ValidationError(
            f"abundance rows {abundances.data.shape[0]} do not match "
            f"{b.shape[1]} expanded endmembers"
        )
    return PixelMatrix(b @ abundances.data)
