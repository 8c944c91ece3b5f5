"""2-D DCT bases, direct-summation transforms, and frequency index selection.

The transform is deliberately the direct summation (no fast algorithm): the
planes it runs on are small feature maps, and the same arithmetic doubles as
its own reference. Constant normalization factors are omitted from the basis;
the orthonormal variant is available behind ``normalized=True``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

__all__ = ["DctBasis", "FrequencySet", "dct_basis", "dct2d", "idct2d",
           "zigzag_indices", "select_frequencies"]


@functools.lru_cache(maxsize=512)
def _cos_matrix(n: int, normalized: bool) -> np.ndarray:
    """Rows are 1-D cosine modes: M[u, i] = cos(pi*u/n * (i + 1/2))."""
    i = np.arange(n, dtype=np.float64) + 0.5
    u = np.arange(n, dtype=np.float64)[:, None]
    m = np.cos(math.pi * u / n * i[None, :])
    if normalized:
        scale = np.full((n, 1), math.sqrt(2.0 / n))
        scale[0, 0] = math.sqrt(1.0 / n)
        m = m * scale
    m.flags.writeable = False
    return m


@functools.lru_cache(maxsize=4096)
def _basis_values(u: int, v: int, height: int, width: int, normalized: bool) -> np.ndarray:
    plane = np.outer(_cos_matrix(height, normalized)[u], _cos_matrix(width, normalized)[v])
    plane.flags.writeable = False
    return plane


@dataclass(frozen=True, eq=False)
class DctBasis:
    """One separable cosine plane B^{u,v} on an height x width grid."""
    u: int
    v: int
    height: int
    width: int
    values: np.ndarray = field(repr=False)


def dct_basis(u: int, v: int, height: int, width: int, normalized: bool = False) -> DctBasis:
    if not (0 <= u < height and 0 <= v < width):
        raise ConfigError(f"frequency index ({u}, {v}) outside the {height}x{width} basis grid")
    return DctBasis(u, v, height, width, _basis_values(u, v, height, width, normalized))


def _as_plane(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D plane, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError("plane contains NaN or Inf")
    return arr


def dct2d(x) -> np.ndarray:
    """Unnormalized forward transform: f[u,v] = sum_ij x[i,j] * B^{u,v}[i,j]."""
    arr = _as_plane(x)
    h, w = arr.shape
    return _cos_matrix(h, False) @ arr @ _cos_matrix(w, False).T


def idct2d(f) -> np.ndarray:
    """Inverse of :func:`dct2d` using the per-frequency norms of the cosine modes.

    The mode (u, v) carries squared norm n_u * n_v with n_0 = extent and
    n_{k>0} = extent / 2, so dividing each coefficient by its norm before the
    transposed sum recovers the plane exactly.
    """
    arr = _as_plane(f)
    h, w = arr.shape
    nu = np.full(h, h / 2.0)
    nu[0] = float(h)
    nv = np.full(w, w / 2.0)
    nv[0] = float(w)
    scaled = arr / np.outer(nu, nv)
    return _cos_matrix(h, False).T @ scaled @ _cos_matrix(w, False)


def zigzag_indices(height: int, width: int) -> list[tuple[int, int]]:
    """Anti-diagonal zigzag walk over the full grid, starting at (0, 0)."""
    out: list[tuple[int, int]] = []
    for s in range(height + width - 1):
        lo = max(0, s - width + 1)
        hi = min(s, height - 1)
        rows = range(lo, hi + 1) if s % 2 == 1 else range(hi, lo - 1, -1)
        out.extend((r, s - r) for r in rows)
    return out


@dataclass(frozen=True)
class FrequencySet:
    """Ordered distinct (u, v) indices, one per channel group, on a fixed grid."""
    indices: tuple[tuple[int, int], ...]
    policy: str
    height: int
    width: int

    def __post_init__(self):
        if len(self.indices) == 0:
            raise ConfigError("FrequencySet needs at least one index")
        if len(set(self.indices)) != len(self.indices):
            raise ConfigError(f"duplicate frequency indices in {self.indices}")
        for u, v in self.indices:
            if not (0 <= u < self.height and 0 <= v < self.width):
                raise ConfigError(f"index ({u}, {v}) outside the {self.height}x{self.width} grid")

    def __len__(self) -> int:
        return len(self.indices)


def select_frequencies(n: int, height: int, width: int, policy: str = "zigzag_skip_dc",
                       custom=None) -> FrequencySet:
    """Pick the (u, v) index per channel group.

    ``zigzag_skip_dc`` returns the first ``n`` indices of the zigzag walk
    after skipping the DC term; ``custom`` validates and adopts the caller's
    list (which may include DC).
    """
    if policy == "zigzag_skip_dc":
        if not 1 <= n <= height * width - 1:
            raise ConfigError(f"n={n} outside [1, {height * width - 1}] for a {height}x{width} grid")
        walk = zigzag_indices(height, width)[1:1 + n]
        return FrequencySet(tuple(walk), policy, height, width)
    if policy == "custom":
        if custom is None:
            raise ConfigError("custom policy requires an explicit index list")
        indices = tuple((int(u), int(v)) for u, v in custom)
        if len(indices) != n:
            raise ConfigError(f"custom list has {len(indices)} indices, expected n={n}")
        return FrequencySet(indices, policy, height, width)
    raise ConfigError(f"unknown frequency policy {policy!r}")
