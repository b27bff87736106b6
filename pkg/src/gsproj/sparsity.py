"""Hoyer sparsity measures, soft thresholding and input validation.

The sparsity of a nonzero ``x`` of length ``n >= 2`` is

    spar(x) = (sqrt(n) - ||x||_1 / ||x||_2) / (sqrt(n) - 1)

which is 0 for vectors whose entries all have the same magnitude and 1 for
1-sparse vectors. The weighted variant replaces ``||x||_1`` by ``w^T |x|``
and rescales with ``||w||_2`` and ``min(w)``.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np

from .exceptions import DomainError

__all__ = [
    "VectorGroup",
    "as_vector",
    "as_group",
    "as_weight",
    "as_weight_group",
    "spar",
    "spar_weighted",
    "soft_threshold",
    "average_sparsity",
    "average_weighted_sparsity",
]


def as_vector(x, name="x") -> np.ndarray:
    """Return ``x`` as a finite 1-D float64 array with at least one entry."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains NaN or Inf")
    return arr


def _check_sparsity_domain(x, name="x"):
    if x.size < 2:
        raise DomainError(f"sparsity is undefined for {name} of length {x.size} < 2")
    if not np.any(x):
        raise DomainError(f"sparsity is undefined for the zero vector {name}")


def as_weight(w, n=None, name="w") -> np.ndarray:
    """Validate a weight vector: nonnegative, nonzero, length >= 2."""
    arr = as_vector(w, name)
    if n is not None and arr.size != n:
        raise DomainError(f"{name} has length {arr.size}, expected {n}")
    if np.any(arr < 0):
        raise DomainError(f"{name} has negative entries")
    _check_sparsity_domain(arr, name)
    # ||w||_2 > min(w) holds for any nonzero nonnegative w with n >= 2, but
    # guard against round-off for nearly-degenerate inputs.
    if not np.linalg.norm(arr) > arr.min():
        raise DomainError(f"{name} gives a zero weighted-sparsity denominator")
    return arr


@dataclass(frozen=True)
class VectorGroup:
    """An ordered set of nonzero vectors of length >= 2 to be projected together.

    Vectors may have different lengths. Use :meth:`from_matrix` to take the rows
    or columns of a 2-D array.
    """

    vectors: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.vectors) == 0:
            raise DomainError("a vector group needs at least one vector")
        checked = []
        for i, v in enumerate(self.vectors):
            arr = as_vector(v, f"vector {i}")
            _check_sparsity_domain(arr, f"vector {i}")
            arr.setflags(write=False)
            checked.append(arr)
        object.__setattr__(self, "vectors", tuple(checked))

    @classmethod
    def from_matrix(cls, matrix, axis="rows") -> "VectorGroup":
        m = np.array(matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DomainError(f"expected a 2-D matrix, got shape {m.shape}")
        if axis in ("cols", "columns", 1):
            m = np.ascontiguousarray(m.T)
        elif axis not in ("rows", 0):
            raise DomainError(f"unknown axis {axis!r}")
        if m.shape[0] == 0:
            raise DomainError("a vector group needs at least one vector")
        if not np.all(np.isfinite(m)):
            raise DomainError("matrix contains NaN or Inf")
        if m.shape[1] < 2:
            raise DomainError(f"sparsity is undefined for vectors of length {m.shape[1]} < 2")
        zero = np.flatnonzero(~np.any(m, axis=1))
        if zero.size:
            raise DomainError(f"vector {zero[0]} is zero")
        m.setflags(write=False)
        g = object.__new__(cls)
        object.__setattr__(g, "vectors", tuple(m))
        # the stacked rows, so that solvers can skip re-stacking
        object.__setattr__(g, "_matrix", m)
        return g

    @property
    def r(self) -> int:
        return len(self.vectors)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([v.size for v in self.vectors], dtype=np.int64)

    @property
    def total_len(self) -> int:
        return int(self.lengths.sum())

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(self.vectors)

    def __getitem__(self, i):
        return self.vectors[i]

    def to_matrix(self, axis="rows") -> np.ndarray:
        """Stack equal-length vectors back into a matrix."""
        if len(set(self.lengths.tolist())) != 1:
            raise DomainError("vectors have different lengths")
        m = np.vstack(self.vectors)
        return m if axis in ("rows", 0) else m.T


GroupLike = Union[VectorGroup, Sequence, np.ndarray]


def as_group(g: GroupLike) -> VectorGroup:
    """Coerce a sequence of vectors (or a 2-D array, row-wise) to a VectorGroup."""
    if isinstance(g, VectorGroup):
        return g
    if isinstance(g, np.ndarray) and g.ndim == 2:
        return VectorGroup.from_matrix(g, "rows")
    return VectorGroup(tuple(g))


def as_weight_group(weights, group: VectorGroup) -> Tuple[np.ndarray, ...]:
    """Validate one weight vector per group member.

    ``weights`` may be a sequence of vectors, or a single vector that is shared
    by every member (all members must then have the same length).
    """
    if isinstance(weights, np.ndarray) and weights.ndim == 1:
        weights = [weights] * group.r
    elif isinstance(weights, np.ndarray) and weights.ndim == 2:
        weights = [weights[i] for i in range(weights.shape[0])]
    weights = list(weights)
    if len(weights) != group.r:
        raise DomainError(f"got {len(weights)} weight vectors for {group.r} vectors")
    return tuple(
        as_weight(w, v.size, name=f"weight {i}") for i, (w, v) in enumerate(zip(weights, group))
    )


def spar(x) -> float:
    """Hoyer sparsity of ``x``, in [0, 1]. Invariant to scaling."""
    x = as_vector(x)
    _check_sparsity_domain(x)
    n = x.size
    ratio = np.abs(x).sum() / np.linalg.norm(x)
    sq = np.sqrt(n)
    return float((sq - ratio) / (sq - 1.0))


def spar_weighted(x, w) -> float:
    """Weighted sparsity ``(||w|| - w^T|x| / ||x||) / (||w|| - min w)``.

    With ``w`` all ones this equals :func:`spar`. A 1-sparse ``x`` only reaches
    1 when its nonzero sits on a smallest weight.
    """
    x = as_vector(x)
    _check_sparsity_domain(x)
    w = as_weight(w, x.size)
    wn = np.linalg.norm(w)
    ratio = (w @ np.abs(x)) / np.linalg.norm(x)
    return float((wn - ratio) / (wn - w.min()))


def soft_threshold(x, lam: float) -> np.ndarray:
    """``sign(x) * max(|x| - lam, 0)``."""
    if lam < 0:
        raise DomainError(f"threshold must be nonnegative, got {lam}")
    x = as_vector(x)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def average_sparsity(g: GroupLike) -> float:
    g = as_group(g)
    return float(np.mean([spar(v) for v in g]))


def average_weighted_sparsity(g: GroupLike, weights) -> float:
    g = as_group(g)
    ws = as_weight_group(weights, g)
    return float(np.mean([spar_weighted(v, w) for v, w in zip(g, ws)]))
