"""Synthetic instances, weight maps and file formats.

Random generation always goes through :func:`make_rng`, a numpy Generator on
the counter-based Philox bit generator seeded with the integer seed. Philox
output is specified independently of the platform, so a seed gives the same
instance everywhere.
"""

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import DomainError, ParseError

__all__ = [
    "make_rng",
    "SyntheticNmfInstance",
    "gen_synthetic_nmf",
    "radial_weights",
    "load_matrix",
    "save_matrix",
    "Report",
    "write_report",
    "read_report",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = "1"


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator for ``seed`` (a nonnegative integer)."""
    seed = int(seed)
    if seed < 0:
        raise DomainError(f"seed must be nonnegative, got {seed}")
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class SyntheticNmfInstance:
    Y: np.ndarray
    X_true: np.ndarray
    H_true: np.ndarray
    seed: int
    sparsity: float


def _column_sparsity(X):
    from .sparsity import spar

    vals = [spar(c) for c in X.T if np.any(c)]
    return float(np.mean(vals)) if vals else float("nan")


def gen_synthetic_nmf(m: int, n: int, r: int, seed: int) -> SyntheticNmfInstance:
    """Exact nonnegative rank-r instance Y = X H.

    X has standard normal entries with the negative ones set to zero (about
    half of each column), H is uniform on [0, 1]. ``sparsity`` is the average
    Hoyer sparsity over the nonzero columns of X.
    """
    for name, v in (("m", m), ("n", n), ("r", r)):
        if int(v) < 1:
            raise DomainError(f"{name} must be >= 1, got {v}")
    rng = make_rng(seed)
    X = np.maximum(rng.standard_normal((m, r)), 0.0)
    H = rng.uniform(0.0, 1.0, (r, n))
    return SyntheticNmfInstance(Y=X @ H, X_true=X, H_true=H, seed=int(seed),
                                sparsity=_column_sparsity(X) if m >= 2 else float("nan"))


def radial_weights(height: int, width: int, sigma: float) -> np.ndarray:
    """exp(distance to the image centre / sigma) for every pixel.

    Pixels are indexed from 1, the centre is ((height+1)/2, (width+1)/2) and
    the image is flattened column by column (Fortran order).
    """
    if height < 1 or width < 1:
        raise DomainError(f"image size must be positive, got {height}x{width}")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    i = np.arange(1, height + 1, dtype=np.float64)[:, None]
    j = np.arange(1, width + 1, dtype=np.float64)[None, :]
    dist = np.hypot(i - (height + 1) / 2.0, j - (width + 1) / 2.0)
    return np.exp(dist / sigma).ravel(order="F")


def load_matrix(path) -> np.ndarray:
    """Read a comma-separated rectangular matrix of decimal numbers.

    Blank lines are skipped. Raises ParseError naming the 1-based line for
    ragged rows and bad tokens, and for files without data.
    """
    rows: List[List[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, record in enumerate(csv.reader(fh), start=1):
            if not record or all(not tok.strip() for tok in record):
                continue
            try:
                vals = [float(tok) for tok in record]
            except ValueError:
                bad = next(t for t in record if not _is_float(t))
                raise ParseError(f"not a number: {bad.strip()!r}", line=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("NaN or Inf entry", line=lineno)
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"row has {len(vals)} entries, expected {width}", line=lineno)
            rows.append(vals)
    if not rows:
        raise ParseError("file contains no data", line=1)
    return np.array(rows, dtype=np.float64)


def _is_float(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def save_matrix(matrix, path) -> None:
    """Write a matrix (1-D input becomes a single row) with 17 significant digits."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DomainError(f"expected a 2-D matrix, got shape {m.shape}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in m:
            w.writerow(["%.17g" % v for v in row])


@dataclass
class Report:
    """Run summary persisted as JSON.

    ``wall_ms`` is left as None unless timing was requested, so that reruns
    produce identical files. ``details`` holds command-specific values.
    """

    variant: str
    seed: Optional[int] = None
    s: Optional[float] = None
    epsilon: Optional[float] = None
    error_trace: List[float] = field(default_factory=list)
    sparsity_trace: List[float] = field(default_factory=list)
    wall_ms: Optional[float] = None
    error: Optional[str] = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        if len(self.error_trace) != len(self.sparsity_trace):
            raise DomainError("error_trace and sparsity_trace differ in length")
        return {
            "schema": SCHEMA_VERSION,
            "variant": self.variant,
            "seed": self.seed,
            "s": self.s,
            "epsilon": self.epsilon,
            "error_trace": [float(v) for v in self.error_trace],
            "sparsity_trace": [float(v) for v in self.sparsity_trace],
            "wall_ms": self.wall_ms,
            "error": self.error,
            "details": _plain(self.details),
        }


def _plain(obj):
    """Convert numpy scalars/arrays inside nested containers to JSON types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_report(report: Report, path) -> None:
    text = json.dumps(report.to_dict(), indent=2, allow_nan=True)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def read_report(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("schema") != SCHEMA_VERSION:
        raise ParseError(f"unsupported report schema {data.get('schema')!r}")
    return data
