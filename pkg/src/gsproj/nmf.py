"""Nonnegative matrix factorisation solvers, with and without sparsity.

All variants minimise ||Y - X H||_F over X, H >= 0 by alternating updates.
H is always updated with HALS sweeps; the variants differ in the X update:

========  ==============================================================
NENMF     fast gradient method (FGM), projection onto X >= 0
AHALS     HALS sweeps
PSNMF     FGM, grouped sparse projection over the columns of X
CPSNMF    FGM, each column projected to sparsity s on its own
L1AHALS   HALS sweeps with a per-column l1 penalty tuned towards s
WSNMF     FGM, weighted grouped sparse projection over the columns of X
========  ==============================================================

With a sparse projector the feasible set is not convex, so FGM keeps the best
inner iterate and the solver returns the best outer iterate.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data_io import make_rng
from .exceptions import ConfigurationError, DomainError
from .gsp import ProjectionConfig, project_each, project_group
from .sparsity import VectorGroup, spar, spar_weighted
from .wgsp import project_group_weighted

__all__ = [
    "VARIANTS",
    "NmfProblem",
    "NmfResult",
    "relative_error",
    "hals_update",
    "largest_eigenvalue",
    "fgm_update",
    "l1_tune_lambdas",
    "nonnegative_projector",
    "grouped_projector",
    "columnwise_projector",
    "weighted_projector",
    "column_sparsity",
    "run_nmf",
]

VARIANTS = ("nenmf", "ahals", "psnmf", "cpsnmf", "l1ahals", "wsnmf")
SPARSE_VARIANTS = ("psnmf", "cpsnmf", "l1ahals", "wsnmf")

HALS_SWEEPS = 2
FGM_INNER = 10
L1_FACTOR = 1.05
L1_DEADBAND = 0.01
DIAG_FLOOR = 1e-16


@dataclass
class NmfProblem:
    """Configuration of one NMF run.

    ``weights`` (WSNMF only) is either one weight vector of length m shared by
    all columns of X, or an m x r array with one column per factor.
    ``X0``/``H0`` override the seeded uniform initialisation.
    """

    Y: np.ndarray
    rank: int
    variant: str = "psnmf"
    s: Optional[float] = None
    weights: Optional[np.ndarray] = None
    outer_iters: int = 500
    seed: int = 0
    eps: float = 1e-4
    X0: Optional[np.ndarray] = None
    H0: Optional[np.ndarray] = None

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=np.float64)
        self.variant = str(self.variant).lower()
        if self.Y.ndim != 2:
            raise DomainError(f"Y must be a matrix, got shape {self.Y.shape}")
        if not np.all(np.isfinite(self.Y)):
            raise DomainError("Y contains NaN or Inf")
        if np.any(self.Y < 0):
            raise DomainError("Y has negative entries")
        m, n = self.Y.shape
        if not 1 <= int(self.rank) <= min(m, n):
            raise ConfigurationError(f"rank must be in [1, {min(m, n)}], got {self.rank}")
        self.rank = int(self.rank)
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.variant in SPARSE_VARIANTS:
            if self.s is None:
                raise ConfigurationError(f"variant {self.variant} needs a target sparsity s")
            if not 0.0 <= self.s <= 1.0:
                raise ConfigurationError(f"s must be in [0, 1], got {self.s}")
        if self.variant == "wsnmf":
            if self.weights is None:
                raise ConfigurationError("variant wsnmf needs a weight map")
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape not in ((m,), (m, self.rank)):
                raise ConfigurationError(
                    f"weights must have shape ({m},) or ({m}, {self.rank}), got {w.shape}"
                )
            self.weights = w
        if int(self.outer_iters) < 1:
            raise ConfigurationError(f"outer_iters must be positive, got {self.outer_iters}")
        for name, shape in (("X0", (m, self.rank)), ("H0", (self.rank, n))):
            val = getattr(self, name)
            if val is not None:
                val = np.array(val, dtype=np.float64)
                if val.shape != shape or np.any(val < 0) or not np.all(np.isfinite(val)):
                    raise ConfigurationError(f"{name} must be a finite nonnegative {shape} matrix")
                setattr(self, name, val)


@dataclass
class NmfResult:
    X: np.ndarray
    H: np.ndarray
    error_trace: np.ndarray
    sparsity_trace: np.ndarray
    best_error: float
    variant: str = ""
    lambdas: Optional[np.ndarray] = field(default=None, repr=False)


def relative_error(Y, X, H) -> float:
    """||Y - XH||_F / ||Y||_F."""
    Y = np.asarray(Y, dtype=np.float64)
    ny = np.linalg.norm(Y)
    if ny == 0:
        raise DomainError("relative error is undefined for Y = 0")
    return float(np.linalg.norm(Y - X @ H) / ny)


def _hals_columns(X, A, B, lam=None, Y=None, H=None):
    """In-place HALS sweep over the columns of X for min ||Y - X H||,
    given A = Y H^T and B = H H^T."""
    r = X.shape[1]
    for k in range(r):
        bkk = B[k, k]
        if bkk < DIAG_FLOOR:
            _reseed_column(X, k, Y, H)
            continue
        step = A[:, k] - X @ B[:, k]
        if lam is not None:
            step = step - lam[k]
        X[:, k] = np.maximum(X[:, k] + step / bkk, 0.0)
    return X


def _reseed_column(X, k, Y, H):
    """Replace a column whose partner row in H vanished by a slightly
    perturbed copy of the residual's largest column."""
    if Y is None or H is None:
        return
    R = Y - X @ H
    j = int(np.argmax(np.linalg.norm(R, axis=0)))
    col = np.maximum(R[:, j], 0.0)
    X[:, k] = col + 1e-6 * (col.max() if col.max() > 0 else 1.0)


def hals_update(Y, X, H, side="X", sweeps=1, lam=None) -> np.ndarray:
    """HALS sweeps on one factor; returns the updated copy.

    ``side='X'`` updates the columns of X, ``side='H'`` the rows of H. ``lam``
    (X only) is a per-column l1 penalty subtracted before clipping.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if side == "X":
        out = np.array(X, dtype=np.float64)
        A, B = Y @ H.T, H @ H.T
        for _ in range(sweeps):
            _hals_columns(out, A, B, lam, Y, H)
        return out
    if side == "H":
        if lam is not None:
            raise ConfigurationError("the l1 penalty applies to X only")
        out = np.array(H, dtype=np.float64).T.copy()
        A, B = Y.T @ X, X.T @ X
        for _ in range(sweeps):
            _hals_columns(out, A, B, None, Y.T, X.T)
        return out.T.copy()
    raise ConfigurationError(f"side must be 'X' or 'H', got {side!r}")


def largest_eigenvalue(B, iters=50, tol=1e-8) -> float:
    """Largest eigenvalue of a symmetric positive semidefinite B by power iteration."""
    n = B.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = 0.0
    for _ in range(iters):
        w = B @ v
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        new = float(v @ B @ v)
        if abs(new - lam) <= tol * max(abs(new), 1.0):
            return new
        lam = new
    return lam


def nonnegative_projector(Z):
    return np.maximum(Z, 0.0)


def _sparse_columns(Z, project_nonzero):
    """Clip Z at zero and project its nonzero columns with ``project_nonzero``,
    which maps an (m, k) array of nonzero columns to their projections."""
    X = np.maximum(Z, 0.0)
    live = np.flatnonzero(np.any(X > 0, axis=0))
    if live.size:
        X[:, live] = project_nonzero(X[:, live])
    return X


def grouped_projector(s, eps=1e-4) -> Callable:
    """Project the nonzero columns of max(Z, 0) onto average sparsity s."""
    cfg = ProjectionConfig(s=s, eps=eps)

    def project(Z):
        return _sparse_columns(
            Z, lambda C: project_group(VectorGroup.from_matrix(C, "cols"), cfg).projected_matrix("cols")
        )

    return project


def columnwise_projector(s, eps=1e-4) -> Callable:
    """Project every nonzero column of max(Z, 0) to sparsity s on its own."""
    cfg = ProjectionConfig(s=s, eps=eps)

    def each(C):
        return project_each(C, cfg, axis="cols").projected

    return lambda Z: _sparse_columns(Z, each)


def weighted_projector(s, weights, eps=1e-4) -> Callable:
    """Weighted grouped projection of the nonzero columns of max(Z, 0).

    ``weights`` is a length-m vector shared by all columns or an m x r array.
    """
    cfg = ProjectionConfig(s=s, eps=eps)
    W = np.asarray(weights, dtype=np.float64)

    def project(Z):
        X = np.maximum(Z, 0.0)
        live = np.flatnonzero(np.any(X > 0, axis=0))
        if live.size:
            Wl = np.tile(W[:, None], (1, live.size)) if W.ndim == 1 else W[:, live]
            res = project_group_weighted(VectorGroup.from_matrix(X[:, live], "cols"), Wl.T, cfg)
            X[:, live] = res.projected_matrix("cols")
        return X

    return project


def fgm_update(Y, H, X0, inner_iters=FGM_INNER, projector=nonnegative_projector,
               keep_start=True) -> np.ndarray:
    """Nesterov-accelerated projected gradient on f(X) = 1/2 ||Y - X H||_F^2.

    The step is 1/L with L the largest eigenvalue of H H^T. The iterate with
    the lowest objective is returned; ``keep_start`` lets X0 itself compete,
    which makes the update monotone but should be off when X0 is not in the
    projector's feasible set.
    """
    Y = np.asarray(Y, dtype=np.float64)
    A = Y @ H.T
    B = H @ H.T
    L = largest_eigenvalue(B)
    if not L > 0:
        raise DomainError("H H^T is zero; the gradient step is undefined")
    yy = float(np.sum(Y * Y))

    def objective(X):
        return 0.5 * (yy - 2.0 * np.sum(A * X) + np.sum((X.T @ X) * B))

    X_prev = np.array(X0, dtype=np.float64)
    Z = X_prev.copy()
    t = 1.0
    best, best_val = (X_prev.copy(), objective(X_prev)) if keep_start else (None, np.inf)
    for _ in range(int(inner_iters)):
        X_new = projector(Z - (Z @ B - A) / L)
        val = objective(X_new)
        if val < best_val:
            best, best_val = X_new, val
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Z = X_new + ((t - 1.0) / t_new) * (X_new - X_prev)
        X_prev, t = X_new, t_new
    return best


def column_sparsity(X, weights=None) -> float:
    """Average (weighted) sparsity over the nonzero columns of X; NaN if none."""
    vals = []
    for k in range(X.shape[1]):
        c = X[:, k]
        if not np.any(c):
            continue
        if weights is None:
            vals.append(spar(c))
        else:
            w = weights if weights.ndim == 1 else weights[:, k]
            vals.append(spar_weighted(c, w))
    return float(np.mean(vals)) if vals else float("nan")


def l1_tune_lambdas(X, s, lam_prev, factor=L1_FACTOR, deadband=L1_DEADBAND) -> np.ndarray:
    """Multiplicative update of per-column l1 weights towards sparsity s.

    Columns sparser than s + deadband get a smaller penalty, columns below
    s - deadband a larger one. Zero columns count as fully sparse.
    """
    if not 0.0 <= s <= 1.0:
        raise DomainError(f"s must be in [0, 1], got {s}")
    lam = np.array(lam_prev, dtype=np.float64)
    for k in range(X.shape[1]):
        c = X[:, k]
        sp = spar(c) if np.any(c) else 1.0
        if sp < s - deadband:
            lam[k] *= factor
        elif sp > s + deadband:
            lam[k] /= factor
    return lam


def _initial_factors(p: NmfProblem):
    m, n = p.Y.shape
    rng = make_rng(p.seed)
    X = p.X0 if p.X0 is not None else rng.uniform(0.0, 1.0, (m, p.rank))
    H = p.H0 if p.H0 is not None else rng.uniform(0.0, 1.0, (p.rank, n))
    if p.X0 is None and p.H0 is None:
        # optimal scaling of X0 H0 with respect to Y
        XH = X @ H
        denom = float(np.sum(XH * XH))
        if denom > 0:
            X = X * (float(np.sum(p.Y * XH)) / denom)
    return X.copy(), H.copy()


def _x_projector(p: NmfProblem):
    if p.variant == "psnmf":
        return grouped_projector(p.s, p.eps)
    if p.variant == "cpsnmf":
        return columnwise_projector(p.s, p.eps)
    if p.variant == "wsnmf":
        return weighted_projector(p.s, p.weights, p.eps)
    return nonnegative_projector


def run_nmf(p: NmfProblem) -> NmfResult:
    """Alternating X and H updates for ``p.outer_iters`` iterations.

    The error trace holds the relative error after each outer iteration and
    the sparsity trace the average column sparsity of X (weighted sparsity for
    WSNMF). Sparse variants return the best outer iterate.
    """
    Y = p.Y
    if np.linalg.norm(Y) == 0:
        raise DomainError("Y is zero")
    X, H = _initial_factors(p)
    projector = _x_projector(p)
    sparse_fgm = p.variant in ("psnmf", "cpsnmf", "wsnmf")
    lam = None
    if p.variant == "l1ahals":
        A0 = Y @ H.T
        lam = 1e-3 * np.maximum(A0.max(axis=0), 1e-12)

    err = np.empty(p.outer_iters)
    sp = np.empty(p.outer_iters)
    best = (np.inf, X, H)
    for it in range(p.outer_iters):
        if p.variant in ("ahals", "l1ahals"):
            X = hals_update(Y, X, H, "X", sweeps=HALS_SWEEPS, lam=lam)
        else:
            X = fgm_update(Y, H, X, FGM_INNER, projector, keep_start=not sparse_fgm)
        H = hals_update(Y, X, H, "H", sweeps=HALS_SWEEPS)
        if lam is not None:
            lam = l1_tune_lambdas(X, p.s, lam)
        err[it] = relative_error(Y, X, H)
        sp[it] = column_sparsity(X, p.weights if p.variant == "wsnmf" else None)
        if err[it] < best[0]:
            best = (err[it], X, H)

    if p.variant in SPARSE_VARIANTS:
        X, H = best[1], best[2]
    return NmfResult(
        X=X, H=H, error_trace=err, sparsity_trace=sp,
        best_error=float(err.min()), variant=p.variant, lambdas=lam,
    )
