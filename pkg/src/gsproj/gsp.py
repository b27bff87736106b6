"""Grouped sparse projection.

Given nonzero vectors x_1..x_r and a target s, find the x~_i closest to the
x_i (in the sense of maximising sum_i <xbar_i, |x_i|> over unit nonnegative
directions) whose *average* Hoyer sparsity is at least s.

All vectors share one Lagrange multiplier mu. For a given mu each direction is
the normalised soft threshold of |x_i| at mu * beta_i, with
beta_i = 1 / (sqrt(n_i) - 1), and the constraint residual

    g(mu) = sum_i beta_i * sum(xbar_i(mu)) - k_s,
    k_s   = sum_i sqrt(n_i) / (sqrt(n_i) - 1) - r * s,

is nonincreasing in mu. The average sparsity at mu equals ``s - g(mu) / r``.
The root is found by Newton's method started at mu = 0 and safeguarded by
bisection on a bracket [mu_lo, mu_hi] with g(mu_lo) > 0 >= g(mu_hi).
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .exceptions import ConvergenceError, DomainError
from .sparsity import GroupLike, VectorGroup, as_group, as_vector

__all__ = [
    "ProjectionConfig",
    "GroupConstants",
    "ProjectionResult",
    "group_constants",
    "candidate_direction",
    "g_eval",
    "mu_tilde",
    "discontinuity_points",
    "project_group",
    "project_single",
    "project_group_relative",
    "project_each",
    "IndependentResult",
]

TIE_RTOL = 1e-12


@dataclass(frozen=True)
class ProjectionConfig:
    """Solver settings.

    s: target average sparsity in [0, 1].
    eps: accuracy on the average sparsity.
    r_l: required bracket shrink ratio per iteration before bisection kicks in.
    max_iters: hard cap on solver iterations.
    """

    s: float
    eps: float = 1e-4
    r_l: float = 0.9
    max_iters: int = 100

    def __post_init__(self):
        if not 0.0 <= self.s <= 1.0:
            raise DomainError(f"target sparsity s must be in [0, 1], got {self.s}")
        if not self.eps > 0:
            raise DomainError(f"eps must be positive, got {self.eps}")
        if not 0.5 <= self.r_l < 1.0:
            raise DomainError(f"r_l must be in [1/2, 1), got {self.r_l}")
        if int(self.max_iters) < 1:
            raise DomainError(f"max_iters must be positive, got {self.max_iters}")


@dataclass(frozen=True)
class GroupConstants:
    beta: np.ndarray
    k_s: float


@dataclass
class ProjectionResult:
    """Output of a grouped projection.

    ``projected`` holds the x~_i (signs of the input preserved) and
    ``unit_directions`` the nonnegative unit vectors xbar_i(mu_star).
    When ``discontinuous`` is set the target lies inside a jump of g and
    ``sparsity_band`` gives the average sparsity on either side of the jump;
    the solution is taken on whichever side is closer to the target.
    """

    projected: Tuple[np.ndarray, ...]
    unit_directions: Tuple[np.ndarray, ...]
    mu_star: float
    iterations: int
    achieved_sparsity: float
    discontinuous: bool
    bracket: Tuple[float, float]
    target: float
    feasible_at_zero: bool = False
    sparsity_band: Optional[Tuple[float, float]] = None
    history: List[Tuple[float, float, float]] = field(default_factory=list)

    def projected_matrix(self, axis="rows") -> np.ndarray:
        m = np.vstack(self.projected)
        return m if axis in ("rows", 0) else m.T


def group_constants(g: GroupLike, s: float) -> GroupConstants:
    g = as_group(g)
    sq = np.sqrt(g.lengths.astype(np.float64))
    beta = 1.0 / (sq - 1.0)
    k_s = float(np.sum(sq * beta) - g.r * s)
    return GroupConstants(beta=beta, k_s=k_s)


def candidate_direction(x_abs, mu: float, beta: float) -> np.ndarray:
    """Maximiser of <xbar, x_abs - mu*beta> over unit nonnegative xbar.

    Soft-threshold then normalise; once everything is thresholded away, the
    indicator of the largest entry (lowest index on ties).
    """
    x_abs = as_vector(x_abs, "x_abs")
    y = np.maximum(x_abs - mu * beta, 0.0)
    nrm = np.linalg.norm(y)
    if nrm > 0:
        return y / nrm
    out = np.zeros_like(x_abs)
    out[int(np.argmax(x_abs))] = 1.0
    return out


class _Packed:
    """The |x_i| of a group stored for vectorised evaluation.

    Equal-length groups are kept as an r x n matrix; ragged groups are laid end
    to end and reduced segment-wise.
    """

    def __init__(self, g: VectorGroup, beta: np.ndarray):
        self.lengths = g.lengths
        self.beta = np.asarray(beta, dtype=np.float64)
        self.uniform = bool(np.all(self.lengths == self.lengths[0]))
        self._top = None
        if self.uniform:
            stacked = getattr(g, "_matrix", None)
            self.signed = stacked if stacked is not None else np.vstack(g.vectors)
            self.data = np.abs(self.signed)
        else:
            self.offsets = np.concatenate(([0], np.cumsum(self.lengths)[:-1]))
            self.seg = np.repeat(np.arange(g.r), self.lengths)
            self.signed = np.concatenate(g.vectors)
            self.data = np.abs(self.signed)

    def reduce(self, a):
        if self.uniform:
            return a.sum(axis=1)
        return np.add.reduceat(a, self.offsets)

    def spread(self, per_vector):
        """Broadcast one value per vector to the layout of ``data``."""
        if self.uniform:
            return per_vector[:, None]
        return per_vector[self.seg]

    def split(self, a):
        if self.uniform:
            return tuple(a)
        return tuple(np.split(a, self.offsets[1:]))

    def set_indicator(self, d, i, j):
        """Make vector i of the packed array d the indicator of its entry j."""
        if self.uniform:
            d[i] = 0.0
            d[i, j] = 1.0
        else:
            start = self.offsets[i]
            d[start:start + self.lengths[i]] = 0.0
            d[start + j] = 1.0

    def reconstruct(self, d) -> Tuple[np.ndarray, ...]:
        """sign(x_i) * alpha_i * d_i with alpha_i = <|x_i|, d_i>, from packed d."""
        if self.uniform:
            alpha = np.einsum("ij,ij->i", self.data, d)
        else:
            alpha = self.reduce(self.data * d)
        out = np.copysign(self.spread(alpha) * d, self.signed)
        out += 0.0  # -0.0 + 0.0 == +0.0
        return self.split(out)

    def directions(self, mu):
        return self.split(self.direction_data(mu))

    def indicator_data(self):
        """Indicator of the largest |x| entry (lowest index on ties) of every
        vector, in the packed layout."""
        d = np.zeros_like(self.data)
        if self.uniform:
            d[np.arange(d.shape[0]), np.argmax(self.data, axis=1)] = 1.0
        else:
            for i, a in enumerate(self.split(self.data)):
                d[self.offsets[i] + int(np.argmax(a))] = 1.0
        return d

    def residual(self, mu):
        buf = np.subtract(self.data, self.spread(mu * self.beta))
        return np.maximum(buf, 0.0, out=buf)

    def count_positive(self, y):
        if self.uniform:
            return np.count_nonzero(y, axis=1)
        return self.reduce((y > 0).astype(np.float64))

    def sum_squares(self, y):
        if self.uniform:
            return np.einsum("ij,ij->i", y, y)
        return self.reduce(y * y)

    def top_two(self):
        """Largest and second-largest |x| entry of every vector."""
        if self._top is None:
            self._top = self._compute_top_two()
        return self._top

    def _compute_top_two(self):
        if self.uniform:
            n = self.data.shape[1]
            part = np.partition(self.data, n - 2, axis=1)
            return part[:, n - 1], part[:, n - 2]
        first, second = [], []
        for a in self.split(self.data):
            part = np.partition(a, a.size - 2)
            first.append(part[-1])
            second.append(part[-2])
        return np.array(first), np.array(second)


class _GspEvaluator(_Packed):
    def __init__(self, g: VectorGroup, consts: GroupConstants):
        super().__init__(g, consts.beta)
        self.k_s = consts.k_s
        self.r = g.r
        # entries that can still be positive, as (values, owner, per-entry beta)
        self._live = None

    def narrow(self, mu_lo):
        """Drop entries that are thresholded away for every mu >= mu_lo.

        Only valid while all later evaluations stay at or above mu_lo, which
        the bracketed solver guarantees.
        """
        thr = self.spread(mu_lo * self.beta)
        if self._live is None:
            keep = self.data > thr
            if np.count_nonzero(keep) > 0.5 * self.data.size:
                return
            if self.uniform:
                rows = np.nonzero(keep)[0]
                self._live = (self.data[keep], rows, self.beta[rows])
            else:
                self._live = (self.data[keep], self.seg[keep], self.beta[self.seg[keep]])
            return
        vals, owner, b = self._live
        keep = vals > mu_lo * b
        if np.count_nonzero(keep) <= 0.5 * vals.size:
            self._live = (vals[keep], owner[keep], b[keep])

    def _stats(self, mu):
        y = self.residual(mu)
        s1 = self.reduce(y)
        s2 = self.sum_squares(y)
        return y, s1, s2

    def _live_stats(self, mu):
        vals, owner, b = self._live
        y = vals - mu * b
        np.maximum(y, 0.0, out=y)
        s1 = np.bincount(owner, weights=y, minlength=self.r)
        s2 = np.bincount(owner, weights=y * y, minlength=self.r)
        cnt = np.bincount(owner, weights=(y > 0), minlength=self.r)
        return s1, s2, cnt

    def __call__(self, mu):
        if self._live is not None:
            s1, s2, cnt = self._live_stats(mu)
        else:
            y, s1, s2 = self._stats(mu)
            cnt = self.count_positive(y)
        alive = s1 > 0
        nrm = np.sqrt(s2)
        ones_sum = np.ones_like(s1)
        np.divide(s1, nrm, out=ones_sum, where=alive)
        value = float(self.beta @ ones_sum - self.k_s)
        smooth = cnt >= 2
        num = np.clip(cnt * s2 - s1 * s1, 0.0, None)
        dterm = np.zeros_like(s1)
        np.divide(num, nrm ** 3, out=dterm, where=smooth)
        deriv = float(-(self.beta ** 2) @ dterm)
        return value, deriv

    def direction_data(self, mu):
        """Unit directions at mu, in the packed layout."""
        y = self.residual(mu)
        nrm = np.sqrt(self.sum_squares(y))
        dead = nrm == 0
        y /= self.spread(np.where(dead, 1.0, nrm))
        if np.any(dead):
            parts = self.split(self.data)
            for i in np.flatnonzero(dead):
                self.set_indicator(y, i, int(np.argmax(parts[i])))
        return y

    def sparsity(self, d):
        """Average Hoyer sparsity of packed unit nonnegative directions."""
        sq = np.sqrt(self.lengths)
        return float(np.mean((sq - self.reduce(d)) * self.beta))


def g_eval(g: GroupLike, consts: GroupConstants, mu: float) -> Tuple[float, float]:
    """Value and right derivative of g at mu.

    A vector whose soft-thresholded support S has at least two entries
    contributes ``-beta^2 (|S| ||y||^2 - (e^T y)^2) / ||y||^3`` to the
    derivative, with y the thresholded vector; 1-sparse vectors contribute 0.
    Entries exactly at the threshold count as inactive.
    """
    if mu < 0:
        raise DomainError(f"mu must be nonnegative, got {mu}")
    g = as_group(g)
    return _GspEvaluator(g, consts)(mu)


def mu_tilde(g: GroupLike, consts: GroupConstants) -> float:
    """Smallest mu at which every xbar_i(mu) is 1-sparse."""
    g = as_group(g)
    return _mu_tilde_packed(_Packed(g, consts.beta))


def _mu_tilde_packed(p: _Packed) -> float:
    return float(np.max(p.top_two()[1] / p.beta))


def discontinuity_points(g: GroupLike, consts: GroupConstants) -> np.ndarray:
    """The mu where g jumps: max|x_i| / beta_i for vectors whose largest
    magnitude is attained more than once (relative tolerance 1e-12)."""
    g = as_group(g)
    return _jumps_packed(_Packed(g, consts.beta))


def _jumps_packed(p: _Packed) -> np.ndarray:
    first, second = p.top_two()
    tied = second >= first * (1.0 - TIE_RTOL)
    return np.unique(first[tied] / p.beta[tied])


@dataclass
class _Solve:
    mu: float
    lo: float
    hi: float
    val_lo: float
    val_hi: float
    iterations: int
    discontinuous: bool
    history: list


def _safeguarded_root(
    evaluate: Callable[[float], Tuple[float, float]],
    r: int,
    mu_hi: float,
    val0: Tuple[float, float],
    val_hi: float,
    cfg: ProjectionConfig,
    jumps: Optional[np.ndarray] = None,
) -> _Solve:
    """Newton's method on a nonincreasing g with bisection fallbacks.

    Starts at mu = 0 where g > 0. ``jumps`` are known discontinuities; when
    None, any bracket narrower than eps * mu that still straddles a residual
    larger than r * eps is reported as a jump.
    """
    tol = r * cfg.eps
    lo, hi = 0.0, float(mu_hi)
    mu = 0.0
    val, der = val0
    g_lo, g_hi = val, val_hi
    width = hi - lo
    it = 0
    history = [(lo, hi, mu)]
    discontinuous = False

    narrow = getattr(evaluate, "narrow", None)

    def bracket_update(m, v):
        nonlocal lo, hi, g_lo, g_hi
        if v > 0:
            lo, g_lo = m, v
            if narrow is not None:
                narrow(lo)
        else:
            hi, g_hi = m, v

    while abs(val) > tol:
        if it >= cfg.max_iters:
            raise ConvergenceError(
                f"no root within {cfg.max_iters} iterations; bracket [{lo}, {hi}]",
                bracket=(lo, hi),
                iterations=it,
            )
        it += 1
        mu_old, val_old = mu, val
        step_ok = der < 0 and np.isfinite(der)
        mu = mu - val / der if step_ok else np.nan
        if not (lo <= mu <= hi):
            mu = 0.5 * (lo + hi)
        val, der = evaluate(mu)
        bracket_update(mu, val)

        # stalled: bracket barely shrank, short step, residual not reduced
        if (
            hi - lo > cfg.r_l * width
            and abs(mu_old - mu) < (1.0 - cfg.r_l) * width
            and abs(val) > cfg.r_l * abs(val_old)
        ):
            mu = 0.5 * (lo + hi)
            val, der = evaluate(mu)
            bracket_update(mu, val)

        width = hi - lo
        history.append((lo, hi, mu))
        if abs(val) <= tol:
            break
        if width < cfg.eps * mu:
            if jumps is None:
                near = True
            else:
                near = jumps.size > 0 and bool(np.any(np.abs(mu - jumps) < cfg.eps * mu))
            if near:
                discontinuous = True
                break
        if width <= 4 * np.spacing(hi):
            # g jumps within floating-point resolution
            discontinuous = True
            break

    return _Solve(mu, lo, hi, g_lo, g_hi, it, discontinuous, history)


def _unchanged(g: VectorGroup, s: float, achieved: float) -> ProjectionResult:
    dirs = tuple(np.abs(v) / np.linalg.norm(v) for v in g)
    return ProjectionResult(
        projected=tuple(v.copy() for v in g),
        unit_directions=dirs,
        mu_star=0.0,
        iterations=0,
        achieved_sparsity=achieved,
        discontinuous=False,
        bracket=(0.0, 0.0),
        target=s,
        feasible_at_zero=True,
    )


def project_group(g: GroupLike, cfg: ProjectionConfig) -> ProjectionResult:
    """Project a group of vectors onto average sparsity >= cfg.s.

    Raises ConvergenceError if cfg.max_iters is exhausted.
    """
    g = as_group(g)
    consts = group_constants(g, cfg.s)
    ev = _GspEvaluator(g, consts)
    r = g.r
    v0 = ev(0.0)
    if v0[0] <= 0:
        return _unchanged(g, cfg.s, cfg.s - v0[0] / r)

    mt = _mu_tilde_packed(ev)
    if cfg.s == 1.0:
        # built directly: at a rounded mt a second entry can survive by an ulp
        d = ev.indicator_data()
        return ProjectionResult(
            projected=ev.reconstruct(d),
            unit_directions=ev.split(d),
            mu_star=mt,
            iterations=0,
            achieved_sparsity=ev.sparsity(d),
            discontinuous=False,
            bracket=(mt, mt),
            target=cfg.s,
        )

    # every direction is 1-sparse at mt, so g(mt) = r (s - 1) exactly
    val_hi = r * (cfg.s - 1.0)
    sol = _safeguarded_root(ev, r, mt, v0, val_hi, cfg, _jumps_packed(ev))
    return _finish(g, cfg, sol, ev, r)


def _finish(g, cfg, sol: _Solve, ev, r) -> ProjectionResult:
    band = None
    mu = sol.mu
    if sol.discontinuous:
        band = (cfg.s - sol.val_lo / r, cfg.s - sol.val_hi / r)
        # the side of the jump whose sparsity is closer to the target
        mu = sol.lo if cfg.s - band[0] < band[1] - cfg.s else sol.hi
    d = ev.direction_data(mu)
    return ProjectionResult(
        projected=ev.reconstruct(d),
        unit_directions=ev.split(d),
        mu_star=float(mu),
        iterations=sol.iterations,
        achieved_sparsity=ev.sparsity(d),
        discontinuous=sol.discontinuous,
        bracket=(float(sol.lo), float(sol.hi)),
        target=cfg.s,
        sparsity_band=band,
        history=sol.history,
    )


def project_single(x, cfg: ProjectionConfig) -> np.ndarray:
    """Closest vector to ``x`` with sparsity >= cfg.s."""
    return project_group(VectorGroup((x,)), cfg).projected[0]


def project_group_relative(g: GroupLike, cfg: ProjectionConfig) -> ProjectionResult:
    """Grouped projection minimising relative errors ||x_i - x~_i|| / ||x_i||.

    Each vector is scaled to unit norm, projected, and scaled back.
    """
    g = as_group(g)
    norms = [np.linalg.norm(v) for v in g]
    unit = VectorGroup(tuple(v / n for v, n in zip(g, norms)))
    res = project_group(unit, cfg)
    if res.feasible_at_zero:
        res.projected = tuple(v.copy() for v in g)
    else:
        res.projected = tuple(p * n for p, n in zip(res.projected, norms))
    return res


@dataclass
class IndependentResult:
    """Per-vector outcome of :func:`project_each`.

    ``projected`` has the shape and orientation of the input matrix; the other
    arrays hold one entry per projected row or column.
    """

    projected: np.ndarray
    mu_star: np.ndarray
    iterations: np.ndarray
    achieved_sparsity: np.ndarray
    discontinuous: np.ndarray


def project_each(matrix, cfg: ProjectionConfig, axis="rows") -> IndependentResult:
    """Project every row (or column) of ``matrix`` to sparsity cfg.s on its own.

    Gives the same result as calling :func:`project_single` on each vector,
    but runs the Newton/bisection iterations of all vectors together.
    """
    g = VectorGroup.from_matrix(matrix, axis)
    X = np.vstack(g.vectors)
    V = np.abs(X)
    k, n = V.shape
    sq = np.sqrt(n)
    beta = 1.0 / (sq - 1.0)
    target = sq * beta - cfg.s
    tol = cfg.eps

    def evaluate(rows, mu):
        y = np.maximum(V[rows] - (mu * beta)[:, None], 0.0)
        s1 = y.sum(axis=1)
        s2 = np.einsum("ij,ij->i", y, y)
        cnt = np.count_nonzero(y, axis=1)
        nrm = np.sqrt(s2)
        alive = nrm > 0
        ratio = np.ones(rows.size)
        np.divide(s1, nrm, out=ratio, where=alive)
        num = np.clip(cnt * s2 - s1 * s1, 0.0, None)
        dterm = np.zeros(rows.size)
        np.divide(num, nrm ** 3, out=dterm, where=cnt >= 2)
        return beta * ratio - target, -(beta ** 2) * dterm

    all_rows = np.arange(k)
    part = np.partition(V, n - 2, axis=1)
    top, second = part[:, n - 1], part[:, n - 2]
    mt = second / beta
    jump = np.where(second >= top * (1.0 - TIE_RTOL), top / beta, np.nan)

    mu = np.zeros(k)
    val, der = evaluate(all_rows, mu)
    lo, hi = np.zeros(k), mt.copy()
    g_lo = val.copy()
    g_hi = np.full(k, cfg.s - 1.0)
    iters = np.zeros(k, dtype=np.int64)
    disc = np.zeros(k, dtype=bool)
    if cfg.s == 1.0:
        mu = mt.copy()
        active = np.zeros(k, dtype=bool)
    else:
        active = val > tol
    width = hi - lo

    while np.any(active):
        rows = np.flatnonzero(active)
        if np.any(iters[rows] >= cfg.max_iters):
            raise ConvergenceError(
                f"no root within {cfg.max_iters} iterations", iterations=cfg.max_iters
            )
        iters[rows] += 1
        m_old, v_old = mu[rows], val[rows]
        d = der[rows]
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(d < 0, m_old - v_old / d, np.nan)
        l, h = lo[rows], hi[rows]
        bad = ~((l <= step) & (step <= h))
        m_new = np.where(bad, 0.5 * (l + h), step)
        v_new, d_new = evaluate(rows, m_new)

        def update(sel, m, v):
            pos = v > 0
            lo[sel[pos]], g_lo[sel[pos]] = m[pos], v[pos]
            hi[sel[~pos]], g_hi[sel[~pos]] = m[~pos], v[~pos]

        update(rows, m_new, v_new)
        mu[rows], val[rows], der[rows] = m_new, v_new, d_new
        w_old = width[rows]
        stalled = (
            (hi[rows] - lo[rows] > cfg.r_l * w_old)
            & (np.abs(m_old - m_new) < (1.0 - cfg.r_l) * w_old)
            & (np.abs(v_new) > cfg.r_l * np.abs(v_old))
        )
        if np.any(stalled):
            srows = rows[stalled]
            mid = 0.5 * (lo[srows] + hi[srows])
            sv, sd = evaluate(srows, mid)
            update(srows, mid, sv)
            mu[srows], val[srows], der[srows] = mid, sv, sd
        width[rows] = hi[rows] - lo[rows]

        m, wd = mu[rows], width[rows]
        done = np.abs(val[rows]) <= tol
        near = np.abs(m - jump[rows]) < cfg.eps * m
        jumped = ~done & (((wd < cfg.eps * m) & near) | (wd <= 4 * np.spacing(hi[rows])))
        disc[rows[jumped]] = True
        active[rows[done | jumped]] = False

    if np.any(disc):
        rows = np.flatnonzero(disc)
        band_lo = cfg.s - g_lo[rows]
        band_hi = cfg.s - g_hi[rows]
        mu[rows] = np.where(cfg.s - band_lo < band_hi - cfg.s, lo[rows], hi[rows])

    feasible = ~disc & (iters == 0) & (cfg.s < 1.0)
    y = np.maximum(V - (mu * beta)[:, None], 0.0)
    nrm = np.linalg.norm(y, axis=1)
    dead = (nrm == 0) | (cfg.s == 1.0)
    D = y / np.where(dead, 1.0, nrm)[:, None]
    for i in np.flatnonzero(dead):
        D[i] = 0.0
        D[i, int(np.argmax(V[i]))] = 1.0
    alpha = np.einsum("ij,ij->i", V, D)
    P = np.sign(X) * (alpha[:, None] * D) + 0.0
    P[feasible] = X[feasible]
    achieved = (sq - D.sum(axis=1)) * beta
    achieved[feasible] = cfg.s - val[feasible]
    return IndependentResult(
        projected=P if axis in ("rows", 0) else P.T,
        mu_star=mu,
        iterations=iters,
        achieved_sparsity=achieved,
        discontinuous=disc,
    )
