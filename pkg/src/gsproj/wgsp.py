"""Weighted grouped sparse projection.

The weighted sparsity of x with weights w >= 0 is

    spar_w(x) = (||w|| - w^T|x| / ||x||) / (||w|| - min w).

Projecting a group onto an average weighted sparsity s_w again reduces to a
scalar root: with beta_i = 1 / (||w_i|| - min w_i),

    g_w(mu) = sum_i beta_i w_i^T xbar_i(mu) - k_w,
    k_w     = sum_i ||w_i|| beta_i - r * s_w,

where xbar_i(mu) is the normalised positive part of |x_i| - mu beta_i w_i.
Unlike the unweighted case g_w can be flat on whole intervals (once a vector
is reduced to a single entry its contribution only changes when the position
of that entry moves), so Newton steps on a plateau are replaced by bisection.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .exceptions import DomainError
from .gsp import (
    ProjectionConfig,
    ProjectionResult,
    _finish,
    _Packed,
    _safeguarded_root,
    _unchanged,
)
from .sparsity import GroupLike, VectorGroup, as_group, as_vector, as_weight, as_weight_group

__all__ = [
    "WeightGroup",
    "WeightedConstants",
    "weighted_constants",
    "candidate_direction_weighted",
    "gw_eval",
    "mu_tilde_weighted",
    "project_group_weighted",
]


@dataclass(frozen=True)
class WeightGroup:
    """One validated weight vector per member of a VectorGroup."""

    weights: Tuple[np.ndarray, ...]

    @classmethod
    def for_group(cls, weights, g: GroupLike) -> "WeightGroup":
        if isinstance(weights, WeightGroup):
            weights = weights.weights
        return cls(as_weight_group(weights, as_group(g)))

    def __len__(self):
        return len(self.weights)

    def __iter__(self):
        return iter(self.weights)


@dataclass(frozen=True)
class WeightedConstants:
    beta: np.ndarray
    k_s: float


def weighted_constants(weights: WeightGroup, s: float) -> WeightedConstants:
    norms = np.array([np.linalg.norm(w) for w in weights])
    mins = np.array([w.min() for w in weights])
    beta = 1.0 / (norms - mins)
    k_s = float(np.sum(norms * beta) - len(weights) * s)
    return WeightedConstants(beta=beta, k_s=k_s)


def candidate_direction_weighted(x_abs, w, mu: float, beta: float) -> np.ndarray:
    """Normalised positive part of ``x_abs - mu*beta*w``.

    When nothing survives, the indicator of argmax(x_abs - mu*beta*w) is
    returned (lowest index on ties). For large mu this is an entry with the
    smallest weight rather than the largest |x| entry.
    """
    x_abs = as_vector(x_abs, "x_abs")
    w = as_weight(w, x_abs.size)
    shifted = x_abs - mu * beta * w
    y = np.maximum(shifted, 0.0)
    nrm = np.linalg.norm(y)
    if nrm > 0:
        return y / nrm
    out = np.zeros_like(x_abs)
    out[int(np.argmax(shifted))] = 1.0
    return out


class _WeightedEvaluator(_Packed):
    def __init__(self, g: VectorGroup, weights: WeightGroup, consts: WeightedConstants):
        super().__init__(g, consts.beta)
        self.k_s = consts.k_s
        if self.uniform:
            self.w = np.vstack(weights.weights)
        else:
            self.w = np.concatenate(weights.weights)
        self.w_norm = np.array([np.linalg.norm(w) for w in weights])

    def _shifted(self, mu):
        return self.data - self.spread(mu * self.beta) * self.w

    def _fallback(self, shifted, dead):
        """Indicator positions for vectors whose residual vanished."""
        if self.uniform:
            return np.argmax(shifted[dead], axis=1)
        parts = self.split(shifted)
        return np.array([int(np.argmax(parts[i])) for i in np.flatnonzero(dead)], dtype=np.int64)

    def __call__(self, mu):
        shifted = self._shifted(mu)
        y = np.maximum(shifted, 0.0)
        wy = self.reduce(self.w * y)
        s2 = self.sum_squares(y)
        ws2 = self.reduce(self.w * self.w * (y > 0))
        nrm = np.sqrt(s2)
        dead = nrm == 0
        contrib = np.zeros_like(wy)
        np.divide(wy, nrm, out=contrib, where=~dead)
        if np.any(dead):
            idx = self._fallback(shifted, dead)
            contrib[dead] = self._weight_at(dead, idx)
        value = float(self.beta @ contrib - self.k_s)
        num = np.clip(ws2 * s2 - wy * wy, 0.0, None)
        dterm = np.zeros_like(wy)
        np.divide(num, nrm ** 3, out=dterm, where=~dead)
        deriv = float(-(self.beta ** 2) @ dterm)
        return value, deriv

    def _weight_at(self, dead, idx):
        if self.uniform:
            return self.w[np.flatnonzero(dead), idx]
        ws = self.split(self.w)
        return np.array([ws[i][j] for i, j in zip(np.flatnonzero(dead), idx)])

    def direction_data(self, mu):
        """Unit directions at mu, in the packed layout."""
        shifted = self._shifted(mu)
        y = np.maximum(shifted, 0.0)
        nrm = np.sqrt(self.sum_squares(y))
        dead = nrm == 0
        y /= self.spread(np.where(dead, 1.0, nrm))
        if np.any(dead):
            for i, j in zip(np.flatnonzero(dead), self._fallback(shifted, dead)):
                self.set_indicator(y, i, int(j))
        return y

    def sparsity(self, d):
        """Average weighted sparsity of packed unit nonnegative directions."""
        return float(np.mean((self.w_norm - self.reduce(self.w * d)) * self.beta))


def gw_eval(g: GroupLike, weights, consts: WeightedConstants, mu: float) -> Tuple[float, float]:
    """Value and right derivative of g_w at mu.

    On the support S of y = [|x_i| - mu beta_i w_i]_+ the derivative of
    vector i is ``-beta_i^2 (||w_S||^2 ||y||^2 - (w^T y)^2) / ||y||^3``;
    vectors reduced to a single entry contribute 0.
    """
    if mu < 0:
        raise DomainError(f"mu must be nonnegative, got {mu}")
    g = as_group(g)
    wg = WeightGroup.for_group(weights, g)
    return _WeightedEvaluator(g, wg, consts)(mu)


def _vector_bound(x_abs, w):
    """Smallest gamma = mu*beta after which the direction of one vector is
    frozen at an entry of smallest weight."""
    wmin = w.min()
    cand = np.flatnonzero(w == wmin)
    star = int(cand[np.argmax(x_abs[cand])])
    t = 0.0
    others = np.ones(w.size, dtype=bool)
    others[star] = False
    pos = others & (w > 0)
    if np.any(pos):
        t = max(t, float(np.max(x_abs[pos] / w[pos])))
    heavier = w > wmin
    if np.any(heavier):
        t = max(t, float(np.max((x_abs[heavier] - x_abs[star]) / (w[heavier] - wmin))))
    return t


def mu_tilde_weighted(g: GroupLike, weights, consts: WeightedConstants) -> float:
    """A mu beyond which every vector has weighted sparsity 1, so that
    g_w(mu) = r (s_w - 1)."""
    g = as_group(g)
    wg = WeightGroup.for_group(weights, g)
    return float(
        max(_vector_bound(np.abs(v), w) / b for v, w, b in zip(g, wg, consts.beta))
    )


def project_group_weighted(g: GroupLike, weights, cfg: ProjectionConfig) -> ProjectionResult:
    """Project a group onto average weighted sparsity >= cfg.s.

    ``weights`` is a WeightGroup, a sequence of weight vectors, a 2-D array
    (one row per vector) or a single vector shared by all members.
    """
    g = as_group(g)
    wg = WeightGroup.for_group(weights, g)
    consts = weighted_constants(wg, cfg.s)
    ev = _WeightedEvaluator(g, wg, consts)
    r = g.r
    v0 = ev(0.0)
    if v0[0] <= 0:
        return _unchanged(g, cfg.s, cfg.s - v0[0] / r)

    mt = mu_tilde_weighted(g, wg, consts)
    val_hi = ev(mt)[0]
    # at mt every vector should sit on a smallest weight; an argmax tie at the
    # boundary can leave it on a heavier entry, so move right until it does
    expected = r * (cfg.s - 1.0)
    for _ in range(64):
        if val_hi <= expected + 1e-9 * r:
            break
        mt = 2.0 * mt if mt > 0 else 1.0
        val_hi = ev(mt)[0]

    if cfg.s == 1.0:
        d = ev.direction_data(mt)
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

    sol = _safeguarded_root(ev, r, mt, v0, val_hi, cfg, jumps=None)
    return _finish(g, cfg, sol, ev, r)
