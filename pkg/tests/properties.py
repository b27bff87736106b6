"""Randomised property checks shared by the unit and acceptance suites.

Each check draws instances until ``cases`` of them have been verified (draws
that hit a kink, a discontinuity or a degenerate input are skipped and do not
count), asserts the property on every verified case, and returns the number
of cases checked.
"""

import numpy as np

from gsproj import ProjectionConfig, VectorGroup, average_sparsity, project_group, spar
from gsproj.gsp import g_eval, group_constants, mu_tilde
from gsproj.sparsity import soft_threshold, spar_weighted
from gsproj.wgsp import WeightGroup, gw_eval, mu_tilde_weighted, weighted_constants

FD_RTOL = 1e-5


def random_group(rng, r=None, n=None, ragged=False):
    r = r or int(rng.integers(1, 8))
    if ragged:
        lengths = rng.integers(2, 30, r)
    else:
        lengths = np.full(r, n or int(rng.integers(2, 30)))
    scale = rng.uniform(0.1, 10)
    return VectorGroup(tuple(rng.standard_normal(int(k)) * scale for k in lengths))


def random_weighted(rng, r=None, n=None):
    r = r or int(rng.integers(1, 6))
    n = n or int(rng.integers(2, 20))
    X = rng.standard_normal((r, n)) * rng.uniform(0.1, 10)
    W = rng.uniform(0.1, 3.0, (r, n)) * (rng.uniform(size=(r, n)) > 0.2)
    for w in W:
        if np.ptp(w) == 0:
            w[0] += 1.0
    return X, W


def _draws(cases, limit=20):
    """Yield attempt indices, failing if too many draws are skipped."""
    for i in range(limit * cases):
        yield i
    raise AssertionError(f"fewer than {cases} usable cases in {limit * cases} draws")


def check_feasibility(rng, cases=1000):
    done = 0
    for _ in _draws(cases):
        g = random_group(rng, ragged=bool(rng.integers(2)))
        s = float(rng.uniform(0, 1))
        cfg = ProjectionConfig(s)
        res = project_group(g, cfg)
        if res.discontinuous:
            continue
        if res.feasible_at_zero:
            assert res.achieved_sparsity >= s
        else:
            assert abs(res.achieved_sparsity - s) <= cfg.eps, (res.achieved_sparsity, s)
        assert abs(average_sparsity(res.projected) - res.achieved_sparsity) <= 1e-9
        done += 1
        if done == cases:
            return done


def check_idempotence(rng, cases=1000):
    done = 0
    for _ in _draws(cases):
        g = random_group(rng, ragged=bool(rng.integers(2)))
        cfg = ProjectionConfig(float(rng.uniform(0, 1)))
        res = project_group(g, cfg)
        if res.discontinuous:
            continue
        again = project_group(VectorGroup(res.projected), cfg)
        for a, b in zip(again.projected, res.projected):
            np.testing.assert_allclose(a, b, atol=1e-6 * np.linalg.norm(b))
        done += 1
        if done == cases:
            return done


def check_bracket_invariant(rng, cases=1000):
    """g > 0 at the left end (or it is 0), g <= 0 at the right end, and the
    bracket only ever shrinks."""
    done = 0
    for _ in _draws(cases):
        g = random_group(rng)
        s = float(rng.uniform(0.2, 0.99))
        res = project_group(g, ProjectionConfig(s))
        if res.feasible_at_zero:
            continue
        consts = group_constants(g, s)
        prev = None
        for lo, hi, _ in res.history:
            assert lo <= hi
            assert lo == 0.0 or g_eval(g, consts, lo)[0] > 0
            assert g_eval(g, consts, hi)[0] <= 0
            if prev is not None:
                assert prev[0] <= lo and hi <= prev[1]
            prev = (lo, hi)
        done += 1
        if done == cases:
            return done


def check_g_monotone(rng, cases=1000, points=60):
    done = 0
    for _ in _draws(cases):
        g = random_group(rng)
        consts = group_constants(g, 0.5)
        mt = mu_tilde(g, consts)
        vals = np.array([g_eval(g, consts, mu)[0] for mu in np.linspace(0, 1.2 * mt, points)])
        assert np.all(np.diff(vals) <= 1e-10 * g.r)
        assert abs(vals[-1] - g.r * (0.5 - 1.0)) <= 1e-9 * g.r
        done += 1
        if done == cases:
            return done


def _same_support(a, b):
    return all(np.array_equal(u, v) for u, v in zip(a, b))


def _central_difference(f, mu, h):
    """Fourth-order central difference; exact for quartics, so truncation
    stays far below FD_RTOL where f is smooth on [mu - 2h, mu + 2h]."""
    return (-f(mu + 2 * h) + 8 * f(mu + h) - 8 * f(mu - h) + f(mu - 2 * h)) / (12 * h)


def check_g_derivative(rng, cases=1000, rtol=FD_RTOL):
    """Central differences of g against the analytic derivative.

    The step is tied to mu~; the absolute slack bounds cancellation in the
    differences of O(r) function values. Support is fixed on the stencil since
    entries only ever leave it as mu grows.
    """
    done = 0
    for _ in _draws(cases):
        g = random_group(rng)
        consts = group_constants(g, 0.5)
        mt = mu_tilde(g, consts)
        mu = float(rng.uniform(0.01, 0.99) * mt)
        h = 1e-5 * mt
        sup = [[np.abs(x) > m * b for x, b in zip(g, consts.beta)] for m in (mu - 2 * h, mu + 2 * h)]
        if not _same_support(*sup):
            continue
        _, d0 = g_eval(g, consts, mu)
        fd = _central_difference(lambda m: g_eval(g, consts, m)[0], mu, h)
        assert abs(fd - d0) <= rtol * abs(d0) + 1e-13 * g.r / h, (fd, d0)
        done += 1
        if done == cases:
            return done


def check_gw_derivative(rng, cases=1000, rtol=FD_RTOL):
    done = 0
    for _ in _draws(cases):
        X, W = random_weighted(rng)
        g = VectorGroup.from_matrix(X)
        wg = WeightGroup.for_group(W, g)
        consts = weighted_constants(wg, 0.5)
        mt = mu_tilde_weighted(g, wg, consts)
        if mt == 0:
            continue
        mu = float(rng.uniform(0.01, 0.99) * mt)
        h = 1e-5 * mt
        sup = [
            [np.abs(x) - m * b * w > 0 for x, w, b in zip(g, wg, consts.beta)]
            for m in (mu - 2 * h, mu + 2 * h)
        ]
        # the indicator fallback is piecewise constant, not covered by the formula
        if not _same_support(*sup) or not all(np.any(a) for a in sup[0]):
            continue
        _, d0 = gw_eval(g, wg, consts, mu)
        fd = _central_difference(lambda m: gw_eval(g, wg, consts, m)[0], mu, h)
        assert abs(fd - d0) <= rtol * abs(d0) + 1e-13 * g.r * np.max(W) / h, (fd, d0)
        done += 1
        if done == cases:
            return done


def check_lemma_one(rng, cases=1000):
    """spar(st(x, l)) is strictly increasing in l below the second largest
    magnitude, for vectors whose largest magnitude is unique."""
    done = 0
    for _ in _draws(cases):
        n = int(rng.integers(3, 25))
        x = rng.standard_normal(n) * rng.uniform(0.1, 10)
        mags = np.sort(np.abs(x))[::-1]
        if mags[0] - mags[1] < 1e-9:
            continue
        l1, l2 = np.sort(rng.uniform(0, mags[1], 2))
        if l2 - l1 < 1e-9 * mags[1]:
            continue
        assert spar(soft_threshold(x, l1)) < spar(soft_threshold(x, l2))
        done += 1
        if done == cases:
            return done


def check_lemma_two(rng, cases=1000):
    """spar_w([|x| - l w]_+) is nondecreasing in l while nonzero."""
    done = 0
    for _ in _draws(cases):
        X, W = random_weighted(rng, r=1)
        x, w = X[0], W[0]
        top = np.max(np.abs(x) / np.maximum(w, 1e-12))
        l1, l2 = np.sort(rng.uniform(0, top, 2))
        y1 = np.maximum(np.abs(x) - l1 * w, 0)
        y2 = np.maximum(np.abs(x) - l2 * w, 0)
        if not (np.any(y1) and np.any(y2)):
            continue
        assert spar_weighted(y2, w) >= spar_weighted(y1, w) - 1e-12
        done += 1
        if done == cases:
            return done


ALL_CHECKS = {
    "feasibility": check_feasibility,
    "idempotence": check_idempotence,
    "bracket invariant": check_bracket_invariant,
    "g monotone": check_g_monotone,
    "g' finite difference": check_g_derivative,
    "g_w' finite difference": check_gw_derivative,
    "Lemma 1": check_lemma_one,
    "Lemma 2": check_lemma_two,
}
