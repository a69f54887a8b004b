"""Compiled scenery sums over local-time histograms.

Given the distinct local times v of a path and the number m_v of sites
carrying each, X = sum_v v * S_v where S_v is a sum of m_v i.i.d. scenery
values.  For the Laplace and Gaussian laws S_v has a closed-form law (also
under exponential tilting), so a path costs O(#distinct values) draws.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True, error_model="numpy")

LAW_GENERIC, LAW_LAPLACE, LAW_GAUSS = 0, 1, 2


@njit(**_JIT)
def _site_value(rng, alpha, c):
    g = rng.gamma(1.0 / alpha, 1.0)
    v = (g / c) ** (1.0 / alpha)
    return -v if rng.random() < 0.5 else v


@njit(**_JIT)
def naive_sums(rng, vals, mults, offsets, law, alpha, c):
    """One scenery draw per path; returns X for every path."""
    reps = offsets.shape[0] - 1
    out = np.zeros(reps)
    for r in range(reps):
        x = 0.0
        if law == LAW_GAUSS:
            q = 0.0
            for j in range(offsets[r], offsets[r + 1]):
                q += vals[j] * vals[j] * mults[j]
            x = rng.normal(0.0, math.sqrt(q / (2.0 * c)))
        elif law == LAW_LAPLACE:
            for j in range(offsets[r], offsets[r + 1]):
                m = float(mults[j])
                s = rng.gamma(m, 1.0 / c) - rng.gamma(m, 1.0 / c)
                x += vals[j] * s
        else:
            for j in range(offsets[r], offsets[r + 1]):
                s = 0.0
                for _ in range(mults[j]):
                    s += _site_value(rng, alpha, c)
                x += vals[j] * s
        out[r] = x
    return out


@njit(**_JIT)
def tilted_inner(rng, vals, mults, offsets, lam, logz, law, c, inner, target):
    """Inner importance sampling of P(X >= target | local times).

    Site x is tilted by theta = lam[r] * l(x); ``logz[r]`` is
    sum_x Lambda(lam[r] * l(x)).  Returns per path the log of the mean of
    LR * 1{X >= target} and the log of the mean of LR over ``inner`` draws,
    where LR = exp(-lam X + logz).
    """
    reps = offsets.shape[0] - 1
    log_hit = np.full(reps, -np.inf)
    log_all = np.full(reps, -np.inf)
    lr = np.empty(inner)
    hit = np.empty(inner, np.bool_)
    for r in range(reps):
        lm = lam[r]
        for k in range(inner):
            x = 0.0
            for j in range(offsets[r], offsets[r + 1]):
                v = vals[j]
                m = float(mults[j])
                th = lm * v
                if law == LAW_LAPLACE:
                    s = rng.gamma(m, 1.0 / (c - th)) - rng.gamma(m, 1.0 / (c + th))
                else:
                    s = rng.normal(m * th / (2.0 * c), math.sqrt(m / (2.0 * c)))
                x += v * s
            lr[k] = -lm * x + logz[r]
            hit[k] = x >= target
        mx = -np.inf
        mh = -np.inf
        for k in range(inner):
            if lr[k] > mx:
                mx = lr[k]
            if hit[k] and lr[k] > mh:
                mh = lr[k]
        sa = 0.0
        sh = 0.0
        for k in range(inner):
            sa += math.exp(lr[k] - mx)
            if hit[k]:
                sh += math.exp(lr[k] - mh)
        log_all[r] = mx + math.log(sa / inner)
        if mh > -np.inf:
            log_hit[r] = mh + math.log(sh / inner)
    return log_hit, log_all
