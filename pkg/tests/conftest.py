"""Shared oracles: finite-difference gradients and direct likelihood forms."""
import numpy as np
import pytest

from fcrn import autodiff as ad
from fcrn.data import assign_interval


def finite_diff(loss_fn, variables, step=1e-5):
    """Central finite-difference gradients of a scalar loss_fn() per Var."""
    grads = []
    for v in variables:
        g = np.zeros_like(v.value)
        flat = v.value.reshape(-1)
        gflat = g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = float(loss_fn().value)
            flat[k] = orig - step
            down = float(loss_fn().value)
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric, floor=1e-3):
    """Max |a - n| / max(|n|, floor) over all parameter entries."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def collect_grads(loss_fn, variables):
    loss = loss_fn()
    ad.zero_grads(variables)
    ad.backward(loss)
    return [np.zeros_like(v.value) if v.grad is None else v.grad.copy()
            for v in variables]


def direct_nll_cs(hazards, subjects, grid):
    """The cause-specific log-likelihood evaluated straight from its sum form.

    hazards: (n, L, M+1) head probabilities; returns the negative
    log-likelihood summed over subjects and intervals.
    """
    nll = 0.0
    for i, s in enumerate(subjects):
        l_star = assign_interval(s.time, grid)
        for t in range(1, l_star + 1):
            lam_all = hazards[i, t - 1, 1:].sum()
            if t == l_star and s.cause >= 1:
                nll -= np.log(hazards[i, t - 1, s.cause])
            else:
                nll -= np.log(1.0 - lam_all)
    return nll


def direct_nll_sd(hazards, subjects, grid, target_cause, g):
    """The weighted sub-distribution log-likelihood from its sum form."""
    L = grid.n_intervals
    nll = 0.0
    for i, s in enumerate(subjects):
        l_star = assign_interval(s.time, grid)
        for t in range(1, L):
            at_risk = 1.0 if t <= l_star else 0.0
            past_comp = 1.0 if (l_star <= t - 1 and s.cause not in (0, target_cause)) else 0.0
            if at_risk == 0.0 and past_comp == 0.0:
                continue
            w = g.at(t - 1) / g.at(min(l_star, t) - 1) * (at_risk + past_comp)
            y = 1.0 if (t == l_star and s.cause == target_cause) else 0.0
            xi = hazards[i, t - 1]
            nll -= w * (y * np.log(xi) + (1.0 - y) * np.log(1.0 - xi))
    return nll
