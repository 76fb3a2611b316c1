"""Brier score, IPCW-censored Brier score, and Integrated Brier Score.

Competing-risks CIF predictions are scored with the Graf-style IPCW
decomposition: still-at-risk subjects are weighted by 1/G(t), observed
events by 1/G(T-1), and censored-before-t subjects drop out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import G_FLOOR, assign_interval


@dataclass
class ScoreCurve:
    """BS(t) over evaluation times plus its trapezoidal time average."""

    times: np.ndarray
    values: np.ndarray
    ibs: float


def brier(t, preds, subjects, cause):
    """Uncensored Brier score at time t for one cause's CIF predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    label = np.array([1.0 if (s.time <= t and s.cause == cause) else 0.0
                      for s in subjects])
    return float(np.mean((label - preds) ** 2))


def brier_ipcw(t, preds, subjects, cause, g, grid):
    """IPCW Brier score at time t.

    Subjects still at risk past t contribute (0 - F)^2 / G(t); subjects
    with an observed event by t contribute (1{R=m} - F)^2 / G(T-1);
    subjects censored by t contribute nothing. Normalized by N.
    """
    preds = np.asarray(preds, dtype=np.float64)
    l_t = assign_interval(t, grid) if t > 0 else 0
    total = 0.0
    for s, f in zip(subjects, preds):
        if s.time > t:
            total += f * f / max(g.at(l_t), G_FLOOR)
        elif s.cause != 0:
            label = 1.0 if s.cause == cause else 0.0
            total += (label - f) ** 2 / max(g.at(assign_interval(s.time, grid) - 1),
                                            G_FLOOR)
    return total / len(subjects)


def ibs(times, values):
    """Trapezoidal average of a score curve over its time range."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(times) < 2:
        raise ValueError("IBS needs at least 2 evaluation times")
    if times[-1] <= times[0]:
        raise ValueError("t_max must exceed t_0")
    return float(np.trapezoid(values, times) / (times[-1] - times[0]))


def score_cif(F, subjects, cause, grid, g=None, t0=0.0, t_max=None):
    """Score one cause's CIF matrix (n, L+1, column t = endpoint t) as a curve.

    Uses the IPCW form when a censoring survival g is given, the plain
    Brier score otherwise. Evaluation times are the interval endpoints
    intersected with [t0, t_max].
    """
    if t_max is None:
        t_max = grid.max_time
    cols = [l for l in range(grid.n_intervals + 1)
            if t0 - 1e-9 <= grid.cuts[l] <= t_max + 1e-9]
    times, values = [], []
    for l in cols:
        t = float(grid.cuts[l])
        preds = F[:, l]
        if g is None:
            bs = brier(t, preds, subjects, cause)
        else:
            bs = brier_ipcw(t, preds, subjects, cause, g, grid)
        times.append(t)
        values.append(bs)
    return ScoreCurve(times=np.asarray(times), values=np.asarray(values),
                      ibs=ibs(times, values))
