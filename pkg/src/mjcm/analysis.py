"""Envelope diagnostics for oscillating populations."""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def swing_envelope(times: np.ndarray, values: np.ndarray, window: float) -> tuple[np.ndarray, np.ndarray]:
    """Peak-to-peak swing ``max - min`` over a sliding window.

    Returns window-centre times and swings. The grid must be uniform.
    """
    times = np.asarray(times, dtype=float)
    dt = times[1] - times[0]
    n = max(2, int(round(window / dt)) + 1)
    if n > len(times):
        raise ValueError("window longer than the time series")
    win = sliding_window_view(np.asarray(values, dtype=float), n)
    centres = times[: len(win)] + 0.5 * (n - 1) * dt
    return centres, win.max(axis=1) - win.min(axis=1)


def collapse_revival(times: np.ndarray, n2: np.ndarray, nbar: float, coupling: float,
                     collapse_below: float = 0.1, revive_above: float = 0.3) -> dict:
    """Collapse and revival of ``<N2>`` for a one-photon coupling.

    The expected revival time is ``2 pi sqrt(nbar) / |gamma|``. The window
    spans two Rabi periods at the mean photon number. The collapse swing is
    the smallest swing before 0.8 of the expected revival time; the revival
    peak is the largest swing between 0.5 and 1.5 of it.
    """
    t_rev = 2 * math.pi * math.sqrt(nbar) / coupling
    window = 2 * math.pi / (coupling * math.sqrt(nbar + 1))
    centres, swing = swing_envelope(times, n2, window)
    early = centres < 0.8 * t_rev
    late = (centres >= 0.5 * t_rev) & (centres <= 1.5 * t_rev)
    if not early.any() or not late.any():
        raise ValueError("time series too short to cover the expected revival")
    collapse = float(swing[early].min())
    k = int(np.argmax(np.where(late, swing, -np.inf)))
    peak_time = float(centres[k])
    rel = abs(peak_time - t_rev) / t_rev
    return {
        "expected_revival_time": t_rev,
        "window": window,
        "initial_swing": float(swing[0]),
        "collapse_swing": collapse,
        "revival_swing": float(swing[k]),
        "revival_peak_time": peak_time,
        "relative_error": rel,
        "collapsed": collapse < collapse_below,
        "revived": float(swing[k]) > revive_above,
        "within_10pct": rel <= 0.10,
    }
