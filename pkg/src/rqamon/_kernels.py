"""Compiled inner loops for sliding-window recurrence quantification.

The kernel walks every window of a day-long signal and accumulates the five
measures from maximal runs of recurrent pairs.  Distances are only ever
needed for sample pairs closer than the window width, so the day is reduced
to a band of boolean diagonals (lag k, start index i) instead of a full
n-by-n recurrence plot; every window then reads slices of that band.

Counting conventions (shared with the pure-Python reference used in tests):

* the main diagonal (self pairs) is excluded everywhere;
* diagonal runs are scanned in the upper triangle only and doubled where a
  both-triangle point count is needed (the matrix is symmetric);
* vertical runs are scanned per column with the main-diagonal cell removed,
  which splits each column into two independent spans;
* a run "touches a border" when it reaches the edge of its diagonal band or
  vertical span; such runs are truncations of longer structures, so they
  count toward the determinism and laminarity numerators whatever their
  length, but are left out of the diagonal length distribution that feeds
  the entropy measure;
* interior runs shorter than ``lmin`` count toward nothing.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["day_rqa"]


@njit(cache=True, nogil=True)
def day_rqa(values, window, step, epsilon, lmin):  # pragma: no cover - compiled
    n = values.shape[0]
    w = window
    m = (n - w) // step + 1
    out = np.zeros((m, 5), np.float64)

    # band[k, i] == 1 when |values[i + k] - values[i]| <= epsilon, k = 1..w-1
    band = np.zeros((w, n), np.uint8)
    for k in range(1, w):
        for i in range(n - k):
            d = values[i + k] - values[i]
            if d < 0.0:
                d = -d
            if d <= epsilon:
                band[k, i] = 1

    hist = np.zeros(w + 1, np.int64)

    for row in range(m):
        a = row * step
        upper = 0
        det_pts = 0
        n_lines = 0

        # -- diagonal runs, upper triangle ------------------------------
        for k in range(1, w):
            length = w - k
            run = 0
            for t in range(length):
                cell = band[k, a + t]
                if cell == 1:
                    run += 1
                    upper += 1
                if cell == 0 or t == length - 1:
                    if run > 0:
                        end = t - 1 if cell == 0 else t
                        start = end - run + 1
                        border = start == 0 or end == length - 1
                        if run >= lmin or border:
                            det_pts += run
                        if run >= lmin and not border:
                            hist[run] += 1
                            n_lines += 1
                        run = 0

        # -- vertical runs, per column, diagonal cell removed -----------
        lam_pts = 0
        tt_sum = 0
        tt_cnt = 0
        for j in range(w):
            for half in range(2):
                lo = 0 if half == 0 else j + 1
                hi = j - 1 if half == 0 else w - 1
                if hi < lo:
                    continue
                run = 0
                for i in range(lo, hi + 1):
                    if i < j:
                        cell = band[j - i, a + i]
                    else:
                        cell = band[i - j, a + j]
                    if cell == 1:
                        run += 1
                    if cell == 0 or i == hi:
                        if run > 0:
                            end = i - 1 if cell == 0 else i
                            start = end - run + 1
                            border = start == lo or end == hi
                            if run >= lmin or border:
                                lam_pts += run
                            if run >= lmin:
                                tt_sum += run
                                tt_cnt += 1
                            run = 0

        n_pts = 2 * upper
        rec = 100.0 * n_pts / (w * (w - 1))
        det = 100.0 * (2 * det_pts) / n_pts if n_pts > 0 else 0.0
        lam = 100.0 * lam_pts / n_pts if n_pts > 0 else 0.0

        ent = 0.0
        if n_lines > 0:
            for length in range(lmin, w + 1):
                c = hist[length]
                if c > 0:
                    p = c / n_lines
                    ent -= p * math.log2(p)
        for length in range(lmin, w + 1):
            hist[length] = 0

        tt = tt_sum / tt_cnt if tt_cnt > 0 else 0.0

        out[row, 0] = rec
        out[row, 1] = det
        out[row, 2] = ent
        out[row, 3] = lam
        out[row, 4] = tt

    return out


def warm_up() -> None:
    """Force compilation of the kernel so later calls are not charged for it."""
    day_rqa(np.array([0.0, 1.0, 0.0, 1.0]), 3, 1, 0.5, 2)
