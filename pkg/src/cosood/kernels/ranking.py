"""Sorted-scan kernels behind AUROC and average precision.

Ties are resolved as whole groups: every score in a tie group receives the
group's average rank (AUROC), and precision is only evaluated at the end of
a tie group (AUPR), which is the same as thresholding at each distinct value.
"""
import numpy as np
from scipy.stats import rankdata

from .. import _accel
from .._accel import njit


@njit(cache=False)
def _rank_sum_nb(sorted_scores, sorted_pos):
    # sorted_scores ascending; returns sum of average ranks over positives
    n = sorted_scores.shape[0]
    total = 0.0
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and sorted_scores[stop] == sorted_scores[start]:
            stop += 1
        avg_rank = 0.5 * (start + 1 + stop)
        npos = 0
        for t in range(start, stop):
            if sorted_pos[t]:
                npos += 1
        total += npos * avg_rank
        start = stop
    return total


@njit(cache=False)
def _ap_nb(sorted_scores, sorted_pos, n_pos):
    # sorted_scores descending
    n = sorted_scores.shape[0]
    tp = 0
    fp = 0
    ap = 0.0
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and sorted_scores[stop] == sorted_scores[start]:
            stop += 1
        dtp = 0
        for t in range(start, stop):
            if sorted_pos[t]:
                dtp += 1
        tp += dtp
        fp += (stop - start) - dtp
        if dtp > 0:
            ap += dtp * (tp / (tp + fp))
        start = stop
    return ap / n_pos


def rank_sum_auroc(pos, neg):
    """Mann-Whitney AUROC of positives over negatives with ties counted 1/2."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    n1, n2 = pos.size, neg.size
    scores = np.concatenate([pos, neg])
    is_pos = np.zeros(scores.size, dtype=np.bool_)
    is_pos[:n1] = True
    if _accel.use_numba():
        order = np.argsort(scores, kind="mergesort")
        r = _rank_sum_nb(scores[order], is_pos[order])
    else:
        r = float(rankdata(scores, method="average")[:n1].sum())
    return (r - n1 * (n1 + 1) / 2.0) / (n1 * n2)


def average_precision_sorted(pos, neg):
    """Step-wise area under precision-recall with ``pos`` as the positive class."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    scores = np.concatenate([pos, neg])
    is_pos = np.zeros(scores.size, dtype=np.bool_)
    is_pos[:pos.size] = True
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], is_pos[order]
    if _accel.use_numba():
        return float(_ap_nb(s, y, pos.size))
    # last index of each tie group
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    precision = tp / (ends + 1.0)
    # divide once at the end so a perfect ranking gives exactly 1.0
    return float(np.sum(np.diff(np.r_[0, tp]) * precision) / pos.size)
