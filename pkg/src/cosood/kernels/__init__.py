"""Loop-heavy numeric kernels, each with a numba path and a numpy path.

The public wrappers dispatch on :func:`cosood._accel.use_numba`; both paths
compute the same quantity and the test suite checks them against each other.
"""
from .conv import conv2d_backward_input, conv2d_backward_weight, conv2d_forward
from .ranking import average_precision_sorted, rank_sum_auroc

__all__ = [
    "conv2d_forward",
    "conv2d_backward_input",
    "conv2d_backward_weight",
    "rank_sum_auroc",
    "average_precision_sorted",
]
