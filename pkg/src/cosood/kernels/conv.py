"""Direct 2-D cross-correlation kernels.

All functions take an already padded input ``xp`` of shape (B, C, Hp, Wp)
and a kernel of shape (O, C, k, k). Padding and cropping live in the caller.
"""
import numpy as np

from .. import _accel
from .._accel import njit


@njit(cache=False)
def _conv_fwd_nb(xp, K, stride, Ho, Wo):
    B, C = xp.shape[0], xp.shape[1]
    O, k = K.shape[0], K.shape[2]
    out = np.zeros((B, O, Ho, Wo), dtype=xp.dtype)
    for b in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    acc = 0.0
                    for c in range(C):
                        for p in range(k):
                            for q in range(k):
                                acc += xp[b, c, i * stride + p, j * stride + q] * K[o, c, p, q]
                    out[b, o, i, j] = acc
    return out


@njit(cache=False)
def _conv_bwd_input_nb(g, K, stride, Hp, Wp):
    B, O, Ho, Wo = g.shape
    C, k = K.shape[1], K.shape[2]
    dxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
    for b in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    gv = g[b, o, i, j]
                    if gv == 0.0:
                        continue
                    for c in range(C):
                        for p in range(k):
                            for q in range(k):
                                dxp[b, c, i * stride + p, j * stride + q] += gv * K[o, c, p, q]
    return dxp


@njit(cache=False)
def _conv_bwd_weight_nb(g, xp, stride, k):
    B, O, Ho, Wo = g.shape
    C = xp.shape[1]
    dK = np.zeros((O, C, k, k), dtype=g.dtype)
    for o in range(O):
        for c in range(C):
            for p in range(k):
                for q in range(k):
                    acc = 0.0
                    for b in range(B):
                        for i in range(Ho):
                            for j in range(Wo):
                                acc += g[b, o, i, j] * xp[b, c, i * stride + p, j * stride + q]
                    dK[o, c, p, q] = acc
    return dK


def _window(xp, p, q, stride, Ho, Wo):
    return xp[:, :, p:p + stride * (Ho - 1) + 1:stride, q:q + stride * (Wo - 1) + 1:stride]


def _conv_fwd_np(xp, K, stride, Ho, Wo):
    B = xp.shape[0]
    O, _, k, _ = K.shape
    out = np.zeros((B, O, Ho, Wo), dtype=xp.dtype)
    for p in range(k):
        for q in range(k):
            out += np.einsum("bchw,oc->bohw", _window(xp, p, q, stride, Ho, Wo), K[:, :, p, q])
    return out


def _conv_bwd_input_np(g, K, stride, Hp, Wp):
    B, _, Ho, Wo = g.shape
    C, k = K.shape[1], K.shape[2]
    dxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
    for p in range(k):
        for q in range(k):
            _window(dxp, p, q, stride, Ho, Wo)[...] += np.einsum("bohw,oc->bchw", g, K[:, :, p, q])
    return dxp


def _conv_bwd_weight_np(g, xp, stride, k):
    _, O, Ho, Wo = g.shape
    C = xp.shape[1]
    dK = np.zeros((O, C, k, k), dtype=g.dtype)
    for p in range(k):
        for q in range(k):
            dK[:, :, p, q] = np.einsum("bohw,bchw->oc", g, _window(xp, p, q, stride, Ho, Wo))
    return dK


def conv2d_forward(xp, K, stride, Ho, Wo):
    xp = np.ascontiguousarray(xp)
    K = np.ascontiguousarray(K, dtype=xp.dtype)
    if _accel.use_numba():
        return _conv_fwd_nb(xp, K, stride, Ho, Wo)
    return _conv_fwd_np(xp, K, stride, Ho, Wo)


def conv2d_backward_input(g, K, stride, Hp, Wp):
    g = np.ascontiguousarray(g)
    K = np.ascontiguousarray(K, dtype=g.dtype)
    if _accel.use_numba():
        return _conv_bwd_input_nb(g, K, stride, Hp, Wp)
    return _conv_bwd_input_np(g, K, stride, Hp, Wp)


def conv2d_backward_weight(g, xp, stride, k):
    g = np.ascontiguousarray(g)
    xp = np.ascontiguousarray(xp, dtype=g.dtype)
    if _accel.use_numba():
        return _conv_bwd_weight_nb(g, xp, stride, k)
    return _conv_bwd_weight_np(g, xp, stride, k)
