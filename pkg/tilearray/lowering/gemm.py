"""
gemm.py

Lowering of layers to GEMM dimensions, plus the im2col unrolling of a
convolution input and a direct-convolution reference for checking it.

im2col layout: GEMM rows run over (batch, output y, output x), GEMM columns of A
over (channel, filter y, filter x). Tensors are NCHW: input (N, C, Y, X),
filters (K, C, S, R).
"""

from dataclasses import dataclass

import numpy as np

from tilearray.errors import LayerError
from tilearray.lowering.layers import ConvLayer, FcLayer


@dataclass(frozen=True)
class GemmDims:
    """
    C[m x n] += A[m x k] . B[k x n]
    """
    m: int
    n: int
    k: int

    def __post_init__(self):
        for name in ('m', 'n', 'k'):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise LayerError("GEMM dimension %s must be a positive integer, got %r" % (name, value))

    @property
    def macs(self):
        return self.m * self.n * self.k


def conv_to_gemm(layer):
    out_x, out_y = layer.output_dims()
    return GemmDims(m=layer.n * out_x * out_y, n=layer.k, k=layer.c * layer.r * layer.s)


def fc_to_gemm(layer):
    return GemmDims(m=layer.n, n=layer.non, k=layer.nin)


def to_gemm(layer):
    if isinstance(layer, ConvLayer):
        return conv_to_gemm(layer)
    if isinstance(layer, FcLayer):
        return fc_to_gemm(layer)
    raise LayerError("not a layer: %r" % (layer,))


def _padded(x, layer):
    if x.shape != (layer.n, layer.c, layer.y, layer.x):
        raise LayerError("%s: input shape %s, expected %s" % (layer.name, x.shape, (layer.n, layer.c, layer.y, layer.x)))
    p = layer.pad
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def im2col(x, layer):
    """
    Unroll a convolution input into the GEMM A matrix
    :param x: input tensor (N, C, Y, X)
    :param layer: ConvLayer
    :return: A, shape (N*Y'*X', C*S*R)
    """
    out_x, out_y = layer.output_dims()
    windows = np.lib.stride_tricks.sliding_window_view(_padded(x, layer), (layer.s, layer.r), axis=(2, 3))
    windows = windows[:, :, ::layer.stride, ::layer.stride][:, :, :out_y, :out_x]
    # (N, C, Y', X', S, R) -> (N, Y', X', C, S, R)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(layer.n * out_y * out_x, -1)


def filters_to_matrix(w, layer):
    """
    :param w: filters (K, C, S, R)
    :return: B, shape (C*S*R, K)
    """
    if w.shape != (layer.k, layer.c, layer.s, layer.r):
        raise LayerError("%s: filter shape %s, expected %s" % (layer.name, w.shape, (layer.k, layer.c, layer.s, layer.r)))
    return np.ascontiguousarray(w.reshape(layer.k, -1).T)


def gemm_to_output(c, layer):
    """
    Fold the GEMM result (N*Y'*X', K) back to an (N, K, Y', X') tensor
    """
    out_x, out_y = layer.output_dims()
    return np.ascontiguousarray(c.reshape(layer.n, out_y, out_x, layer.k).transpose(0, 3, 1, 2))


def conv_reference(x, w, layer):
    """
    Direct convolution in float64, one filter tap at a time
    :return: output (N, K, Y', X')
    """
    out_x, out_y = layer.output_dims()
    xp = _padded(np.asarray(x, dtype=np.float64), layer)
    w = np.asarray(w, dtype=np.float64)
    out = np.zeros((layer.n, layer.k, out_y, out_x))
    step = layer.stride
    for fy in range(layer.s):
        for fx in range(layer.r):
            patch = xp[:, :, fy:fy + step * out_y:step, fx:fx + step * out_x:step]
            out += np.einsum('ncyx,kc->nkyx', patch, w[:, :, fy, fx])
    return out
