"""Shared numpy kernels.

These are the single source of truth for the nonlinear primitives used by
the encoder, the transport solver, and the reverse-mode tape: both the plain
numpy execution path and the taped path call exactly these functions, so the
two paths produce bitwise-identical forward values.
"""

from __future__ import annotations

import numpy as np


def relu(x):
    return np.maximum(x, 0.0)


def logsumexp(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_norm(x, gamma, beta, eps=1e-5):
    # normalizes the last axis
    mu = np.mean(x, axis=-1, keepdims=True)
    var = np.mean((x - mu) ** 2, axis=-1, keepdims=True)
    xhat = (x - mu) / np.sqrt(var + eps)
    return gamma * xhat + beta


class NumpyOps:
    """Plain-array backend for code written against the ops protocol.

    The taped backend (:class:`hyperlora.tape.TapeOps`) exposes the same
    names; forward code that takes an ``ops`` argument runs unchanged on
    ndarrays or tape variables.
    """

    relu = staticmethod(relu)
    softmax = staticmethod(softmax)
    logsumexp = staticmethod(logsumexp)
    layer_norm = staticmethod(layer_norm)
    exp = staticmethod(np.exp)

    @staticmethod
    def concat(parts, axis=0):
        return np.concatenate(parts, axis=axis)

    @staticmethod
    def value_of(x):
        return x


numpy_ops = NumpyOps()
