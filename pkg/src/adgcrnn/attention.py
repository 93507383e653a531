"""Multi-resolution fusion and node-wise self-attention over each history step."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Parameter, ShapeError

N_RESOLUTIONS = 3


class ConfigError(ValueError):
    pass


def uniform_init(rng, name, shape):
    bound = 1.0 / np.sqrt(shape[0])
    return Parameter(name, rng.uniform(-bound, bound, size=shape))


def fuse_resolutions(x_current, x_day, x_week):
    """Stack (current, day, week) blocks of shape (..., S, N) into (..., S, N, 3)."""
    blocks = [np.asarray(x.data if isinstance(x, T.Tensor) else x, dtype=np.float64)
              for x in (x_current, x_day, x_week)]
    if len({b.shape for b in blocks}) != 1:
        raise ShapeError(f"resolution blocks disagree in shape: {[b.shape for b in blocks]}")
    return T.Tensor(np.stack(blocks, axis=-1))


class SelfAttention:
    def __init__(self, c_out=3, rng=None, prefix="att"):
        if c_out != N_RESOLUTIONS:
            raise ConfigError(f"self-attention residual needs C_out == {N_RESOLUTIONS}, got {c_out}")
        rng = np.random.default_rng(0) if rng is None else rng
        shape = (N_RESOLUTIONS, c_out)
        self.phi_f = uniform_init(rng, f"{prefix}.phi_f", shape)
        self.phi_g = uniform_init(rng, f"{prefix}.phi_g", shape)
        self.phi_h = uniform_init(rng, f"{prefix}.phi_h", shape)

    def parameters(self):
        return [self.phi_f, self.phi_g, self.phi_h]

    def weights(self, x_hat):
        """Attention matrices softmax(Q K^T), one N x N row-stochastic matrix per step."""
        q = T.linear(x_hat, self.phi_f)
        k = T.linear(x_hat, self.phi_g)
        return T.softmax(T.matmul(q, T.transpose(k)))

    def __call__(self, x_hat):
        v = T.linear(x_hat, self.phi_h)
        return T.add(T.matmul(self.weights(x_hat), v), x_hat)


def self_attention(x_hat, params):
    return params(T.as_tensor(x_hat))
