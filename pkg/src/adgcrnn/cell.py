"""Dynamic graph cell: multi-head dynamic graphs, dynamic weights, gated kernel,
diffusion convolution and the graph-convolutional GRU update.

Inputs carry an optional leading batch axis: x is (..., N, C), h is (..., N, q).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import uniform_init
from .tensor import ShapeError

VARIANTS = ("s", "sm", "smd", "full")


@dataclass(frozen=True)
class CellConfig:
    n_nodes: int
    in_channels: int
    hidden: int = 32
    head_dim: int = 16
    heads: int = 3
    K: int = 3

    def __post_init__(self):
        if min(self.n_nodes, self.in_channels, self.hidden, self.head_dim, self.heads, self.K) < 1:
            raise ValueError(f"cell config fields must be positive: {self}")

    @property
    def d_in(self):
        return self.in_channels + self.hidden


@dataclass
class FusedAdjacency:
    graphs: T.Tensor    # (..., m+1, N, N), static graph last
    weights: T.Tensor   # (..., m+1)
    mask: T.Tensor      # (..., N, N)
    fused: T.Tensor     # (..., N, N)
    z: T.Tensor = None


class MaskTape:
    """Records gated-kernel masks on one pass and replays them as constants on later passes.

    Replay turns the hard threshold into a fixed input, which is what a finite
    difference sees, so gradient checks of the full cell stay meaningful.
    """

    def __init__(self):
        self.masks = []
        self.mode = "record"
        self._pos = 0

    def replay(self):
        self.mode = "replay"
        self._pos = 0
        return self

    def __call__(self, mask):
        if self.mode == "record":
            self.masks.append(mask.data.copy())
            return mask
        m = self.masks[self._pos]
        self._pos += 1
        return T.Tensor(m)


def build_input(x_t, h_prev):
    return T.concat([x_t, h_prev], axis=-1)


def diffusion_conv(D, X, K):
    """sum_{k<K} D^k X, by repeated propagation."""
    out = term = X
    for _ in range(K - 1):
        term = T.matmul(D, term)
        out = T.add(out, term)
    return out


def fuse(graphs, weights, mask):
    """(sum_e w_e G_e) * M with graphs stacked on axis -3."""
    w = T.reshape(weights, weights.shape + (1, 1))
    return T.mul(T.tsum(T.mul(w, graphs), axis=-3), mask)


class DynamicGraphCell:
    def __init__(self, cfg, static_adj, variant="full", rng=None, prefix="cell"):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.cfg = cfg
        self.variant = variant
        self.static = np.asarray(static_adj, dtype=np.float64)
        if self.static.shape != (cfg.n_nodes, cfg.n_nodes):
            raise ShapeError(f"static adjacency {self.static.shape} does not match N={cfg.n_nodes}")
        self.mask_tape = None
        d_in, q, d, m = cfg.d_in, cfg.hidden, cfg.head_dim, cfg.heads
        self.params = {}

        def add(name, shape, init="uniform"):
            full = f"{prefix}.{name}"
            p = uniform_init(rng, full, shape) if init == "uniform" else T.Parameter(full, np.zeros(shape))
            self.params[name] = p

        if variant != "s":
            add("psi1", (d_in, d * m))
            add("psi2", (d_in, d * m))
        if variant in ("smd", "full"):
            add("phi3", (d_in, m + 1))
        if variant == "full":
            add("phi4", (d_in, d))
            add("phi5", (d_in, d))
        for gate in ("r", "u", "C"):
            add(f"W_{gate}", (d_in, q))
        for gate in ("r", "u", "c"):
            add(f"b_{gate}", (q,), init="zeros")

    def __getattr__(self, name):
        params = self.__dict__.get("params", {})
        if name in params:
            return params[name]
        raise AttributeError(name)

    def parameters(self):
        return list(self.params.values())

    # -- graph generation

    def gen_dynamic_graphs(self, I):
        """m row-stochastic graphs softmax(relu(P1 P2^T)), one per head: (..., m, N, N)."""
        m, d = self.cfg.heads, self.cfg.head_dim
        lead = I.shape[:-1]

        def heads(W):
            P = T.reshape(T.linear(I, W), lead + (m, d))
            return T.moveaxis(P, -2, -3)

        p1, p2 = heads(self.psi1), heads(self.psi2)
        return T.softmax(T.relu(T.matmul(p1, T.transpose(p2))))

    def dynamic_weights(self, I):
        """softmax over the m+1 graphs of the node-averaged phi3 projection."""
        return T.softmax(T.mean(T.linear(I, self.phi3), axis=-2))

    def gated_kernel(self, I):
        """Binary mask [z > 0.5] with z = sigmoid(phi4(I) phi5(I)^T); backward is straight-through."""
        z = T.sigmoid(T.matmul(T.linear(I, self.phi4), T.transpose(T.linear(I, self.phi5))))
        mask = T.straight_through_step(z, 0.5)
        if self.mask_tape is not None:
            mask = self.mask_tape(mask)
        return mask, z

    def fused_adjacency(self, I, weights=None, mask=None):
        """Full graph fusion for input I. ``weights``/``mask`` override the learned ones."""
        lead = I.shape[:-2]
        n, m = self.cfg.n_nodes, self.cfg.heads
        static = T.Tensor(np.broadcast_to(self.static, lead + (1, n, n)))
        z = None
        if self.variant == "s":
            graphs = static
            w = T.Tensor(np.ones(lead + (1,)))
        else:
            graphs = T.concat([self.gen_dynamic_graphs(I), static], axis=-3)
            if weights is not None:
                w = T.Tensor(np.broadcast_to(weights, lead + (m + 1,)))
            elif self.variant == "sm":
                w = T.Tensor(np.full(lead + (m + 1,), 1.0 / (m + 1)))
            else:
                w = self.dynamic_weights(I)
        if mask is not None:
            M = T.Tensor(np.broadcast_to(mask, lead + (n, n)))
        elif self.variant == "full":
            M, z = self.gated_kernel(I)
        else:
            M = T.Tensor(np.ones(lead + (n, n)))
        if self.variant == "s":
            fused = T.Tensor(np.broadcast_to(self.static, lead + (n, n)))
        else:
            fused = fuse(graphs, w, M)
        return FusedAdjacency(graphs, w, M, fused, z)

    # -- recurrence

    def gru_step(self, x_t, h_prev, weights=None, mask=None):
        x_t, h_prev = T.as_tensor(x_t), T.as_tensor(h_prev)
        if x_t.shape[-1] != self.cfg.in_channels or h_prev.shape[-1] != self.cfg.hidden:
            raise ShapeError(f"gru_step: x {x_t.shape} / h {h_prev.shape} do not match "
                             f"in_channels={self.cfg.in_channels}, hidden={self.cfg.hidden}")
        K = self.cfg.K
        I = build_input(x_t, h_prev)
        D = self.fused_adjacency(I, weights, mask).fused
        conv = diffusion_conv(D, I, K)
        r = T.sigmoid(T.linear(conv, self.W_r, self.b_r))
        u = T.sigmoid(T.linear(conv, self.W_u, self.b_u))
        conv_c = diffusion_conv(D, T.concat([x_t, T.mul(r, h_prev)], axis=-1), K)
        c = T.tanh(T.linear(conv_c, self.W_C, self.b_c))
        return T.add(T.mul(u, h_prev), T.mul(T.sub(1.0, u), c))

    __call__ = gru_step
