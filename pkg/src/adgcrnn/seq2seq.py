"""Attention front-end + dynamic-graph GRU encoder/decoder with scheduled sampling,
and the binary checkpoint format."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .attention import SelfAttention, fuse_resolutions, uniform_init
from .cell import VARIANTS, CellConfig, DynamicGraphCell
from .tensor import ContractError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    S: int = 12
    T: int = 12
    c_out: int = 3
    hidden: int = 32
    head_dim: int = 16
    heads: int = 3
    K: int = 3
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def encoder_cell(self):
        return CellConfig(self.n_nodes, self.c_out, self.hidden, self.head_dim, self.heads, self.K)

    @property
    def decoder_cell(self):
        return CellConfig(self.n_nodes, 1, self.hidden, self.head_dim, self.heads, self.K)


def eps_at(tau, i):
    """Inverse-sigmoid teacher-forcing probability tau / (tau + exp(i / tau))."""
    if i < 0:
        raise ValueError("iteration index must be >= 0")
    x = i / tau
    if x > 700:
        return 0.0
    return tau / (tau + math.exp(x))


@dataclass
class SamplingSchedule:
    tau: float = 2000.0
    i: int = 0

    def current(self):
        return eps_at(self.tau, self.i)

    def step(self):
        self.i += 1


def teacher_flips(T_steps, eps, seed):
    """Which decoder steps 1..T-1 take ground truth; step 0 always takes the GO value."""
    u = np.random.default_rng(seed).random(max(T_steps - 1, 0))
    return np.concatenate([[False], u < eps])


class ADGCRNN:
    def __init__(self, cfg, static_adj, seed=0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.attention = SelfAttention(cfg.c_out, rng, prefix="att")
        self.encoder = DynamicGraphCell(cfg.encoder_cell, static_adj, cfg.variant, rng, prefix="enc")
        self.decoder = DynamicGraphCell(cfg.decoder_cell, static_adj, cfg.variant, rng, prefix="dec")
        self.w_out = uniform_init(rng, "out.W", (cfg.hidden, 1))
        self.trace = None

    def parameters(self):
        return self.attention.parameters() + self.encoder.parameters() + \
            self.decoder.parameters() + [self.w_out]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def state(self):
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, state):
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        extra = sorted(set(state) - set(params))
        if missing or extra:
            raise ValueError(f"parameter mismatch: missing {missing}, unexpected {extra}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()

    def set_mask_tape(self, tape):
        self.encoder.mask_tape = tape
        self.decoder.mask_tape = tape

    # -- pieces

    def encode(self, x_sa):
        """Run the encoder over the S history steps from H=0; returns the final hidden state."""
        x_sa = T.as_tensor(x_sa)
        lead = x_sa.shape[:-3]
        h = T.Tensor(np.zeros(lead + (self.cfg.n_nodes, self.cfg.hidden)))
        for s in range(x_sa.shape[-3]):
            h = self.encoder(T.take(x_sa, (Ellipsis, s, slice(None), slice(None))), h)
        return h

    def project(self, h):
        return T.take(T.matmul(h, self.w_out), (Ellipsis, 0))

    def decode(self, h, go, teacher=None, eps=0.0, seed=0):
        """Roll the decoder for T steps. go: (..., N) GO value; teacher: (..., T, N) or None."""
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"eps must lie in [0, 1], got {eps}")
        if eps > 0 and teacher is None:
            raise ContractError("scheduled sampling with eps > 0 needs ground-truth targets")
        flips = teacher_flips(self.cfg.T, eps, seed)
        if self.trace is not None:
            self.trace["decoder_h0"] = h
            self.trace["teacher_flips"] = flips
            self.trace["decoder_inputs"] = []
        x = T.as_tensor(go)
        preds = []
        for tau in range(self.cfg.T):
            if tau > 0:
                x = T.Tensor(np.asarray(teacher)[..., tau - 1, :]) if flips[tau] else preds[-1]
            if self.trace is not None:
                self.trace["decoder_inputs"].append(x)
            h = self.decoder(T.reshape(x, x.shape + (1,)), h)
            preds.append(self.project(h))
        return T.stack(preds, axis=-2)

    def forward(self, x_current, x_day, x_week, teacher=None, eps=0.0, seed=0):
        """Normalized-scale forecast of shape (..., T, N)."""
        x_current = np.asarray(x_current, dtype=np.float64)
        if x_current.shape[-2:] != (self.cfg.S, self.cfg.n_nodes):
            raise ShapeError(f"input block {x_current.shape} does not end in (S, N) = "
                             f"({self.cfg.S}, {self.cfg.n_nodes})")
        x_hat = fuse_resolutions(x_current, x_day, x_week)
        x_sa = self.attention(x_hat)
        h = self.encode(x_sa)
        if self.trace is not None:
            self.trace["encoder_out"] = h
        return self.decode(h, x_current[..., -1, :], teacher, eps, seed)

    def forward_sample(self, sample, eps=0.0, seed=0):
        teacher = sample.y if eps > 0 else None
        return self.forward(sample.x_current, sample.x_day, sample.x_week, teacher, eps, seed)

    __call__ = forward


# ------------------------------------------------------------------ checkpoints
#
# Layout, all integers little-endian:
#   b"ADGC" | u32 version | u32 meta_len | meta (UTF-8 JSON, sorted keys) | u32 count
#   count x ( u16 name_len | name | u8 ndim | ndim x u32 dim | prod(dim) x f64 )
# meta holds {"model": ModelConfig fields, ...caller extras}.

MAGIC = b"ADGC"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model, extra=None):
    meta = {"model": asdict(model.cfg)}
    meta.update(extra or {})
    blob = json.dumps(meta, sort_keys=True).encode()
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<II", FORMAT_VERSION, len(blob)) + blob)
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode()
            fh.write(struct.pack("<H", len(name)) + name + struct.pack("<B", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return (meta dict, {name: array})."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, n = struct.unpack_from("<II", buf, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 12
    meta = json.loads(buf[off:off + n].decode())
    off += n
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    tensors = {}
    for _ in range(count):
        (ln,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + ln].decode()
        off += ln
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(buf, "<f8", size, off).reshape(shape).astype(np.float64)
        off += 8 * size
    return meta, tensors


def load_checkpoint(path, static_adj):
    meta, tensors = read_checkpoint(path)
    model = ADGCRNN(ModelConfig(**meta["model"]), static_adj)
    model.load_state(tensors)
    return model, meta
