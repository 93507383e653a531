"""``key = value`` run configuration with a fixed, validated schema.

Blank lines and ``#`` comments are ignored. Every key must appear in ``SCHEMA``;
anything else is rejected before any compute starts.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cell import VARIANTS
from .data import ResolutionConfig
from .seq2seq import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key: (parser, default, help)
SCHEMA = {
    # paths and run identity
    "bundle": (str, "", "dataset bundle directory written by ingest/synth"),
    "out_dir": (str, "runs", "where every output file goes"),
    "seed": (int, 0, "seed for initialization, shuffling, sampling and synthesis"),
    "variant": (str, "full", "ablation variant: s | sm | smd | full"),
    # resolutions
    "steps_per_day": (int, 288, "p, samples per day"),
    "history": (int, 12, "S, input steps"),
    "horizon": (int, 12, "T, forecast steps"),
    # model
    "c_out": (int, 3, "attention output channels (must be 3)"),
    "hidden": (int, 32, "q, GRU hidden size"),
    "head_dim": (int, 16, "D_out, dynamic-graph projection size per head"),
    "heads": (int, 3, "m, number of dynamic graphs"),
    "diffusion_k": (int, 3, "K, diffusion terms"),
    # training
    "epochs": (int, 100, "maximum epochs"),
    "batch_size": (int, 16, "windows per minibatch"),
    "learning_rate": (float, 1e-3, "Adam step size"),
    "clip_norm": (float, 5.0, "global gradient-norm clip"),
    "tau": (float, 2000.0, "scheduled-sampling decay constant"),
    "patience": (int, 15, "early-stopping patience in epochs"),
    # synthesis
    "n_nodes": (int, 8, "synthetic graph size"),
    "graph": (str, "path", "synthetic graph: path | ring | <edge-list file>"),
    "length": (int, 0, "synthetic series length; 0 means 6 weeks"),
    "alpha": (float, 0.5, "graph-coupling strength"),
    "noise": (float, 0.05, "innovation noise std"),
    "level": (float, 10.0, "base flow level"),
    "amplitude": (float, 3.0, "daily swing amplitude"),
    "regime_switch": (_bool, False, "alternate the coupling graph every half day"),
}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        values = self.__dict__.get("values", {})
        if key in values:
            return values[key]
        raise AttributeError(key)

    @classmethod
    def defaults(cls):
        return cls({k: v[1] for k, v in SCHEMA.items()})

    @classmethod
    def parse(cls, text, source="<config>"):
        values = {k: v[1] for k, v in SCHEMA.items()}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            try:
                values[key] = SCHEMA[key][0](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
        cfg = cls(values)
        cfg.validate(source)
        return cfg

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.parse(fh.read(), path)

    def override(self, **kw):
        vals = dict(self.values)
        vals.update({k: v for k, v in kw.items() if v is not None})
        cfg = RunConfig(vals)
        cfg.validate()
        return cfg

    def validate(self, source="<config>"):
        v = self.values
        if v["variant"] not in VARIANTS:
            raise ConfigError(f"{source}: variant must be one of {VARIANTS}, got {v['variant']!r}")
        if v["c_out"] != 3:
            raise ConfigError(f"{source}: c_out must equal the 3 input resolutions, got {v['c_out']}")
        for key in ("steps_per_day", "history", "horizon", "hidden", "head_dim", "heads",
                    "diffusion_k", "batch_size", "patience", "n_nodes"):
            if v[key] < 1:
                raise ConfigError(f"{source}: {key} must be >= 1, got {v[key]}")
        for key in ("epochs", "length"):
            if v[key] < 0:
                raise ConfigError(f"{source}: {key} must be >= 0, got {v[key]}")
        if not 0.0 <= v["alpha"] <= 1.0:
            raise ConfigError(f"{source}: alpha must lie in [0, 1], got {v['alpha']}")
        if v["learning_rate"] <= 0 or v["clip_norm"] <= 0 or v["tau"] <= 0:
            raise ConfigError(f"{source}: learning_rate, clip_norm and tau must be positive")
        if v["history"] > v["steps_per_day"]:
            raise ConfigError(f"{source}: history exceeds steps_per_day (day block would see the future)")

    def resolution(self):
        return ResolutionConfig(self.steps_per_day, self.history, self.horizon)

    def model(self, n_nodes):
        return ModelConfig(n_nodes, self.history, self.horizon, self.c_out, self.hidden,
                           self.head_dim, self.heads, self.diffusion_k, self.variant)

    def train(self):
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.clip_norm,
                           self.tau, self.seed, self.variant, self.patience)

    def dump(self):
        return "".join(f"{k} = {self.values[k]}\n" for k in SCHEMA)
