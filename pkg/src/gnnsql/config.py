"""Run configuration: model dims, optimizer settings and ablation flags.

Config files are flat ``key = value`` lines; command-line flags override
file values. Every ablation row is reachable by flags alone.
"""

from __future__ import annotations

from dataclasses import dataclass, fields


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    word_dim: int = 32
    node_dim: int = 32
    enc_hidden: int = 64
    dec_hidden: int = 64
    att_dim: int = 32
    ff_hidden: int = 64
    gnn_steps: int = 2
    beam_size: int = 10
    max_decode_steps: int = 200
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    grad_accum: int = 1
    eval_every: int = 5
    train_em_stop: float = 0.0  # 0 disables early stopping on train exact match
    seed: int = 0
    no_gnn: bool = False
    no_self_attend: bool = False
    only_self_attend: bool = False
    no_relevance: bool = False
    oracle_relevance: bool = False
    filter_beam: bool = False

    def validate(self) -> "RunConfig":
        if self.no_gnn and self.only_self_attend:
            raise ConfigError("no_gnn and only_self_attend are mutually exclusive")
        if self.no_relevance and self.oracle_relevance:
            raise ConfigError("no_relevance and oracle_relevance are mutually exclusive")
        for name in ("word_dim", "node_dim", "enc_hidden", "dec_hidden", "att_dim",
                     "ff_hidden", "beam_size", "grad_accum"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.gnn_steps < 0 or self.epochs < 0:
            raise ConfigError("gnn_steps and epochs must be nonnegative")
        return self

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _coerce(name: str, kind, raw: str):
    raw = raw.strip()
    if kind is bool:
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"config key '{name}': cannot read boolean from {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"config key '{name}': cannot read {kind.__name__} "
                          f"from {raw!r}") from None


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig()
    kinds = {f.name: f.type for f in fields(RunConfig)}
    types = {"int": int, "float": float, "bool": bool}
    if path:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in kinds:
                    raise ConfigError(f"{path}:{lineno}: unknown config key '{key}'")
                setattr(cfg, key, _coerce(key, types[kinds[key]], raw))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in kinds:
            raise ConfigError(f"unknown config key '{key}'")
        setattr(cfg, key, value)
    return cfg.validate()


def config_from_dict(doc: dict) -> RunConfig:
    cfg = RunConfig()
    for key, value in doc.items():
        if not hasattr(cfg, key):
            raise ConfigError(f"unknown config key '{key}'")
        setattr(cfg, key, value)
    return cfg.validate()
