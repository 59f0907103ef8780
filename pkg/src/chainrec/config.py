"""Run configuration: a flat key=value file where every key is also a
command-line flag (flag wins). The resolved config is written into the
output directory before any run so results are reproducible from the run
directory alone.
"""

import os
from dataclasses import dataclass, fields

DEFAULT_OUT_ENV = "CHAINREC_OUT"


class ConfigError(ValueError):
    """Bad key, bad value, or an unusable combination."""


@dataclass
class RunConfig:
    # data / schema
    data: str = ""
    attributes: str = ""
    relations: tuple = ("view", "cart", "buy")
    target: str = "buy"
    order: tuple = ()          # canonical chain order; empty = aux order + target
    ratio: float = 0.75
    seed: int = 0
    out: str = ""

    # model
    dim: int = 64
    layers: int = 2
    mu_scale: float = 1.0
    leaky_slope: float = 0.01
    glo_norm: str = "row"

    # optimization
    lr: float = 1e-3
    batch: int = 128
    epochs: int = 200
    patience: int = 20
    l2: float = 1e-4
    mu1: float = 0.1
    mu2: float = 0.5
    tau: float = 0.1
    neg_cap: int = 100

    # evaluation
    eval_every: int = 1
    ks: tuple = (5, 10, 20, 40)
    csv: bool = False

    # feature flags
    raw_local_adj: bool = False
    separate_base: bool = False
    chain_score: str = "laststep"   # 'laststep' | 'aggregated'
    per_user_weights: bool = False
    chain_order: tuple = ()         # study override; may place target mid-chain

    # runtime
    workers: int = 1
    dtype: str = "float64"      # float32 roughly halves step time on big graphs
    checkpoint: str = ""
    resume: str = ""

    # synthetic-data generator
    synth_users: int = 500
    synth_items: int = 500
    synth_clusters: int = 50
    synth_views: int = 10
    synth_carts: int = 7
    synth_buys: int = 6
    cascade: float = 1.0

    def validate(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.layers < 1:
            raise ConfigError(f"layers must be >= 1, got {self.layers}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1, got {self.batch}")
        if self.tau <= 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not 0 < self.ratio < 1:
            raise ConfigError(f"ratio must be in (0, 1), got {self.ratio}")
        if self.chain_score not in ("laststep", "aggregated"):
            raise ConfigError(f"chain_score must be laststep|aggregated, got {self.chain_score!r}")
        if self.glo_norm not in ("row", "sym"):
            raise ConfigError(f"glo_norm must be row|sym, got {self.glo_norm!r}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64|float32, got {self.dtype!r}")
        if not 0 < self.leaky_slope < 1:
            raise ConfigError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.target not in self.relations:
            raise ConfigError(f"target {self.target!r} not in relations {self.relations}")
        return self

    @property
    def schema_order(self) -> tuple:
        if self.order:
            return tuple(self.order)
        return tuple(r for r in self.relations if r != self.target) + (self.target,)

    def out_dir(self) -> str:
        if self.out:
            return self.out
        root = os.environ.get(DEFAULT_OUT_ENV, "runs")
        return os.path.join(root, f"run-seed{self.seed}")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TUPLE_INT = {"ks"}
_TUPLE_STR = {"relations", "order", "chain_order"}
_BOOLS = {"csv", "raw_local_adj", "separate_base", "per_user_weights"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _TUPLE_STR:
        return tuple(x.strip() for x in raw.split(",") if x.strip())
    if key in _TUPLE_INT:
        return tuple(int(x) for x in raw.split(",") if x.strip())
    if key in _BOOLS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    kind = _FIELD_TYPES[key]
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """Parse ``key = value`` lines; '#' starts a comment."""
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{line_no}: expected 'key = value', got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{origin}:{line_no}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), origin=str(path))


def make_config(file_path=None, overrides=None, base_values=None) -> RunConfig:
    """Defaults <- base_values <- config file <- explicit overrides (flags)."""
    values = dict(base_values or {})
    if file_path:
        values.update(load_config_file(file_path))
    for key, raw in (overrides or {}).items():
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
    return RunConfig(**values).validate()


def save_config(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(RunConfig):
            value = getattr(cfg, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(x) for x in value)
            fh.write(f"{f.name} = {value}\n")
