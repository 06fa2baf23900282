"""Configuration records and the key=value text format shared by CLI and checkpoints."""
import dataclasses
from dataclasses import dataclass, fields

from .errors import ConfigError, ParseError


@dataclass
class TrainConfig:
    d: int = 128
    K: int = 15
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lr: float = 0.001
    l2: float = 1e-5
    epochs: int = 30
    batch_size: int = 64
    n_neg: int = 4
    ggnn_steps: int = 1
    seed: int = 0
    split_seed: int = 0
    disable_intention: bool = False
    disable_geoconv: bool = False
    enc_hidden: int = 256
    geo_norm: str = "row"
    attn_softmax: bool = False
    share_E_Vo: bool = False
    stop_grad_transfer_target: bool = False
    positive_cap: int = 0
    map_cutoff: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("d", "K", "epochs", "batch_size", "n_neg", "ggnn_steps", "enc_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("lambda1", "lambda2", "lambda3", "l2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.geo_norm not in ("row", "none"):
            raise ConfigError("geo_norm must be 'row' or 'none'")
        if self.positive_cap < 0 or self.map_cutoff < 0:
            raise ConfigError("positive_cap and map_cutoff must be >= 0")

    @property
    def variant(self):
        if self.disable_intention and self.disable_geoconv:
            return "TrainOR-IC"
        if self.disable_intention:
            return "TrainOR-I"
        if self.disable_geoconv:
            return "TrainOR-C"
        return "TrainOR"


@dataclass
class SynthConfig:
    n_users: int = 2000
    n_home_pois: int = 300
    n_out_pois: int = 150
    k_true: int = 5
    concentration: float = 4.0
    n_home_clusters: int = 5
    intention_fidelity: float = 0.85
    home_stickiness: float = 0.85
    home_box: tuple = (39.80, 116.20, 40.05, 116.55)
    out_box: tuple = (31.10, 121.30, 31.35, 121.65)
    home_checkins: tuple = (8, 20)
    out_checkins: tuple = (3, 10)
    seed: int = 0

    def __post_init__(self):
        if self.k_true < 2:
            raise ConfigError("k_true must be >= 2")
        if self.n_home_clusters < 1 or self.n_home_clusters > self.n_home_pois:
            raise ConfigError("need 1 <= n_home_clusters <= n_home_pois")
        if self.k_true > self.n_out_pois:
            raise ConfigError("more planted intentions than out-of-town POIs")
        if self.n_users < 1:
            raise ConfigError("n_users must be >= 1")
        lo, hi = self.home_checkins
        if lo < 5 or hi < lo:
            raise ConfigError("home_checkins range must satisfy 5 <= lo <= hi")
        lo, hi = self.out_checkins
        if lo < 3 or hi < lo:
            raise ConfigError("out_checkins range must satisfy 3 <= lo <= hi")
        if self.concentration <= 0:
            raise ConfigError("concentration must be positive")
        for name in ("intention_fidelity", "home_stickiness"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")


def _coerce(cls, name, raw, current):
    if isinstance(current, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(type(c)(p) for c, p in zip(current, raw.split(",")))
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw.strip()


def parse_kv(text, path=None, comments=True):
    """Parse ``key=value`` lines; ``#`` starts a comment unless ``comments`` is off."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if comments:
            line = line.split("#", 1)[0]
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", lineno, path)
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def read_kv(path):
    with open(path, encoding="utf-8") as fh:
        return parse_kv(fh.read(), path)


def from_kv(cls, kv, base=None, strict=True):
    """Build a config of type ``cls`` from string values layered over ``base``."""
    values = {f.name: getattr(base, f.name) if base is not None else f.default for f in fields(cls)}
    known = {f.name: f.name for f in fields(cls)}
    # dashed CLI spellings (ggnn-steps, k-topics) are accepted too
    known.update({f.name.replace("_", "-"): f.name for f in fields(cls)})
    known.update({"k_topics": "K", "k-topics": "K"})
    for key, raw in kv.items():
        name = known.get(key)
        if name is None:
            if strict:
                raise ConfigError(f"unknown {cls.__name__} key {key!r}")
            continue
        values[name] = _coerce(cls, name, raw, values[name])
    return cls(**values)


def to_kv(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = repr(v)
        elif isinstance(v, tuple):
            v = ",".join(repr(x) for x in v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


def replace(cfg, **changes):
    return dataclasses.replace(cfg, **changes)
