"""Physical and numerical parameters shared by every module."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path


class ConfigError(ValueError):
    """Raised when a configuration violates a parameter constraint.

    ``problems`` maps field names to human-readable messages.
    """

    def __init__(self, problems: dict[str, str]):
        self.problems = dict(problems)
        detail = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid configuration ({detail})")


@dataclass(frozen=True)
class BubbleConfig:
    R_s: float = 1.0
    R_out: float = 2.0
    nu: float = 1.0
    mu: float = 1.0
    lam: float = 0.16
    K: int = 32
    N_r: int = 128
    dt: float = 0.05
    T: float = 30.0

    def __post_init__(self):
        problems = {}
        if not (0.0 < self.R_s < self.R_out):
            problems["R_s"] = f"need 0 < R_s < R_out, got R_s={self.R_s}, R_out={self.R_out}"
        for name in ("nu", "mu", "lam", "dt", "T"):
            if not getattr(self, name) > 0.0:
                problems[name] = f"must be positive, got {getattr(self, name)}"
        if int(self.K) != self.K or self.K < 2:
            problems["K"] = f"must be an integer >= 2, got {self.K}"
        if int(self.N_r) != self.N_r or self.N_r < 16:
            problems["N_r"] = f"must be an integer >= 16, got {self.N_r}"
        if problems:
            raise ConfigError(problems)

    def with_(self, **changes) -> "BubbleConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


def fingerprint(values: dict) -> str:
    """Stable short hash of a flat dict of parameters."""
    blob = json.dumps(values, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_field_names() -> list[str]:
    return [f.name for f in fields(BubbleConfig)]


_ALIASES = {"lambda": "lam"}
_INT_FIELDS = {"K", "N_r"}


def parse_config_text(text: str) -> BubbleConfig:
    """Build a config from ``key = value`` lines; omitted keys keep their defaults.

    ``lambda`` is accepted as the name of the decay rate. Comments start with ``#`` or ``;``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[bubble]\n" + text)
    except configparser.Error as exc:
        raise ConfigError({"file": str(exc).splitlines()[0]}) from exc
    known = set(config_field_names())
    values, problems = {}, {}
    for key, raw in parser["bubble"].items():
        name = _ALIASES.get(key, key)
        if name not in known:
            problems[key] = "unknown parameter"
            continue
        try:
            values[name] = int(raw) if name in _INT_FIELDS else float(raw)
        except ValueError:
            problems[key] = f"not a number: {raw!r}"
    try:
        cfg = BubbleConfig(**values)
    except ConfigError as exc:
        problems.update(exc.problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: Path | str | None) -> BubbleConfig:
    if path is None:
        return BubbleConfig()
    return parse_config_text(Path(path).read_text())


def config_text(cfg: BubbleConfig) -> str:
    """Inverse of :func:`parse_config_text`."""
    names = {v: k for k, v in _ALIASES.items()}
    return "".join(f"{names.get(k, k)} = {v!r}\n" for k, v in cfg.as_dict().items())
