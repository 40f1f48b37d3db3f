"""
Experiment configuration.

Layers, lowest precedence first: built-in defaults, the config file, the --quick
preset, explicit command-line flags. Config files are `key = value` lines with `#`
comments, keys spelled like the flags (n-proposals, runs, p-values, ...).
"""
import dataclasses
import io
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv.parser import parse_stream

from utils import helpers
from utils.errors import InvalidConfig, ParseError

logger = logging.getLogger(__name__)

CONFIG_ENV = "PMIS_CONFIG"
WORKERS_ENV = "PMIS_WORKERS"

QUICK_PRESET = {"n_proposals": 1024, "n_runs": 200}


def _default_workers() -> int:
    raw = os.getenv(WORKERS_ENV, "")
    try:
        return max(1, int(raw)) if raw else max(1, os.cpu_count() or 1)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return max(1, os.cpu_count() or 1)


@dataclass(frozen=True)
class ExperimentConfig:
    n_proposals: int = 4096
    sigma: float = 5.0
    mean_box: Tuple[float, float] = (-20.0, 20.0)
    p_values: Optional[Tuple[int, ...]] = None  # None -> helpers.default_p_values(n_proposals)
    n_runs: int = 500
    seed: int = 20160101
    dim: int = 2
    output_path: str = "results.csv"
    plot_path: Optional[str] = None
    fixed_means: bool = False
    workers: int = field(default_factory=_default_workers)
    threshold: float = 0.01
    reps: int = 2000
    cross_check: bool = True

    @property
    def p_sweep(self) -> Tuple[int, ...]:
        if self.p_values is None:
            return tuple(helpers.default_p_values(self.n_proposals))
        return tuple(self.p_values)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


# flag / file key -> (field name, converter)
KEYS: Dict[str, Tuple[str, Any]] = {
    "n-proposals": ("n_proposals", int),
    "sigma": ("sigma", float),
    "mean-box": ("mean_box", helpers.parse_float_pair),
    "p-values": ("p_values", lambda v: tuple(helpers.parse_int_list(v))),
    "runs": ("n_runs", int),
    "seed": ("seed", int),
    "dim": ("dim", int),
    "out": ("output_path", str),
    "plot": ("plot_path", str),
    "fixed-means": ("fixed_means", helpers.parse_bool),
    "workers": ("workers", int),
    "threshold": ("threshold", float),
    "reps": ("reps", int),
    "cross-check": ("cross_check", helpers.parse_bool),
    "quick": ("quick", helpers.parse_bool),
}


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Raise InvalidConfig naming the first violated invariant."""
    if cfg.n_proposals < 1:
        raise InvalidConfig(f"n_proposals must be >= 1, got {cfg.n_proposals}")
    if cfg.n_runs < 1:
        raise InvalidConfig(f"n_runs must be >= 1, got {cfg.n_runs}")
    if not cfg.sigma > 0:
        raise InvalidConfig(f"sigma must be > 0, got {cfg.sigma}")
    if cfg.dim < 1:
        raise InvalidConfig(f"dim must be >= 1, got {cfg.dim}")
    lo, hi = cfg.mean_box
    if not lo < hi:
        raise InvalidConfig(f"mean_box must satisfy low < high, got {cfg.mean_box}")
    if not cfg.p_sweep:
        raise InvalidConfig("p_values is empty")
    for p in cfg.p_sweep:
        if not 1 <= p <= cfg.n_proposals:
            raise InvalidConfig(f"every p in p_values must satisfy 1 <= p <= N={cfg.n_proposals}, got {p}")
    if cfg.workers < 1:
        raise InvalidConfig(f"workers must be >= 1, got {cfg.workers}")
    if not cfg.threshold > 0:
        raise InvalidConfig(f"threshold must be > 0, got {cfg.threshold}")
    if cfg.reps < 2:
        raise InvalidConfig(f"reps must be >= 2, got {cfg.reps}")
    return cfg


def _convert(key: str, raw, line: int = None, flag: str = None):
    if key not in KEYS:
        raise ParseError(f"unknown key {key!r}", line=line, flag=flag)
    name, conv = KEYS[key]
    if raw is None:
        raise ParseError(f"missing value for {key!r}", line=line, flag=flag)
    try:
        return name, conv(raw)
    except (TypeError, ValueError) as e:
        raise ParseError(f"bad value {raw!r} for {key!r}: {e}", line=line, flag=flag) from e


def read_config_file(path: str) -> Dict[str, Any]:
    """Parse a key = value file into {field name: value}."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    values = {}
    for binding in parse_stream(io.StringIO(text)):
        # the parser's mark sits before any blank lines leading into the statement
        raw = binding.original.string
        line = binding.original.line + raw[:len(raw) - len(raw.lstrip())].count("\n")
        if binding.error:
            raise ParseError(f"cannot parse {binding.original.string.strip()!r}", line=line)
        if binding.key is None:
            continue  # blank line or comment
        name, value = _convert(binding.key, binding.value, line=line)
        values[name] = value
    logger.debug("read %d settings from %s", len(values), path)
    return values


def load_config(path: Optional[str] = None, flags: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """
    Merge defaults <- file <- quick preset <- flags and validate.

    `flags` maps flag names (as in KEYS) to raw strings or already-typed values;
    None entries are ignored so argparse namespaces can be passed through directly.
    When `path` is None the PMIS_CONFIG environment variable is consulted.
    """
    path = path or os.getenv(CONFIG_ENV) or None
    merged: Dict[str, Any] = {}
    if path:
        merged.update(read_config_file(path))

    explicit: Dict[str, Any] = {}
    for key, raw in (flags or {}).items():
        if raw is None:
            continue
        if isinstance(raw, str):
            name, value = _convert(key, raw, flag=key)
        else:
            if key not in KEYS:
                raise ParseError(f"unknown key {key!r}", flag=key)
            name, value = KEYS[key][0], raw
        explicit[name] = value

    quick = explicit.pop("quick", merged.pop("quick", False))
    if quick:
        merged.update(QUICK_PRESET)
    merged.update(explicit)

    if "p_values" in merged and merged["p_values"] is not None:
        merged["p_values"] = tuple(int(p) for p in merged["p_values"])
    cfg = ExperimentConfig(**merged)
    logger.debug("loaded config %s", cfg)
    return validate_config(cfg)
