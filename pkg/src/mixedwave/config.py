"""
Run configuration: a flat ``key = value`` text file, one key per line, ``#``
starts a comment.  Lists are comma separated.  Command-line flags override
file values.
"""

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .errors import InvalidArgument

COMMANDS = ("forward", "spectrum", "observability", "invert",
            "table1", "table2", "table3", "time-sweep")

# key -> help text, in file order
KEY_HELP = {
    "command": "one of " + ", ".join(COMMANDS),
    "n": "interior node count, or a comma separated list (sweeps and tables)",
    "t_final": "observation / integration time T",
    "dt": "time step; 'auto' means h for inversion and min(h, T/3000) for observability",
    "potential": "smooth-sine | discontinuous-step | constant | table",
    "potential_value": "value c of the constant potential",
    "potential_table": "x,value CSV file for the tabulated potential",
    "source": "f-discontinuous | g-smooth | table | none",
    "source_table": "x,value CSV file for the tabulated source",
    "intensity": "constant time intensity lambda (nonzero)",
    "initial": "forward initial data: zero | mode | random",
    "initial_mode": "eigenmode index used when initial = mode",
    "delta": "noise level, or a comma separated list (table2)",
    "seeds": "number of noise seeds averaged per noise level (table2)",
    "seed": "base seed of the PCG64 generator",
    "fine_factor": "data mesh has fine_factor * (N + 1) - 1 nodes (at least 4)",
    "t_list": "observation times of the time sweep",
    "strategy": "observability search: eigenmodes | random | rayleigh",
    "trials": "random pairs or random data tried by the observability search",
    "first_term": "also report the first-term-only quotient of the top mode (true/false)",
    "gtol": "gradient-norm stopping tolerance of the reconstruction",
    "jobs": "worker processes for independent table rows",
    "out": "output directory",
}


@dataclass(frozen=True)
class RunConfig:
    command: str = "invert"
    n: Optional[Tuple[int, ...]] = None
    t_final: float = 3.0
    dt: Optional[float] = None
    potential: str = "smooth-sine"
    potential_value: float = 0.0
    potential_table: str = ""
    source: str = "f-discontinuous"
    source_table: str = ""
    intensity: float = 1.0
    initial: str = "zero"
    initial_mode: int = 1
    delta: Tuple[float, ...] = (0.0,)
    seeds: int = 5
    seed: int = 0
    fine_factor: int = 4
    t_list: Tuple[float, ...] = (2.0, 2.25, 2.5, 3.0)
    strategy: str = "rayleigh"
    trials: int = 200
    first_term: bool = False
    gtol: float = 1e-6
    jobs: int = 1
    out: str = "."

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def validate(cfg: RunConfig) -> None:
    if cfg.command not in COMMANDS:
        raise InvalidArgument(f"unknown command {cfg.command!r}; choose from {', '.join(COMMANDS)}")
    if cfg.n is not None and (not cfg.n or any(k < 1 for k in cfg.n)):
        raise InvalidArgument("n must be positive")
    if not (cfg.t_final > 0) or any(not t > 0 for t in cfg.t_list):
        raise InvalidArgument("observation times must be positive")
    if cfg.dt is not None and not cfg.dt > 0:
        raise InvalidArgument("dt must be positive")
    if any(d < 0 for d in cfg.delta) or not cfg.delta:
        raise InvalidArgument("delta must be nonnegative")
    if cfg.intensity == 0 or not math.isfinite(cfg.intensity):
        raise InvalidArgument("intensity must be finite and nonzero")
    if cfg.fine_factor < 4:
        raise InvalidArgument("fine_factor must be at least 4")
    if cfg.seeds < 1 or cfg.trials < 1 or cfg.jobs < 1:
        raise InvalidArgument("seeds, trials and jobs must be positive")
    if not (0 <= cfg.seed < 2 ** 64):
        raise InvalidArgument("seed must be an unsigned 64-bit integer")
    if cfg.initial not in ("zero", "mode", "random"):
        raise InvalidArgument(f"unknown initial data {cfg.initial!r}")
    if cfg.strategy not in ("eigenmodes", "random", "rayleigh"):
        raise InvalidArgument(f"unknown strategy {cfg.strategy!r}")
    if not cfg.gtol > 0:
        raise InvalidArgument("gtol must be positive")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


_PARSERS = {
    "n": lambda s: None if s.strip().lower() in ("", "auto") else _int_list(s),
    "dt": lambda s: None if s.strip().lower() in ("", "auto") else float(s),
    "delta": _float_list,
    "t_list": _float_list,
    "first_term": _parse_bool,
}


def parse_value(key: str, text: str):
    if key not in KEY_HELP:
        raise InvalidArgument(f"unknown configuration key {key!r}")
    if key in _PARSERS:
        return _PARSERS[key](text)
    ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[key]
    if ftype in ("int", int):
        return int(text)
    if ftype in ("float", float):
        return float(text)
    return text.strip()


def parse_items(items, base: Optional[RunConfig] = None) -> RunConfig:
    """Apply (key, text) pairs on top of ``base``."""
    values = {}
    for key, text in items:
        try:
            values[key] = parse_value(key, text)
        except ValueError as exc:
            raise InvalidArgument(f"bad value for {key}: {text!r} ({exc})") from exc
    return dataclasses.replace(base or RunConfig(), **values)


def parse_text(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    items = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        items.append((key.strip(), value.strip()))
    return parse_items(items, base)


def load(path, base: Optional[RunConfig] = None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read(), base)


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize(cfg: RunConfig) -> str:
    lines = []
    for key in KEY_HELP:
        lines.append(f"{key} = {_format(getattr(cfg, key))}")
    return "\n".join(lines) + "\n"
