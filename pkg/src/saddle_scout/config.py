"""
Run configuration for Saddle Scout

TOML files read with tomli:

    [run]        problem, mode, output_dir, seed, parallelism, log_level
    [search]     step sizes, tolerances, geometry and landscape options
    [thomson]    n, seed_config, seed_file
    [bec]        beta, m, n, guess
    [toy-sphere] dim, anisotropy, constrained

Any key can be overridden from the environment as
SADDLE_SCOUT_<SECTION>_<KEY> (section upper-cased, '-' replaced by '_');
command-line flags override both. Every validation failure raises
ConfigError naming the offending section.key.
"""

import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import tomli

from saddle_scout.errors import ConfigError

ENV_PREFIX = "SADDLE_SCOUT_"

PROBLEMS = ("thomson", "bec", "toy-sphere")
MODES = ("single-saddle", "downward", "upward")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def _choice(*options):
    def parse(raw: str):
        value = raw.strip().lower()
        if value not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return value
    return parse


def _level(raw: str):
    value = raw.strip().upper()
    if value not in LOG_LEVELS:
        raise ValueError(f"must be one of {', '.join(LOG_LEVELS)}")
    return value


def _number(kind, low=None, high=None, low_open=False):
    def parse(raw: str):
        try:
            value = kind(raw.strip())
        except ValueError:
            raise ValueError(f"expected {kind.__name__}, got {raw!r}")
        if low is not None and (value <= low if low_open else value < low):
            raise ValueError(f"must be {'>' if low_open else '>='} {low}")
        if high is not None and value > high:
            raise ValueError(f"must be <= {high}")
        return value
    return parse


def _boolean(raw: str):
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _text(raw: str):
    if not raw.strip():
        raise ValueError("must not be empty")
    return raw.strip()


def _even(raw: str):
    value = _number(int, 4)(raw)
    if value % 2:
        raise ValueError("must be even")
    return value


POSITIVE = _number(float, 0.0, low_open=True)

# section -> key -> parser
SCHEMA: Dict[str, Dict[str, Callable[[str], Any]]] = {
    "run": {
        "problem": _choice(*PROBLEMS),
        "mode": _choice(*MODES),
        "output_dir": _text,
        "seed": _number(int, 0),
        "parallelism": _number(int, 1, 256),
        "log_level": _level,
    },
    "search": {
        "alpha": POSITIVE,
        "beta": POSITIVE,
        "dimer_l": POSITIVE,
        "grad_tol": POSITIVE,
        "max_iter": _number(int, 1),
        "eps": POSITIVE,
        "k_max": _number(int, 0),
        "depth_cap": _number(int, 1),
        "n_v": _number(int, 1),
        "transport": _choice("parallel", "differentiated", "projection"),
        "retraction": _choice("exponential", "normalization"),
        "hessian": _choice("dimer", "exact"),
        "upward_schedule": _choice("zero-mode", "exhaustive"),
        "upward_signs": _choice("both", "plus"),
        "target_index": _number(int, 0),
        "start": _text,
        "trace_every": _number(int, 0),
        "log_every": _number(int, 1),
        "eig_method": _choice("subspace", "lanczos", "dense"),
        "eig_tol": POSITIVE,
        "zero_tol": POSITIVE,
    },
    "thomson": {
        "n": _number(int, 3, 50),
        "seed_config": _choice("pp", "rd", "rp", "file"),
        "seed_file": _text,
    },
    "bec": {
        "beta": _number(float, 0.0),
        "m": POSITIVE,
        "n": _even,
        "guess": _choice("tf", "gaussian", "vortex"),
    },
    "toy-sphere": {
        "dim": _number(int, 2, 1000),
        "anisotropy": POSITIVE,
        "constrained": _boolean,
    },
}

RUN_DEFAULTS = {
    "mode": "downward",
    "output_dir": "output",
    "seed": 0,
    "parallelism": 1,
    "log_level": "INFO",
}

SEARCH_FIELDS = ("alpha", "beta", "dimer_l", "grad_tol", "max_iter", "n_v", "transport",
                 "retraction", "hessian", "trace_every", "log_every")


@dataclass
class RunConfig:
    problem: str
    mode: str
    output_dir: str
    seed: int
    parallelism: int
    log_level: str
    search: Dict[str, Any] = field(default_factory=dict)
    options: Dict[str, Any] = field(default_factory=dict)
    source: Optional[str] = None

    def search_fields(self) -> Dict[str, Any]:
        """The subset of [search] that maps onto SearchConfig"""
        return {k: v for k, v in self.search.items() if k in SEARCH_FIELDS}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run": {
                "problem": self.problem, "mode": self.mode, "output_dir": self.output_dir,
                "seed": self.seed, "parallelism": self.parallelism, "log_level": self.log_level,
            },
            "search": dict(self.search),
            self.problem: dict(self.options),
        }


def _env_key(section: str, key: str) -> str:
    return f"{ENV_PREFIX}{section.upper().replace('-', '_')}_{key.upper()}"


def _parse_section(section: str, raw: Dict[str, str]) -> Dict[str, Any]:
    schema = SCHEMA[section]
    out = {}
    for key, text in raw.items():
        if key not in schema:
            raise ConfigError(f"{section}.{key}", "unknown key")
        try:
            out[key] = schema[key](text)
        except ValueError as e:
            raise ConfigError(f"{section}.{key}", str(e))
    return out


def _scalar_text(section: str, key: str, value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (str, int, float)):
        return str(value)
    raise ConfigError(f"{section}.{key}", f"expected a scalar, got {type(value).__name__}")


def read_sections(path: Optional[str] = None, text: Optional[str] = None,
                  environ: Optional[Dict[str, str]] = None) -> Dict[str, Dict[str, str]]:
    """Raw string values per section after environment overrides"""
    try:
        if path is not None:
            with open(path, "rb") as f:
                doc = tomli.load(f)
        elif text is not None:
            doc = tomli.loads(text)
        else:
            doc = {}
    except OSError as e:
        raise ConfigError("config", f"cannot read {path}: {e.strerror}")
    except tomli.TOMLDecodeError as e:
        raise ConfigError("config", f"malformed file: {e}")

    sections: Dict[str, Dict[str, str]] = {}
    for name, table in doc.items():
        if name not in SCHEMA:
            raise ConfigError(name, "unknown section")
        if not isinstance(table, dict):
            raise ConfigError(name, "expected a [section] table")
        sections[name] = {key: _scalar_text(name, key, value) for key, value in table.items()}

    env = os.environ if environ is None else environ
    for section, keys in SCHEMA.items():
        for key in keys:
            value = env.get(_env_key(section, key))
            if value is not None:
                sections.setdefault(section, {})[key] = value
    return sections


def load_config(path: Optional[str] = None, text: Optional[str] = None,
                overrides: Optional[Dict[str, Any]] = None,
                environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """Parse, apply overrides and validate a run configuration"""
    sections = read_sections(path, text, environ)
    parsed = {name: _parse_section(name, raw) for name, raw in sections.items()}

    run_section = dict(RUN_DEFAULTS)
    run_section.update(parsed.get("run", {}))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in SCHEMA["run"]:
            raise ConfigError(f"run.{key}", "unknown override")
        try:
            run_section[key] = SCHEMA["run"][key](str(value))
        except ValueError as e:
            raise ConfigError(f"run.{key}", str(e))
    if "problem" not in run_section:
        raise ConfigError("run.problem", "missing required key 'problem'")

    problem = run_section["problem"]
    search = parsed.get("search", {})
    options = parsed.get(problem, {})
    for other in PROBLEMS:
        if other != problem and other in parsed:
            raise ConfigError(other, f"section does not apply to problem '{problem}'")

    if problem == "thomson" and options.get("seed_config") == "file" and "seed_file" not in options:
        raise ConfigError("thomson.seed_file", "required when seed_config = file")
    if search.get("transport") == "differentiated" and search.get("retraction", "exponential") != "normalization" \
            and problem == "thomson":
        raise ConfigError("search.transport", "differentiated transport needs retraction = normalization")

    return RunConfig(
        problem=problem,
        mode=run_section["mode"],
        output_dir=run_section["output_dir"],
        seed=run_section["seed"],
        parallelism=run_section["parallelism"],
        log_level=run_section["log_level"],
        search=search,
        options=options,
        source=path,
    )
