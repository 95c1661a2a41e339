"""Run configuration: flat `key = value` files with `#` comments.

Every schedule and grid default is overridable; validation errors name the
offending field so the CLI can exit with a useful message.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .engine import Schedule
from .errors import InvalidParameterError

__all__ = ["RunConfig", "parse_config", "parse_config_text"]

_PROBLEMS = ("wce", "side-channel")


@dataclass
class RunConfig:
    """Everything a reproducible experiment run needs."""

    problem: str = "wce"
    k: float = 0.2
    sigma_x0: float = 5.0
    lam: float = 0.0  # config key: lambda (side channel only)
    target_b_snr: Optional[float] = None
    b_snr_tol: float = 0.1

    # grids
    x0_n: Optional[int] = None  # default depends on problem
    truncation: float = 5.0
    w_n: int = 101
    y2d_n: int = 201

    # schedule
    t_init: Optional[float] = None
    alpha: float = 0.95
    t_min: Optional[float] = None
    perturb_eps: float = 1e-2
    merge_tol: float = 1e-3
    inner_tol: float = 1e-7
    param_tol: float = 1e-5
    min_inner_iters: int = 8
    max_inner_iters: int = 200
    max_models: int = 64
    seed: int = 0

    symmetry: bool = False
    out_dir: str = "run-output"

    def resolved_x0_n(self) -> int:
        if self.x0_n is not None:
            return self.x0_n
        return 1001 if self.problem == "wce" else 501

    def schedule(self) -> Schedule:
        return Schedule(
            t_init=self.t_init,
            alpha=self.alpha,
            t_min=self.t_min,
            perturb_eps=self.perturb_eps,
            merge_tol=self.merge_tol,
            inner_tol=self.inner_tol,
            param_tol=self.param_tol,
            min_inner_iters=self.min_inner_iters,
            max_inner_iters=self.max_inner_iters,
            max_models=self.max_models,
            rng_seed=self.seed,
        )

    def validate(self) -> None:
        if self.problem not in _PROBLEMS:
            raise InvalidParameterError(f"problem must be one of {_PROBLEMS}, got {self.problem!r}")
        if not self.k > 0:
            raise InvalidParameterError(f"k must be positive, got {self.k}")
        if not self.sigma_x0 > 0:
            raise InvalidParameterError(f"sigma_x0 must be positive, got {self.sigma_x0}")
        if self.lam < 0:
            raise InvalidParameterError(f"lambda must be nonnegative, got {self.lam}")
        if self.target_b_snr is not None and self.target_b_snr < 0:
            raise InvalidParameterError(f"target_b_snr must be nonnegative, got {self.target_b_snr}")
        if not self.b_snr_tol > 0:
            raise InvalidParameterError(f"b_snr_tol must be positive, got {self.b_snr_tol}")
        if self.resolved_x0_n() < 2:
            raise InvalidParameterError(f"x0_n must be >= 2, got {self.x0_n}")
        if not self.truncation > 0:
            raise InvalidParameterError(f"truncation must be positive, got {self.truncation}")
        if self.w_n < 2:
            raise InvalidParameterError(f"w_n must be >= 2, got {self.w_n}")
        if self.y2d_n < 3:
            raise InvalidParameterError(f"y2d_n must be >= 3, got {self.y2d_n}")
        self.schedule().validate()  # raises with the schedule field named


_ALIASES = {"lambda": "lam", "rng_seed": "seed"}
_BOOL_TRUE = ("1", "true", "yes", "on")
_BOOL_FALSE = ("0", "false", "no", "off")


def _convert(name: str, kind, raw: str):
    if kind is bool:
        low = raw.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise InvalidParameterError(f"{name} must be a boolean, got {raw!r}")
    if raw.lower() in ("auto", "none"):
        return None
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise InvalidParameterError(f"{name} must be a {kind.__name__}, got {raw!r}") from None
    return raw


def parse_config_text(text: str) -> RunConfig:
    """Parse `key = value` lines into a validated RunConfig."""
    types = {}
    for f in fields(RunConfig):
        t = f.type
        if t in ("Optional[float]", "float | None"):
            types[f.name] = float
        elif t in ("Optional[int]", "int | None"):
            types[f.name] = int
        elif t == "float":
            types[f.name] = float
        elif t == "int":
            types[f.name] = int
        elif t == "bool":
            types[f.name] = bool
        else:
            types[f.name] = str

    cfg = RunConfig()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise InvalidParameterError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        name = _ALIASES.get(key, key)
        if name not in types:
            raise InvalidParameterError(f"line {lineno}: unknown configuration key {key!r}")
        setattr(cfg, name, _convert(key, types[name], raw))
    cfg.validate()
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise InvalidParameterError(f"config file not found: {path}")
    return parse_config_text(path.read_text())
