"""Experiment configuration: YAML files validated with pydantic.

Unknown keys are rejected everywhere. Every precondition of the target
module is checked here so that a bad grid fails before any work starts.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from pathlib import Path
from typing import Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .ensemble import XiSpec
from .linalg import ContractViolation

ExperimentKind = Literal["law", "process", "certify", "anticonc", "walk", "potential"]
WORKERS_ENV = "CIRCLAB_WORKERS"


class ConfigError(ValueError):
    """Config failed to parse or validate; the message names the field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SeedRange(_Strict):
    base: int = Field(ge=0)
    count: int = Field(ge=1)


class XiEntry(_Strict):
    kind: str
    a: Union[str, float, None] = None
    b: Union[str, float, None] = None
    prob: float | None = None
    q: float | None = None

    def to_spec(self) -> XiSpec:
        kw = {k: v for k, v in self.model_dump().items() if v is not None}
        return XiSpec.from_config(kw)


def _parse_complex(v) -> complex:
    if isinstance(v, (int, float, complex)):
        return complex(v)
    return complex(str(v).replace(" ", ""))


class Grid(_Strict):
    n: list[int] | None = None
    d: list[float] | None = None
    p: list[float] | None = None
    eps: list[float] | None = None
    z: list[Union[str, float]] | None = None
    xi: list[Union[str, XiEntry]] | None = None
    C_sched: list[float] = [1.0]
    c_star: list[float] = [0.25]
    C_prime: list[float] = [8.0]
    B_big_O: list[float] = [4.0]
    r_offset: list[int] = [3]
    T: list[int] | None = None
    q: list[float] | None = None
    adversary: list[Literal["always-up", "random", "stay"]] = ["always-up"]

    @field_validator("*")
    @classmethod
    def _nonempty(cls, v, info):
        if v is not None and len(v) == 0:
            raise ValueError(f"grid.{info.field_name} is empty")
        return v


_REQUIRED = {
    "law": ("n", "d|p", "eps", "z", "xi"),
    "potential": ("n", "d|p", "eps", "z", "xi"),
    "process": ("n", "d|p", "eps", "z", "xi"),
    "certify": ("n", "d|p", "xi"),
    "anticonc": ("n", "d|p", "eps", "z", "xi"),
    "walk": ("T", "q"),
}


class ExperimentConfig(_Strict):
    experiment: ExperimentKind
    grid: Grid
    seeds: Union[list[int], SeedRange]
    output: str
    workers: int | None = Field(default=None, ge=1)
    strict_p: bool = True
    trials: int = Field(default=200, ge=1)
    ginibre_seeds: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check(self):
        g = self.grid
        for req in _REQUIRED[self.experiment]:
            names = req.split("|")
            if all(getattr(g, k) is None for k in names):
                raise ValueError(f"grid.{req.replace('|', ' or grid.')} is required for "
                                 f"experiment {self.experiment!r}")
        if g.d is not None and g.p is not None:
            raise ValueError("give grid.d or grid.p, not both")
        if isinstance(self.seeds, list) and not self.seeds:
            raise ValueError("seeds is empty")
        if isinstance(self.seeds, list) and any(s < 0 for s in self.seeds):
            raise ValueError("seeds must be nonnegative")
        for task in self.tasks():
            _validate_task(self, task)
        return self

    def seed_list(self) -> list[int]:
        if isinstance(self.seeds, SeedRange):
            return list(range(self.seeds.base, self.seeds.base + self.seeds.count))
        return list(self.seeds)

    def param_tuples(self) -> list[dict]:
        g = self.grid.model_dump(exclude_none=True)
        # Only the axes this experiment reads enter the product.
        used = {"walk": ("T", "q", "adversary"),
                "certify": ("n", "d", "p", "xi", "c_star", "C_prime", "B_big_O"),
                "anticonc": ("n", "d", "p", "eps", "z", "xi", "c_star", "C_sched", "r_offset"),
                "process": ("n", "d", "p", "eps", "z", "xi", "C_sched"),
                "law": ("n", "d", "p", "eps", "z", "xi"),
                "potential": ("n", "d", "p", "eps", "z", "xi")}[self.experiment]
        keys = [k for k in used if k in g]
        out = []
        for combo in itertools.product(*(g[k] for k in keys)):
            params = dict(zip(keys, combo))
            if "z" in params:
                params["z"] = str(_parse_complex(params["z"]))
            out.append(params)
        return out

    def tasks(self) -> list[dict]:
        return [{"params": p, "seed": s} for p in self.param_tuples() for s in self.seed_list()]

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.model_dump(mode="json")).encode()).hexdigest()

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return self.workers
        env = os.environ.get(WORKERS_ENV)
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from exc
            if value < 1:
                raise ConfigError(f"{WORKERS_ENV} must be at least 1")
            return value
        return 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def task_stream_seed(params: dict, seed: int) -> int:
    """64-bit stream id: first 8 bytes of sha256 over the canonical (params, seed) JSON."""
    blob = canonical_json({"params": params, "seed": seed}).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def resolve_d(params: dict) -> tuple[float, float]:
    """(d, p) from whichever of the two the grid gives."""
    n = params["n"]
    if "d" in params:
        return float(params["d"]), float(params["d"]) / n
    return float(params["p"]) * n, float(params["p"])


def xi_of(params: dict) -> XiSpec:
    value = params["xi"]
    if isinstance(value, dict):
        return XiEntry(**value).to_spec()
    return XiSpec.from_config(value)


def _validate_task(cfg: ExperimentConfig, task: dict) -> None:
    p = task["params"]
    kind = cfg.experiment
    try:
        if kind == "walk":
            if p["T"] < 1:
                raise ValueError("grid.T must be positive")
            if not 0 <= p["q"] < 1:
                raise ValueError("grid.q must lie in [0, 1)")
            return
        n = p["n"]
        if n < 2:
            raise ValueError("grid.n must be at least 2")
        d, prob = resolve_d(p)
        if cfg.strict_p and not (1.0 / n <= prob <= 0.5):
            raise ValueError(f"p = d/n = {prob:.4g} outside [1/n, 1/2] (set strict_p: false "
                             "for dense sanity runs)")
        if not 0 < prob <= 1:
            raise ValueError(f"p = {prob} is not a probability")
        xi_of(p)
        if "eps" in p:
            from .potential import TruncationIndices
            TruncationIndices.of(n, p["eps"])
        if "z" in p:
            z = complex(p["z"])
            if z == 0:
                raise ValueError("grid.z must be nonzero")
            if kind == "anticonc" and not 1 <= abs(z) <= d:
                raise ValueError("grid.z must satisfy 1 <= |z| <= d for anticonc")
        if kind in ("certify", "anticonc") and d <= math.e:
            raise ValueError("grid.d must exceed e for certificate experiments")
        for key in ("c_star", "C_prime", "B_big_O", "C_sched"):
            if key in p and p[key] <= 0:
                raise ValueError(f"grid.{key} must be positive")
        if kind == "anticonc" and not 0 <= p["r_offset"] < n:
            raise ValueError("grid.r_offset must lie in [0, n)")
    except ContractViolation as exc:
        raise ValueError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} does not exist") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return parse_config(raw)


def parse_config(raw) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "<config>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines)) from None
