"""Experiment configuration: a YAML file validated against a strict schema.

Unknown keys are rejected. Validation errors are reported with the YAML
line of the offending key where it can be located.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import InvalidArgumentError


class ConfigError(Exception):
    """Configuration could not be read or validated; ``messages`` holds one line per problem."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    T: float = Field(1.0, gt=0)
    steps: int = Field(64, ge=1)


class RateConfig(_Strict):
    kind: Literal["constant", "piecewise", "sqrt"] = "constant"
    level: float = Field(1.0, ge=0)
    breaks: list[float] = []
    levels: list[float] = []
    speed: float = Field(0.0, ge=0)
    mean: float = Field(0.0, ge=0)
    vol: float = Field(0.0, ge=0)


class RatesConfig(_Strict):
    B: RateConfig = RateConfig()
    H: RateConfig = RateConfig()
    common_factor: bool = False


class MarksConfig(_Strict):
    z: list[float] = []
    weights: list[float] = []

    @model_validator(mode="after")
    def _shapes(self):
        if len(self.z) != len(self.weights):
            raise ValueError("z and weights must have the same length")
        if any(v == 0 for v in self.z):
            raise ValueError("marks must be nonzero")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be nonnegative")
        return self


class EnsembleConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2**64)
    n_paths: int = Field(10000, ge=1)


class ModelConfig(_Strict):
    name: Literal["linear", "additive", "exponential", "lq"] = "linear"
    params: dict[str, float] = {}


class KernelConfig(_Strict):
    kind: Literal["constant", "exponential"] = "constant"
    r0: float = 0.5
    c: float = 0.0
    kappa: float = 1.0


class ForwardConfig(_Strict):
    control: float = 0.0
    picard_iter: int = Field(10, ge=1, le=200)


class HarvestConfig(_Strict):
    r: KernelConfig = KernelConfig()
    sigma: float = 0.2
    K: float = 2.0
    X0: float = 1.0
    delta: float = 0.1
    u_max: float = 1.0
    drop_effort_term: bool = False
    max_iter: int = Field(50, ge=1)
    n_scan: int = Field(21, ge=2)
    mp_paths: int = Field(200, ge=1)
    route_tol: float = Field(0.05, gt=0)

    @field_validator("K", "X0", "delta", "u_max")
    @classmethod
    def _positive(cls, v, info):
        if not v > 0:
            raise ValueError(f"{info.field_name} must be positive")
        return v

    @field_validator("sigma")
    @classmethod
    def _sigma(cls, v):
        if not v > -1:
            raise ValueError("sigma must be greater than -1")
        return v


class CondexpConfig(_Strict):
    degree: int = Field(2, ge=0, le=4)
    k_summary: int = Field(8, ge=0)


class NaderivConfig(_Strict):
    level: int = Field(3, ge=0)
    targets: list[Literal["mu_total", "B_T_squared", "gauss_quadratic", "jump_quadratic", "mixed", "Lambda_T"]] = [
        "mu_total",
        "gauss_quadratic",
        "B_T_squared",
        "Lambda_T",
    ]


class BsdeConfig(_Strict):
    terminal: Literal["constant", "B_T", "mu_total", "X_T"] = "constant"
    terminal_value: float = 1.0
    driver: Literal["zero", "linear"] = "zero"
    a: float = 0.0
    p_mode: Literal["smoothed", "raw"] = "smoothed"


class CandidateConfig(_Strict):
    kind: Literal["constant", "switch", "solve"] = "constant"
    value: float = 0.5
    t_switch: float = 0.0


class MpConfig(_Strict):
    problem: Literal["lq", "harvest"] = "lq"
    candidate: CandidateConfig = CandidateConfig()
    u_min: float = 0.0
    u_max: float = 1.0
    u_grid: int = Field(101, ge=2)
    tol_max: float = Field(1e-6, ge=0)
    tol_conc: float = Field(1e-8, ge=0)
    max_paths: int = Field(200, ge=1)
    bump_t0: float = 0.3
    bump_h: float = 0.2
    eps: float = Field(1e-4, gt=0)

    @model_validator(mode="after")
    def _range(self):
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        return self


class ExperimentConfig(_Strict):
    grid: GridConfig = GridConfig()
    rates: RatesConfig = RatesConfig()
    marks: MarksConfig = MarksConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    model: ModelConfig = ModelConfig()
    forward: ForwardConfig = ForwardConfig()
    harvest: HarvestConfig = HarvestConfig()
    condexp: CondexpConfig = CondexpConfig()
    naderiv: NaderivConfig = NaderivConfig()
    bsde: BsdeConfig = BsdeConfig()
    mp: MpConfig = MpConfig()
    partition_levels: Optional[list[int]] = None
    moment_level: int = Field(2, ge=0)
    moment_strata: int = Field(4, ge=1)
    plots: bool = True
    out_dir: str = "runs"

    @model_validator(mode="after")
    def _levels(self):
        if self.partition_levels is not None and (not self.partition_levels or min(self.partition_levels) < 0):
            raise ValueError("partition_levels must be a nonempty list of nonnegative integers")
        return self

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, seed=None, n_paths=None) -> "ExperimentConfig":
        ens = self.ensemble.model_copy(
            update={k: v for k, v in (("seed", seed), ("n_paths", n_paths)) if v is not None}
        )
        return self.model_validate({**self.model_dump(), "ensemble": ens.model_dump()})


def _line_index(text: str) -> dict:
    """Map key paths (tuples) to 1-based YAML line numbers."""
    out = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = (*path, k.value)
                out[key] = k.start_mark.line + 1
                walk(v, key)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                out[(*path, i)] = v.start_mark.line + 1
                walk(v, (*path, i))

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return out
    if root is not None:
        walk(root, ())
    return out


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError([f"{where}: YAML syntax error: {getattr(exc, 'problem', exc)}"]) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError([f"{source}: top level must be a mapping"])
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        lines = _line_index(text)
        msgs = []
        for err in exc.errors():
            loc = tuple(x for x in err["loc"] if not (isinstance(x, str) and x.startswith("function-")))
            line = None
            for k in range(len(loc), 0, -1):
                if loc[:k] in lines:
                    line = lines[loc[:k]]
                    break
            field = ".".join(str(x) for x in loc) or "<root>"
            where = f"{source}:{line}" if line else source
            msgs.append(f"{where}: {field}: {err['msg']}")
        raise ConfigError(msgs) from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config: {exc.strerror}"]) from exc
    return parse_config(text, str(path))


# builders from config sections


def build_rate_model(cfg: ExperimentConfig):
    from .timechange import ComponentRate, RateModel

    def comp(c: RateConfig):
        return ComponentRate(c.kind, c.level, tuple(c.breaks), tuple(c.levels), c.speed, c.mean, c.vol)

    try:
        return RateModel(comp(cfg.rates.B), comp(cfg.rates.H), cfg.rates.common_factor)
    except InvalidArgumentError as exc:
        raise ConfigError([f"rates: {exc}"]) from exc


def build_marks(cfg: ExperimentConfig):
    from .grid import MarkGrid

    return MarkGrid(np.array(cfg.marks.z, dtype=float), np.array(cfg.marks.weights, dtype=float))


def build_harvest_model(cfg: ExperimentConfig):
    from .harvest import HarvestModel

    h = cfg.harvest
    kw = dict(sigma=h.sigma, K=h.K, X0=h.X0, delta=h.delta, u_max=h.u_max, drop_effort_term=h.drop_effort_term)
    if h.r.kind == "constant":
        return HarvestModel.constant_rate(h.r.r0, **kw)
    return HarvestModel.exponential_rate(h.r.r0, h.r.c, h.r.kappa, **kw)


def build_volterra_model(cfg: ExperimentConfig):
    from .volterra import SUITE

    try:
        return SUITE[cfg.model.name](**cfg.model.params)
    except TypeError as exc:
        raise ConfigError([f"model.params: {exc}"]) from exc
