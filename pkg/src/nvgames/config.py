"""Experiment configuration file schema (JSON).

Unknown keys are rejected at every level; ``resolved()`` returns the config
with all defaults filled in, which is echoed next to every run's outputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .demand import DemandModel, MarginalSpec, Regime, Temporal
from .errors import ConfigError
from .game import Estimator
from .solutions import WeightProfile

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MarginalBlock(_Strict):
    kind: str
    params: dict[str, Any] = Field(default_factory=dict)


class RegimeBlock(_Strict):
    probability: float
    shifts: list[float]


class TemporalBlock(_Strict):
    kind: Literal["iid", "ar1", "regime-mixture"] = "iid"
    rho: float = 0.0
    regimes: list[RegimeBlock] = Field(default_factory=list)


class DemandBlock(_Strict):
    marginals: list[MarginalBlock]
    correlation: list[list[float]] | None = None
    temporal: TemporalBlock = Field(default_factory=TemporalBlock)


class CostsBlock(_Strict):
    p: float
    h: float


class EstimatorBlock(_Strict):
    samples: int = 1_000_000
    seed: int = 0


class ExperimentBlock(_Strict):
    kind: Literal["build-expected", "solve", "process", "diagonal", "stationary", "empty-core-search", "verify"] = "build-expected"
    seed: int = 0
    rule: Literal["R1", "R2"] = "R1"
    weights: list[float] | None = None
    # diagonal / stationary
    T_max: int = 1000
    replications: int = 1
    schedule: int = 1
    stages: Literal["all", "log", "final"] | list[int] = "log"
    warm_start: bool = False
    dr_mode: Literal["demand-average", "cost-average"] = "demand-average"
    eps: float | None = None
    beta: float = 1.0
    # process
    steps: int = 10_000
    # empty-core-search
    attempts: int = 100_000


class OutputBlock(_Strict):
    directory: str = "out"
    stride: int | None = None


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    demand: DemandBlock | None = None
    costs: CostsBlock | None = None
    estimator: EstimatorBlock = Field(default_factory=EstimatorBlock)
    experiment: ExperimentBlock = Field(default_factory=ExperimentBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

    def resolved(self) -> dict:
        return self.model_dump(mode="json")

    def demand_model(self) -> DemandModel:
        if self.demand is None:
            raise ConfigError("config has no demand block")
        d = self.demand
        temporal = Temporal(
            d.temporal.kind,
            d.temporal.rho,
            tuple(Regime(r.probability, tuple(r.shifts)) for r in d.temporal.regimes),
        )
        marg = tuple(MarginalSpec(m.kind, dict(m.params)) for m in d.marginals)
        corr = None if d.correlation is None else np.array(d.correlation)
        return DemandModel(marg, corr, temporal)

    def cost_params(self) -> tuple[float, float]:
        if self.costs is None:
            raise ConfigError("config has no costs block")
        return self.costs.p, self.costs.h

    def estimator_obj(self) -> Estimator:
        return Estimator(self.estimator.samples, self.estimator.seed)

    def weight_profile(self, n: int) -> WeightProfile | None:
        w = self.experiment.weights
        if w is None:
            return None
        try:
            return WeightProfile(n, tuple(w))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


def parse_config(raw: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
