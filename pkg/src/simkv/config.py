"""Strict JSON run configuration.

Example::

    {
      "model": {"type": "gaussian", "d": 2},
      "schedule": {"type": "constant", "lambda": 0.5},
      "dt": 0.005, "T": 4000, "reps": 64, "master_seed": 1,
      "burn_in": 400
    }
"""

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from simkv.errors import ConfigurationError
from simkv.schedules import LambdaSchedule, constant, paper_annealing


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


class GaussianCfg(_Strict):
    type: Literal["gaussian"]
    d: int = Field(1, ge=1)


class CurieWeissCfg(_Strict):
    type: Literal["curie_weiss"]
    alpha: float = Field(1.0, gt=0)
    beta: float = Field(1.0, gt=0)


class NNetCfg(_Strict):
    type: Literal["nnet"]
    K: int = Field(ge=1)
    L_trunc: float = Field(30.0, gt=0)
    sigma2_half: float = Field(0.05, gt=0)
    gamma: float = Field(0.0025, gt=0)
    dataset_path: str | None = None


ModelCfg = Annotated[Union[GaussianCfg, CurieWeissCfg, NNetCfg], Field(discriminator="type")]


class ConstantCfg(_Strict):
    type: Literal["constant"]
    lam: float = Field(alias="lambda", gt=0)


class PaperAnnealingCfg(_Strict):
    type: Literal["paper_annealing"]


class SegmentCfg(_Strict):
    duration: float | Literal["inf"]
    value: float = Field(gt=0)


class CustomCfg(_Strict):
    type: Literal["custom"]
    segments: list[SegmentCfg] = Field(min_length=1)


ScheduleCfg = Annotated[Union[ConstantCfg, PaperAnnealingCfg, CustomCfg], Field(discriminator="type")]


class InitCfg(_Strict):
    mean: float | list[float] = 0.0
    std: float = Field(ge=0)


# Default initial spread: N(0, 1/2) for the physics models, N(0, 10^2 I) for the network.
DEFAULT_INIT_STD = {"gaussian": math.sqrt(0.5), "curie_weiss": math.sqrt(0.5), "nnet": 10.0}


class RunConfig(_Strict):
    model: ModelCfg
    schedule: ScheduleCfg
    dt: float = Field(gt=0)
    T: float = Field(gt=0)
    reps: int = Field(1, ge=1)
    master_seed: int = Field(0, ge=0, lt=2**64)
    record_stride: int = Field(100, ge=1)
    sample_stride: int | None = Field(None, ge=1)
    burn_in: float | None = Field(None, ge=0)
    block_size: int = Field(16, ge=1)
    init: InitCfg | None = None
    out_dir: str = "out"

    @field_validator("model", "schedule", mode="before")
    @classmethod
    def _present(cls, v):
        if v is None:
            raise ValueError("section required")
        return v

    @model_validator(mode="after")
    def _invariants(self):
        sched = build_schedule(self.schedule)
        if not sched.max_value * self.dt < 1:
            raise ValueError(
                f"lambda_max * dt = {sched.max_value * self.dt:g} must be < 1 for a stable moving average"
            )
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not a whole number of steps of dt={self.dt}")
        if not sched.covers((n - 1) * self.dt):
            raise ValueError(f"schedule (duration {sched.total_duration}) does not cover T={self.T}")
        if self.burn_in is not None and self.burn_in > self.T:
            raise ValueError(f"burn_in={self.burn_in} exceeds T={self.T}")
        if self.init is not None and isinstance(self.init.mean, list):
            d = model_dim(self.model)
            if len(self.init.mean) != d:
                raise ValueError(f"init.mean has length {len(self.init.mean)}, model dimension is {d}")
        return self

    @property
    def effective_burn_in(self):
        return self.T / 2 if self.burn_in is None else self.burn_in

    @property
    def effective_sample_stride(self):
        return self.record_stride if self.sample_stride is None else self.sample_stride

    @property
    def effective_init(self):
        if self.init is not None:
            return self.init
        return InitCfg(mean=0.0, std=DEFAULT_INIT_STD[self.model.type])

    def to_json(self):
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True)


def model_dim(model_cfg):
    if model_cfg.type == "gaussian":
        return model_cfg.d
    if model_cfg.type == "curie_weiss":
        return 1
    return 4


def build_schedule(cfg):
    if cfg.type == "constant":
        return constant(cfg.lam)
    if cfg.type == "paper_annealing":
        return paper_annealing()
    return LambdaSchedule.from_records([s.model_dump() for s in cfg.segments])


def _line_of(text, loc):
    """Best-effort line number of the innermost key named in ``loc``."""
    for key in reversed(loc):
        if isinstance(key, str):
            needle = f'"{key}"'
            for i, line in enumerate(text.splitlines(), 1):
                if needle in line:
                    return i
    return None


def _describe(err, text):
    loc = tuple(err["loc"])
    where = ".".join(str(p) for p in loc) or "<root>"
    msg = err["msg"]
    if err["type"] == "missing":
        msg = f"{loc[-1]} required" if loc else msg
    elif err["type"] == "extra_forbidden":
        msg = f"unknown key {loc[-1]!r}"
    line = _line_of(text, loc) if text else None
    prefix = f"line {line}: " if line else ""
    return f"{prefix}{where}: {msg}"


def parse_config_text(text, source="<config>"):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}: line {exc.lineno}: invalid JSON: {exc.msg}") from None
    return parse_config_data(data, source, text)


def parse_config_data(data, source="<config>", text=None):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a JSON object")
    # "model required" rather than pydantic's generic wording
    for key in ("model", "schedule"):
        if key not in data:
            raise ConfigurationError(f"{source}: {key} required")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = [_describe(e, text) for e in exc.errors()]
        raise ConfigurationError(f"{source}: invalid config\n  " + "\n  ".join(lines)) from None


def parse_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))
