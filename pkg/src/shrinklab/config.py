"""Experiment configuration: TOML text validated by pydantic models.

Unknown keys are errors at every nesting level.  ``to_dict`` produces the
echo stored in run records; feeding it back to ``ExperimentConfig`` yields an
equal config.
"""

from __future__ import annotations

import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

from .cantor import BaseSequence, PatternSchedule, xi_function
from .maps import Blaschke, MapSequence, PowerMap, DEFAULT_MAX_MODULUS
from .schedules import CenterGenerator, RadiusGenerator, center_from_config, parse_angle

Kind = Literal["shrink", "recur", "cantor", "markov", "mixing", "converge-demo"]
Number = Union[int, float, str]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _fraction(v: Number) -> Fraction:
    return Fraction(v) if not isinstance(v, float) else Fraction(v)


class MapConfig(Strict):
    """A single map: ``power = b`` or ``zeros = [[re, im], ...]``."""

    power: Optional[int] = None
    zeros: Optional[list[Union[float, list[float]]]] = None
    max_modulus: float = DEFAULT_MAX_MODULUS

    @model_validator(mode="after")
    def _one_of(self):
        if (self.power is None) == (self.zeros is None):
            raise ValueError("a map needs exactly one of 'power' or 'zeros'")
        self.build()
        return self

    def build(self):
        if self.power is not None:
            return PowerMap(self.power)
        zs = []
        for z in self.zeros:
            if isinstance(z, list):
                if len(z) != 2:
                    raise ValueError("complex zeros are [re, im] pairs")
                zs.append(complex(z[0], z[1]))
            else:
                zs.append(complex(z))
        return Blaschke(tuple(zs), self.max_modulus)


class SequenceConfig(Strict):
    kind: Literal["power", "constant", "periodic", "explicit", "converging-blaschke"] = "power"
    bases: Optional[list[int]] = None
    maps: Optional[list[MapConfig]] = None
    tail: Union[Literal["repeat-last", "cycle"], MapConfig] = "repeat-last"
    horizon: Optional[int] = None
    alpha: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        self.build()
        return self

    def build(self) -> MapSequence:
        kw = {} if self.alpha is None else {"alpha": self.alpha}
        if self.kind == "power":
            if not self.bases:
                raise ValueError("power sequences need 'bases'")
            if any(b < 2 for b in self.bases):
                raise ValueError("bases must be >= 2")
            bs = BaseSequence.periodic(self.bases)
            return MapSequence.power(bs, **kw)
        if self.kind == "converging-blaschke":
            if self.horizon is None or self.horizon < 1:
                raise ValueError("converging family needs a positive 'horizon'")
            return MapSequence.converging(self.horizon, **kw)
        if not self.maps:
            raise ValueError(f"{self.kind} sequences need 'maps'")
        maps = [m.build() for m in self.maps]
        if self.kind == "constant":
            return MapSequence.constant(maps[0], **kw) if len(maps) == 1 else _err("constant takes one map")
        if self.kind == "periodic":
            return MapSequence.periodic(maps, **kw)
        tail = self.tail if isinstance(self.tail, str) else self.tail.build()
        return MapSequence.explicit(maps, tail=tail, **kw)


def _err(msg):
    raise ValueError(msg)


class RadiusConfig(Strict):
    kind: Literal["constant", "power-law", "harmonic", "geometric", "explicit"]
    scale: Number = "1"
    exponent: float = 1
    ratio: Number = "1/2"
    value: Optional[float] = None
    values: Optional[list[float]] = None

    @model_validator(mode="after")
    def _check(self):
        gen = self.build()
        if gen.kind != "explicit":
            # radii must stay in (0, pi] for every n; the largest is r_1
            gen.radius(1)
        return self

    def build(self) -> RadiusGenerator:
        exp = int(self.exponent) if float(self.exponent).is_integer() else float(self.exponent)
        return RadiusGenerator(self.kind, scale=_fraction(self.scale) if not isinstance(self.scale, float)
                               else self.scale, exponent=exp,
                               ratio=_fraction(self.ratio) if not isinstance(self.ratio, float) else self.ratio,
                               value=self.value, values=tuple(self.values or ()))


def _pow2_checkpoints(lo: int, hi: int) -> list[int]:
    return [1 << k for k in range(lo, hi + 1)]


class ShrinkConfig(Strict):
    center: Union[str, list[str]] = "golden"
    radii: RadiusConfig = RadiusConfig(kind="power-law", scale="1", exponent=1)
    checkpoints: list[int] = Field(default_factory=lambda: _pow2_checkpoints(12, 20))
    eps: float = 0.1
    ratio_tolerance: float = 0.02
    slope_max: float = 0.75
    mean_tolerance: float = 0.3
    tail_se: float = 3.0

    @field_validator("checkpoints")
    @classmethod
    def _inc(cls, v):
        if not v or any(b <= a for a, b in zip(v, v[1:])) or v[0] < 1:
            raise ValueError("checkpoints must be positive and strictly increasing")
        return v

    @field_validator("center")
    @classmethod
    def _center(cls, v):
        center_from_config({"fixed": v} if isinstance(v, str) else {"values": v})
        return v

    def centers(self) -> CenterGenerator:
        return center_from_config({"fixed": self.center} if isinstance(self.center, str)
                                  else {"values": self.center})


class RecurConfig(Strict):
    radii: RadiusConfig = RadiusConfig(kind="power-law", scale="1", exponent=2)
    N: int = 10_000
    tail: Optional[list[int]] = None
    tail_fraction_max: float = 0.01
    tail_fraction_min: float = 0.5
    count_se: float = 4.0
    measure_cases: int = 0
    measure_resolution: int = 100_000
    measure_method: Literal["grid", "monte-carlo"] = "grid"
    measure_max_n: int = 40
    measure_pass_rate: float = 0.99
    envelope_max_n: int = 0
    envelope_resolution: int = 100_000

    @model_validator(mode="after")
    def _check(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.tail is not None and (len(self.tail) != 2 or not 0 <= self.tail[0] < self.tail[1] <= self.N):
            raise ValueError("tail must be [lo, hi] with 0 <= lo < hi <= N")
        return self


class CantorConfig(Strict):
    bases: list[int] = Field(default_factory=lambda: [2])
    xi: Literal["floor-log2", "floor-log2-plus-1", "identity", "constant"] = "floor-log2"
    xi_k: Optional[int] = None
    x0: str = "0"
    checkpoints: list[int] = Field(default_factory=lambda: _pow2_checkpoints(10, 18))
    eps: float = 0.1
    ratio_tolerance: float = 0.05
    ball_checks: int = 256

    @model_validator(mode="after")
    def _check(self):
        if any(b < 2 for b in self.bases):
            raise ValueError("bases must be >= 2")
        if not self.checkpoints or any(b <= a for a, b in zip(self.checkpoints, self.checkpoints[1:])):
            raise ValueError("checkpoints must be strictly increasing")
        self.pattern().validated_lengths(min(self.checkpoints[-1], 1 << 16))
        return self

    def base_sequence(self) -> BaseSequence:
        return BaseSequence.periodic(self.bases)

    def xi_function(self):
        return xi_function(self.xi, self.xi_k)

    def pattern(self) -> PatternSchedule:
        x0 = Fraction(self.x0)
        if not 0 <= x0 < 1:
            raise ValueError("x0 must lie in [0, 1)")
        return PatternSchedule.from_point(x0, self.base_sequence(), self.xi_function(),
                                          label=f"x0={self.x0}")


class MarkovConfig(Strict):
    map: MapConfig = MapConfig(zeros=[0.0, 0.5])
    max_level: int = 12
    conformal_samples: int = 256

    @field_validator("max_level")
    @classmethod
    def _lvl(cls, v):
        if not 3 <= v <= 16:
            raise ValueError("max_level must lie in 3..16")
        return v


class MixingConfig(Strict):
    n_max: int = 40
    split: int = 20
    resolution: int = 100_000
    method: Literal["grid", "monte-carlo"] = "grid"
    dyadic_level: int = 2

    @model_validator(mode="after")
    def _check(self):
        if not 1 <= self.split < self.n_max:
            raise ValueError("need 1 <= split < n_max")
        if self.resolution < 10 ** 4:
            raise ValueError("resolution must be >= 1e4")
        return self


class ConvergeConfig(Strict):
    horizon: int = 200
    radius: float = 1.0
    grid: int = 2000
    center: str = "0"
    contrast: MapConfig = MapConfig(zeros=[0.0, 0.5])
    hit_tolerance: float = 0.05
    stabilization_min: float = 0.9
    contrast_tolerance: float = 0.05

    @model_validator(mode="after")
    def _check(self):
        if self.horizon < 100:
            raise ValueError("horizon must be >= 100")
        if not 0 < self.radius < math.pi:
            raise ValueError("radius must lie in (0, pi)")
        parse_angle(self.center)
        return self


_DEFAULT_SEQUENCE = {
    "shrink": {"kind": "power", "bases": [2]},
    "recur": {"kind": "power", "bases": [2]},
    "cantor": None,
    "markov": None,
    "mixing": {"kind": "constant", "maps": [{"zeros": [0.0, 0.5]}]},
    "converge-demo": None,
}


class ExperimentConfig(Strict):
    kind: Kind
    seed: int = 7
    samples: int = 64
    threads: int = 1
    precision_bits: Optional[int] = None
    out: Optional[str] = None
    sequence: Optional[SequenceConfig] = None
    shrink: Optional[ShrinkConfig] = None
    recur: Optional[RecurConfig] = None
    cantor: Optional[CantorConfig] = None
    markov: Optional[MarkovConfig] = None
    mixing: Optional[MixingConfig] = None
    converge: Optional[ConvergeConfig] = None

    @model_validator(mode="before")
    @classmethod
    def _fill(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = data.get("kind")
        section = {"converge-demo": "converge"}.get(kind, kind)
        if section in ("shrink", "recur", "cantor", "markov", "mixing", "converge") and data.get(section) is None:
            data[section] = {}
        if data.get("sequence") is None and _DEFAULT_SEQUENCE.get(kind):
            data["sequence"] = _DEFAULT_SEQUENCE[kind]
        return data

    @model_validator(mode="after")
    def _check(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.precision_bits is not None and self.precision_bits < 64:
            raise ValueError("precision_bits must be >= 64")
        own = {"converge-demo": "converge"}.get(self.kind, self.kind)
        for name in ("shrink", "recur", "cantor", "markov", "mixing", "converge"):
            if name != own and getattr(self, name) is not None:
                raise ValueError(f"section [{name}] does not belong to a {self.kind} experiment")
        if self.kind in ("shrink", "recur", "mixing") and self.sequence is None:
            raise ValueError(f"{self.kind} experiments need a [sequence]")
        return self

    def map_sequence(self) -> MapSequence:
        return self.sequence.build()

    def to_dict(self) -> dict:
        return self.model_dump(mode="json", exclude_none=True)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = self.to_dict()
        data.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text())
    except OSError as e:
        raise ValueError(f"cannot read config {p}: {e}") from e
    return ExperimentConfig(**data)


def parse_config(text: str) -> ExperimentConfig:
    return ExperimentConfig(**tomllib.loads(text))


def default_config(kind: str, **kw) -> ExperimentConfig:
    return ExperimentConfig(kind=kind, **kw)
