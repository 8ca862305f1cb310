"""Parameterized distributions used by machine states."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum
from typing import Optional


class DistributionError(ValueError):
    pass


class Family(str, Enum):
    UNIFORM_CONTINUOUS = "UniformContinuous"
    UNIFORM_DISCRETE = "UniformDiscrete"
    NORMAL = "Normal"
    RAYLEIGH = "Rayleigh"
    POINT_MASS = "PointMass"


_ARITY = {
    Family.UNIFORM_CONTINUOUS: 2,
    Family.UNIFORM_DISCRETE: 2,
    Family.NORMAL: 2,
    Family.RAYLEIGH: 1,
    Family.POINT_MASS: 1,
}


@dataclass(frozen=True)
class Distribution:
    """A distribution family with its parameters and optional clamp bounds.

    Parameters by family: uniform ``(a, b)``, normal ``(mean, std)``,
    Rayleigh ``(scale,)`` and point mass ``(value,)``.
    """

    family: Family
    params: tuple[float, ...]
    clamp_min: Optional[float] = None
    clamp_max: Optional[float] = None

    def __post_init__(self):
        family = Family(self.family)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", params)
        if len(params) != _ARITY[family]:
            raise DistributionError(
                f"{family.value} takes {_ARITY[family]} parameter(s), got {len(params)}")
        if any(math.isnan(p) for p in params):
            raise DistributionError(f"{family.value}: NaN parameter")
        if family in (Family.UNIFORM_CONTINUOUS, Family.UNIFORM_DISCRETE):
            a, b = params
            if a > b:
                raise DistributionError(f"{family.value}: a={a} > b={b}")
            if family is Family.UNIFORM_DISCRETE and not (a.is_integer() and b.is_integer()):
                raise DistributionError(f"UniformDiscrete bounds must be integers: {a}, {b}")
        elif family is Family.NORMAL:
            if params[1] < 0:
                raise DistributionError(f"Normal: sigma={params[1]} < 0")
        elif family is Family.RAYLEIGH:
            if not params[0] > 0:
                raise DistributionError(f"Rayleigh: scale={params[0]} must be > 0")
        if (self.clamp_min is not None and self.clamp_max is not None
                and self.clamp_min > self.clamp_max):
            raise DistributionError(
                f"clamp_min={self.clamp_min} > clamp_max={self.clamp_max}")

    @classmethod
    def uniform(cls, a: float, b: float, **clamp) -> "Distribution":
        return cls(Family.UNIFORM_CONTINUOUS, (a, b), **clamp)

    @classmethod
    def discrete(cls, a: int, b: int, **clamp) -> "Distribution":
        return cls(Family.UNIFORM_DISCRETE, (a, b), **clamp)

    @classmethod
    def normal(cls, mean: float, std: float, **clamp) -> "Distribution":
        return cls(Family.NORMAL, (mean, std), **clamp)

    @classmethod
    def rayleigh(cls, scale: float, **clamp) -> "Distribution":
        return cls(Family.RAYLEIGH, (scale,), **clamp)

    @classmethod
    def point(cls, value: float) -> "Distribution":
        return cls(Family.POINT_MASS, (value,))

    def sample(self, rng: random.Random) -> float:
        family, p = self.family, self.params
        if family is Family.POINT_MASS:
            x = p[0]
        elif family is Family.UNIFORM_CONTINUOUS:
            x = p[0] if p[0] == p[1] else rng.uniform(p[0], p[1])
        elif family is Family.UNIFORM_DISCRETE:
            x = float(rng.randint(int(p[0]), int(p[1])))
        elif family is Family.NORMAL:
            x = p[0] if p[1] == 0 else rng.gauss(p[0], p[1])
        else:
            # inverse CDF; 1 - u lies in (0, 1]
            x = p[0] * math.sqrt(-2.0 * math.log(1.0 - rng.random()))
        if self.clamp_min is not None and x < self.clamp_min:
            x = self.clamp_min
        if self.clamp_max is not None and x > self.clamp_max:
            x = self.clamp_max
        return x


def sample(dist: Distribution, rng: random.Random) -> float:
    return dist.sample(rng)
