"""
Initial laws: velocity distributions f0 and the product law F0 = delta_{m0} x f0 on E.
"""

from typing import Annotated, Callable, Literal, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import special, stats

from src.models.params import WeightedState
from src.utils.parsing import parse_call, parse_floats

Vector3 = Tuple[float, float, float]


def uniform_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """n independent uniform points on the unit sphere, shape (n, 3)."""
    x = rng.standard_normal((n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


class _VelocityLaw(BaseModel):
    model_config = ConfigDict(frozen=True)

    @property
    def mean_vector(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def energy(self) -> float:
        """int |v|^2 f0(dv)."""
        return self.abs_moment(2.0)

    def abs_moment(self, p: float) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_one(self, rng: np.random.Generator) -> np.ndarray:
        return self.sample(rng, 1)[0]

    def spec(self) -> str:
        raise NotImplementedError


class DiracLaw(_VelocityLaw):
    kind: Literal["dirac"] = "dirac"
    v0: Vector3

    @property
    def mean_vector(self):
        return np.asarray(self.v0, dtype=float)

    def abs_moment(self, p):
        return float(np.linalg.norm(self.v0) ** p)

    def sample(self, rng, n):
        return np.tile(self.mean_vector, (n, 1))

    def sample_one(self, rng):
        return self.mean_vector

    def spec(self):
        return "dirac({!r},{!r},{!r})".format(*self.v0)


class GaussianLaw(_VelocityLaw):
    """N(mean, variance * I)."""

    kind: Literal["gaussian"] = "gaussian"
    mean: Vector3 = (0.0, 0.0, 0.0)
    variance: float = Field(gt=0.0, allow_inf_nan=False)

    @property
    def mean_vector(self):
        return np.asarray(self.mean, dtype=float)

    @property
    def energy(self):
        return float(np.dot(self.mean, self.mean) + 3.0 * self.variance)

    def abs_moment(self, p):
        shift = float(np.dot(self.mean, self.mean)) / self.variance
        scale = self.variance ** (p / 2.0)
        if shift == 0.0:
            return scale * 2.0 ** (p / 2.0) * special.gamma((3.0 + p) / 2.0) / special.gamma(1.5)
        return scale * stats.ncx2(3, shift).expect(lambda x: x ** (p / 2.0))

    def sample(self, rng, n):
        return self.mean_vector + np.sqrt(self.variance) * rng.standard_normal((n, 3))

    def sample_one(self, rng):
        return self.mean_vector + np.sqrt(self.variance) * rng.standard_normal(3)

    def spec(self):
        return "gaussian({!r},{!r},{!r},{!r})".format(*self.mean, self.variance)


class TwoPointLaw(_VelocityLaw):
    """v1 with probability p, v2 otherwise."""

    kind: Literal["two_point"] = "two_point"
    v1: Vector3
    v2: Vector3
    p: float = Field(ge=0.0, le=1.0)

    @property
    def mean_vector(self):
        return self.p * np.asarray(self.v1, dtype=float) + (1.0 - self.p) * np.asarray(self.v2, dtype=float)

    def abs_moment(self, p):
        return float(self.p * np.linalg.norm(self.v1) ** p + (1.0 - self.p) * np.linalg.norm(self.v2) ** p)

    def sample(self, rng, n):
        pick = rng.random(n) < self.p
        return np.where(pick[:, None], np.asarray(self.v1, dtype=float), np.asarray(self.v2, dtype=float))

    def spec(self):
        return "two_point({!r},{!r},{!r},{!r},{!r},{!r},{!r})".format(*self.v1, *self.v2, self.p)


class UniformBallLaw(_VelocityLaw):
    kind: Literal["ball"] = "ball"
    radius: float = Field(gt=0.0, allow_inf_nan=False)

    @property
    def mean_vector(self):
        return np.zeros(3)

    def abs_moment(self, p):
        return 3.0 * self.radius ** p / (p + 3.0)

    def sample(self, rng, n):
        r = self.radius * np.cbrt(rng.random(n))
        return r[:, None] * uniform_sphere(rng, n)

    def spec(self):
        return f"ball({self.radius!r})"


class ShellLaw(_VelocityLaw):
    kind: Literal["shell"] = "shell"
    radius: float = Field(gt=0.0, allow_inf_nan=False)

    @property
    def mean_vector(self):
        return np.zeros(3)

    def abs_moment(self, p):
        return float(self.radius ** p)

    def sample(self, rng, n):
        return self.radius * uniform_sphere(rng, n)

    def spec(self):
        return f"shell({self.radius!r})"


VelocityLaw = Annotated[
    Union[DiracLaw, GaussianLaw, TwoPointLaw, UniformBallLaw, ShellLaw],
    Field(discriminator="kind"),
]


class InitialLaw(BaseModel):
    """
    F0 = delta_{m0} x f0 on E = (0, inf) x R^3.
    """

    model_config = ConfigDict(frozen=True)

    m0: float = Field(default=1.0, gt=0.0, allow_inf_nan=False)
    velocity: VelocityLaw

    @property
    def energy(self) -> float:
        """Energy of the velocity marginal, the value e0=auto resolves to."""
        return self.velocity.energy

    @property
    def weighted_energy(self) -> float:
        return self.m0 * self.velocity.energy

    def sample_state(self, rng: np.random.Generator) -> WeightedState:
        return WeightedState(self.m0, self.velocity.sample_one(rng))

    def sample_states(self, rng: np.random.Generator, n: int) -> WeightedState:
        return WeightedState(np.full(n, self.m0), self.velocity.sample(rng, n))

    def expected_damping(self, rate: Callable[[np.ndarray], np.ndarray], t: float, rng: np.random.Generator, n_mc: int = 100_000) -> float:
        """
        E[exp(-rate(V_0) t)] under f0; exact for a Dirac law, Monte Carlo otherwise.
        """
        n = 1 if self.velocity.kind == "dirac" else n_mc
        return float(np.mean(np.exp(-rate(self.velocity.sample(rng, n)) * t)))

    def spec(self) -> str:
        return self.velocity.spec()


def law_from_spec(spec: str):
    """
    Builds a velocity law from its run-file expression.

    Args:
        spec (str): One of ``dirac(x,y,z)``, ``gaussian(mx,my,mz,var)``,
            ``two_point(x1,y1,z1,x2,y2,z2,p)``, ``ball(r)`` or ``shell(r)``.

    Returns:
        The velocity law.

    Raises:
        ValueError: If the expression is unknown or malformed.
    """
    name, args = parse_call(spec)
    if name == "dirac":
        return DiracLaw(v0=tuple(parse_floats(args, 3, name)))
    if name == "gaussian":
        values = parse_floats(args, 4, name)
        return GaussianLaw(mean=tuple(values[:3]), variance=values[3])
    if name == "two_point":
        values = parse_floats(args, 7, name)
        return TwoPointLaw(v1=tuple(values[:3]), v2=tuple(values[3:6]), p=values[6])
    if name == "ball":
        (radius,) = parse_floats(args, 1, name)
        return UniformBallLaw(radius=radius)
    if name == "shell":
        (radius,) = parse_floats(args, 1, name)
        return ShellLaw(radius=radius)
    raise ValueError(f"unknown initial law {spec!r}")
