"""
Angular kernels b on [-1, 1] (functions of the deviation cosine u) and the
constants derived from them: kappa = 2*pi * int b(u) du and the mean cosine c.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import integrate

from src.services.errors import InvalidKernel
from src.utils.parsing import parse_call, parse_floats

TWO_PI = 2.0 * np.pi
INVERSE_CDF_KNOTS = 1024


class AngularKernel(ABC):
    """
    A bounded nonnegative angular kernel with precomputed kappa, c and sup_b.
    """

    def __init__(self):
        mass = self._integral()
        if not np.isfinite(mass) or mass <= 0.0:
            raise InvalidKernel(f"{self.spec()}: kappa must be finite and positive")
        self.kappa = TWO_PI * mass
        c = TWO_PI * self._first_moment() / self.kappa
        if not np.isfinite(c) or abs(c) > 1.0 + 1e-9:
            raise InvalidKernel(f"{self.spec()}: mean cosine {c} outside [-1, 1]")
        self.mean_cosine_c = float(np.clip(c, -1.0, 1.0))

    @property
    @abstractmethod
    def sup_b(self) -> float:
        """Upper bound of b on [-1, 1]."""

    @abstractmethod
    def b(self, u: np.ndarray) -> np.ndarray:
        """Evaluates b at cosines u."""

    @abstractmethod
    def sample_cosine(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draws cosines with density 2*pi*b(u)/kappa on [-1, 1]."""

    @abstractmethod
    def spec(self) -> str:
        """Run-file expression of this kernel."""

    def _integral(self) -> float:
        value, _ = integrate.quad(lambda u: float(self.b(np.float64(u))), -1.0, 1.0, limit=200)
        return value

    def _first_moment(self) -> float:
        value, _ = integrate.quad(lambda u: u * float(self.b(np.float64(u))), -1.0, 1.0, limit=200)
        return value

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec()}, kappa={self.kappa:.6g})"


class ConstantKernel(AngularKernel):
    """
    b(u) = value; the hard-sphere and isotropic Maxwellian angular part.
    """

    def __init__(self, value: float):
        if not np.isfinite(value) or value < 0.0:
            raise InvalidKernel(f"constant kernel needs a finite value >= 0, got {value}")
        self.value = float(value)
        super().__init__()

    @property
    def sup_b(self) -> float:
        return self.value

    def b(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.value)

    def _integral(self) -> float:
        return 2.0 * self.value

    def _first_moment(self) -> float:
        return 0.0

    def sample_cosine(self, rng, size):
        return 2.0 * rng.random(size) - 1.0

    def spec(self) -> str:
        return f"constant({self.value!r})"


class TruncatedPowerKernel(AngularKernel):
    """
    b(u) = max((1 - u)/2, floor) ** (-exponent).

    (1 - u)/2 is sin^2 of half the deviation angle, so a positive exponent is a
    grazing-collision singularity cut off at ``floor``.
    """

    def __init__(self, exponent: float, floor: float):
        if not (0.0 < floor <= 1.0):
            raise InvalidKernel(f"power kernel floor must lie in (0, 1], got {floor}")
        if not np.isfinite(exponent):
            raise InvalidKernel(f"power kernel exponent must be finite, got {exponent}")
        self.exponent = float(exponent)
        self.floor = float(floor)
        super().__init__()

    @property
    def sup_b(self) -> float:
        return self.floor ** (-self.exponent) if self.exponent > 0 else 1.0

    def b(self, u):
        x = np.maximum(0.5 * (1.0 - np.asarray(u, dtype=float)), self.floor)
        return x ** (-self.exponent)

    def _kinks(self):
        kink = 1.0 - 2.0 * self.floor
        return [kink] if -1.0 < kink < 1.0 else None

    def _integral(self) -> float:
        value, _ = integrate.quad(
            lambda u: float(self.b(np.float64(u))), -1.0, 1.0, points=self._kinks(), limit=200
        )
        return value

    def _first_moment(self) -> float:
        value, _ = integrate.quad(
            lambda u: u * float(self.b(np.float64(u))), -1.0, 1.0, points=self._kinks(), limit=200
        )
        return value

    def sample_cosine(self, rng, size):
        shape = (size,) if np.isscalar(size) else tuple(size)
        count = int(np.prod(shape))
        out = np.empty(count)
        filled = 0
        bound = self.sup_b
        while filled < count:
            need = count - filled
            proposal = 2.0 * rng.random(need) - 1.0
            keep = proposal[rng.random(need) * bound <= self.b(proposal)]
            out[filled:filled + keep.size] = keep
            filled += keep.size
        return out.reshape(shape)

    def spec(self) -> str:
        return f"power({self.exponent!r},{self.floor!r})"


class TabulatedKernel(AngularKernel):
    """
    b given on a strictly increasing grid of cosines, linearly interpolated,
    zero outside the grid.
    """

    def __init__(self, u: np.ndarray, values: np.ndarray, source: Optional[str] = None):
        u = np.asarray(u, dtype=float)
        values = np.asarray(values, dtype=float)
        if u.ndim != 1 or u.shape != values.shape or u.size < 2:
            raise InvalidKernel("kernel table needs two columns with at least two rows")
        if np.any(np.diff(u) <= 0):
            raise InvalidKernel("kernel table cosines must be strictly increasing")
        if u[0] < -1.0 or u[-1] > 1.0:
            raise InvalidKernel("kernel table cosines must lie in [-1, 1]")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidKernel("kernel table values must be finite and nonnegative")
        self.u = u
        self.values = values
        self.source = source
        super().__init__()
        self._build_inverse_cdf()

    @classmethod
    def from_file(cls, path: str) -> "TabulatedKernel":
        try:
            table = np.loadtxt(path, ndmin=2)
        except (OSError, ValueError) as e:
            raise InvalidKernel(f"cannot read kernel table {path}: {e}") from e
        if table.shape[1] != 2:
            raise InvalidKernel(f"kernel table {path} must have two columns `u b(u)`")
        return cls(table[:, 0], table[:, 1], source=str(path))

    @property
    def sup_b(self) -> float:
        return float(self.values.max())

    def b(self, u):
        return np.interp(u, self.u, self.values, left=0.0, right=0.0)

    def _integral(self) -> float:
        return float(integrate.trapezoid(self.values, self.u))

    def _first_moment(self) -> float:
        # Simpson is exact for u*b(u) on each linear piece.
        u0, u1 = self.u[:-1], self.u[1:]
        b0, b1 = self.values[:-1], self.values[1:]
        um, bm = 0.5 * (u0 + u1), 0.5 * (b0 + b1)
        return float(np.sum((u1 - u0) / 6.0 * (u0 * b0 + 4.0 * um * bm + u1 * b1)))

    def _build_inverse_cdf(self) -> None:
        knots = np.union1d(self.u, np.linspace(self.u[0], self.u[-1], INVERSE_CDF_KNOTS))
        density = self.b(knots)
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(knots))))
        self._knots = knots
        self._cdf = cdf / cdf[-1]

    def sample_cosine(self, rng, size):
        target = rng.random(size)
        idx = np.clip(np.searchsorted(self._cdf, target, side="right"), 1, self._cdf.size - 1)
        lo, hi = self._cdf[idx - 1], self._cdf[idx]
        frac = (target - lo) / (hi - lo)
        return self._knots[idx - 1] + frac * (self._knots[idx] - self._knots[idx - 1])

    def spec(self) -> str:
        if self.source is not None:
            return f"table({self.source})"
        return f"table(<{self.u.size} rows>)"


def kernel_from_spec(spec: str, base_dir: Optional[Path] = None) -> AngularKernel:
    """
    Builds a kernel from ``constant(v)``, ``power(exponent,floor)`` or ``table(path)``.

    Args:
        spec (str): The run-file expression.
        base_dir (Optional[Path]): Directory relative table paths are resolved against.

    Returns:
        AngularKernel: The validated kernel.

    Raises:
        InvalidKernel: If the expression is malformed or the kernel degenerate.
    """
    try:
        name, args = parse_call(spec)
        if name == "constant":
            (value,) = parse_floats(args, 1, name)
            return ConstantKernel(value)
        if name == "power":
            exponent, floor = parse_floats(args, 2, name)
            return TruncatedPowerKernel(exponent, floor)
        if name == "table":
            if len(args) != 1:
                raise ValueError("table takes a single path")
            path = Path(args[0])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return TabulatedKernel.from_file(str(path))
    except ValueError as e:
        raise InvalidKernel(str(e)) from e
    raise InvalidKernel(f"unknown kernel {spec!r}; use constant, power or table")
