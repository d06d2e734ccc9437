"""Model data types, coefficient fields, initial data and run configuration."""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ConfigError, EvaluationOutOfRange, InvalidSpec
from .expr import Expression


# ---------------------------------------------------------------------------
# parameters and grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Scalar constants of the chemotaxis system.

    ``chi`` may take either sign; ``tau``, ``lambda_`` and ``mu`` are positive.
    """

    chi: float
    tau: float = 1.0
    lambda_: float = 1.0
    mu: float = 1.0
    dimension: int = 1

    def __post_init__(self):
        for name in ("tau", "lambda_", "mu"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be a positive finite number, got {value}", field=f"params.{name}")
        if not math.isfinite(self.chi):
            raise ConfigError("chi must be finite", field="params.chi")
        if self.dimension not in (1, 2):
            raise ConfigError("dimension must be 1 or 2", field="params.dimension")


@dataclass(frozen=True)
class GridDomain:
    """Rectangle ``(0, L1) [x (0, L2)]`` covered by a uniform cell-centered grid."""

    lengths: tuple
    cells: tuple

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        cells = tuple(int(v) for v in self.cells)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "cells", cells)
        if len(lengths) not in (1, 2) or len(cells) != len(lengths):
            raise ConfigError("domain must be 1D or 2D with one cell count per length", field="domain")
        if any(not (math.isfinite(L) and L > 0) for L in lengths):
            raise ConfigError("domain lengths must be positive", field="domain.lengths")
        if any(n < 4 for n in cells):
            raise ConfigError("each axis needs at least 4 cells", field="domain.cells")

    @property
    def dimension(self) -> int:
        return len(self.lengths)

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.lengths, self.cells))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def centers(self) -> tuple:
        """1D arrays of cell-center coordinates ``(i + 1/2) h`` per axis."""
        return tuple((np.arange(n) + 0.5) * h for n, h in zip(self.cells, self.spacing))

    def mesh(self) -> tuple:
        """Cell-center coordinates as broadcastable arrays of the grid shape."""
        return tuple(np.meshgrid(*self.centers(), indexing="ij"))

    def closed_points(self) -> tuple:
        """Faces and centers per axis, ``k h / 2`` for ``k = 0..2N``, boundary included."""
        return tuple(np.linspace(0.0, L, 2 * n + 1) for L, n in zip(self.lengths, self.cells))

    def refined(self, factor: int) -> "GridDomain":
        return GridDomain(self.lengths, tuple(n * int(factor) for n in self.cells))


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class State:
    time: float
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u, v = _readonly(self.u), _readonly(self.v)
        if u.shape != v.shape:
            raise InvalidSpec(f"u and v shapes differ: {u.shape} vs {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "time", float(self.time))

    def is_valid(self) -> bool:
        return bool(
            np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)) and self.u.min() >= 0 and self.v.min() >= 0
        )

    def with_time(self, t: float) -> "State":
        return State(t, self.u, self.v)


# ---------------------------------------------------------------------------
# coefficient fields
# ---------------------------------------------------------------------------


def _broadcast_shape(t, x) -> tuple:
    return np.broadcast_shapes(np.shape(t), *(np.shape(xi) for xi in x))


def _as_result(value, shape):
    if shape == ():
        return float(value)
    return np.broadcast_to(np.asarray(value, dtype=np.float64), shape).astype(np.float64)


@dataclass(frozen=True)
class Constant:
    value: float
    label: str = ""

    kind = "constant"
    is_constant = True
    is_autonomous = True

    def evaluate(self, t, x):
        return _as_result(self.value, _broadcast_shape(t, x))

    def grid_function(self, domain: GridDomain) -> Callable[[float], np.ndarray]:
        value = float(self.value)
        return lambda t: np.full(domain.shape, value)


_TRIG = {"cos": np.cos, "sin": np.sin}


@dataclass(frozen=True)
class TrigTerm:
    """``amplitude * T(omega t + phase) * prod_j X_j(k_j x_j)`` with T, X_j in {cos, sin, none}."""

    amplitude: float
    time: str = "none"
    omega: float = 0.0
    phase: float = 0.0
    space: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "space", tuple((str(f), float(k)) for f, k in self.space))
        for fn in (self.time, *(f for f, _ in self.space)):
            if fn not in ("cos", "sin", "none"):
                raise InvalidSpec(f"trig factor must be cos, sin or none, got {fn!r}")

    def time_factor(self, t):
        if self.time == "none":
            return self.amplitude * np.ones_like(np.asarray(t, dtype=np.float64))
        return self.amplitude * _TRIG[self.time](self.omega * np.asarray(t, dtype=np.float64) + self.phase)

    def space_factor(self, x):
        out = 1.0
        for axis, (fn, k) in enumerate(self.space):
            if fn == "none":
                continue
            if axis >= len(x):
                raise InvalidSpec("trig term has more spatial factors than the domain has axes")
            out = out * _TRIG[fn](k * np.asarray(x[axis], dtype=np.float64))
        return out


@dataclass(frozen=True)
class TrigSum:
    offset: float = 0.0
    terms: tuple = ()
    label: str = ""

    kind = "trigsum"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def is_autonomous(self) -> bool:
        return all(term.time == "none" for term in self.terms)

    @property
    def is_constant(self) -> bool:
        return self.is_autonomous and all(
            all(fn == "none" for fn, _ in term.space) for term in self.terms
        )

    def evaluate(self, t, x):
        shape = _broadcast_shape(t, x)
        total = np.float64(self.offset)
        for term in self.terms:
            total = total + term.time_factor(t) * term.space_factor(x)
        return _as_result(total, shape)

    def grid_function(self, domain: GridDomain):
        mesh = domain.mesh()
        spatial = [term.space_factor(mesh) for term in self.terms]
        offset = np.float64(self.offset)

        def at(t):
            total = offset
            for term, sp in zip(self.terms, spatial):
                total = total + term.time_factor(t) * sp
            return np.broadcast_to(total, domain.shape).astype(np.float64)

        return at


@dataclass(frozen=True)
class Separable:
    """``f(t) * g(x)`` with ``f`` and ``g`` given as restricted expressions."""

    time: Union[str, Expression] = "1"
    space: Union[str, Expression] = "1"
    label: str = ""

    kind = "separable"

    def __post_init__(self):
        if not isinstance(self.time, Expression):
            object.__setattr__(self, "time", Expression(self.time, variables=("t",)))
        if not isinstance(self.space, Expression):
            object.__setattr__(self, "space", Expression(self.space, variables=("x", "y")))

    @property
    def is_autonomous(self) -> bool:
        return "t" not in self.time.names

    @property
    def is_constant(self) -> bool:
        return self.is_autonomous and not self.space.names

    def _space(self, x):
        env = {"x": x[0]}
        if len(x) > 1:
            env["y"] = x[1]
        return self.space(**env)

    def evaluate(self, t, x):
        shape = _broadcast_shape(t, x)
        return _as_result(self.time(t=np.asarray(t, dtype=np.float64)) * self._space(x), shape)

    def grid_function(self, domain: GridDomain):
        g = np.broadcast_to(np.asarray(self._space(domain.mesh()), dtype=np.float64), domain.shape).copy()
        return lambda t: np.asarray(self.time(t=np.float64(t)) * g, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Samples on a tensor grid; linear in time and multilinear in space."""

    times: np.ndarray
    axes: tuple
    values: np.ndarray
    label: str = ""

    kind = "tabulated"
    is_constant = False

    def __post_init__(self):
        times = _readonly(np.atleast_1d(self.times))
        axes = tuple(_readonly(a) for a in self.axes)
        values = _readonly(self.values)
        expected = (len(times), *(len(a) for a in axes))
        if values.shape != expected:
            raise InvalidSpec(f"tabulated values have shape {values.shape}, expected {expected}")
        for a in (times, *axes):
            if len(a) > 1 and np.any(np.diff(a) <= 0):
                raise InvalidSpec("tabulated sample coordinates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise InvalidSpec("tabulated values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)
        if len(times) > 1:
            interp = RegularGridInterpolator((times, *axes), values, method="linear")
        else:
            interp = RegularGridInterpolator(axes, values[0], method="linear")
        object.__setattr__(self, "_interp", interp)

    @property
    def is_autonomous(self) -> bool:
        return len(self.times) == 1

    def _check(self, t, x):
        if len(x) != len(self.axes):
            raise EvaluationOutOfRange("point dimension does not match the table")
        pairs = list(zip(x, self.axes))
        if len(self.times) > 1:
            pairs.append((t, self.times))
        for coord, grid in pairs:
            coord = np.asarray(coord)
            span = grid[-1] - grid[0]
            slack = 1e-12 * max(1.0, abs(span))
            if coord.min() < grid[0] - slack or coord.max() > grid[-1] + slack:
                raise EvaluationOutOfRange(
                    f"coordinate range [{coord.min()}, {coord.max()}] outside table [{grid[0]}, {grid[-1]}]"
                )

    def evaluate(self, t, x):
        self._check(t, x)
        shape = _broadcast_shape(t, x)
        coords = [np.broadcast_to(np.asarray(xi, dtype=np.float64), shape) for xi in x]
        coords = [np.clip(c, a[0], a[-1]) for c, a in zip(coords, self.axes)]
        if len(self.times) > 1:
            tt = np.clip(np.broadcast_to(np.asarray(t, dtype=np.float64), shape), self.times[0], self.times[-1])
            coords = [tt, *coords]
        pts = np.stack([c.ravel() for c in coords], axis=-1)
        return _as_result(self._interp(pts).reshape(shape), shape)

    def grid_function(self, domain: GridDomain):
        mesh = domain.mesh()
        return lambda t: np.asarray(self.evaluate(t, mesh), dtype=np.float64).reshape(domain.shape)


CoefficientField = Union[Constant, TrigSum, Separable, Tabulated]


def evaluate_coefficient(coeff: CoefficientField, t, x):
    """Value of ``a_i(t, x)``; ``x`` is a coordinate tuple (scalars or arrays)."""
    if np.ndim(x) == 0:
        x = (x,)
    return coeff.evaluate(t, tuple(x))


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    u: float = 1.0
    v: float = 1.0

    kind = "uniform"

    def __post_init__(self):
        if self.u < 0 or self.v < 0:
            raise InvalidSpec("uniform initial values must be nonnegative")


@dataclass(frozen=True)
class CosinePerturbed:
    """``base + amplitude * prod_j cos(k pi x_j / L_j)`` for u, same shape for v."""

    base: float = 1.0
    amplitude: float = 0.5
    mode: int = 1
    v_base: float = 1.0
    v_amplitude: float = 0.0

    kind = "cosine"

    def __post_init__(self):
        if abs(self.amplitude) >= self.base:
            raise InvalidSpec("cosine perturbation amplitude must stay below the base value (u > 0)")
        if abs(self.v_amplitude) > self.v_base:
            raise InvalidSpec("v perturbation amplitude exceeds v_base (v >= 0)")
        if self.mode < 0:
            raise InvalidSpec("mode must be nonnegative")


@dataclass(frozen=True)
class RandomSmooth:
    """Low-mode random cosine sum, rescaled and clipped below so u spans ``[min, max]``."""

    seed: int = 0
    min: float = 0.1
    max: float = 2.0
    v_min: float = 0.0
    v_max: float = 1.0
    modes: int = 4

    kind = "random"

    def __post_init__(self):
        if not (0 < self.min <= self.max):
            raise InvalidSpec("random initial data needs 0 < min <= max")
        if not (0 <= self.v_min <= self.v_max):
            raise InvalidSpec("random initial data needs 0 <= v_min <= v_max")
        if self.modes < 1:
            raise InvalidSpec("modes must be at least 1")


InitialData = Union[Uniform, CosinePerturbed, RandomSmooth]


def _cosine_product(domain: GridDomain, k: int) -> np.ndarray:
    mesh = domain.mesh()
    out = np.ones(domain.shape)
    for xi, L in zip(mesh, domain.lengths):
        out = out * np.cos(k * np.pi * xi / L)
    return out


def _random_mode_field(rng: np.random.Generator, domain: GridDomain, modes: int) -> np.ndarray:
    centers = domain.centers()
    coeffs = rng.standard_normal((modes + 1,) * domain.dimension)
    coeffs.flat[0] = 0.0
    bases = [np.cos(np.outer(np.arange(modes + 1), np.pi * c / L)) for c, L in zip(centers, domain.lengths)]
    if domain.dimension == 1:
        return coeffs @ bases[0]
    return bases[0].T @ coeffs @ bases[1]


def _rescale(g: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = g.max() - g.min()
    if span <= 0:
        return np.full(g.shape, hi)
    return lo + (hi - lo) * (g - g.min()) / span


def make_initial_data(spec: InitialData, domain: GridDomain, t_start: float = 0.0) -> State:
    if isinstance(spec, Uniform):
        return State(t_start, np.full(domain.shape, float(spec.u)), np.full(domain.shape, float(spec.v)))
    if isinstance(spec, CosinePerturbed):
        shape = _cosine_product(domain, spec.mode)
        u = spec.base + spec.amplitude * shape
        v = spec.v_base + spec.v_amplitude * shape
        return State(t_start, u, np.maximum(v, 0.0))
    if isinstance(spec, RandomSmooth):
        rng = np.random.default_rng(spec.seed)
        g = _rescale(_random_mode_field(rng, domain, spec.modes), 0.0, 1.0)
        # stretch below zero before clipping so min is attained on a patch, not just a point
        u = np.clip(spec.min + (spec.max - spec.min) * (1.25 * g - 0.25), spec.min, spec.max)
        h = _random_mode_field(rng, domain, spec.modes)
        v = _rescale(h, spec.v_min, spec.v_max)
        return State(t_start, u, v)
    raise InvalidSpec(f"unknown initial data spec {spec!r}")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


class Scheme(str, enum.Enum):
    IMEX = "imex"
    FULLY_EXPLICIT = "explicit"


@dataclass(frozen=True)
class PersistenceSettings:
    eta_floor: float = 1e-6
    settle_fraction: float = 0.5
    window: float | None = None

    def __post_init__(self):
        if not self.eta_floor > 0:
            raise ConfigError("eta_floor must be positive", field="persistence.eta_floor")
        if not 0 < self.settle_fraction < 1:
            raise ConfigError("settle_fraction must lie in (0, 1)", field="persistence.settle_fraction")
        if self.window is not None and not self.window > 0:
            raise ConfigError("window must be positive", field="persistence.window")


@dataclass(frozen=True)
class CheckSettings:
    """Which standing hypothesis a run is judged against, plus user-supplied regularity constants."""

    hypothesis: str = "h2"
    c_gamma_table: tuple = ()

    def __post_init__(self):
        if self.hypothesis not in ("h1", "h2"):
            raise ConfigError("hypothesis must be 'h1' or 'h2'", field="check.hypothesis")
        object.__setattr__(self, "c_gamma_table", tuple((float(q), float(c)) for q, c in self.c_gamma_table))


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    coeffs: tuple
    domain: GridDomain
    initial: InitialData
    t_start: float = 0.0
    t_end: float = 1.0
    dt_max: float = 0.01
    cfl_safety: float = 0.9
    scheme: Scheme = Scheme.IMEX
    record_every: float = 0.1
    blowup_threshold: float = 1e6
    persistence: PersistenceSettings = field(default_factory=PersistenceSettings)
    check: CheckSettings = field(default_factory=CheckSettings)

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "coeffs", tuple(self.coeffs))
        if len(self.coeffs) != 3:
            raise ConfigError("exactly three coefficients (a0, a1, a2) are required", field="coefficients")
        if self.params.dimension != self.domain.dimension:
            raise ConfigError(
                f"params.dimension={self.params.dimension} but the domain is {self.domain.dimension}D",
                field="params.dimension",
            )
        if not self.t_end >= self.t_start:
            raise ConfigError("time.end must not precede time.start", field="time.end")
        if not self.dt_max > 0:
            raise ConfigError("dt_max must be positive", field="time.dt_max")
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError("cfl_safety must lie in (0, 1]", field="time.cfl_safety")
        if not self.record_every > 0:
            raise ConfigError("record_every must be positive", field="time.record_every")
        if not self.blowup_threshold > 0:
            raise ConfigError("blowup_threshold must be positive", field="time.blowup_threshold")
        for name, coeff in zip(("a0", "a1", "a2"), self.coeffs):
            if isinstance(coeff, Tabulated):
                _check_table_coverage(coeff, self, name)

    @property
    def window(self) -> tuple:
        return (self.t_start, self.t_end)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _check_table_coverage(coeff: Tabulated, config: RunConfig, name: str) -> None:
    for axis, L in zip(coeff.axes, config.domain.lengths):
        if axis[0] > 0 or axis[-1] < L:
            raise ConfigError(f"tabulated {name} does not cover the domain [0, {L}]", field=f"coefficients.{name}")
    if len(coeff.times) > 1 and (coeff.times[0] > config.t_start or coeff.times[-1] < config.t_end):
        raise ConfigError(f"tabulated {name} does not cover the run window", field=f"coefficients.{name}")


def coefficient_grid_functions(coeffs: Sequence[CoefficientField], domain: GridDomain) -> tuple:
    return tuple(c.grid_function(domain) for c in coeffs)
