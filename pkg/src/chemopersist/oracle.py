"""Reference solutions used to validate the IMEX solver.

The brute-force reference is a separate explicit-Euler code on a refined
grid, written without reusing the solver's operators, so agreement between
the two is evidence rather than a tautology.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit
from scipy.integrate import quad

from .config import config_hash
from .core import (
    Constant,
    CosinePerturbed,
    GridDomain,
    ModelParams,
    RunConfig,
    Scheme,
    State,
    Uniform,
    make_initial_data,
)
from .diagnostics import Classification, RunRecord, RunStats, snapshot
from .errors import BudgetExceeded, PositivityViolation, PreconditionViolated
from .hypothesis import logistic_solution

GOLDEN_PATH = Path(__file__).with_name("data") / "goldens.json"
MAX_REFINED_CELLS = 2**18


# ---------------------------------------------------------------------------
# analytic solutions
# ---------------------------------------------------------------------------


def heat_eigenmode_solution(k, t: float, domain: GridDomain) -> np.ndarray:
    """Neumann heat eigenmode ``exp(-|k pi / L|^2 t) prod cos(k_j pi x_j / L_j)`` on cell centers.

    In 2D pass one mode number per axis; a scalar ``k`` excites only the first axis.
    """
    ks = tuple(np.atleast_1d(k).astype(int))
    ks = ks + (0,) * (domain.dimension - len(ks))
    out = np.ones(domain.shape)
    rate = 0.0
    for kj, xj, L in zip(ks, domain.mesh(), domain.lengths):
        out = out * np.cos(kj * np.pi * xj / L)
        rate += (kj * np.pi / L) ** 2
    return math.exp(-rate * t) * out


def decoupled_homogeneous_solution(
    params: ModelParams,
    coeffs,
    u0: float,
    v0: float,
    t: float,
    domain: GridDomain | None = None,
) -> tuple:
    """Spatially uniform solution of the ``chi = 0`` system with constant coefficients.

    ``u`` is the closed-form logistic curve; ``v`` is obtained from the
    integrating factor, with the remaining integral done by adaptive quadrature.
    """
    if params.chi != 0:
        raise PreconditionViolated("the decoupled solution needs chi = 0")
    if not all(c.is_constant for c in coeffs):
        raise PreconditionViolated("the decoupled solution needs constant coefficients")
    measure = domain.measure if domain is not None else 1.0
    a0, a1, a2 = (float(c.evaluate(0.0, (0.0,) * (domain.dimension if domain else 1))) for c in coeffs)
    crowding = a1 + a2 * measure
    if not crowding > 0:
        raise PreconditionViolated("a1 + a2 |Omega| must be positive")
    if u0 < 0 or v0 < 0 or t < 0:
        raise PreconditionViolated("needs u0, v0 >= 0 and t >= 0")
    u_t = logistic_solution(u0, a0, crowding, t)
    rate = params.lambda_ / params.tau
    integral, _ = quad(
        lambda s: math.exp(-rate * (t - s)) * logistic_solution(u0, a0, crowding, s),
        0.0,
        t,
        epsabs=1e-13,
        epsrel=1e-10,
        limit=200,
    )
    v_t = v0 * math.exp(-rate * t) + params.mu / params.tau * integral
    return float(u_t), float(v_t)


# ---------------------------------------------------------------------------
# brute-force explicit reference
# ---------------------------------------------------------------------------


@njit(cache=True)
def _euler_1d(u, v, a0, a1, a2, chi, tau, lam, mu, h, dt, nsteps):
    n = u.size
    un = np.empty(n)
    vn = np.empty(n)
    flux = np.zeros(n + 1)
    for _ in range(nsteps):
        mass = 0.0
        for i in range(n):
            mass += u[i]
        mass *= h
        for i in range(n - 1):
            w = chi * (v[i + 1] - v[i]) / h
            flux[i + 1] = w * u[i] if w > 0 else w * u[i + 1]
        for i in range(n):
            il = i - 1 if i > 0 else i
            ir = i + 1 if i < n - 1 else i
            lap_u = (u[il] - 2.0 * u[i] + u[ir]) / (h * h)
            lap_v = (v[il] - 2.0 * v[i] + v[ir]) / (h * h)
            growth = a0[i] - a1[i] * u[i] - a2[i] * mass
            un[i] = u[i] + dt * (lap_u - (flux[i + 1] - flux[i]) / h + u[i] * growth)
            vn[i] = v[i] + dt / tau * (lap_v - lam * v[i] + mu * u[i])
        u, un = un, u
        v, vn = vn, v
    return u.copy(), v.copy()


@njit(cache=True)
def _euler_2d(u, v, a0, a1, a2, chi, tau, lam, mu, hx, hy, dt, nsteps):
    nx, ny = u.shape
    un = np.empty((nx, ny))
    vn = np.empty((nx, ny))
    fx = np.zeros((nx + 1, ny))
    fy = np.zeros((nx, ny + 1))
    for _ in range(nsteps):
        mass = 0.0
        for i in range(nx):
            for j in range(ny):
                mass += u[i, j]
        mass *= hx * hy
        for i in range(nx - 1):
            for j in range(ny):
                w = chi * (v[i + 1, j] - v[i, j]) / hx
                fx[i + 1, j] = w * u[i, j] if w > 0 else w * u[i + 1, j]
        for i in range(nx):
            for j in range(ny - 1):
                w = chi * (v[i, j + 1] - v[i, j]) / hy
                fy[i, j + 1] = w * u[i, j] if w > 0 else w * u[i, j + 1]
        for i in range(nx):
            il = i - 1 if i > 0 else i
            ir = i + 1 if i < nx - 1 else i
            for j in range(ny):
                jl = j - 1 if j > 0 else j
                jr = j + 1 if j < ny - 1 else j
                lap_u = (u[il, j] - 2.0 * u[i, j] + u[ir, j]) / (hx * hx) + (
                    u[i, jl] - 2.0 * u[i, j] + u[i, jr]
                ) / (hy * hy)
                lap_v = (v[il, j] - 2.0 * v[i, j] + v[ir, j]) / (hx * hx) + (
                    v[i, jl] - 2.0 * v[i, j] + v[i, jr]
                ) / (hy * hy)
                div = (fx[i + 1, j] - fx[i, j]) / hx + (fy[i, j + 1] - fy[i, j]) / hy
                growth = a0[i, j] - a1[i, j] * u[i, j] - a2[i, j] * mass
                un[i, j] = u[i, j] + dt * (lap_u - div + u[i, j] * growth)
                vn[i, j] = v[i, j] + dt / tau * (lap_v - lam * v[i, j] + mu * u[i, j])
        u, un = un, u
        v, vn = vn, v
    return u.copy(), v.copy()


def restrict(field: np.ndarray, factor: int) -> np.ndarray:
    """Average ``factor``-sized blocks of cells (fine grid to coarse grid)."""
    factor = int(factor)
    if factor == 1:
        return np.array(field, dtype=np.float64)
    if field.ndim == 1:
        return field.reshape(-1, factor).mean(axis=1)
    nx, ny = field.shape
    return field.reshape(nx // factor, factor, ny // factor, factor).mean(axis=(1, 3))


def brute_force_reference(
    config: RunConfig,
    refine_space: int = 4,
    refine_time: float = 1.0 / 64.0,
) -> RunRecord:
    """Explicit Euler on a ``refine_space``-times finer grid, restricted back by cell averaging.

    The step is ``refine_time`` times the explicit diffusion limit of the fine grid.
    """
    fine = config.domain.refined(refine_space)
    if int(np.prod(fine.cells)) > MAX_REFINED_CELLS:
        raise BudgetExceeded(f"refined grid has {int(np.prod(fine.cells))} cells, limit {MAX_REFINED_CELLS}")
    params = config.params
    n = fine.dimension
    h_min = min(fine.spacing)
    dt_base = refine_time * h_min * h_min / (2.0 * n) * min(1.0, params.tau)

    state = make_initial_data(config.initial, fine, config.t_start)
    u = np.array(state.u)
    v = np.array(state.v)
    grid_fns = [c.grid_function(fine) for c in config.coeffs]
    autonomous = all(c.is_autonomous for c in config.coeffs)

    def advance(u, v, t, dt, nsteps):
        a = [np.ascontiguousarray(f(t)) for f in grid_fns]
        args = (params.chi, params.tau, params.lambda_, params.mu)
        if n == 1:
            return _euler_1d(u, v, a[0], a[1], a[2], *args, fine.spacing[0], dt, nsteps)
        return _euler_2d(u, v, a[0], a[1], a[2], *args, fine.spacing[0], fine.spacing[1], dt, nsteps)

    def coarse(t, u, v):
        return State(t, restrict(u, refine_space), restrict(v, refine_space))

    snapshots = [snapshot(coarse(config.t_start, u, v), config.domain)]
    stats = RunStats()
    t = config.t_start
    if config.t_end > config.t_start:
        times = []
        k = 1
        while config.t_start + k * config.record_every < config.t_end - 1e-12 * max(1.0, abs(config.t_end)):
            times.append(config.t_start + k * config.record_every)
            k += 1
        times.append(config.t_end)
        for target in times:
            nsteps = max(1, math.ceil((target - t) / dt_base))
            dt = (target - t) / nsteps
            if autonomous:
                u, v = advance(u, v, t, dt, nsteps)
            else:
                for s in range(nsteps):
                    u, v = advance(u, v, t + s * dt, dt, 1)
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise PositivityViolation("explicit reference produced non-finite values")
            if u.min() < -1e-12 * max(1.0, abs(u).max()) or v.min() < -1e-12 * max(1.0, abs(v).max()):
                raise PositivityViolation("explicit reference lost positivity; reduce refine_time")
            t = target
            stats.steps += nsteps
            stats.dt_min = min(stats.dt_min, dt)
            stats.dt_max = max(stats.dt_max, dt)
            snapshots.append(snapshot(coarse(t, np.maximum(u, 0.0), np.maximum(v, 0.0)), config.domain))
    final = coarse(t, np.maximum(u, 0.0), np.maximum(v, 0.0))
    stats.min_u = float(final.u.min())
    stats.min_v = float(final.v.min())
    return RunRecord(
        config_hash=config_hash(config),
        t_start=config.t_start,
        t_end=config.t_end,
        snapshots=snapshots,
        classification=Classification("Undetermined"),
        final_state=final,
        stats=stats,
    )


# ---------------------------------------------------------------------------
# oracle cases and golden values
# ---------------------------------------------------------------------------


def _norm(diff: np.ndarray, domain: GridDomain, kind: str) -> float:
    if kind == "sup":
        return float(np.max(np.abs(diff)))
    if kind == "L2":
        return float(np.sqrt(np.sum(diff * diff) * domain.cell_volume))
    if kind == "mass":
        return float(abs(np.sum(diff) * domain.cell_volume))
    raise ValueError(f"unknown norm {kind!r}")


@dataclass
class OracleCase:
    """A configuration, a trusted answer at ``t_end`` and the allowed error.

    ``exact(t, domain)`` returns the reference ``u`` field or a ``(u, v)`` pair.
    ``solver`` produces the run under test (the IMEX solver unless stated).
    The measured error is divided by ``scale`` before comparison.
    """

    name: str
    config: RunConfig
    exact: Callable
    tolerance: float
    norm: str = "sup"
    scale: float = 1.0
    solver: Callable | None = None

    def error(self) -> float:
        from .solver import simulate

        run = (self.solver or simulate)(self.config)
        ref = self.exact(self.config.t_end, self.config.domain)
        pairs = [(run.final_state.u, ref)] if not isinstance(ref, tuple) else list(
            zip((run.final_state.u, run.final_state.v), ref)
        )
        return max(_norm(a - np.asarray(b), self.config.domain, self.norm) for a, b in pairs) / self.scale


@dataclass
class OracleResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    golden: float | None = None
    messages: list = field(default_factory=list)

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status}  {self.name}: error {self.error:.3e} (tolerance {self.tolerance:.1e})"
        return "; ".join([text, *self.messages])


def _linear_config(cells: int, t_end: float, dt_max: float) -> RunConfig:
    zero = Constant(0.0)
    return RunConfig(
        params=ModelParams(chi=0.0),
        coeffs=(zero, zero, zero),
        domain=GridDomain((1.0,), (cells,)),
        initial=CosinePerturbed(base=1.0, amplitude=0.5, mode=1, v_base=1.0, v_amplitude=0.0),
        t_end=t_end,
        dt_max=dt_max,
        cfl_safety=1.0,
        record_every=t_end,
    )


def heat_case() -> OracleCase:
    t_end = 0.1
    return OracleCase(
        name="heat_eigenmode",
        config=_linear_config(128, t_end, 1e-4),
        exact=lambda t, d: 1.0 + 0.5 * heat_eigenmode_solution(1, t, d),
        tolerance=0.01,
        scale=0.5 * math.exp(-math.pi**2 * t_end),
    )


def decoupled_config(cells: int = 32, t_end: float = 20.0) -> RunConfig:
    return RunConfig(
        params=ModelParams(chi=0.0),
        coeffs=(Constant(1.0), Constant(1.0), Constant(0.0)),
        domain=GridDomain((1.0,), (cells,)),
        initial=Uniform(2.0, 0.0),
        t_end=t_end,
        dt_max=0.01,
        record_every=0.5,
    )


def decoupled_case() -> OracleCase:
    cfg = decoupled_config()

    def exact(t, d):
        u, v = decoupled_homogeneous_solution(cfg.params, cfg.coeffs, 2.0, 0.0, t, d)
        return (np.full(d.shape, u), np.full(d.shape, v))

    return OracleCase(name="decoupled_logistic", config=cfg, exact=exact, tolerance=1e-6)


def brute_heat_case() -> OracleCase:
    return OracleCase(
        name="brute_force_heat",
        config=_linear_config(128, 0.1, 1e-4),
        exact=lambda t, d: 1.0 + 0.5 * heat_eigenmode_solution(1, t, d),
        tolerance=1e-4,
        solver=lambda cfg: brute_force_reference(cfg, refine_space=2),
    )


def smoke_config(cells: int = 64, t_end: float = 1.0, dt_max: float = 0.01) -> RunConfig:
    """chi = 1 with constant coefficients satisfying the convex-domain hypothesis in 1D."""
    return RunConfig(
        params=ModelParams(chi=1.0, tau=1.0, lambda_=1.0, mu=1.0),
        coeffs=(Constant(1.0), Constant(1.0), Constant(0.0)),
        domain=GridDomain((1.0,), (cells,)),
        initial=CosinePerturbed(base=1.0, amplitude=0.5, mode=1, v_base=1.0, v_amplitude=0.5),
        t_end=t_end,
        dt_max=dt_max,
        record_every=t_end / 10.0 if t_end > 0 else 0.1,
    )


SMOKE_REFINE_TIME = 1.0 / 16.0


def smoke_case() -> OracleCase:
    cfg = smoke_config()

    @lru_cache(maxsize=1)
    def reference():
        return brute_force_reference(cfg, refine_space=4, refine_time=SMOKE_REFINE_TIME).final_state

    def exact(t, d):
        ref = reference()
        return (ref.u, ref.v)

    return OracleCase(name="smoke_vs_reference", config=cfg, exact=exact, tolerance=1e-2)


def oracle_cases() -> list:
    return [heat_case(), decoupled_case(), brute_heat_case(), smoke_case()]


def golden_tolerance(value: float) -> float:
    return max(1e-12, 1e-6 * abs(value))


def load_goldens(path=None) -> dict:
    path = Path(path or GOLDEN_PATH)
    if not path.exists():
        return {}
    records = json.loads(path.read_text())
    return {r["case"]: r for r in records}


def write_goldens(records: list, path=None) -> None:
    path = Path(path or GOLDEN_PATH)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(records, indent=2) + "\n")


def run_oracle_suite(cases=None, goldens_path=None, regenerate: bool = False) -> list:
    """Evaluate every case against its exact answer and its frozen golden value.

    With ``regenerate`` the golden file is rewritten and each result carries a
    message describing the change.
    """
    cases = oracle_cases() if cases is None else cases
    goldens = load_goldens(goldens_path)
    results, new_records = [], []
    for case in cases:
        err = case.error()
        h = config_hash(case.config)
        res = OracleResult(case.name, err, case.tolerance, passed=err <= case.tolerance)
        if not res.passed:
            res.messages.append(f"error {err:.3e} exceeds tolerance {case.tolerance:.3e}")
        rec = {"case": case.name, "config_hash": h, "quantity": "error", "value": err,
               "tolerance": golden_tolerance(err)}
        new_records.append(rec)
        old = goldens.get(case.name)
        if regenerate:
            if old is None:
                res.messages.append(f"golden created: {err:.17g}")
            elif old["value"] != err or old["config_hash"] != h:
                res.messages.append(f"golden changed: {old['value']:.17g} -> {err:.17g}")
            res.golden = err
        elif old is None:
            res.passed = False
            res.messages.append("no golden value recorded")
        else:
            res.golden = old["value"]
            if old["config_hash"] != h:
                res.passed = False
                res.messages.append("golden config hash does not match the case configuration")
            if abs(err - old["value"]) > old["tolerance"]:
                res.passed = False
                res.messages.append(f"golden mismatch: measured {err:.17g}, recorded {old['value']:.17g}")
        results.append(res)
    if regenerate:
        write_goldens(new_records, goldens_path)
    return results
