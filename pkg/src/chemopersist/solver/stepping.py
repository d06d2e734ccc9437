"""Time stepping: step-size control, IMEX / explicit steps and the run loop.

Per IMEX step, in this order:

1. explicit upwind chemotaxis and logistic reaction for ``u``, with the
   nonlocal mass frozen at the start of the step;
2. backward-Euler diffusion for ``u`` (tridiagonal in 1D, two directional
   tridiagonal sweeps in 2D);
3. ``(tau/dt + lambda - Laplacian) v_new = (tau/dt) v_old + mu u_new``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import solve_banded

from ..config import config_hash
from ..core import GridDomain, ModelParams, RunConfig, Scheme, State, make_initial_data
from ..diagnostics import (
    CONVERGED_TOL,
    BoundChecks,
    Classification,
    RunRecord,
    RunStats,
    bound_check,
    persistence_verdict,
    snapshot,
    tail_start,
)
from ..errors import DegenerateDenominator, HypothesisViolated, InsufficientTail, NonFiniteValue, PositivityViolation
from ..hypothesis import constant_coeff_steady_state, mass_bound_m_tilde
from .operators import chemotaxis_divergence, laplacian_neumann, max_face_speed, nonlocal_mass

CLAMP_TOL = 1e-13
DT_COLLAPSE = 1e-12
_EPS = np.finfo(np.float64).eps


def _neumann_banded(n: int, r: float) -> np.ndarray:
    """Banded storage of ``I - r * D2`` with reflected-ghost Neumann rows."""
    ab = np.empty((3, n))
    ab[0, :] = -r
    ab[2, :] = -r
    ab[1, :] = 1.0 + 2.0 * r
    ab[1, 0] = ab[1, -1] = 1.0 + r
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    return ab


class StencilWorkspace:
    """Per-run cache: coefficient evaluators on the grid and banded diffusion matrices."""

    def __init__(self, domain: GridDomain, coeffs: Sequence):
        self.domain = domain
        self.coeffs = tuple(coeffs)
        self._grid_fns = tuple(c.grid_function(domain) for c in self.coeffs)
        self._constant = all(c.is_autonomous for c in self.coeffs)
        self._coeff_cache = None
        self._banded = {}

    def coefficient_values(self, t: float) -> tuple:
        if self._constant:
            if self._coeff_cache is None:
                self._coeff_cache = tuple(f(t) for f in self._grid_fns)
            return self._coeff_cache
        return tuple(f(t) for f in self._grid_fns)

    def banded(self, axis: int, r: float) -> np.ndarray:
        key = (axis, r)
        ab = self._banded.get(key)
        if ab is None:
            if len(self._banded) > 16:
                self._banded.clear()
            ab = _neumann_banded(self.domain.cells[axis], r)
            self._banded[key] = ab
        return ab

    def implicit_diffusion(self, rhs: np.ndarray, s: float) -> np.ndarray:
        """Solve ``(I - s Dxx)(I - s Dyy) f = rhs`` (exactly ``I - s Lap`` in 1D)."""
        f = np.asarray(rhs, dtype=np.float64)
        for axis, h in enumerate(self.domain.spacing):
            ab = self.banded(axis, s / (h * h))
            if f.ndim == 1:
                f = solve_banded((1, 1), ab, f)
            else:
                moved = np.moveaxis(f, axis, 0)
                solved = solve_banded((1, 1), ab, np.ascontiguousarray(moved))
                f = np.ascontiguousarray(np.moveaxis(solved, 0, axis))
        return f


@dataclass(frozen=True)
class StepOutcome:
    state: State
    dt_used: float
    flags: frozenset
    most_negative_u: float = 0.0
    most_negative_v: float = 0.0
    clamped: int = 0


def _rates(state: State, domain: GridDomain, params: ModelParams, values, scheme: Scheme):
    a0, a1, a2 = values
    u = state.u
    inv_h2 = sum(1.0 / (h * h) for h in domain.spacing)
    advective = sum(2.0 * w / h for w, h in zip(max_face_speed(state.v, domain, params.chi), domain.spacing))
    reaction = (
        float(np.max(np.abs(a0)))
        + float(np.max(np.abs(a1))) * float(u.max())
        + float(np.max(np.abs(a2))) * nonlocal_mass(u, domain)
    )
    rate_u = advective + reaction
    rate_v = 0.0
    if scheme == Scheme.FULLY_EXPLICIT:
        rate_u += 2.0 * inv_h2
        rate_v = (2.0 * inv_h2 + params.lambda_) / params.tau
    return rate_u, rate_v


def stable_dt(
    state: State,
    domain: GridDomain,
    params: ModelParams,
    coeffs,
    t: float,
    dt_max: float,
    cfl_safety: float,
    scheme: Scheme = Scheme.IMEX,
    workspace: StencilWorkspace | None = None,
) -> float:
    """Largest step keeping the explicit part of the update monotone.

    Every explicit contribution (upwind outflow through all faces, logistic
    loss and, for the fully explicit scheme, diffusion) is summed into one
    rate per unknown, so the cell's own coefficient stays nonnegative when
    ``dt * rate <= 1``.
    """
    ws = workspace or StencilWorkspace(domain, coeffs)
    rate_u, rate_v = _rates(state, domain, params, ws.coefficient_values(t), Scheme(scheme))
    limit = dt_max
    for rate in (rate_u, rate_v):
        if rate > _EPS:
            limit = min(limit, 1.0 / rate)
    return cfl_safety * limit


def _enforce_positivity(f: np.ndarray, name: str):
    if not np.all(np.isfinite(f)):
        raise NonFiniteValue(f"non-finite values in {name}")
    lowest = float(f.min())
    if lowest >= 0.0:
        return f, 0.0, 0
    scale = max(float(np.max(np.abs(f))), np.finfo(np.float64).tiny)
    if lowest < -CLAMP_TOL * scale:
        raise PositivityViolation(f"{name} undershoot {lowest:.3e} exceeds roundoff tolerance")
    mask = f < 0
    f = np.where(mask, 0.0, f)
    return f, lowest, int(mask.sum())


def step(
    state: State,
    t: float,
    dt: float,
    params: ModelParams,
    coeffs,
    domain: GridDomain,
    scheme: Scheme = Scheme.IMEX,
    workspace: StencilWorkspace | None = None,
    blowup_threshold: float = 1e6,
) -> StepOutcome:
    ws = workspace or StencilWorkspace(domain, coeffs)
    a0, a1, a2 = ws.coefficient_values(t)
    u, v = state.u, state.v
    mass = nonlocal_mass(u, domain)
    explicit = chemotaxis_divergence(u, v, domain, params.chi) + u * (a0 - a1 * u - a2 * mass)

    if Scheme(scheme) == Scheme.IMEX:
        u_star, neg_u, clamped = _enforce_positivity(u + dt * explicit, "u")
        u_new = ws.implicit_diffusion(u_star, dt)
        alpha = params.tau / dt + params.lambda_
        v_new = ws.implicit_diffusion((params.tau / dt * v + params.mu * u_new) / alpha, 1.0 / alpha)
    else:
        u_new = u + dt * (laplacian_neumann(u, domain) + explicit)
        v_new = v + dt / params.tau * (laplacian_neumann(v, domain) - params.lambda_ * v + params.mu * u)
        neg_u, clamped = 0.0, 0

    u_new, neg_u2, c2 = _enforce_positivity(u_new, "u")
    v_new, neg_v, c3 = _enforce_positivity(v_new, "v")
    flags = {"ok"}
    if float(u_new.max()) > blowup_threshold:
        flags = {"blowup_detected"}
    return StepOutcome(
        state=State(t + dt, u_new, v_new),
        dt_used=dt,
        flags=frozenset(flags),
        most_negative_u=min(neg_u, neg_u2),
        most_negative_v=neg_v,
        clamped=clamped + c2 + c3,
    )


def _record_times(t_start: float, t_end: float, every: float) -> list:
    times = []
    k = 1
    while True:
        t = t_start + k * every
        if t >= t_end - 1e-12 * max(1.0, abs(t_end)):
            break
        times.append(t)
        k += 1
    times.append(t_end)
    return times


def simulate(
    config: RunConfig, monitors: Iterable[Callable] = (), initial_state: State | None = None
) -> RunRecord:
    """Integrate from ``t_start`` to ``t_end`` and classify the outcome.

    ``monitors`` are called as ``monitor(snapshot, state)`` at every record time.
    ``initial_state`` replaces the data generated from ``config.initial``.
    """
    domain, params = config.domain, config.params
    monitors = list(monitors)
    ws = StencilWorkspace(domain, config.coeffs)
    if initial_state is None:
        initial_state = make_initial_data(config.initial, domain, config.t_start)
    elif initial_state.u.shape != domain.shape or initial_state.v.shape != domain.shape:
        raise ValueError(f"initial state shape does not match the grid {domain.shape}")
    state = initial_state = initial_state.with_time(config.t_start)
    initial_mass = nonlocal_mass(state.u, domain)
    stats = RunStats(min_u=float(state.u.min()), min_v=float(state.v.min()))

    def record(s: State):
        snap = snapshot(s, domain)
        snapshots.append(snap)
        for monitor in monitors:
            monitor(snap, s)

    snapshots = []
    record(state)
    t_blow = config.t_start if float(state.u.max()) > config.blowup_threshold else None

    if t_blow is None and config.t_end > config.t_start:
        targets = _record_times(config.t_start, config.t_end, config.record_every)
        t = config.t_start
        for target in targets:
            while t < target:
                dt_stable = stable_dt(
                    state, domain, params, config.coeffs, t, config.dt_max, config.cfl_safety, config.scheme, ws
                )
                if dt_stable < DT_COLLAPSE:
                    t_blow = t
                    break
                landing = target - t <= dt_stable
                dt = target - t if landing else dt_stable
                if dt_stable < config.cfl_safety * config.dt_max:
                    stats.dt_reduced += 1
                outcome = step(
                    state, t, dt, params, config.coeffs, domain, config.scheme, ws, config.blowup_threshold
                )
                t = target if landing else t + dt
                state = outcome.state.with_time(t)
                stats.steps += 1
                stats.dt_min = min(stats.dt_min, dt)
                stats.dt_max = max(stats.dt_max, dt)
                stats.most_negative_u = min(stats.most_negative_u, outcome.most_negative_u)
                stats.most_negative_v = min(stats.most_negative_v, outcome.most_negative_v)
                stats.clamped_cells += outcome.clamped
                stats.min_u = min(stats.min_u, float(state.u.min()))
                stats.min_v = min(stats.min_v, float(state.v.min()))
                if "blowup_detected" in outcome.flags:
                    t_blow = t
                    break
            if t_blow is not None:
                record(state)
                break
            record(state)

    classification, bounds_checked = _classify(config, snapshots, state, t_blow, initial_mass, initial_state)
    return RunRecord(
        config_hash=config_hash(config),
        t_start=config.t_start,
        t_end=config.t_end,
        snapshots=snapshots,
        classification=classification,
        final_state=state,
        bound_checks=bounds_checked,
        stats=stats,
    )


def _steady_distance(state: State, steady) -> float:
    u_star, v_star = steady
    return float(max(np.max(np.abs(state.u - u_star)), np.max(np.abs(state.v - v_star))))


def _classify(config: RunConfig, snapshots, state: State, t_blow, initial_mass: float, initial: State):
    if t_blow is not None:
        return Classification("BlowUp", t_blow=t_blow), None
    window = (config.t_start, config.t_end)
    checks: BoundChecks | None = None
    try:
        bounds = mass_bound_m_tilde(config.coeffs, config.domain, window, params=config.params)
    except HypothesisViolated:
        bounds = None
    if bounds is not None:
        checks = bound_check(
            snapshots,
            bounds,
            lambda t: bounds.envelope(initial_mass, t - config.t_start),
            tail_start(config.persistence, config.t_start, config.t_end),
        )
    if config.t_end == config.t_start:
        return Classification("Undetermined"), checks

    # "Converged" means the run travelled to the steady state; data that
    # already sits there is judged on persistence alone.
    steady_error = None
    if all(c.is_constant for c in config.coeffs):
        try:
            steady = constant_coeff_steady_state(config.params, config.coeffs, config.domain)
        except DegenerateDenominator:
            steady = None
        if steady is not None and _steady_distance(initial, steady) >= CONVERGED_TOL:
            steady_error = _steady_distance(state, steady)
    try:
        verdict = persistence_verdict(
            snapshots, config.persistence, config.t_start, config.t_end, steady_error=steady_error
        )
    except InsufficientTail:
        verdict = Classification("Undetermined")
    return verdict, checks
