"""Coefficient extrema, the standing hypotheses and the closed-form bounds.

Extrema over continuous ``(t, x)`` are approximated by exhaustive sampling on
the closed grid (cell faces and centers, boundary included) times a uniform
set of time samples.  For constant fields the result is exact.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import CoefficientField, GridDomain, ModelParams
from .errors import (
    DegenerateDenominator,
    EmptyConstantTable,
    HypothesisViolated,
    InvalidSpec,
    NotConstantCoefficients,
)

DEFAULT_TIME_SAMPLES = 257


@dataclass(frozen=True, eq=False)
class CoefficientExtrema:
    a_inf: float
    a_sup: float
    times: np.ndarray
    a_inf_t: np.ndarray
    a_sup_t: np.ndarray
    n_time_samples: int
    n_space_points: int

    def inf_at(self, t: float) -> float:
        """Spatial infimum at the sample time nearest to ``t``."""
        return float(self.a_inf_t[np.abs(self.times - t).argmin()])


def _time_samples(coeffs: Sequence[CoefficientField], window, n_time_samples: int) -> np.ndarray:
    t_a, t_b = (float(w) for w in window)
    if not (math.isfinite(t_a) and math.isfinite(t_b)) or t_b < t_a:
        raise InvalidSpec(f"invalid time window {window}")
    if all(c.is_autonomous for c in coeffs) or t_b == t_a:
        return np.array([t_a])
    if n_time_samples < 2:
        raise InvalidSpec("non-autonomous coefficients need at least 2 time samples")
    return np.linspace(t_a, t_b, n_time_samples)


def coefficient_extrema(
    coeff: CoefficientField,
    domain: GridDomain,
    window=(0.0, 0.0),
    n_time_samples: int = DEFAULT_TIME_SAMPLES,
    times: np.ndarray | None = None,
) -> CoefficientExtrema:
    if times is None:
        times = _time_samples([coeff], window, n_time_samples)
    if coeff.is_constant:
        value = float(coeff.evaluate(float(times[0]), tuple(0.5 * L for L in domain.lengths)))
        ones = np.ones(len(times))
        return CoefficientExtrema(value, value, np.asarray(times), value * ones, value * ones, len(times), 1)

    mesh = tuple(np.meshgrid(*domain.closed_points(), indexing="ij"))
    lo = np.empty(len(times))
    hi = np.empty(len(times))
    if coeff.is_autonomous:
        values = np.asarray(coeff.evaluate(float(times[0]), mesh))
        lo[:] = values.min()
        hi[:] = values.max()
    else:
        for i, t in enumerate(times):
            values = np.asarray(coeff.evaluate(float(t), mesh))
            lo[i] = values.min()
            hi[i] = values.max()
    return CoefficientExtrema(
        float(lo.min()), float(hi.max()), np.asarray(times), lo, hi, len(times), int(mesh[0].size)
    )


def _negative_part(a):
    return np.maximum(-np.asarray(a), 0.0)


@dataclass
class HypothesisReport:
    which: str
    satisfied: bool
    margin_local: float
    margin_nonlocal: float
    notes: list = field(default_factory=list)
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _all_extrema(coeffs, domain, window, n_time_samples):
    times = _time_samples(coeffs, window, n_time_samples)
    return [coefficient_extrema(c, domain, times=times) for c in coeffs]


def nonlocal_margin(coeffs, domain: GridDomain, window, n_time_samples: int = DEFAULT_TIME_SAMPLES) -> float:
    """``inf_t (a1_inf(t) - |Omega| (a2_inf(t))_-)`` over the sampled window."""
    _, e1, e2 = _all_extrema(coeffs, domain, window, n_time_samples)
    return _nonlocal_margin(e1, e2, domain)


def _nonlocal_margin(e1: CoefficientExtrema, e2: CoefficientExtrema, domain: GridDomain) -> float:
    return float(np.min(e1.a_inf_t - domain.measure * _negative_part(e2.a_inf_t)))


def _common_notes(params, extrema, window):
    notes = []
    e0 = extrema[0]
    if e0.a_inf <= 0:
        notes.append(
            f"a0_inf = {e0.a_inf:.6g} <= 0: pointwise persistence additionally relies on a positive growth rate"
        )
    if extrema[0].n_time_samples > 1 or any(e.n_space_points > 1 for e in extrema):
        notes.append(
            f"extrema sampled on the closed grid over t in [{window[0]}, {window[1]}]; "
            "accurate up to the coefficients' modulus of continuity"
        )
    return notes


def _echo(params: ModelParams, domain: GridDomain, window, extrema) -> dict:
    return {
        "chi": params.chi,
        "tau": params.tau,
        "lambda": params.lambda_,
        "mu": params.mu,
        "dimension": params.dimension,
        "measure": domain.measure,
        "window": [float(window[0]), float(window[1])],
        "a_inf": [e.a_inf for e in extrema],
        "a_sup": [e.a_sup for e in extrema],
    }


def check_h2(
    params: ModelParams,
    coeffs,
    domain: GridDomain,
    window=(0.0, 0.0),
    n_time_samples: int = DEFAULT_TIME_SAMPLES,
) -> HypothesisReport:
    extrema = _all_extrema(coeffs, domain, window, n_time_samples)
    n = domain.dimension
    margin_local = extrema[1].a_inf - n * params.mu * abs(params.chi) / 4.0
    margin_nonlocal = _nonlocal_margin(extrema[1], extrema[2], domain)
    notes = _common_notes(params, extrema, window)
    tau_ok = params.tau == 1.0
    if not tau_ok:
        notes.append(f"H2 precondition tau = 1 unmet (tau = {params.tau:g}); the solver still runs")
    notes.append("rectangular domain: convexity holds")
    return HypothesisReport(
        which="H2",
        satisfied=bool(tau_ok and margin_local > 0 and margin_nonlocal > 0),
        margin_local=float(margin_local),
        margin_nonlocal=margin_nonlocal,
        notes=notes,
        inputs=_echo(params, domain, window, extrema),
    )


def h1_threshold(params: ModelParams, dimension: int, c_gamma_table) -> float:
    """Smallest ``((q-1)/q) C_{q+1}^{1/(q+1)} mu^{1/(q+1)} |chi|`` over the supplied pairs."""
    if not c_gamma_table:
        raise EmptyConstantTable(
            "H1 needs user-supplied maximal-regularity constants as (q, C_{q+1}) pairs"
        )
    q_min = max(1.0, dimension / 2.0)
    values = []
    for q, c in c_gamma_table:
        if not q > q_min:
            raise InvalidSpec(f"every q must exceed max(1, n/2) = {q_min:g}, got {q}")
        if not c > 0:
            raise InvalidSpec(f"C_(q+1) must be positive, got {c}")
        values.append((q - 1.0) / q * c ** (1.0 / (q + 1.0)) * params.mu ** (1.0 / (q + 1.0)) * abs(params.chi))
    return float(min(values))


def check_h1(
    params: ModelParams,
    coeffs,
    domain: GridDomain,
    window=(0.0, 0.0),
    c_gamma_table=(),
    n_time_samples: int = DEFAULT_TIME_SAMPLES,
) -> HypothesisReport:
    threshold = h1_threshold(params, domain.dimension, c_gamma_table)
    extrema = _all_extrema(coeffs, domain, window, n_time_samples)
    margin_local = extrema[1].a_inf - threshold
    margin_nonlocal = _nonlocal_margin(extrema[1], extrema[2], domain)
    notes = _common_notes(params, extrema, window)
    notes.append(
        "C_(q+1) values are user supplied (maximal Sobolev regularity constants are not computed here); "
        "the infimum over q is taken over the finite table, so a negative verdict may be a false negative"
    )
    inputs = _echo(params, domain, window, extrema)
    inputs["c_gamma_table"] = [list(p) for p in c_gamma_table]
    inputs["threshold"] = threshold
    return HypothesisReport(
        which="H1",
        satisfied=bool(margin_local > 0 and margin_nonlocal > 0),
        margin_local=float(margin_local),
        margin_nonlocal=margin_nonlocal,
        notes=notes,
        inputs=inputs,
    )


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


@dataclass
class TheoreticalBounds:
    m_tilde_1: float
    m1: float
    a0_sup: float
    c_nonlocal: float
    measure: float
    steady_state: tuple | None = None

    @property
    def capacity(self) -> float:
        return self.m_tilde_1

    def envelope(self, m0: float, t):
        return logistic_solution(m0, self.a0_sup, self.c_nonlocal / self.measure, t)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["steady_state"] = list(self.steady_state) if self.steady_state is not None else None
        return d


def mass_bound_m_tilde(
    coeffs,
    domain: GridDomain,
    window=(0.0, 0.0),
    params: ModelParams | None = None,
    n_time_samples: int = DEFAULT_TIME_SAMPLES,
) -> TheoreticalBounds:
    e0, e1, e2 = _all_extrema(coeffs, domain, window, n_time_samples)
    c = _nonlocal_margin(e1, e2, domain)
    if not c > 0:
        raise HypothesisViolated(f"nonlocal margin {c:.6g} <= 0: the mass bound is undefined")
    m_tilde = domain.measure * e0.a_sup / c
    steady = None
    if params is not None and all(k.is_constant for k in coeffs):
        try:
            steady = constant_coeff_steady_state(params, coeffs, domain)
        except DegenerateDenominator:
            steady = None
    return TheoreticalBounds(
        m_tilde_1=float(m_tilde),
        m1=float(m_tilde + 1.0),
        a0_sup=e0.a_sup,
        c_nonlocal=c,
        measure=domain.measure,
        steady_state=steady,
    )


def logistic_solution(m0: float, growth: float, crowding: float, t):
    """Solution of ``y' = y (growth - crowding y)``, ``y(0) = m0``, for ``t >= 0``."""
    t = np.asarray(t, dtype=np.float64)
    if m0 <= 0:
        out = np.zeros_like(t)
    elif growth > 0:
        capacity = growth / crowding
        out = capacity / (1.0 + (capacity - m0) / m0 * np.exp(-growth * t))
    elif growth == 0:
        out = m0 / (1.0 + crowding * m0 * t)
    else:
        out = m0 * np.exp(growth * t) / (1.0 + crowding * m0 * np.expm1(growth * t) / growth)
    return float(out) if out.ndim == 0 else out


def logistic_mass_envelope(coeffs, domain: GridDomain, m0: float, t, window=None):
    """Logistic upper envelope for the total mass, started from ``m0`` at time 0.

    Coefficient extrema are taken over ``window`` (default ``(0, max(t))``).
    """
    if window is None:
        window = (0.0, float(np.max(t)) if np.size(t) else 0.0)
    bounds = mass_bound_m_tilde(coeffs, domain, window)
    return bounds.envelope(m0, t)


def constant_coeff_steady_state(params: ModelParams, coeffs, domain: GridDomain) -> tuple:
    if not all(c.is_constant for c in coeffs):
        raise NotConstantCoefficients("the homogeneous steady state needs constant a0, a1, a2")
    center = tuple(0.5 * L for L in domain.lengths)
    a0, a1, a2 = (float(c.evaluate(0.0, center)) for c in coeffs)
    denom = a1 + a2 * domain.measure
    if not denom > 0:
        raise DegenerateDenominator(f"a1 + a2 |Omega| = {denom:.6g} <= 0")
    u_star = a0 / denom
    return (u_star, params.mu / params.lambda_ * u_star)


def report_for_config(config) -> HypothesisReport:
    """Hypothesis report selected by the run configuration's ``check`` settings."""
    window = (config.t_start, config.t_end)
    if config.check.hypothesis == "h1":
        return check_h1(config.params, config.coeffs, config.domain, window, config.check.c_gamma_table)
    return check_h2(config.params, config.coeffs, config.domain, window)
