"""Scenario library, parameter sweeps, the pullback experiment and perturbation responses."""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import apply_overrides, config_from_dict, config_hash, config_to_dict, parse_toml
from .core import (
    Constant,
    CosinePerturbed,
    GridDomain,
    ModelParams,
    PersistenceSettings,
    RandomSmooth,
    RunConfig,
    State,
    TrigSum,
    TrigTerm,
    make_initial_data,
)
from .diagnostics import format_float
from .errors import BudgetExceeded, ConfigError, PreconditionViolated, SolverError
from .hypothesis import check_h2, report_for_config
from .solver import simulate

DEFAULT_BUDGET = 10_000
NO_GUARANTEE = "no theoretical guarantee"


# ---------------------------------------------------------------------------
# scenario library
# ---------------------------------------------------------------------------


def smoke_run_config(cells: int = 64, t_end: float = 50.0) -> RunConfig:
    """1D, chi = 1, a0 = 1 + 0.25 cos(pi x), a1 = 1, a2 = 0: inside H2 with margin 0.75."""
    return RunConfig(
        params=ModelParams(chi=1.0),
        coeffs=(
            TrigSum(1.0, (TrigTerm(0.25, space=(("cos", math.pi),)),), label="a0"),
            Constant(1.0, "a1"),
            Constant(0.0, "a2"),
        ),
        domain=GridDomain((1.0,), (cells,)),
        initial=CosinePerturbed(base=1.0, amplitude=0.5, mode=1, v_base=1.0, v_amplitude=0.5),
        t_end=t_end,
        dt_max=0.02,
        record_every=0.5,
        persistence=PersistenceSettings(eta_floor=1e-3),
    )


def steady_config(chi: float = 0.5, cells: int = 64, t_end: float = 100.0) -> RunConfig:
    """Constant coefficients a0 = a1 = 1, a2 = 0, unit mu, lambda, tau; steady state (1, 1)."""
    return RunConfig(
        params=ModelParams(chi=chi),
        coeffs=(Constant(1.0, "a0"), Constant(1.0, "a1"), Constant(0.0, "a2")),
        domain=GridDomain((1.0,), (cells,)),
        initial=CosinePerturbed(base=1.0, amplitude=0.5, mode=1, v_base=1.0, v_amplitude=0.5),
        t_end=t_end,
        dt_max=0.02,
        record_every=1.0,
        persistence=PersistenceSettings(eta_floor=1e-3),
    )


def pullback_config(cells: int = 32, amplitude: float = 0.2, chi: float = 0.5) -> RunConfig:
    """Time-periodic growth ``a0 = 1 + amplitude sin t``, other coefficients constant.

    ``dt_max`` is dyadic and ``cfl_safety = 1`` so the time lattices of runs
    started at different integer times coincide.
    """
    a0 = TrigSum(1.0, (TrigTerm(amplitude, time="sin", omega=1.0),), label="a0") if amplitude else Constant(1.0, "a0")
    return RunConfig(
        params=ModelParams(chi=chi),
        coeffs=(a0, Constant(1.0, "a1"), Constant(0.0, "a2")),
        domain=GridDomain((1.0,), (cells,)),
        initial=CosinePerturbed(base=1.0, amplitude=0.5, mode=1, v_base=1.0, v_amplitude=0.5),
        t_start=-10.0,
        t_end=0.0,
        dt_max=1.0 / 64.0,
        cfl_safety=1.0,
        record_every=1.0,
    )


def zero_reaction_config(dimension: int = 1, chi: float = 1.0, t_end: float = 5.0) -> RunConfig:
    """Pure chemotaxis and diffusion: the total mass of u is conserved."""
    zero = (Constant(0.0, "a0"), Constant(0.0, "a1"), Constant(0.0, "a2"))
    cells = (64,) if dimension == 1 else (32, 32)
    return RunConfig(
        params=ModelParams(chi=chi, dimension=dimension),
        coeffs=zero,
        domain=GridDomain((1.0,) * dimension, cells),
        initial=RandomSmooth(seed=7, min=0.05, max=2.0),
        t_end=t_end,
        dt_max=0.01,
        record_every=0.25,
    )


def random_h2_config(
    seed: int,
    dimension: int = 1,
    t_end: float = 50.0,
    near_extinction: bool = False,
    cells: int | None = None,
) -> RunConfig:
    """Randomized space-time heterogeneous coefficients satisfying H2 by construction.

    The spatial infimum of a1 exceeds ``n mu chi / 4`` by at least 0.3 and
    a2 never drops below ``-0.2``, so both margins are positive.
    """
    rng = np.random.default_rng(seed)
    n = dimension
    chi = rng.uniform(0.5, 2.0)
    lam = rng.uniform(0.5, 1.5)
    mu = 1.0

    def space_factor():
        return tuple(("cos", math.pi * int(rng.integers(1, 3))) for _ in range(n))

    a1_amp = rng.uniform(0.05, 0.25)
    a1 = TrigSum(
        n * mu * chi / 4.0 + a1_amp + rng.uniform(0.3, 1.0),
        (TrigTerm(a1_amp, time="cos", omega=rng.uniform(0.2, 1.0), space=space_factor()),),
        label="a1",
    )
    a0 = TrigSum(
        rng.uniform(0.8, 1.5),
        (TrigTerm(rng.uniform(0.1, 0.4), time="sin", omega=rng.uniform(0.5, 2.0), space=space_factor()),),
        label="a0",
    )
    a2_amp = rng.uniform(0.0, 0.1)
    a2 = TrigSum(
        rng.uniform(-0.1, 0.3),
        (TrigTerm(a2_amp, time="sin", omega=rng.uniform(0.2, 1.0)),),
        label="a2",
    )
    lo = 1e-3 if near_extinction else 0.1
    initial = RandomSmooth(seed=int(rng.integers(2**31)), min=lo, max=2.0, v_min=0.0, v_max=1.0)
    if cells is None:
        cells = 64 if n == 1 else 32
    config = RunConfig(
        params=ModelParams(chi=chi, lambda_=lam, mu=mu, dimension=n),
        coeffs=(a0, a1, a2),
        domain=GridDomain((1.0,) * n, (cells,) * n),
        initial=initial,
        t_end=t_end,
        dt_max=0.05,
        record_every=0.5,
        persistence=PersistenceSettings(eta_floor=1e-3),
    )
    report = check_h2(config.params, config.coeffs, config.domain, config.window)
    assert report.satisfied, "random H2 construction produced a violating configuration"
    return config


def h2_suite(t_end: float = 50.0) -> list:
    """Five 1D (N=64) and five 2D (32x32) H2 configurations; every other one starts near extinction."""
    configs = []
    for i in range(10):
        dimension = 1 if i < 5 else 2
        configs.append(random_h2_config(1000 + i, dimension, t_end=t_end, near_extinction=i % 2 == 0))
    return configs


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    base: RunConfig
    axes: list
    parallelism: int = 1
    output_dir: Path = Path("sweep_out")
    budget: int = DEFAULT_BUDGET
    base_raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.axes or any(len(values) == 0 for _, values in self.axes):
            raise ConfigError("sweep needs at least one axis with at least one value", field="sweep.axes")
        if int(self.parallelism) < 1:
            raise ConfigError("parallelism must be at least 1", field="sweep.parallelism")
        if not self.base_raw:
            self.base_raw = config_to_dict(self.base)
        self.output_dir = Path(self.output_dir)

    @property
    def run_count(self) -> int:
        return math.prod(len(values) for _, values in self.axes)

    def points(self):
        """Override dictionaries in axis-index order (last axis varies fastest)."""
        paths = [p for p, _ in self.axes]
        for combo in itertools.product(*(values for _, values in self.axes)):
            yield dict(zip(paths, combo))


def load_sweep_spec(path, output_dir=None, parallelism=None) -> SweepSpec:
    path = Path(path)
    try:
        raw = parse_toml(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read sweep spec: {exc}") from None
    sw = raw.get("sweep")
    if not isinstance(sw, dict):
        raise ConfigError("missing [sweep] table", field="sweep")
    extra = set(sw) - {"base", "axes", "parallelism", "output_dir", "budget"}
    if extra:
        raise ConfigError(f"unknown key {sorted(extra)[0]!r}", field=f"sweep.{sorted(extra)[0]}")
    if "base" in sw:
        base_path = path.parent / sw["base"]
        try:
            base_raw = parse_toml(base_path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read base config: {exc}", field="sweep.base") from None
    elif "base" in raw:
        base_raw = raw["base"]
    else:
        raise ConfigError("sweep needs 'sweep.base' (a config path) or an inline [base] table", field="sweep.base")
    axes = []
    for i, axis in enumerate(sw.get("axes", [])):
        if not isinstance(axis, dict) or "path" not in axis or "values" not in axis:
            raise ConfigError("each axis needs 'path' and 'values'", field=f"sweep.axes[{i}]")
        axes.append((str(axis["path"]), list(axis["values"])))
    out = Path(output_dir) if output_dir is not None else path.parent / sw.get("output_dir", "sweep_out")
    return SweepSpec(
        base=config_from_dict(base_raw, base_dir=path.parent),
        axes=axes,
        parallelism=int(parallelism if parallelism is not None else sw.get("parallelism", 1)),
        output_dir=out,
        budget=int(sw.get("budget", DEFAULT_BUDGET)),
        base_raw=base_raw,
    )


@dataclass
class SweepResult:
    rows: list
    uniform_eta: float | None
    phase_csv: Path
    records: list


def guarantee_label(report) -> str:
    return f"{report.which} satisfied" if report.satisfied else NO_GUARANTEE


def _run_point(config: RunConfig) -> dict:
    """Worker body: one simulation, returned as plain data."""
    report = report_for_config(config)
    try:
        record = simulate(config)
    except SolverError as exc:
        return {"report": report.to_dict(), "error": f"{type(exc).__name__}: {exc}", "hash": config_hash(config)}
    record.hypothesis = report.to_dict()
    return {"report": report.to_dict(), "record": record.to_dict(include_state=False), "hash": record.config_hash}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, float, np.floating)):
        return format_float(value)
    return str(value)


def run_sweep(spec: SweepSpec) -> SweepResult:
    if spec.run_count > spec.budget:
        raise BudgetExceeded(f"sweep has {spec.run_count} points, budget is {spec.budget}")
    overrides = list(spec.points())
    configs = []
    for point in overrides:
        try:
            configs.append(config_from_dict(apply_overrides(spec.base_raw, point)))
        except ConfigError as exc:
            raise ConfigError(f"sweep point {point}: {exc.message}", field=exc.field) from None

    if spec.parallelism > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(spec.parallelism, len(configs))) as pool:
            results = list(pool.map(_run_point, configs))
    else:
        results = [_run_point(c) for c in configs]

    out = spec.output_dir
    (out / "points").mkdir(parents=True, exist_ok=True)
    paths = [p for p, _ in spec.axes]
    header = ["index", *paths, "hypothesis", "satisfied", "margin_local", "margin_nonlocal", "guarantee",
              "classification", "eta_hat", "tau_hat", "m1_eventual", "m2_eventual", "m1_bound", "config_hash"]
    rows = []
    etas = []
    for i, (point, res) in enumerate(zip(overrides, results)):
        report = res["report"]
        record = res.get("record")
        cls = record["classification"] if record else {"kind": "SolverError"}
        bounds = (record or {}).get("bound_checks") or {}
        row = {
            "index": i,
            **point,
            "hypothesis": report["which"],
            "satisfied": report["satisfied"],
            "margin_local": report["margin_local"],
            "margin_nonlocal": report["margin_nonlocal"],
            "guarantee": f"{report['which']} satisfied" if report["satisfied"] else NO_GUARANTEE,
            "classification": cls["kind"],
            "eta_hat": cls.get("eta_hat"),
            "tau_hat": cls.get("tau_hat"),
            "m1_eventual": bounds.get("m1_eventual"),
            "m2_eventual": bounds.get("m2_eventual"),
            "m1_bound": bounds.get("m1_bound"),
            "config_hash": res["hash"],
        }
        rows.append(row)
        if cls["kind"] == "Persistent":
            etas.append(cls["eta_hat"])
        payload = record if record else {"config_hash": res["hash"], "hypothesis": report, "error": res["error"]}
        payload = {"point": point, **payload}
        (out / "points" / f"point_{i:05d}.json").write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row[h]) for h in header])
    phase_csv = out / "phase.csv"
    phase_csv.write_text(buf.getvalue())

    uniform_eta = min(etas) if etas else None
    counts = {}
    for row in rows:
        counts[row["classification"]] = counts.get(row["classification"], 0) + 1
    summary = {
        "runs": len(rows),
        "classification_counts": dict(sorted(counts.items())),
        "uniform_eta": uniform_eta,
        "uniform_eta_over": len(etas),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return SweepResult(rows=rows, uniform_eta=uniform_eta, phase_csv=phase_csv, records=results)


# ---------------------------------------------------------------------------
# pullback
# ---------------------------------------------------------------------------

PULLBACK_GAP_TOL = 1e-4


@dataclass
class PullbackResult:
    depths: list
    states_at_zero: list
    cauchy_gaps: list
    eta_entire: float

    @property
    def gaps_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.cauchy_gaps, self.cauchy_gaps[1:]))

    def converged(self, tol: float = PULLBACK_GAP_TOL) -> bool:
        """Numerical surrogate: strictly decreasing gaps and a final gap below ``tol``."""
        return bool(self.cauchy_gaps) and self.gaps_decreasing and self.cauchy_gaps[-1] < tol

    def to_dict(self, include_states: bool = False) -> dict:
        d = {
            "depths": list(self.depths),
            "cauchy_gaps": list(self.cauchy_gaps),
            "eta_entire": self.eta_entire,
            "gaps_decreasing": self.gaps_decreasing,
            "converged": self.converged(),
        }
        if include_states:
            d["states_at_zero"] = [{"u": s.u.tolist(), "v": s.v.tolist()} for s in self.states_at_zero]
        return d


def sup_distance(a: State, b: State) -> float:
    return float(max(np.max(np.abs(a.u - b.u)), np.max(np.abs(a.v - b.v))))


def pullback(config: RunConfig, depths: Sequence[float]) -> PullbackResult:
    """Run the same initial data from ``t = -n`` to ``t = 0`` for every depth ``n``.

    ``config.t_start`` and ``config.t_end`` are ignored.
    """
    depths = [float(n) for n in depths]
    if not depths:
        raise PreconditionViolated("at least one depth is required")
    if any(n <= 0 for n in depths) or any(b <= a for a, b in zip(depths, depths[1:])):
        raise PreconditionViolated(f"depths must be positive and strictly increasing, got {depths}")
    states = []
    for n in depths:
        cfg = config.replace(t_start=-n, t_end=0.0)
        u0 = make_initial_data(cfg.initial, cfg.domain, cfg.t_start).u
        if not float(u0.min()) > 0:
            raise PreconditionViolated("pullback needs initial data with inf u0 > 0")
        record = simulate(cfg)
        if record.classification.kind == "BlowUp":
            raise SolverError(f"run from t = {-n:g} blew up at t = {record.classification.t_blow}")
        states.append(record.final_state)
    gaps = [sup_distance(a, b) for a, b in zip(states, states[1:])]
    return PullbackResult(
        depths=depths,
        states_at_zero=states,
        cauchy_gaps=gaps,
        eta_entire=float(states[-1].u.min()),
    )


# ---------------------------------------------------------------------------
# continuous dependence
# ---------------------------------------------------------------------------


def perturbation_responses(config: RunConfig, deltas: Sequence[float], t: float = 1.0) -> list:
    """Sup-norm change of the state at time ``t_start + t`` when u0 is raised by each delta."""
    cfg = config.replace(t_end=config.t_start + t, record_every=t)
    base = make_initial_data(cfg.initial, cfg.domain, cfg.t_start)
    reference = simulate(cfg, initial_state=base).final_state
    out = []
    for delta in deltas:
        shifted = State(base.time, base.u + delta, base.v)
        out.append(sup_distance(simulate(cfg, initial_state=shifted).final_state, reference))
    return out
