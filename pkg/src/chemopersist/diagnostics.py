"""Run diagnostics: snapshots, persistence classification and bound checks."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import GridDomain, PersistenceSettings, State
from .errors import InsufficientTail
from .solver.operators import face_gradients, laplacian_neumann, nonlocal_mass

SNAPSHOT_FIELDS = ("t", "mass", "u_min", "u_max", "v_min", "v_max", "grad_v_max", "lap_v_max")
CONVERGED_TOL = 1e-4
MIN_TAIL = 10
ENVELOPE_SLACK = 1.05


@dataclass(frozen=True)
class Snapshot:
    t: float
    mass: float
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    grad_v_max: float
    lap_v_max: float
    u_min_at: tuple = ()

    def row(self) -> list:
        return [getattr(self, name) for name in SNAPSHOT_FIELDS]


def snapshot(state: State, domain: GridDomain) -> Snapshot:
    u, v = state.u, state.v
    grads = face_gradients(v, domain)
    grad_max = max((float(np.max(np.abs(g))) for g in grads if g.size), default=0.0)
    idx = np.unravel_index(int(np.argmin(u)), u.shape)
    at = tuple(float(c[i]) for c, i in zip(domain.centers(), idx))
    return Snapshot(
        t=state.time,
        mass=nonlocal_mass(u, domain),
        u_min=float(u.min()),
        u_max=float(u.max()),
        v_min=float(v.min()),
        v_max=float(v.max()),
        grad_v_max=grad_max,
        lap_v_max=float(np.max(np.abs(laplacian_neumann(v, domain)))),
        u_min_at=at,
    )


@dataclass(frozen=True)
class Classification:
    kind: str
    eta_hat: float | None = None
    tau_hat: float | None = None
    tail_min: float | None = None
    tail_min_location: tuple | None = None
    t_blow: float | None = None
    steady_error: float | None = None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        if "tail_min_location" in d:
            d["tail_min_location"] = list(d["tail_min_location"])
        return d


@dataclass
class BoundChecks:
    mass_envelope_ok: bool
    m1_eventual: float
    m2_eventual: float
    m1_bound: float
    tail_mass_ok: bool
    worst_envelope_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def tail_start(settings: PersistenceSettings, t_start: float, t_end: float) -> float:
    start = t_start + settings.settle_fraction * (t_end - t_start)
    if settings.window is not None:
        start = max(start, t_end - settings.window)
    return start


def _tail(snapshots: Sequence[Snapshot], start: float) -> list:
    slack = 1e-12 * max(1.0, abs(start))
    return [s for s in snapshots if s.t >= start - slack]


def persistence_verdict(
    snapshots: Sequence[Snapshot],
    settings: PersistenceSettings,
    t_start: float,
    t_end: float,
    steady_error: float | None = None,
) -> Classification:
    """Classify a completed, blow-up free run from its snapshot stream.

    The tail is everything after the settle time.  ``eta_hat`` is the smallest
    tail value of ``min u``; ``tau_hat`` is the first snapshot time after which
    ``min u`` never again drops below ``eta_hat``.
    """
    tail = _tail(snapshots, tail_start(settings, t_start, t_end))
    if len(tail) < MIN_TAIL:
        raise InsufficientTail(f"{len(tail)} tail snapshots, need at least {MIN_TAIL}")
    worst = min(tail, key=lambda s: s.u_min)
    eta_hat = worst.u_min
    below = [i for i, s in enumerate(snapshots) if s.u_min < eta_hat]
    tau_hat = snapshots[below[-1] + 1].t if below else snapshots[0].t
    if steady_error is not None and steady_error < CONVERGED_TOL:
        return Classification("Converged", eta_hat=eta_hat, tau_hat=tau_hat, steady_error=steady_error)
    if eta_hat >= settings.eta_floor:
        return Classification("Persistent", eta_hat=eta_hat, tau_hat=tau_hat)
    return Classification(
        "ExtinctionSuspect",
        eta_hat=eta_hat,
        tail_min=eta_hat,
        tail_min_location=worst.u_min_at,
    )


def bound_check(
    snapshots: Sequence[Snapshot],
    bounds,
    envelope: Callable[[float], float],
    tail_from: float,
) -> BoundChecks:
    """Compare masses with the logistic envelope and report eventual sizes.

    ``envelope`` maps absolute time to the envelope value.
    """
    ratios = []
    for s in snapshots:
        env = float(envelope(s.t))
        ratios.append(s.mass / env if env > 0 else (0.0 if s.mass == 0 else np.inf))
    tail = _tail(snapshots, tail_from) or list(snapshots[-1:])
    m1_eventual = max(s.mass for s in tail)
    return BoundChecks(
        mass_envelope_ok=bool(all(r <= ENVELOPE_SLACK for r in ratios)),
        m1_eventual=m1_eventual,
        m2_eventual=max(s.u_max for s in tail),
        m1_bound=bounds.m1,
        tail_mass_ok=bool(m1_eventual <= bounds.m1),
        worst_envelope_ratio=float(max(ratios)),
    )


@dataclass
class RunStats:
    steps: int = 0
    dt_min: float = np.inf
    dt_max: float = 0.0
    dt_reduced: int = 0
    most_negative_u: float = 0.0
    most_negative_v: float = 0.0
    clamped_cells: int = 0
    min_u: float = np.inf
    min_v: float = np.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


@dataclass
class RunRecord:
    config_hash: str
    t_start: float
    t_end: float
    snapshots: list
    classification: Classification
    final_state: State
    bound_checks: BoundChecks | None = None
    stats: RunStats = field(default_factory=RunStats)
    hypothesis: dict | None = None

    def to_dict(self, include_state: bool = True) -> dict:
        d = {
            "config_hash": self.config_hash,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "classification": self.classification.to_dict(),
            "bound_checks": self.bound_checks.to_dict() if self.bound_checks else None,
            "stats": self.stats.to_dict(),
            "hypothesis": self.hypothesis,
            "snapshots": [dict(zip(SNAPSHOT_FIELDS, s.row())) for s in self.snapshots],
        }
        if include_state:
            d["final_state"] = {
                "t": self.final_state.time,
                "u": self.final_state.u.tolist(),
                "v": self.final_state.v.tolist(),
            }
        return d


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_snapshots_csv(snapshots: Sequence[Snapshot], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_FIELDS)
        for s in snapshots:
            writer.writerow([format_float(x) for x in s.row()])


def read_snapshots_csv(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SNAPSHOT_FIELDS:
            raise ValueError(f"unexpected snapshot header {reader.fieldnames}")
        return [Snapshot(**{k: float(row[k]) for k in SNAPSHOT_FIELDS}) for row in reader]


def write_record_json(record: RunRecord, path, include_state: bool = True) -> None:
    Path(path).write_text(json.dumps(record.to_dict(include_state), indent=2, allow_nan=False) + "\n")
