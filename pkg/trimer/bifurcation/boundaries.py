"""Bifurcation curves in the (g, eta) plane and attractor-destroying collisions."""

from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict

from trimer import config
from trimer.bifurcation.continuation import (
    BifurcationEvent,
    Branch,
    EventKind,
    branch_continuation,
    seeds_of,
)
from trimer.bifurcation.equilibria import (
    ALL_CLASSES,
    EquilibriumClass,
    classify_state,
    find_equilibria,
    refine_equilibrium,
)
from trimer.dynamics.analysis import AttractorKind, classify_attractor
from trimer.dynamics.equations import rhs_vector
from trimer.dynamics.integrate import integrate
from trimer.dynamics.state import STATE_SIZE, SemiclassicalState
from trimer.model import ModelParams

log = structlog.get_logger(__name__)

SETTLE_TOL = 1e-6
# relative gap in g beyond which two events on neighbouring eta lines are not linked
LINK_TOL = 0.05
TRACE_COLUMNS = ["eta", "g", "kind", "branch", "omega_osc", "segment"]


def dyn_segment(kind: EventKind, branch_class: str) -> Optional[str]:
    """Which stretch of the oscillating-region boundary an event lies on, if any.

    S1 is the Hopf onset on the FS branch, S2 the collision of the FS oscillation with another
    basin, S3 the anomalous Hopf and S4 the exterior crisis of a chaotic attractor.
    """
    if kind == EventKind.HOPF and branch_class == EquilibriumClass.FS.branch_label:
        return "S1"
    return {
        EventKind.BASIN_COLLISION: "S2",
        EventKind.HOPF_ANOMALOUS: "S3",
        EventKind.EXTERIOR_CRISIS: "S4",
    }.get(kind)


class BoundaryCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EventKind
    label: str
    points: list[tuple[float, float]]

    @property
    def fragment(self) -> bool:
        return len(self.points) < 2

    @property
    def segment(self) -> Optional[str]:
        return dyn_segment(self.kind, self.label)


class BoundaryTrace(BaseModel):
    model_config = ConfigDict(frozen=True)

    phi: float
    kappa: float
    curves: list[BoundaryCurve]
    events: list[BifurcationEvent]

    @property
    def fragments(self) -> list[BoundaryCurve]:
        return [c for c in self.curves if c.fragment]

    def to_frame(self) -> pd.DataFrame:
        rows: list[dict[str, Any]] = [
            {
                "eta": e.eta,
                "g": e.g,
                "kind": e.kind.value,
                "branch": e.branch_class,
                "omega_osc": e.osc_frequency,
                "segment": dyn_segment(e.kind, e.branch_class),
            }
            for e in self.events
        ]
        return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def line_events(
    p: ModelParams,
    g_range: tuple[float, float],
    classes: Sequence[EquilibriumClass],
    step: float = 0.01,
    rng_seed: int = 0,
) -> list[BifurcationEvent]:
    """Events of every branch found at either end of one eta line, sorted by g."""
    lo, hi = g_range
    events: list[BifurcationEvent] = []
    for g_start, g_end in ((lo, hi), (hi, lo)):
        start = p.replace(g=g_start)
        found = find_equilibria(start, classes, rng_seed=rng_seed)
        for eq_class in classes:
            for seed in seeds_of(eq_class, found):
                branch: Branch = branch_continuation(start, seed, g_end, step=step)
                events += branch.events
    return _unique_events(sorted(events, key=lambda e: (e.g, e.kind.value, e.branch_class)))


def _unique_events(events: list[BifurcationEvent]) -> list[BifurcationEvent]:
    """Drop events found twice, from both ends of a line or on symmetric branches."""
    kept: list[BifurcationEvent] = []
    for e in events:
        if not any(
            k.kind == e.kind and k.branch_class == e.branch_class and abs(k.g - e.g) < 1e-6
            for k in kept
        ):
            kept.append(e)
    return kept


def link_events(events: Sequence[BifurcationEvent], g_span: float) -> list[BoundaryCurve]:
    """Chain events of one kind and branch across eta lines by nearest g.

    Events left unchained stay as one-point fragments.
    """
    curves: list[dict[str, Any]] = []
    by_eta: dict[float, list[BifurcationEvent]] = {}
    for e in events:
        by_eta.setdefault(e.eta, []).append(e)
    for eta in sorted(by_eta):
        open_curves = [c for c in curves if c["eta"] != eta]
        for e in sorted(by_eta[eta], key=lambda e: e.g):
            candidates = [
                c
                for c in open_curves
                if c["kind"] == e.kind
                and c["label"] == e.branch_class
                and abs(c["points"][-1][1] - e.g) < LINK_TOL * g_span
            ]
            if candidates:
                best = min(candidates, key=lambda c: abs(c["points"][-1][1] - e.g))
                best["points"].append((eta, e.g))
                best["eta"] = eta
                open_curves.remove(best)
            else:
                curves.append(
                    {"kind": e.kind, "label": e.branch_class, "points": [(eta, e.g)], "eta": eta}
                )
    return [BoundaryCurve(kind=c["kind"], label=c["label"], points=c["points"]) for c in curves]


def boundary_trace(
    p: ModelParams,
    etas: Sequence[float],
    g_range: tuple[float, float],
    classes: Optional[Sequence[EquilibriumClass]] = None,
    step: float = 0.01,
    threads: int = config.THREADS,
    dynamical: bool = False,
    rng_seed: int = 0,
) -> BoundaryTrace:
    classes = tuple(classes) if classes is not None else ALL_CLASSES
    per_line: list[list[BifurcationEvent]] = Parallel(n_jobs=threads)(
        delayed(line_events)(p.replace(eta=float(eta)), g_range, classes, step, rng_seed)
        for eta in etas
    )
    events = [e for line in per_line for e in line]
    if dynamical:
        events += [
            e
            for eta, line in zip(etas, per_line)
            for e in dynamical_events(p.replace(eta=float(eta)), line, g_range[1], step)
        ]
    curves = link_events(events, g_range[1] - g_range[0])
    trace = BoundaryTrace(phi=p.phi, kappa=p.kappa, curves=curves, events=events)
    log.info(
        "boundary trace",
        lines=len(etas),
        events=len(events),
        curves=len(curves),
        fragments=len(trace.fragments),
    )
    return trace


def settle_time(
    p: ModelParams, s0: SemiclassicalState, t_max: float, dt: float = 0.5
) -> Optional[tuple[float, SemiclassicalState]]:
    """First sampled time after which the flow stays below SETTLE_TOL, with the final state."""
    traj = integrate(p, s0, t_max, tol=1e-9, dt=dt)
    speed = np.array([np.max(np.abs(rhs_vector(p, y))) for y in traj.states])
    moving = np.flatnonzero(speed >= SETTLE_TOL)
    if moving.size == 0:
        return float(traj.times[0]), traj.final
    if moving[-1] == len(speed) - 1:
        return None
    return float(traj.times[moving[-1] + 1]), traj.final


def detect_basin_collision(
    p_after: ModelParams,
    attractor_state: SemiclassicalState,
    before_kind: AttractorKind = AttractorKind.PERIODIC,
    t_max: float = 5000.0,
) -> Optional[BifurcationEvent]:
    """Start on the attractor found before the candidate point and watch it die after it.

    Returns None while the attractor persists; otherwise the collision event, labelled by the
    equilibrium the trajectory finally settles on.
    """
    settled = settle_time(p_after, attractor_state, t_max)
    if settled is None:
        log.info("attractor persists", g=p_after.g, eta=p_after.eta, t_max=t_max)
        return None
    t_settle, final = settled
    target = classify_state(refine_equilibrium(p_after, final) or final)
    label = target.branch_label if target is not None else "none"
    kind = (
        EventKind.EXTERIOR_CRISIS
        if before_kind == AttractorKind.CHAOTIC and target == EquilibriumClass.N
        else EventKind.BASIN_COLLISION
    )
    log.info("attractor destroyed", kind=kind.value, target=label, linger=t_settle)
    return BifurcationEvent(
        kind=kind,
        branch_class=label,
        g=p_after.g,
        eta=p_after.eta,
        phi=p_after.phi,
        kappa=p_after.kappa,
        eigen_signature=f"lingered t={t_settle:.6g} before settling",
    )


def dynamical_events(
    p: ModelParams,
    line: Sequence[BifurcationEvent],
    g_max: float,
    step: float,
    t_transient: float = 500.0,
    t_measure: float = 1000.0,
    rng_seed: int = 0,
) -> list[BifurcationEvent]:
    """Follow the oscillation born at each Hopf event in g until it collides with a basin."""
    rng = np.random.default_rng(rng_seed)
    found: list[BifurcationEvent] = []
    for hopf in (e for e in line if e.kind in (EventKind.HOPF, EventKind.HOPF_ANOMALOUS)):
        g = hopf.g + step
        seeds = [
            e
            for e in find_equilibria(p.replace(g=hopf.g))
            if e.eq_class.branch_label == hopf.branch_class
        ]
        if not seeds:
            continue
        y = seeds[0].state.as_vector() + 1e-3 * rng.normal(size=STATE_SIZE)
        state = SemiclassicalState.from_vector(y).renormalized()
        kind = AttractorKind.PERIODIC
        while g <= g_max:
            pg = p.replace(g=g)
            event = detect_basin_collision(pg, state, kind, t_max=t_transient + t_measure)
            if event is not None:
                found.append(event)
                break
            report = classify_attractor(pg, state, t_transient, t_measure)
            state = integrate(pg, state, t_transient, tol=1e-9, dt=t_transient).final
            kind = report.kind
            g += step
    return found
