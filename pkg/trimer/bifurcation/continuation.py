"""Natural-parameter continuation of equilibrium branches in g, with event detection."""

import math
from enum import Enum
from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.optimize import linear_sum_assignment

from trimer.bifurcation.equilibria import (
    STABILITY_TOL,
    Equilibrium,
    EquilibriumClass,
    make_equilibrium,
    orbit,
    refine_equilibrium,
    same_state,
)
from trimer.bifurcation.jacobian import ChartError, jacobian, stability_matrix
from trimer.dynamics.equations import sphere_tangent_basis
from trimer.dynamics.state import SemiclassicalState
from trimer.instrumentation import SOLVER_DURATION
from trimer.metrics import time
from trimer.model import N_SITES, ModelParams, PreconditionError

log = structlog.get_logger(__name__)

HOPF_IM_TOL = 1e-4
ZERO_PAIR_TOL = 1e-4
SADDLE_NODE_TOL = 1e-2
BISECTION_TOL = 1e-10
# a corrected point further than this from the prediction counts as a jump to another branch
JUMP_TOL = 0.2
BRANCH_SEPARATION = 1e-6


class EventKind(str, Enum):
    PITCHFORK_SUPER = "pitchfork_super"
    PITCHFORK_SUB = "pitchfork_sub"
    SADDLE_NODE = "saddle_node"
    HOPF = "hopf"
    HOPF_ANOMALOUS = "hopf_anomalous"
    STABILITY_FLIP = "stability_flip"
    BASIN_COLLISION = "basin_collision"
    EXTERIOR_CRISIS = "exterior_crisis"
    BRANCH_END = "branch_end"


class BifurcationEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EventKind
    branch_class: str
    g: float
    eta: float
    phi: float
    kappa: float
    eigen_signature: str
    osc_frequency: float = 0.0

    @property
    def location(self) -> tuple[float, float, float, float]:
        return (self.g, self.eta, self.phi, self.kappa)


class BranchPoint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    g: float
    equilibrium: Equilibrium


class Branch(BaseModel):
    model_config = ConfigDict(frozen=True)

    points: list[BranchPoint]
    events: list[BifurcationEvent]

    def to_frame(self) -> pd.DataFrame:
        rows: list[dict[str, Any]] = []
        for pt in self.points:
            e = pt.equilibrium
            rows.append(
                {
                    "g": pt.g,
                    "class": e.eq_class.value,
                    "stable": e.stable,
                    "max_re_s": e.max_re,
                    "omega_osc": e.osc_frequency,
                }
            )
        return pd.DataFrame(rows, columns=["g", "class", "stable", "max_re_s", "omega_osc"])


def pair_eigenvalues(previous: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Reorder current so that entry i continues previous[i]."""
    cost = np.abs(previous[:, None] - current[None, :])
    rows, cols = linear_sum_assignment(cost)
    return current[cols[np.argsort(rows)]]


def _signature(eigs: np.ndarray, count: int = 3) -> str:
    near = eigs[np.argsort(np.abs(eigs))[:count]]
    return ", ".join(f"{z.real:+.3e}{z.imag:+.3e}i" for z in near)


def _eigs(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    return np.linalg.eigvals(stability_matrix(p, s))


def reduced_to_full(s: SemiclassicalState, delta: np.ndarray) -> np.ndarray:
    """Map a reduced (u, v, X, Y per site) perturbation to the 15 state coordinates."""
    y = s.as_vector()
    full = np.zeros_like(y)
    for n in range(N_SITES):
        du, dv, dx, dy = delta[4 * n : 4 * n + 4]
        x, yy, z = s.spin[n]
        full[n], full[N_SITES + n] = du, dv
        full[2 * N_SITES + n], full[3 * N_SITES + n] = dx, dy
        full[4 * N_SITES + n] = -(x * dx + yy * dy) / z
    return full


def null_direction(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    """Real eigenvector of the eigenvalue closest to zero, in state coordinates."""
    try:
        jac = jacobian(p, s)
        w, v = np.linalg.eig(jac)
        k = int(np.argmin(np.abs(w)))
        direction = reduced_to_full(s, v[:, k].real)
    except ChartError:
        y = s.as_vector()
        basis = sphere_tangent_basis(y)
        w, v = np.linalg.eig(stability_matrix(p, s))
        k = int(np.argmin(np.abs(w)))
        direction = basis @ v[:, k].real
    return direction / np.linalg.norm(direction)


def _correct(p: ModelParams, guess: SemiclassicalState) -> Optional[Equilibrium]:
    s = refine_equilibrium(p, guess)
    if s is None:
        return None
    return make_equilibrium(p, s)


def _emergent(
    p: ModelParams, base: SemiclassicalState, direction: np.ndarray
) -> list[Equilibrium]:
    """Equilibria reached from base displaced both ways along direction, distinct from base."""
    found: list[Equilibrium] = []
    origin = _correct(p, base)
    y = base.as_vector()
    for sign in (1.0, -1.0):
        for eps in np.geomspace(1e-3, 0.3, 8):
            guess = SemiclassicalState.from_vector(y + sign * eps * direction)
            e = _correct(p, guess)
            if e is None:
                continue
            if origin is not None and same_state(e.state, origin.state, BRANCH_SEPARATION):
                continue
            found.append(e)
            break
    return found


def _classify_real_crossing(
    p: ModelParams,
    g_star: float,
    star: SemiclassicalState,
    step: float,
    unstable_side: float,
    label: str,
) -> EventKind:
    """Pitchfork if two symmetry-related branches emerge on one side, else a stability flip."""
    direction = null_direction(p.replace(g=g_star), star)
    h = min(max(step, 1e-4), 1e-3)
    for side in (1.0, -1.0):
        pg = p.replace(g=g_star + side * h)
        branches = _emergent(pg, star, direction)
        if len(branches) < 2:
            continue
        a, b = branches
        if not any(same_state(image, b.state, 1e-6) for image in orbit(pg, a.state)):
            continue
        stable = a.stable and b.stable
        log.debug("pitchfork branches", label=label, side=side, stable=stable)
        if side == unstable_side and stable:
            return EventKind.PITCHFORK_SUPER
        return EventKind.PITCHFORK_SUB
    return EventKind.STABILITY_FLIP


def _refine_crossing(
    p: ModelParams,
    left: BranchPoint,
    right: BranchPoint,
    index: int,
    left_eigs: np.ndarray,
) -> tuple[float, Equilibrium, np.ndarray]:
    """Bisect on the real part of the tracked eigenvalue; returns (g*, equilibrium, eigs)."""
    g_lo, g_hi = left.g, right.g
    lo_eigs = left_eigs
    sign_lo = math.copysign(1.0, lo_eigs[index].real)
    hi_eigs = pair_eigenvalues(lo_eigs, _eigs(p.replace(g=g_hi), right.equilibrium.state))
    best = (g_hi, right.equilibrium, hi_eigs)
    while abs(g_hi - g_lo) > BISECTION_TOL * max(1.0, abs(g_lo)):
        g_mid = 0.5 * (g_lo + g_hi)
        w = (g_mid - left.g) / (right.g - left.g)
        guess = SemiclassicalState.from_vector(
            (1 - w) * left.equilibrium.state.as_vector() + w * right.equilibrium.state.as_vector()
        )
        pm = p.replace(g=g_mid)
        mid = _correct(pm, guess)
        if mid is None:
            break
        mid_eigs = pair_eigenvalues(lo_eigs, _eigs(pm, mid.state))
        if math.copysign(1.0, mid_eigs[index].real) == sign_lo:
            g_lo, lo_eigs = g_mid, mid_eigs
        else:
            g_hi = g_mid
            best = (g_mid, mid, mid_eigs)
    return best


def classify_crossing(
    p: ModelParams,
    g_star: float,
    star: Equilibrium,
    eigs: np.ndarray,
    index: int,
    unstable_side: float,
    step: float,
) -> BifurcationEvent:
    label = star.eq_class.branch_label
    crossing = eigs[index]
    near_zero = int(np.sum(np.abs(eigs) < ZERO_PAIR_TOL))
    osc = 0.0
    if abs(crossing.imag) > HOPF_IM_TOL:
        kind = EventKind.HOPF
        osc = float(abs(crossing.imag))
    elif near_zero >= 2:
        kind = EventKind.HOPF_ANOMALOUS
    else:
        kind = _classify_real_crossing(p, g_star, star.state, step, unstable_side, label)
    return BifurcationEvent(
        kind=kind,
        branch_class=label,
        g=g_star,
        eta=p.eta,
        phi=p.phi,
        kappa=p.kappa,
        eigen_signature=_signature(eigs),
        osc_frequency=osc,
    )


def _crossings(prev: np.ndarray, curr: np.ndarray) -> list[int]:
    """Tracked eigenvalues whose real part changed sign beyond the stability tolerance."""
    return [
        i
        for i in range(len(prev))
        if (prev[i].real < -STABILITY_TOL and curr[i].real > STABILITY_TOL)
        or (prev[i].real > STABILITY_TOL and curr[i].real < -STABILITY_TOL)
    ]


@time(SOLVER_DURATION, solver="continuation")
def branch_continuation(
    p: ModelParams,
    seed: Equilibrium,
    g_end: float,
    step: float = 0.01,
    min_step: float = 1e-6,
    max_points: int = 100000,
) -> Branch:
    """Follow seed from p.g to g_end, halving the step on failure and refining every crossing."""
    start = refine_equilibrium(p, seed.state)
    if start is None:
        raise PreconditionError("seed is not an equilibrium at the start coupling", g=p.g)
    first = make_equilibrium(p, start)
    if first is None:
        raise PreconditionError("seed does not verify in the full system", g=p.g)
    direction = math.copysign(1.0, g_end - p.g)
    label = first.eq_class.branch_label
    points = [BranchPoint(g=p.g, equilibrium=first)]
    events: list[BifurcationEvent] = []
    tracked = _eigs(p, first.state)
    h = step

    while direction * (g_end - points[-1].g) > 1e-12 and len(points) < max_points:
        last = points[-1]
        g_new = last.g + direction * min(h, abs(g_end - last.g))
        y_last = last.equilibrium.state.as_vector()
        if len(points) > 1:
            before = points[-2]
            slope = (y_last - before.equilibrium.state.as_vector()) / (last.g - before.g)
            predicted = y_last + slope * (g_new - last.g)
        else:
            predicted = y_last
        pg = p.replace(g=g_new)
        corrected = _correct(pg, SemiclassicalState.from_vector(predicted))
        jump = (
            corrected is None
            or corrected.eq_class != first.eq_class
            or float(np.max(np.abs(corrected.state.as_vector() - predicted)))
            > JUMP_TOL * max(h, 1e-3) ** 0.5
        )
        if jump:
            h /= 2
            if h < min_step:
                smallest = float(np.min(np.abs(tracked)))
                kind = EventKind.SADDLE_NODE if smallest < SADDLE_NODE_TOL else EventKind.BRANCH_END
                events.append(
                    BifurcationEvent(
                        kind=kind,
                        branch_class=label,
                        g=last.g,
                        eta=p.eta,
                        phi=p.phi,
                        kappa=p.kappa,
                        eigen_signature=_signature(tracked),
                    )
                )
                log.info("branch lost", label=label, g=last.g, kind=kind.value, smallest=smallest)
                break
            continue
        assert corrected is not None
        current = pair_eigenvalues(tracked, _eigs(pg, corrected.state))
        point = BranchPoint(g=g_new, equilibrium=corrected)
        handled: list[complex] = []
        for index in _crossings(tracked, current):
            if any(abs(current[index] - np.conj(z)) < 1e-8 for z in handled):
                # second member of a conjugate pair
                continue
            handled.append(current[index])
            g_star, star, star_eigs = _refine_crossing(p, last, point, index, tracked)
            unstable_side = direction if tracked[index].real < 0 else -direction
            event = classify_crossing(
                p.replace(g=g_star),
                g_star,
                star,
                star_eigs,
                index,
                unstable_side,
                abs(g_new - last.g),
            )
            events.append(event)
            log.info(
                "bifurcation",
                kind=event.kind.value,
                label=label,
                g=g_star,
                omega=event.osc_frequency,
            )
        points.append(point)
        tracked = current
        h = min(step, 2 * h)

    log.info("continuation finished", branch=label, points=len(points), events=len(events))
    return Branch(points=points, events=events)


def seeds_of(eq_class: EquilibriumClass, candidates: list[Equilibrium]) -> list[Equilibrium]:
    return [e for e in candidates if e.eq_class == eq_class]
