"""Photon-number scaling of the steady-state fluctuations as a branch approaches its bifurcation."""

from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict

from trimer.bifurcation.continuation import (
    BifurcationEvent,
    Branch,
    EventKind,
    branch_continuation,
    seeds_of,
)
from trimer.bifurcation.equilibria import (
    Equilibrium,
    EquilibriumClass,
    find_equilibria,
    make_equilibrium,
    refine_equilibrium,
)
from trimer.dynamics.state import SemiclassicalState
from trimer.fitting import InconclusiveError, PowerLawFit, delta_grid, fit_power_law
from trimer.fluctuations.moments import (
    MomentInvariantError,
    SingularSystemError,
    steady_moments,
)
from trimer.model import N_SITES, ModelParams, PreconditionError

log = structlog.get_logger(__name__)

DELTA_RANGE = (1e-4, 1e-2)
DELTA_POINTS = 25
MAX_FIT_RESIDUAL = 0.05
# sites whose photon numbers agree this closely share one exponent
SITE_EQUIVALENCE = 1e-6
TERMINATING = (
    EventKind.PITCHFORK_SUPER,
    EventKind.PITCHFORK_SUB,
    EventKind.HOPF,
    EventKind.HOPF_ANOMALOUS,
)


class PhotonScan(BaseModel):
    """Fluctuation photon numbers on a grid of distances from the terminating event."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    event: BifurcationEvent
    deltas: np.ndarray
    photons: np.ndarray
    det_nonzero: np.ndarray
    residuals: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"delta_g": self.deltas})
        for n in range(N_SITES):
            frame[f"n_ph_{n + 1}"] = self.photons[:, n]
        frame["det_flag"] = self.det_nonzero.astype(int)
        return frame


class SiteExponent(BaseModel):
    model_config = ConfigDict(frozen=True)

    sites: list[int]
    exponent: float
    fit: PowerLawFit


class ScalingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    branch: str
    event: BifurcationEvent
    sites: list[SiteExponent]
    max_residual: float

    @property
    def exponents(self) -> list[float]:
        return sorted(s.exponent for s in self.sites)

    def summary(self) -> dict[str, Any]:
        return {
            "branch": self.branch,
            "event": self.event.kind.value,
            "g_star": self.event.g,
            "exponents": [
                {
                    "sites": [n + 1 for n in s.sites],
                    "exponent": s.exponent,
                    "residual": s.fit.residual,
                }
                for s in self.sites
            ],
            "max_moment_residual": self.max_residual,
        }


def _stable_seed(p: ModelParams, branch: EquilibriumClass, rng_seed: int) -> Equilibrium:
    stable = [e for e in seeds_of(branch, find_equilibria(p, [branch], rng_seed)) if e.stable]
    if not stable:
        raise PreconditionError(
            "no stable equilibrium of this class at the cut start", branch=branch.value, g=p.g
        )
    return stable[0]


def terminating_event(branch: Branch) -> BifurcationEvent:
    for event in branch.events:
        if event.kind in TERMINATING:
            return event
        if event.kind in (EventKind.SADDLE_NODE, EventKind.BRANCH_END):
            break
    raise PreconditionError(
        "branch does not end at a continuous bifurcation in the cut",
        events=[e.kind.value for e in branch.events],
    )


def _nearest_point(branch: Branch, g: float) -> SemiclassicalState:
    return min(branch.points, key=lambda pt: abs(pt.g - g)).equilibrium.state


def photon_scan(
    p: ModelParams,
    branch: EquilibriumClass,
    g_end: float,
    deltas: Optional[np.ndarray] = None,
    step: float = 0.01,
    rng_seed: int = 0,
) -> PhotonScan:
    """Follow the stable branch from p.g toward g_end and sample it just before its first event."""
    if deltas is None:
        deltas = delta_grid(*DELTA_RANGE, DELTA_POINTS)
    deltas = np.sort(np.asarray(deltas))
    seed = _stable_seed(p, branch, rng_seed)
    path = branch_continuation(p, seed, g_end, step=step)
    event = terminating_event(path)
    direction = float(np.sign(g_end - p.g))
    guess = _nearest_point(path, event.g - direction * deltas[-1])
    kept: list[float] = []
    photons: list[np.ndarray] = []
    flags: list[bool] = []
    residuals: list[float] = []
    # largest distance first so each refined state seeds the next
    for delta in deltas[::-1]:
        pg = p.replace(g=event.g - direction * float(delta))
        state = refine_equilibrium(pg, guess)
        eq = make_equilibrium(pg, state) if state is not None else None
        if eq is None or eq.eq_class != branch:
            log.warning("lost the branch near the event", delta=float(delta))
            continue
        guess = eq.state
        try:
            moments = steady_moments(pg, eq)
        except (PreconditionError, SingularSystemError, MomentInvariantError) as e:
            log.warning("no steady state", delta=float(delta), reason=str(e))
            continue
        kept.append(float(delta))
        photons.append(moments.photon_numbers())
        flags.append(moments.det_nonzero)
        residuals.append(moments.residual)
    order = np.argsort(kept)
    log.info(
        "photon scan", branch=branch.value, event_kind=event.kind.value, g_star=event.g, points=len(kept)
    )
    return PhotonScan(
        event=event,
        deltas=np.asarray(kept)[order],
        photons=np.asarray(photons).reshape(-1, N_SITES)[order],
        det_nonzero=np.asarray(flags, dtype=bool)[order],
        residuals=np.asarray(residuals)[order],
    )


def equivalent_sites(photons: np.ndarray) -> list[list[int]]:
    """Group sites with matching photon numbers across the scan."""
    groups: list[list[int]] = []
    scale = np.maximum(np.max(np.abs(photons), axis=1), 1e-300)
    for n in range(N_SITES):
        for group in groups:
            if np.all(np.abs(photons[:, n] - photons[:, group[0]]) <= SITE_EQUIVALENCE * scale):
                group.append(n)
                break
        else:
            groups.append([n])
    return groups


def scaling_fit(scan: PhotonScan, branch: EquilibriumClass) -> ScalingReport:
    """Divergence exponent per inequivalent site: n_ph ~ |dg|**(-exponent)."""
    if len(scan.deltas) < 3:
        raise InconclusiveError("too few points survived the scan", points=len(scan.deltas))
    sites: list[SiteExponent] = []
    for group in equivalent_sites(scan.photons):
        fit = fit_power_law(scan.deltas, scan.photons[:, group[0]])
        if not fit.conclusive(MAX_FIT_RESIDUAL):
            raise InconclusiveError(
                "power-law fit residual too large", sites=group, residual=fit.residual
            )
        sites.append(SiteExponent(sites=group, exponent=-fit.exponent, fit=fit))
    report = ScalingReport(
        branch=branch.value,
        event=scan.event,
        sites=sites,
        max_residual=float(np.max(scan.residuals)),
    )
    log.info("scaling fit", report=report.summary())
    return report

