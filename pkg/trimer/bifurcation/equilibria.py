"""Stationary solutions of the mean-field equations and their stability.

Every equilibrium has each spin along +-(effective field) of its own cavity, so the
search runs over the cavity fields only and the spins follow from aligned_spins.
"""

import math
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.optimize import least_squares

from trimer import config
from trimer.bifurcation.jacobian import jacobian_eigenvalues
from trimer.dynamics.equations import mean_field_energy, rhs_vector
from trimer.dynamics.state import SemiclassicalState, aligned_spins
from trimer.landscape import minimize_ground_state
from trimer.model import (
    N_SITES,
    ModelParams,
    TrimerError,
    apply_parity,
    reflection_order,
    translation_order,
)

log = structlog.get_logger(__name__)

# stable iff every real part lies below -STABILITY_TOL
STABILITY_TOL = 1e-9
N_RANDOM_SEEDS = 30
SYMMETRY_TOL = 1e-7


class EquilibriumClass(str, Enum):
    N = "N"
    NFS = "nFS"
    FS = "FS"
    MIXED = "mixed"

    @property
    def branch_label(self) -> str:
        return {"N": "n", "nFS": "nfs", "FS": "fs", "mixed": "mix"}[self.value]


ALL_CLASSES = tuple(EquilibriumClass)


class Equilibrium(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    state: SemiclassicalState
    eq_class: EquilibriumClass
    stable: bool
    jacobian_eigs: np.ndarray
    residual: float
    energy: float

    @property
    def max_re(self) -> float:
        return float(self.jacobian_eigs[0].real)

    @property
    def osc_frequency(self) -> float:
        return float(abs(self.jacobian_eigs[0].imag))


def classify_state(s: SemiclassicalState) -> Optional[EquilibriumClass]:
    """Class by the pattern of cavity fields; None for patterns no equilibrium can have."""
    a = s.alpha
    scale = max(1.0, float(np.max(np.abs(a))))
    tol = config.AMPLITUDE_TOL * scale
    zero = np.abs(a) < tol
    if zero.all():
        return EquilibriumClass.N
    if np.max(np.abs(a - a[0])) < tol:
        return EquilibriumClass.NFS
    if zero.sum() == 1:
        n = int(np.flatnonzero(zero)[0])
        if abs(a[(n + 1) % N_SITES] + a[(n + 2) % N_SITES]) < tol:
            return EquilibriumClass.MIXED
        return None
    if zero.any():
        return None
    return EquilibriumClass.FS


def state_from_fields(p: ModelParams, alpha: np.ndarray, sigma: float) -> SemiclassicalState:
    return SemiclassicalState(alpha=alpha, spin=aligned_spins(p, alpha, sigma))


def _fields(x: np.ndarray) -> np.ndarray:
    return x[:N_SITES] + 1j * x[N_SITES:]


def cavity_residual(p: ModelParams, alpha: np.ndarray, sigma: float) -> np.ndarray:
    """Re/Im of the cavity equations with the spins slaved to the fields."""
    y = state_from_fields(p, alpha, sigma).as_vector()
    return rhs_vector(p, y)[: 2 * N_SITES]


def _solve(
    residual: Callable[[np.ndarray], np.ndarray], x0: np.ndarray
) -> Optional[np.ndarray]:
    try:
        res = least_squares(
            residual,
            x0,
            method="lm",
            xtol=1e-15,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=config.SOLVER_MAX_ITER,
        )
    except (ValueError, np.linalg.LinAlgError):
        return None
    if not np.all(np.isfinite(res.x)):
        return None
    if float(np.max(np.abs(residual(res.x)))) > config.EQUILIBRIUM_TOL:
        return None
    return np.asarray(res.x)


def make_equilibrium(p: ModelParams, s: SemiclassicalState) -> Optional[Equilibrium]:
    """Wrap a verified root; None if it is not stationary or its field pattern is impossible."""
    residual = float(np.max(np.abs(rhs_vector(p, s.as_vector()))))
    if residual > config.EQUILIBRIUM_TOL:
        return None
    eq_class = classify_state(s)
    if eq_class is None:
        return None
    eigs = jacobian_eigenvalues(p, s)
    return Equilibrium(
        state=s,
        eq_class=eq_class,
        stable=bool(eigs[0].real < -STABILITY_TOL),
        jacobian_eigs=eigs,
        residual=residual,
        energy=mean_field_energy(p, s),
    )


def refine_equilibrium(
    p: ModelParams, guess: SemiclassicalState
) -> Optional[SemiclassicalState]:
    """Newton-type correction in all six field coordinates, keeping the spin orientation signs."""
    sigma = float(np.sign(np.sum(guess.spin[:, 2])) or -1.0)
    x0 = np.concatenate([guess.alpha.real, guess.alpha.imag])
    x = _solve(lambda x: cavity_residual(p, _fields(x), sigma), x0)
    if x is None:
        return None
    return state_from_fields(p, _fields(x), sigma)


def normal_equilibria(p: ModelParams) -> list[SemiclassicalState]:
    zero = np.zeros(N_SITES, dtype=complex)
    return [state_from_fields(p, zero, sigma) for sigma in (-1.0, 1.0)]


def _uniform_roots(
    p: ModelParams, sigma: float, seeds: Iterable[complex]
) -> list[SemiclassicalState]:
    def residual(x: np.ndarray) -> np.ndarray:
        return cavity_residual(p, np.full(N_SITES, complex(x[0], x[1])), sigma)[[0, N_SITES]]

    found: list[SemiclassicalState] = []
    for seed in seeds:
        x = _solve(residual, np.array([seed.real, seed.imag]))
        if x is not None and math.hypot(x[0], x[1]) > config.AMPLITUDE_TOL:
            found.append(state_from_fields(p, np.full(N_SITES, complex(x[0], x[1])), sigma))
    return found


def _mixed_roots(
    p: ModelParams, sigma: float, seeds: Iterable[complex]
) -> list[SemiclassicalState]:
    rot = np.exp(2j * p.phi)

    def pattern(x: np.ndarray) -> np.ndarray:
        a2 = complex(x[0], x[1])
        return np.array([0.0, a2, -rot * a2])

    found: list[SemiclassicalState] = []
    for seed in seeds:
        x0 = np.array([seed.real, seed.imag])
        x = _solve(lambda x: cavity_residual(p, pattern(x), sigma), x0)
        if x is not None and math.hypot(x[0], x[1]) > config.AMPLITUDE_TOL:
            found.append(state_from_fields(p, pattern(x), sigma))
    return found


def _general_roots(
    p: ModelParams, sigma: float, seeds: Iterable[np.ndarray]
) -> list[SemiclassicalState]:
    found: list[SemiclassicalState] = []
    for seed in seeds:
        x = _solve(lambda x: cavity_residual(p, _fields(x), sigma), seed)
        if x is not None:
            found.append(state_from_fields(p, _fields(x), sigma))
    return found


def _paired_roots(
    p: ModelParams, sigma: float, seeds: Iterable[tuple[complex, complex]]
) -> list[SemiclassicalState]:
    """The alpha_2 = alpha_3 pattern."""

    def pattern(x: np.ndarray) -> np.ndarray:
        return np.array([complex(x[0], x[1]), complex(x[2], x[3]), complex(x[2], x[3])])

    found: list[SemiclassicalState] = []
    for a1, a2 in seeds:
        x0 = np.array([a1.real, a1.imag, a2.real, a2.imag])
        x = _solve(lambda x: cavity_residual(p, pattern(x), sigma), x0)
        if x is not None:
            found.append(state_from_fields(p, pattern(x), sigma))
    return found


def two_vanishing_roots(p: ModelParams) -> list[SemiclassicalState]:
    """Roots with the whole field in the first cavity.

    Hopping drives both empty neighbours, so with jbar != 0 the list comes back empty.
    """

    def pattern(x: np.ndarray) -> np.ndarray:
        return np.array([complex(x[0], x[1]), 0.0, 0.0])

    found: list[SemiclassicalState] = []
    for sigma in (-1.0, 1.0):
        for seed in _seed_ring(p):
            x0 = np.array([seed.real, seed.imag])
            x = _solve(lambda x: cavity_residual(p, pattern(x), sigma), x0)
            if x is not None and math.hypot(x[0], x[1]) > config.AMPLITUDE_TOL:
                found.append(state_from_fields(p, pattern(x), sigma))
    log.debug("two vanishing cavities", jbar=p.jbar, roots=len(found))
    return deduplicate(p, found)


def _amplitude_scale(p: ModelParams) -> float:
    return max(2 * p.g * math.sqrt(p.omega_a / p.omega0), 0.2)


def _landscape_seed(p: ModelParams) -> Optional[np.ndarray]:
    """Closed-system minimizer, unrescaled, as an extra seed."""
    try:
        gs = minimize_ground_state(p.replace(kappa=0.0))
    except TrimerError as e:
        log.debug("landscape seed unavailable", reason=str(e))
        return None
    return gs.config.alpha_bar * math.sqrt(p.omega_a / p.omega0)


def _seed_ring(p: ModelParams) -> list[complex]:
    radii = _amplitude_scale(p) * np.array([0.05, 0.25, 0.6, 1.0, 1.6])
    angles = np.linspace(0, 2 * math.pi, 8, endpoint=False)
    return [complex(r * np.exp(1j * t)) for r in radii for t in angles]


def candidate_states(
    p: ModelParams,
    classes: Sequence[EquilibriumClass],
    rng: np.random.Generator,
) -> list[SemiclassicalState]:
    scale = _amplitude_scale(p)
    ring = _seed_ring(p)
    states: list[SemiclassicalState] = []
    if EquilibriumClass.N in classes:
        states += normal_equilibria(p)
    for sigma in (-1.0, 1.0):
        if EquilibriumClass.NFS in classes:
            states += _uniform_roots(p, sigma, ring)
        if EquilibriumClass.MIXED in classes:
            states += _mixed_roots(p, sigma, ring)
        if EquilibriumClass.FS in classes:
            pairs = [(z, -0.5 * z) for z in ring] + [(z, 0.5 * z * 1j) for z in ring]
            states += _paired_roots(p, sigma, pairs)
            general = [
                scale * rng.normal(size=2 * N_SITES) for _ in range(N_RANDOM_SEEDS)
            ]
            landscape = _landscape_seed(p)
            if landscape is not None:
                general.append(np.concatenate([landscape.real, landscape.imag]))
            states += _general_roots(p, sigma, general)
    return states


def orbit(p: ModelParams, s: SemiclassicalState) -> list[SemiclassicalState]:
    images: list[SemiclassicalState] = []
    orders = [translation_order(t) for t in range(N_SITES)]
    if p.time_reversal_symmetric:
        orders += [reflection_order(f) for f in range(N_SITES)]
    for order in orders:
        moved = s.permuted(order)
        images += [moved, apply_parity(moved)]
    return images


def same_state(a: SemiclassicalState, b: SemiclassicalState, tol: float = SYMMETRY_TOL) -> bool:
    va, vb = a.as_vector(), b.as_vector()
    return float(np.max(np.abs(va - vb))) < tol * max(1.0, float(np.max(np.abs(va))))


def deduplicate(p: ModelParams, states: Sequence[SemiclassicalState]) -> list[SemiclassicalState]:
    """Keep one representative per symmetry orbit, first come first kept."""
    kept: list[SemiclassicalState] = []
    for s in states:
        if not any(same_state(image, k) for k in kept for image in orbit(p, s)):
            kept.append(s)
    return kept


def find_equilibria(
    p: ModelParams,
    classes: Optional[Sequence[EquilibriumClass]] = None,
    rng_seed: int = 0,
) -> list[Equilibrium]:
    """All equilibria of the requested classes, one per symmetry orbit.

    The three spins share one orientation relative to their fields. Patterns with two empty
    cavities are not searched; two_vanishing_roots finds none of them once jbar != 0.
    """
    classes = tuple(classes) if classes is not None else ALL_CLASSES
    rng = np.random.default_rng(rng_seed)
    raw = candidate_states(p, classes, rng)
    found: list[Equilibrium] = []
    for s in deduplicate(p, raw):
        eq = make_equilibrium(p, s)
        if eq is None:
            log.debug("dropped candidate", reason="not stationary or impossible pattern")
            continue
        if eq.eq_class in classes:
            found.append(eq)
    rank = {c: i for i, c in enumerate(ALL_CLASSES)}
    found.sort(
        key=lambda e: (rank[e.eq_class], round(float(np.linalg.norm(e.state.alpha)), 9), -e.stable)
    )
    log.info(
        "equilibria",
        g=p.g,
        eta=p.eta,
        phi=p.phi,
        kappa=p.kappa,
        found=len(found),
        stable=sum(e.stable for e in found),
    )
    return found
