"""Ground-state energy landscape of the closed trimer in rescaled fields.

Real coordinates are ordered (Re a1, Re a2, Re a3, Im a1, Im a2, Im a3).
"""

import math
from enum import Enum
from typing import Any, Callable, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.optimize import brentq, least_squares, minimize

from trimer import config
from trimer.instrumentation import SOLVER_DURATION, SOLVER_FAILURES
from trimer.metrics import time
from trimer.model import (
    N_SITES,
    DomainError,
    ModelParams,
    TrimerError,
    UnsupportedError,
    derived_couplings,
)

log = structlog.get_logger(__name__)

N_RANDOM_SEEDS = 20
PHASE_COLUMNS = [
    "eta",
    "phi",
    "g_nf",
    "g_f",
    "g_c",
    "g_first_order",
    "phi_first_order",
    "phase_at_probe_g",
]
_SQRT3 = math.sqrt(3.0)


class SolverError(TrimerError):
    def __init__(self, message: str, best: Optional["GroundStateSolution"] = None, **context: Any):
        super().__init__(message, **context)
        self.best = best


class Phase(str, Enum):
    NP = "NP"
    NFSP = "nFSP"
    FSP = "FSP"


class FieldConfiguration(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha_bar: np.ndarray

    @field_validator("alpha_bar", mode="before")
    @classmethod
    def as_complex_triplet(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=complex).reshape(-1)
        if arr.shape != (N_SITES,):
            raise ValueError(f"expected {N_SITES} complex amplitudes, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("amplitudes must be finite")
        arr.setflags(write=False)
        return arr

    @classmethod
    def zero(cls) -> "FieldConfiguration":
        return cls(alpha_bar=np.zeros(N_SITES, dtype=complex))

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "FieldConfiguration":
        return cls(alpha_bar=x[:N_SITES] + 1j * x[N_SITES:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha_bar.real, self.alpha_bar.imag])

    def amplitudes(self, p: ModelParams) -> np.ndarray:
        """A-bar per site: sqrt(eta_+^2 Re^2 + eta_-^2 Im^2)."""
        d = derived_couplings(p)
        return np.sqrt(
            (d.eta_plus * self.alpha_bar.real) ** 2 + (d.eta_minus * self.alpha_bar.imag) ** 2
        )

    def permuted(self, order: Sequence[int]) -> "FieldConfiguration":
        return FieldConfiguration(alpha_bar=self.alpha_bar[list(order)])

    def parity(self) -> "FieldConfiguration":
        return FieldConfiguration(alpha_bar=-self.alpha_bar)

    def rotated(self, angle: float) -> "FieldConfiguration":
        return FieldConfiguration(alpha_bar=self.alpha_bar * np.exp(1j * angle))


class CriticalCouplings(BaseModel):
    model_config = ConfigDict(frozen=True)

    g_nf: float
    g_f: float
    g_c: float


class GroundStateSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    config: FieldConfiguration
    energy: float
    phase: Phase
    theta: np.ndarray
    phi: np.ndarray
    hessian_eigs: np.ndarray
    gradient_norm: float
    orbit_size: int
    u1_orbit: bool = False


class FspExpansion(BaseModel):
    model_config = ConfigDict(frozen=True)

    re_alpha1: float
    re_alpha2: float
    g_c: float
    r0: float
    s0: float
    r1: float
    s1: float


def _hopping_matrix(p: ModelParams) -> np.ndarray:
    """Hopping energy as 1/2 x^T K x in (Re, Im) coordinates."""
    shift = np.roll(np.eye(N_SITES), 1, axis=1)  # shift[n, n+1] = 1
    adjacency = shift + shift.T
    antisym = shift - shift.T
    c, s = math.cos(p.phi), math.sin(p.phi)
    xy = -2 * p.jbar * s * antisym
    return np.block(
        [
            [2 * p.jbar * c * adjacency, xy],
            [xy.T, 2 * p.jbar * c * adjacency],
        ]
    )


def energy(p: ModelParams, c: FieldConfiguration) -> float:
    a = c.alpha_bar
    onsite = np.abs(a) ** 2 - 0.5 * np.sqrt(1 + 4 * p.g**2 * c.amplitudes(p) ** 2)
    hop = np.exp(1j * p.phi) * np.conj(a) * np.roll(a, -1)
    return float(np.sum(onsite) + p.jbar * np.sum(hop + np.conj(hop)).real)


def _energy_vec(p: ModelParams, x: np.ndarray) -> float:
    return energy(p, FieldConfiguration.from_vector(x))


def energy_gradient(p: ModelParams, c: FieldConfiguration) -> np.ndarray:
    d = derived_couplings(p)
    x, y = c.alpha_bar.real, c.alpha_bar.imag
    root = np.sqrt(1 + 4 * p.g**2 * ((d.eta_plus * x) ** 2 + (d.eta_minus * y) ** 2))
    onsite = np.concatenate(
        [
            2 * x - 2 * p.g**2 * d.eta_plus**2 * x / root,
            2 * y - 2 * p.g**2 * d.eta_minus**2 * y / root,
        ]
    )
    return onsite + _hopping_matrix(p) @ c.as_vector()


def energy_hessian(p: ModelParams, c: FieldConfiguration) -> np.ndarray:
    d = derived_couplings(p)
    g2 = p.g**2
    a2, b2 = d.eta_plus**2, d.eta_minus**2
    x, y = c.alpha_bar.real, c.alpha_bar.imag
    root3 = np.sqrt(1 + 4 * g2 * (a2 * x**2 + b2 * y**2)) ** 3
    hxx = 2 - 2 * g2 * a2 * (1 + 4 * g2 * b2 * y**2) / root3
    hyy = 2 - 2 * g2 * b2 * (1 + 4 * g2 * a2 * x**2) / root3
    hxy = 8 * g2**2 * a2 * b2 * x * y / root3
    onsite = np.block([[np.diag(hxx), np.diag(hxy)], [np.diag(hxy), np.diag(hyy)]])
    hess = onsite + _hopping_matrix(p)
    return 0.5 * (hess + hess.T)


def np_eigenvalues(p: ModelParams) -> np.ndarray:
    """Closed-form Hessian eigenvalues at zero field, in the order xi_1 .. xi_6."""
    c, s = math.cos(p.phi), math.sin(p.phi)
    g2, eta, j = p.g**2, p.eta, p.jbar
    xi1 = 2 + 4 * j * c - g2 * (1 + eta) ** 2 / 2
    xi2 = 2 + 4 * j * c - g2 * (1 - eta) ** 2 / 2
    base = 2 - 2 * j * c - g2 * (1 + eta**2) / 2
    split = math.sqrt(12 * j**2 * s**2 + g2**2 * eta**2)
    return np.array([xi1, xi2, base + split, base - split, base + split, base - split])


def critical_coupling(p: ModelParams) -> CriticalCouplings:
    p.require_valid()
    d = derived_couplings(p)
    c, s = math.cos(p.phi), math.sin(p.phi)
    j, eta = p.jbar, p.eta
    g_nf = math.sqrt(1 + 2 * j * c) / max(abs(d.eta_plus), abs(d.eta_minus))
    if abs(1 - eta**2) < 1e-12:
        g_f = math.sqrt(3 * (1 - j**2) / (1 - j * c) - 4 * j * c - 2)
    else:
        a = 1 - j * c
        m = (1 + eta**2) * a
        n = 4 * eta**2 * a**2 + 3 * j**2 * s**2 * (1 - eta**2) ** 2
        g_f = 2 * math.sqrt(max(m - math.sqrt(n), 0.0)) / abs(1 - eta**2)
    return CriticalCouplings(g_nf=g_nf, g_f=g_f, g_c=min(g_nf, g_f))


def nfsp_solution(p: ModelParams) -> Optional[FieldConfiguration]:
    """Uniform superradiant field of lowest energy, or None below its threshold."""
    d = derived_couplings(p)
    if p.g <= 0:
        return None
    stiffness = 1 + 2 * p.jbar * math.cos(p.phi)
    if p.eta == 0:
        inner = p.g**4 / (16 * stiffness**2) - 1
        if inner <= 0:
            return None
        return FieldConfiguration(alpha_bar=np.full(N_SITES, math.sqrt(inner) / p.g))
    weight = d.eta_plus if p.eta > 0 else d.eta_minus
    inner = p.g**4 * weight**4 / stiffness**2 - 1
    if inner <= 0:
        return None
    amp = math.sqrt(inner) / (2 * p.g * weight)
    return FieldConfiguration(alpha_bar=np.full(N_SITES, amp if p.eta > 0 else 1j * amp))


def rotation_angles(p: ModelParams, c: FieldConfiguration) -> tuple[np.ndarray, np.ndarray]:
    d = derived_couplings(p)
    amp = c.amplitudes(p)
    theta = np.arccos(1 / np.sqrt(1 + 4 * p.g**2 * amp**2))
    phi = np.zeros(N_SITES)
    nz = amp > 0
    phi[nz] = np.arctan2(
        -d.eta_minus * c.alpha_bar.imag[nz] / amp[nz],
        d.eta_plus * c.alpha_bar.real[nz] / amp[nz],
    )
    return theta, phi


def _require_balanced(p: ModelParams) -> None:
    if abs(p.eta - 1) > 1e-12:
        raise UnsupportedError("reduction only available for eta = 1", eta=p.eta)


def _xi_reduced(p: ModelParams) -> tuple[float, float]:
    c, s = math.cos(p.phi), math.sin(p.phi)
    a = 1 - p.jbar * c
    xi0 = 1 - 2 * p.jbar**2 * s**2 / a
    xi1 = 2 * p.jbar * c + 2 * p.jbar**2 * s**2 / a
    return xi0, xi1


def imag_from_real(p: ModelParams, re_alphas: np.ndarray) -> np.ndarray:
    _require_balanced(p)
    p.require_valid()
    re = np.asarray(re_alphas, dtype=float)
    k = p.jbar * math.sin(p.phi) / (1 - p.jbar * math.cos(p.phi))
    return -k * (np.roll(re, -1) - np.roll(re, 1))


def reduced_fsp_energy(p: ModelParams, re_alphas: np.ndarray) -> float:
    _require_balanced(p)
    p.require_valid()
    xi0, xi1 = _xi_reduced(p)
    x = np.asarray(re_alphas, dtype=float)
    return float(
        xi0 * np.sum(x**2)
        - 0.5 * np.sum(np.sqrt(1 + 4 * p.g**2 * x**2))
        + xi1 * np.sum(x * np.roll(x, -1))
    )


def reduced_fsp_gradient(p: ModelParams, re_alphas: np.ndarray) -> np.ndarray:
    _require_balanced(p)
    xi0, xi1 = _xi_reduced(p)
    x = np.asarray(re_alphas, dtype=float)
    return (
        2 * xi0 * x
        - 2 * p.g**2 * x / np.sqrt(1 + 4 * p.g**2 * x**2)
        + xi1 * (np.roll(x, -1) + np.roll(x, 1))
    )


def fsp_pattern(p: ModelParams, sign: int = 1) -> np.ndarray:
    """Real parts (r, s, s) of the frustrated stationary point, polished from the expansion."""
    xi0, xi1 = _xi_reduced(p)
    start = fsp_expansion(p, p.g - math.sqrt(xi0 - xi1 / 2), sign)

    def residual(x: np.ndarray) -> np.ndarray:
        return reduced_fsp_gradient(p, np.array([x[0], x[1], x[1]]))[:2]

    res = least_squares(
        residual,
        np.array([start.re_alpha1, start.re_alpha2]),
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=config.SOLVER_MAX_ITER,
    )
    if float(np.max(np.abs(residual(res.x)))) > 1e-13:
        raise SolverError("frustrated pattern did not converge", g=p.g, status=res.status)
    return np.array([res.x[0], res.x[1], res.x[1]])


def fsp_expansion(p: ModelParams, delta_g: float, sign: int = 1) -> FspExpansion:
    _require_balanced(p)
    p.require_valid()
    if delta_g <= 0:
        raise DomainError("expansion needs delta_g > 0", delta_g=delta_g)
    xi0, xi1 = _xi_reduced(p)
    if abs(xi1) < 1e-14:
        raise UnsupportedError("no frustrated branch without effective hopping", xi1=xi1)
    gc = math.sqrt(xi0 - xi1 / 2)
    sgn = 1.0 if sign >= 0 else -1.0
    r0 = sgn * 2 / (_SQRT3 * gc**1.5)
    s0 = -r0 / 2
    r1 = sgn / (6 * _SQRT3 * gc**2.5)
    s1 = -sgn * (4 / (3 * _SQRT3 * xi1 * math.sqrt(gc)) + 1 / (12 * _SQRT3 * gc**2.5))
    root = math.sqrt(delta_g)
    return FspExpansion(
        re_alpha1=r0 * root + r1 * delta_g * root,
        re_alpha2=s0 * root + s1 * delta_g * root,
        g_c=gc,
        r0=r0,
        s0=s0,
        r1=r1,
        s1=s1,
    )


def fsp_seeds(p: ModelParams) -> list[FieldConfiguration]:
    """Six pattern seeds: one site against the other two, both signs, every position."""
    try:
        g_f = critical_coupling(p).g_f
        delta = max(p.g - g_f, 1e-3)
        amp = 2 / (_SQRT3 * max(g_f, 1e-3) ** 1.5) * math.sqrt(delta)
    except DomainError:
        amp = 0.5
    amp = min(amp, max(2 * p.g, 0.1))
    unit = 1.0 if p.eta >= 0 else 1j
    seeds: list[FieldConfiguration] = []
    for site in range(N_SITES):
        for sgn in (1.0, -1.0):
            pattern = np.full(N_SITES, -0.5 * sgn * amp * unit, dtype=complex)
            pattern[site] = sgn * amp * unit
            seeds.append(FieldConfiguration(alpha_bar=pattern))
    return seeds


def default_seeds(p: ModelParams, rng: np.random.Generator) -> list[FieldConfiguration]:
    seeds = [FieldConfiguration.zero()]
    uniform = nfsp_solution(p)
    if uniform is None:
        unit = 1.0 if p.eta >= 0 else 1j
        uniform = FieldConfiguration(alpha_bar=np.full(N_SITES, 0.1 * unit))
    seeds += [uniform, uniform.parity()]
    seeds += fsp_seeds(p)
    radius = max(2 * p.g, 0.1)
    for _ in range(N_RANDOM_SEEDS):
        r = radius * np.sqrt(rng.uniform(size=N_SITES))
        angle = rng.uniform(0, 2 * math.pi, size=N_SITES)
        seeds.append(FieldConfiguration(alpha_bar=r * np.exp(1j * angle)))
    return seeds


def local_minimum(p: ModelParams, seed: FieldConfiguration) -> tuple[np.ndarray, float, float]:
    """Quasi-Newton descent followed by Newton polishing; returns (x, energy, |grad|)."""

    def grad(x: np.ndarray) -> np.ndarray:
        return energy_gradient(p, FieldConfiguration.from_vector(x))

    res = minimize(
        lambda x: _energy_vec(p, x),  # type: ignore[arg-type]
        seed.as_vector(),
        jac=grad,
        method="BFGS",
        options={"gtol": 1e-12, "maxiter": config.SOLVER_MAX_ITER},
    )
    x = np.asarray(res.x)
    e = _energy_vec(p, x)
    gnorm = float(np.linalg.norm(grad(x)))
    for _ in range(30):
        if gnorm < config.GRADIENT_TOL * 1e-2:
            break
        hess = energy_hessian(p, FieldConfiguration.from_vector(x))
        step = np.linalg.lstsq(hess, -grad(x), rcond=1e-13)[0]
        x_new = x + step
        e_new = _energy_vec(p, x_new)
        g_new = float(np.linalg.norm(grad(x_new)))
        if g_new >= gnorm or e_new > e + 1e-13:
            break
        x, e, gnorm = x_new, e_new, g_new
    return x, e, gnorm


def classify_phase(c: FieldConfiguration) -> Phase:
    a = c.alpha_bar
    if np.max(np.abs(a)) < config.AMPLITUDE_TOL:
        return Phase.NP
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a[0])) < config.AMPLITUDE_TOL * scale:
        return Phase.NFSP
    return Phase.FSP


def _gauge_fixed(c: FieldConfiguration) -> FieldConfiguration:
    nonzero = np.flatnonzero(np.abs(c.alpha_bar) > config.AMPLITUDE_TOL)
    if nonzero.size == 0:
        return c
    ref = c.alpha_bar[nonzero[0]]
    return c.rotated(-math.atan2(ref.imag, ref.real))


def solution_at(p: ModelParams, x: np.ndarray, gnorm: float) -> GroundStateSolution:
    c = FieldConfiguration.from_vector(x)
    phase = classify_phase(c)
    if phase == Phase.NP:
        c = FieldConfiguration.zero()
        gnorm = 0.0
    u1 = p.eta == 0 and phase != Phase.NP
    if u1:
        c = _gauge_fixed(c)
    theta, phi = rotation_angles(p, c)
    return GroundStateSolution(
        config=c,
        energy=energy(p, c),
        phase=phase,
        theta=theta,
        phi=phi,
        hessian_eigs=np.linalg.eigvalsh(energy_hessian(p, c)),
        gradient_norm=gnorm,
        orbit_size={Phase.NP: 1, Phase.NFSP: 2, Phase.FSP: 6}[phase],
        u1_orbit=u1,
    )


@time(SOLVER_DURATION, solver="ground_state")
def minimize_ground_state(
    p: ModelParams,
    seeds: Optional[list[FieldConfiguration]] = None,
    rng_seed: int = 0,
) -> GroundStateSolution:
    if seeds is None:
        seeds = default_seeds(p, np.random.default_rng(rng_seed))
    best: Optional[tuple[np.ndarray, float, float]] = None
    best_converged: Optional[tuple[np.ndarray, float, float]] = None
    for seed in seeds:
        x, e, gnorm = local_minimum(p, seed)
        if best is None or e < best[1]:
            best = (x, e, gnorm)
        if gnorm < config.GRADIENT_TOL and (best_converged is None or e < best_converged[1]):
            best_converged = (x, e, gnorm)
    if best_converged is None:
        assert best is not None
        SOLVER_FAILURES.labels(solver="ground_state", reason="gradient").inc()
        partial = solution_at(p, best[0], best[2])
        raise SolverError(
            "ground state search did not converge",
            best=partial,
            gradient_norm=best[2],
            seeds=len(seeds),
        )
    solution = solution_at(p, best_converged[0], best_converged[2])
    log.debug(
        "ground state",
        g=p.g,
        eta=p.eta,
        phi=p.phi,
        phase=solution.phase.value,
        energy=solution.energy,
    )
    return solution


def tricritical_phi(p: ModelParams) -> float:
    """Flux at which the uniform and frustrated thresholds coincide."""

    def gap(phi: float) -> float:
        cc = critical_coupling(p.replace(phi=phi))
        return cc.g_nf - cc.g_f

    lo, hi = 0.0, math.pi
    if not (p.replace(phi=lo).valid and p.replace(phi=hi).valid):
        raise DomainError("flux range leaves the hopping constraints", jbar=p.jbar)
    if gap(lo) * gap(hi) > 0:
        raise DomainError("thresholds never cross on [0, pi]", jbar=p.jbar, eta=p.eta)
    return float(brentq(gap, lo, hi, xtol=1e-12))


def _frustrated_minimum(
    p: ModelParams, seeds: Sequence[FieldConfiguration]
) -> Optional[GroundStateSolution]:
    """Lowest converged frustrated local minimum reached from the seeds."""
    found: Optional[GroundStateSolution] = None
    for seed in seeds:
        x, _, gnorm = local_minimum(p, seed)
        sol = solution_at(p, x, gnorm)
        if sol.phase != Phase.FSP or gnorm >= 1e-8:
            continue
        if found is None or sol.energy < found.energy:
            found = sol
    return found


def branch_gap(
    p: ModelParams, seeds: Sequence[FieldConfiguration]
) -> Optional[tuple[float, GroundStateSolution]]:
    """E_FSP - E_nFSP with the frustrated minimum used, or None unless both branches exist."""
    uniform = nfsp_solution(p)
    if uniform is None:
        return None
    fs = _frustrated_minimum(p, seeds)
    if fs is None:
        return None
    return fs.energy - energy(p, uniform), fs


def _bisect_gap(
    at: Callable[[float], ModelParams],
    lo: float,
    hi: float,
    seeds: list[FieldConfiguration],
) -> float:
    def f(v: float) -> float:
        gap = branch_gap(at(v), seeds)
        if gap is None:
            raise SolverError("a branch was lost inside the bracket", at=v)
        return gap[0]

    return float(brentq(f, lo, hi, xtol=1e-6))


def first_order_boundary(p: ModelParams, g_max: float, points: int = 200) -> Optional[float]:
    """Coupling in (max threshold, g_max) where the frustrated and uniform branches swap.

    None when the frustrated branch is lost or stays on one side of the uniform one. At eta = 1
    that is always the case, the boundary there being vertical at tricritical_phi.
    """
    cc = critical_coupling(p)
    g_lo = max(cc.g_nf, cc.g_f) * (1 + 1e-6)
    if g_lo >= g_max:
        return None
    seeds = fsp_seeds(p.replace(g=g_lo))
    prev_g, prev_d = None, None
    for g in np.linspace(g_lo, g_max, points):
        gap = branch_gap(p.replace(g=float(g)), seeds)
        if gap is None:
            return None
        d, fs = gap
        seeds = [fs.config]
        if prev_d is not None and prev_g is not None and prev_d * d < 0:
            g_star = _bisect_gap(lambda v: p.replace(g=v), prev_g, float(g), list(seeds))
            log.info("first-order boundary", g=g_star, eta=p.eta, phi=p.phi)
            return g_star
        prev_g, prev_d = float(g), d
    return None


def first_order_flux(p: ModelParams, points: int = 60) -> Optional[float]:
    """Flux at which the frustrated and uniform branches swap, at fixed g and eta.

    Scans the valid part of [0, pi] where both branches exist and bisects the first sign change.
    """
    prev_phi, prev_d = None, None
    seeds: list[FieldConfiguration] = []
    for phi in np.linspace(0.0, math.pi, points):
        pp = p.replace(phi=float(phi))
        gap = branch_gap(pp, seeds + fsp_seeds(pp)) if pp.valid else None
        if gap is None:
            prev_phi, prev_d, seeds = None, None, []
            continue
        d, fs = gap
        seeds = [fs.config]
        if prev_d is not None and prev_phi is not None and prev_d * d < 0:
            phi_star = _bisect_gap(
                lambda v: p.replace(phi=v), prev_phi, float(phi), seeds + fsp_seeds(pp)
            )
            log.info("first-order flux", phi=phi_star, g=p.g, eta=p.eta)
            return phi_star
        prev_phi, prev_d = float(phi), d
    return None


def _phase_row(
    base: ModelParams,
    eta: float,
    phi: float,
    probe_g: Optional[float],
    g_max: Optional[float],
) -> dict[str, Any]:
    p = base.replace(eta=eta, phi=phi)
    row: dict[str, Any] = {"eta": eta, "phi": phi}
    try:
        cc = critical_coupling(p)
        row.update(g_nf=cc.g_nf, g_f=cc.g_f, g_c=cc.g_c)
    except DomainError as e:
        log.warning("skipping invalid point", eta=eta, phi=phi, reason=e.message)
        row.update(
            g_nf=np.nan, g_f=np.nan, g_c=np.nan, g_first_order=np.nan, phase_at_probe_g="invalid"
        )
        return row
    row["g_first_order"] = np.nan
    if g_max is not None:
        try:
            g_star = first_order_boundary(p, g_max)
        except SolverError as e:
            log.warning("first-order search failed", eta=eta, phi=phi, reason=e.message)
            g_star = None
        if g_star is not None:
            row["g_first_order"] = g_star
    if probe_g is None:
        row["phase_at_probe_g"] = ""
    else:
        try:
            row["phase_at_probe_g"] = minimize_ground_state(p.replace(g=probe_g)).phase.value
        except SolverError as e:
            log.warning("phase at the given g did not converge", eta=eta, phi=phi, reason=e.message)
            row["phase_at_probe_g"] = "unconverged"
    return row


def _flux_row(p: ModelParams) -> Optional[float]:
    try:
        return first_order_flux(p)
    except SolverError as e:
        log.warning("first-order flux search failed", eta=p.eta, g=p.g, reason=e.message)
        return None


def phase_diagram(
    base: ModelParams,
    etas: Sequence[float],
    phis: Sequence[float],
    probe_g: Optional[float] = None,
    threads: int = 1,
    g_max: Optional[float] = None,
) -> pd.DataFrame:
    """Thresholds per (eta, phi).

    With g_max, g_first_order is the first-order coupling below it; with probe_g,
    phi_first_order is the first-order flux at probe_g for that eta. NaN where absent.
    """
    grid = [(float(eta), float(phi)) for phi in phis for eta in etas]
    rows = Parallel(n_jobs=threads)(
        delayed(_phase_row)(base, eta, phi, probe_g, g_max) for eta, phi in grid
    )
    flux: dict[float, Optional[float]] = {}
    if probe_g is not None:
        unique = sorted({eta for eta, _ in grid})
        found = Parallel(n_jobs=threads)(
            delayed(_flux_row)(base.replace(eta=eta, g=probe_g)) for eta in unique
        )
        flux = dict(zip(unique, found))
    for row in rows:
        value = flux.get(row["eta"])
        row["phi_first_order"] = np.nan if value is None else value
    frame = pd.DataFrame(rows, columns=PHASE_COLUMNS)
    log.info("phase diagram", points=len(frame), probe_g=probe_g)
    return frame
