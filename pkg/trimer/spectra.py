"""Quadratic fluctuation Hamiltonian around a ground state, its spectrum and variances.

Quadrature order per site is (q, p, Q, P): cavity then rotated spin.
"""

import math
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict
from scipy.optimize import linear_sum_assignment

from trimer import config
from trimer.fitting import PowerLawFit, fit_power_law
from trimer.landscape import (
    GroundStateSolution,
    Phase,
    SolverError,
    critical_coupling,
    energy_gradient,
    minimize_ground_state,
)
from trimer.model import (
    N_SITES,
    ModelParams,
    PreconditionError,
    UnsupportedError,
    derived_couplings,
)
from trimer.symplectic import QuadraticHamiltonian, SpectralError, SymplecticSpectrum, williamson

log = structlog.get_logger(__name__)

QUADRATURES_PER_SITE = 4
STATIONARY_TOL = 1e-6


def _light_matter_block(p: ModelParams, alpha: complex) -> np.ndarray:
    """Site block over (q, p, Q, P)."""
    d = derived_couplings(p)
    c = p.g * math.sqrt(p.omega0 * p.omega_a)
    amp = math.sqrt((d.eta_plus * alpha.real) ** 2 + (d.eta_minus * alpha.imag) ** 2)
    root = math.sqrt(1 + 4 * p.g**2 * amp**2)
    block = np.diag([p.omega0, p.omega0, p.omega_a * root, p.omega_a * root])
    if amp < config.AMPLITUDE_TOL:
        q_q, q_p, p_q, p_p = -c * d.eta_plus, 0.0, 0.0, -c * d.eta_minus
    else:
        q_q = c * d.eta_plus**2 * alpha.real / (amp * root)
        q_p = -c * d.eta_plus * d.eta_minus * alpha.imag / amp
        p_q = c * d.eta_minus**2 * alpha.imag / (amp * root)
        p_p = c * d.eta_plus * d.eta_minus * alpha.real / amp
    block[0, 2] = block[2, 0] = q_q
    block[0, 3] = block[3, 0] = q_p
    block[1, 2] = block[2, 1] = p_q
    block[1, 3] = block[3, 1] = p_p
    return block


def _hopping_block(p: ModelParams) -> np.ndarray:
    """Coupling of site n to site n+1."""
    j = p.jbar * p.omega0
    block = np.zeros((QUADRATURES_PER_SITE, QUADRATURES_PER_SITE))
    block[:2, :2] = [
        [j * math.cos(p.phi), -j * math.sin(p.phi)],
        [j * math.sin(p.phi), j * math.cos(p.phi)],
    ]
    return block


def build_hq(p: ModelParams, gs: GroundStateSolution) -> QuadraticHamiltonian:
    grad = float(np.linalg.norm(energy_gradient(p, gs.config)))
    if grad > STATIONARY_TOL:
        raise PreconditionError("expansion point is not stationary", gradient_norm=grad)
    size = QUADRATURES_PER_SITE
    matrix = np.zeros((N_SITES * size, N_SITES * size))
    hop = _hopping_block(p)
    for n, alpha in enumerate(gs.config.alpha_bar):
        m = (n + 1) % N_SITES
        matrix[n * size : (n + 1) * size, n * size : (n + 1) * size] = _light_matter_block(
            p, complex(alpha)
        )
        matrix[n * size : (n + 1) * size, m * size : (m + 1) * size] += hop
        matrix[m * size : (m + 1) * size, n * size : (n + 1) * size] += hop.T
    return QuadraticHamiltonian(matrix=matrix, source=gs)


def k0_dispersion(p: ModelParams, gs: GroundStateSolution) -> tuple[float, float]:
    """The two uniform (k = 0) excitation energies, larger first."""
    if gs.phase == Phase.FSP:
        raise UnsupportedError("no closed form for the frustrated phase", phase=gs.phase.value)
    d = derived_couplings(p)
    c = p.g * math.sqrt(p.omega0 * p.omega_a)
    alpha = complex(gs.config.alpha_bar[0])
    amp = float(gs.config.amplitudes(p)[0])
    root = math.sqrt(1 + 4 * p.g**2 * amp**2)
    d1 = p.omega0 + 2 * p.jbar * p.omega0 * math.cos(p.phi)
    d2 = p.omega_a * root
    if gs.phase == Phase.NP:
        r1, r2, i1, i2 = -c * d.eta_plus, -c * d.eta_minus, 0.0, 0.0
    else:
        r1 = c * d.eta_plus**2 * alpha.real / (amp * root)
        r2 = c * d.eta_plus * d.eta_minus * alpha.real / amp
        i1 = c * d.eta_minus**2 * alpha.imag / (amp * root)
        i2 = c * d.eta_plus * d.eta_minus * alpha.imag / amp
    f = (d1**2 + d2**2 + 2 * r1 * r2 + 2 * i1 * i2) / 2
    g = d1 * d2 * (r1**2 + r2**2 + i1**2 + i2**2) - d1**2 * d2**2 - (r1 * r2 + i1 * i2) ** 2
    disc = math.sqrt(max(f**2 + g, 0.0))
    return math.sqrt(max(f + disc, 0.0)), math.sqrt(max(f - disc, 0.0))


def ground_variance(p: ModelParams, gs: GroundStateSolution) -> tuple[np.ndarray, np.ndarray]:
    """Per-site cavity <q_n^2>, <p_n^2> in the quasi-particle vacuum."""
    cov = williamson(build_hq(p, gs)).covariance()
    idx = np.arange(N_SITES) * QUADRATURES_PER_SITE
    return np.diag(cov)[idx], np.diag(cov)[idx + 1]


class SpectrumPoint(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    g: float
    phase: str
    spectrum: Optional[SymplecticSpectrum]
    k0: tuple[float, float]
    var_q: np.ndarray

    @property
    def epsilons(self) -> np.ndarray:
        if self.spectrum is None:
            return np.full(2 * N_SITES, np.nan)
        return self.spectrum.epsilons


def spectrum_at(p: ModelParams) -> SpectrumPoint:
    nan3 = np.full(N_SITES, np.nan)
    try:
        gs = minimize_ground_state(p)
        spectrum = williamson(build_hq(p, gs))
    except (SolverError, SpectralError) as e:
        log.warning("spectrum point failed", g=p.g, reason=e.message)
        return SpectrumPoint(
            g=p.g, phase="error", spectrum=None, k0=(math.nan, math.nan), var_q=nan3
        )
    k0 = k0_dispersion(p, gs) if gs.phase != Phase.FSP else (math.nan, math.nan)
    idx = np.arange(N_SITES) * QUADRATURES_PER_SITE
    var_q = np.diag(spectrum.covariance())[idx]
    return SpectrumPoint(g=p.g, phase=gs.phase.value, spectrum=spectrum, k0=k0, var_q=var_q)


def order_branches(rows: np.ndarray) -> np.ndarray:
    """Reorder each row to continue the previous finite row with minimal total jump."""
    ordered = rows.copy()
    last: Optional[np.ndarray] = None
    for i, row in enumerate(rows):
        if not np.all(np.isfinite(row)):
            continue
        if last is not None:
            cost = np.abs(last[:, None] - row[None, :])
            _, cols = linear_sum_assignment(cost)
            ordered[i] = row[cols]
        last = ordered[i]
    return ordered


def spectrum_sweep(p: ModelParams, g_values: Sequence[float], threads: int = 1) -> pd.DataFrame:
    points: list[SpectrumPoint] = Parallel(n_jobs=threads)(
        delayed(spectrum_at)(p.replace(g=float(g))) for g in g_values
    )
    eps = order_branches(np.array([pt.epsilons for pt in points]))
    frame = pd.DataFrame({"g": [pt.g for pt in points], "phase": [pt.phase for pt in points]})
    for k in range(2 * N_SITES):
        frame[f"eps{k + 1}"] = eps[:, k]
    frame["eps_k0_1"] = [pt.k0[0] for pt in points]
    frame["eps_k0_2"] = [pt.k0[1] for pt in points]
    for n in range(N_SITES):
        frame[f"var_q{n + 1}"] = [pt.var_q[n] for pt in points]
    failed = int((frame["phase"] == "error").sum())
    log.info("spectrum sweep", points=len(frame), failed=failed)
    return frame


def side_couplings(p: ModelParams, deltas: np.ndarray, side: str) -> tuple[float, np.ndarray]:
    """Couplings at distance delta below ("np") or above ("sp") the threshold."""
    g_c = critical_coupling(p).g_c
    if side == "np":
        return g_c, g_c - deltas
    if side == "sp":
        return g_c, g_c + deltas
    raise ValueError(f"side must be 'np' or 'sp', got {side!r}")


def soft_mode_exponent(
    p: ModelParams, deltas: np.ndarray, side: str = "np", mode: int = 0
) -> PowerLawFit:
    """Exponent of the mode-th smallest finite excitation energy against delta g."""
    _, gs_values = side_couplings(p, deltas, side)
    energies: list[float] = []
    for g in gs_values:
        point = spectrum_at(p.replace(g=float(g)))
        if point.spectrum is None:
            energies.append(math.nan)
            continue
        finite = np.sort(point.spectrum.epsilons[~point.spectrum.zero_modes])
        energies.append(float(finite[mode]))
    fit = fit_power_law(deltas, np.array(energies))
    log.info("soft mode exponent", side=side, phi=p.phi, eta=p.eta, exponent=fit.exponent)
    return fit


def variance_profile(p: ModelParams, deltas: np.ndarray, side: str = "np") -> pd.DataFrame:
    _, gs_values = side_couplings(p, deltas, side)
    rows: list[dict[str, Any]] = []
    for delta, g in zip(deltas, gs_values):
        point = spectrum_at(p.replace(g=float(g)))
        row: dict[str, Any] = {"delta_g": float(delta)}
        for n in range(N_SITES):
            row[f"var_q{n + 1}"] = point.var_q[n]
        rows.append(row)
    return pd.DataFrame(rows)
