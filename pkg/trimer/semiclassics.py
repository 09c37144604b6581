"""Re-quantization of the energy landscape around a minimum.

The curvature matrix uses canonical pairs (Re a1, Im a1, Re a2, Im a2, Re a3, Im a3); each
symplectic mode is brought to a gauge where its position direction is a unit vector along
the softer principal axis, giving the curvatures k_q <= k_p.
"""

import math
from enum import Enum
from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict

from trimer.fitting import InconclusiveError, PowerLawFit, fit_power_law
from trimer.landscape import (
    GroundStateSolution,
    Phase,
    critical_coupling,
    energy_hessian,
    minimize_ground_state,
)
from trimer.model import N_SITES, DomainError, ModelParams, PreconditionError, UnsupportedError
from trimer.symplectic import CLUSTER_TOL, QuadraticHamiltonian, SymplecticSpectrum, williamson

log = structlog.get_logger(__name__)

CANONICAL_ORDER = [0, 3, 1, 4, 2, 5]
# slopes of k_q and k_p closer than this count as one rate
RATE_TOL = 0.2
MAX_FIT_RESIDUAL = 0.05


class NormalMode(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    k_q: float
    k_p: float
    q_direction: np.ndarray
    p_direction: np.ndarray
    zero: bool = False

    @property
    def frequency(self) -> float:
        return math.sqrt(max(self.k_q * self.k_p, 0.0))


class CurvatureNormalForm(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    d_matrix: np.ndarray
    modes: list[NormalMode]
    planck_eff: float


class FluctuationKind(str, Enum):
    DIVERGENT = "divergent"
    FINITE = "finite"
    INCONCLUSIVE = "inconclusive"


class FluctuationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FluctuationKind
    d_q: float
    d_p: float
    residual: float


def canonical_hessian(p: ModelParams, gs: GroundStateSolution) -> np.ndarray:
    h = energy_hessian(p, gs.config)
    return h[np.ix_(CANONICAL_ORDER, CANONICAL_ORDER)]


def _gauge_cluster(vectors: list[np.ndarray]) -> list[np.ndarray]:
    """Unitary mixing inside one degenerate cluster making v_k^T v_l real, diagonal, >= 0."""
    v = np.array(vectors).T
    s = v.T @ v
    a, b = s.real, s.imag
    w, u = np.linalg.eigh(np.block([[a, b], [b, -a]]))
    m = len(vectors)
    top = np.argsort(w)[::-1][:m]
    if np.min(w[top]) < 1e-12 * max(1.0, float(np.max(np.abs(w)))):
        # isotropic modes: any rotation already satisfies the gauge
        return vectors
    takagi = u[:m, top] + 1j * u[m:, top]
    mixed = v @ takagi.conj()
    return [mixed[:, k] for k in range(m)]


def normal_form(d_matrix: np.ndarray, planck_eff: float = 1.0) -> CurvatureNormalForm:
    spectrum = williamson(QuadraticHamiltonian(matrix=d_matrix))
    return _modes_from_spectrum(np.asarray(d_matrix, dtype=float), spectrum, planck_eff)


def _modes_from_spectrum(
    d: np.ndarray, spectrum: SymplecticSpectrum, planck_eff: float
) -> CurvatureNormalForm:
    complex_modes: list[Optional[np.ndarray]] = []
    for i in range(spectrum.modes):
        sq, sp = spectrum.mode_vectors(i)
        complex_modes.append(None if spectrum.zero_modes[i] else sq + 1j * sp)

    finite = [i for i in range(spectrum.modes) if not spectrum.zero_modes[i]]
    groups: list[list[int]] = []
    for i in finite:
        eps = spectrum.epsilons[i]
        if groups and abs(eps - spectrum.epsilons[groups[-1][0]]) <= CLUSTER_TOL * max(1.0, eps):
            groups[-1].append(i)
        else:
            groups.append([i])
    for group in groups:
        fixed = _gauge_cluster([complex_modes[i] for i in group])  # type: ignore[misc]
        for i, v in zip(group, fixed):
            complex_modes[i] = v

    modes: list[NormalMode] = []
    for i, v in enumerate(complex_modes):
        if v is None:
            sq, sp = spectrum.mode_vectors(i)
            zero = True
        else:
            sq, sp = v.real, v.imag
            zero = False
        scale = float(np.linalg.norm(sq))
        q_dir = sq / scale
        p_dir = sp * scale
        k_q = 0.0 if zero else float(q_dir @ d @ q_dir)
        modes.append(
            NormalMode(
                k_q=k_q,
                k_p=float(p_dir @ d @ p_dir),
                q_direction=q_dir,
                p_direction=p_dir,
                zero=zero,
            )
        )
    return CurvatureNormalForm(d_matrix=d, modes=modes, planck_eff=planck_eff)


def curvature_at_minimum(p: ModelParams, gs: GroundStateSolution) -> CurvatureNormalForm:
    d = canonical_hessian(p, gs)
    lowest = float(np.linalg.eigvalsh(d)[0])
    if lowest < -1e-8:
        raise PreconditionError("expansion point is a saddle", min_eigenvalue=lowest)
    planck_eff = p.omega0 / (p.omega_a * p.n_atoms)
    return normal_form(d, planck_eff)


def mode_energy_scale(cnf: CurvatureNormalForm, i: int) -> float:
    mode = cnf.modes[i]
    return cnf.planck_eff * mode.frequency


def semiclassical_variance(cnf: CurvatureNormalForm, i: int, site: int = 0) -> float:
    """Variance of Re a_site carried by mode i in its Gaussian ground state (vacuum 1/2)."""
    mode = cnf.modes[i]
    if mode.k_p <= 0:
        raise DomainError("mode has no restoring curvature", mode=i, k_p=mode.k_p)
    x = 2 * (site % N_SITES)
    uq, up = mode.q_direction[x], mode.p_direction[x]
    if mode.k_q <= 0:
        return math.inf if abs(uq) > 1e-12 else 0.0
    ratio = math.sqrt(mode.k_p / mode.k_q)
    return 0.5 * (uq**2 * ratio + up**2 / ratio)


def total_semiclassical_variance(cnf: CurvatureNormalForm, site: int = 0) -> float:
    return sum(semiclassical_variance(cnf, i, site) for i in range(len(cnf.modes)))


def classify_fluctuations(
    cnfs: list[CurvatureNormalForm], deltas: np.ndarray, mode: int = 0
) -> FluctuationReport:
    """Compare the vanishing rates of k_q and k_p of one mode along a delta g grid."""
    k_q = np.array([c.modes[mode].k_q for c in cnfs])
    k_p = np.array([c.modes[mode].k_p for c in cnfs])
    try:
        fit_q = fit_power_law(deltas, k_q)
        fit_p = fit_power_law(deltas, k_p)
    except InconclusiveError as e:
        log.warning("fluctuation fit failed", reason=e.message)
        return FluctuationReport(
            kind=FluctuationKind.INCONCLUSIVE, d_q=math.nan, d_p=math.nan, residual=math.inf
        )
    residual = max(fit_q.residual, fit_p.residual)
    if residual > MAX_FIT_RESIDUAL:
        kind = FluctuationKind.INCONCLUSIVE
    elif abs(fit_q.exponent - fit_p.exponent) > RATE_TOL:
        kind = FluctuationKind.DIVERGENT
    else:
        kind = FluctuationKind.FINITE
    log.info("fluctuation class", kind=kind.value, d_q=fit_q.exponent, d_p=fit_p.exponent)
    return FluctuationReport(kind=kind, d_q=fit_q.exponent, d_p=fit_p.exponent, residual=residual)


def curvature_profile(
    p: ModelParams, deltas: np.ndarray, side: str = "np"
) -> list[CurvatureNormalForm]:
    g_c = critical_coupling(p).g_c
    sign = -1.0 if side == "np" else 1.0
    cnfs: list[CurvatureNormalForm] = []
    for delta in deltas:
        pg = p.replace(g=g_c + sign * float(delta))
        cnfs.append(curvature_at_minimum(pg, minimize_ground_state(pg)))
    return cnfs


def fsp_determinant_scaling(p: ModelParams, deltas: np.ndarray) -> PowerLawFit:
    """Log-log slope of det(i Omega D) on the frustrated side; the soft mode has gamma = slope/2."""
    if abs(p.eta - 1) > 1e-12:
        raise UnsupportedError("determinant scaling is defined at eta = 1", eta=p.eta)
    cc = critical_coupling(p)
    if not cc.g_f < cc.g_nf:
        raise PreconditionError("flux lies beyond the tricritical point", g_f=cc.g_f, g_nf=cc.g_nf)
    dets: list[float] = []
    for delta in deltas:
        pg = p.replace(g=cc.g_f + float(delta))
        gs = minimize_ground_state(pg)
        if gs.phase != Phase.FSP:
            raise PreconditionError(
                "minimum is not frustrated", delta_g=float(delta), phase=gs.phase.value
            )
        # |det(i Omega D)| = det D = prod eps^2, without the zero-mode cut on tiny eps
        dets.append(float(np.linalg.det(canonical_hessian(pg, gs))))
    fit = fit_power_law(deltas, np.array(dets))
    log.info("determinant scaling", phi=p.phi, slope=fit.exponent, gamma=fit.exponent / 2)
    return fit


def semiclassics_table(
    p: ModelParams, deltas: np.ndarray, side: str = "np", site: int = 0
) -> pd.DataFrame:
    rows: list[dict[str, Any]] = []
    for delta, cnf in zip(deltas, curvature_profile(p, deltas, side)):
        row: dict[str, Any] = {"delta_g": float(delta)}
        for i, mode in enumerate(cnf.modes):
            row[f"k_q{i + 1}"] = mode.k_q
        for i, mode in enumerate(cnf.modes):
            row[f"k_p{i + 1}"] = mode.k_p
        for i in range(len(cnf.modes)):
            row[f"eps_sc_{i + 1}"] = mode_energy_scale(cnf, i)
        row["variance_sc"] = total_semiclassical_variance(cnf, site)
        rows.append(row)
    log.info("semiclassics table", side=side, points=len(rows))
    return pd.DataFrame(rows)
