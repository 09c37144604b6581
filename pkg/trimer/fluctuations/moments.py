"""Steady-state second moments of the Gaussian fluctuations around an open-system equilibrium.

Modes are c = (a1, a2, a3, b1, b2, b3) in the displaced, rotated frame. The quadratic
Hamiltonian gives the drift dc/dt = M c + N c^dagger with M = -i h - kappa (cavities only) and
N = -i k; with a vacuum bath the normally ordered moments obey the drift alone, and the
reordering c_i c_j^dagger = delta_ij + c_j^dagger c_i supplies the inhomogeneity.
"""

import math
from typing import Optional

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.linalg import solve_continuous_lyapunov

from trimer.bifurcation.equilibria import Equilibrium
from trimer.dynamics.state import SemiclassicalState
from trimer.instrumentation import SOLVER_DURATION, SOLVER_FAILURES
from trimer.metrics import time
from trimer.model import N_SITES, ModelParams, PreconditionError, TrimerError, derived_couplings

log = structlog.get_logger(__name__)

MODES = 2 * N_SITES
MAX_CONDITION = 1e12
HERMITICITY_TOL = 1e-10
PSD_TOL = 1e-8

# (family, symmetric); a_n is mode n and b_n is mode N_SITES + n
FAMILIES: tuple[tuple[str, bool], ...] = (
    ("aa", True),
    ("adad", True),
    ("ada", False),
    ("bb", True),
    ("bdbd", True),
    ("bdb", False),
    ("ab", False),
    ("adbd", False),
    ("adb", False),
    ("bda", False),
)

MomentKey = tuple[str, int, int]


def _moment_keys() -> list[MomentKey]:
    keys: list[MomentKey] = []
    for family, symmetric in FAMILIES:
        for n in range(N_SITES):
            for m in range(n if symmetric else 0, N_SITES):
                keys.append((family, n, m))
    return keys


MOMENT_KEYS = _moment_keys()
INDEX_MAP: dict[MomentKey, int] = {k: i for i, k in enumerate(MOMENT_KEYS)}
N_MOMENTS = len(MOMENT_KEYS)

# family -> (matrix, row offset, column offset); matrices are <c c>, <c^d c>, <c^d c^d>
_LOCATION = {
    "aa": ("pair", 0, 0),
    "bb": ("pair", N_SITES, N_SITES),
    "ab": ("pair", 0, N_SITES),
    "adad": ("dagger_pair", 0, 0),
    "bdbd": ("dagger_pair", N_SITES, N_SITES),
    "adbd": ("dagger_pair", 0, N_SITES),
    "ada": ("number", 0, 0),
    "bdb": ("number", N_SITES, N_SITES),
    "adb": ("number", 0, N_SITES),
    "bda": ("number", N_SITES, 0),
}


class SingularSystemError(TrimerError):
    pass


class MomentInvariantError(TrimerError):
    """Solved moments that are not Hermitian or give a negative photon-number matrix."""


class CouplingCoefficients(BaseModel):
    """Per-site light-matter couplings in the rotated frame and the effective spin frequency."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lpp: np.ndarray
    lpm: np.ndarray
    lmp: np.ndarray
    lmm: np.ndarray
    omega_eff: np.ndarray


class SecondMoments(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    residual: float
    condition: float
    det_nonzero: bool

    def __getitem__(self, key: MomentKey) -> complex:
        family, n, m = key
        if family in ("aa", "adad", "bb", "bdbd") and n > m:
            n, m = m, n
        return complex(self.values[INDEX_MAP[(family, n, m)]])

    def matrices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _to_matrices(self.values)

    def photon_numbers(self) -> np.ndarray:
        return np.array([self[("ada", n, n)].real for n in range(N_SITES)])

    def photon_matrix(self) -> np.ndarray:
        return np.array([[self[("ada", n, m)] for m in range(N_SITES)] for n in range(N_SITES)])

    def hermiticity_error(self) -> float:
        pair, number, dagger_pair = self.matrices()
        return max(
            float(np.max(np.abs(dagger_pair - pair.conj()))),
            float(np.max(np.abs(number - number.conj().T))),
        )

    def min_photon_eigenvalue(self) -> float:
        n = self.photon_matrix()
        return float(np.min(np.linalg.eigvalsh(0.5 * (n + n.conj().T))))


def coupling_coefficients(p: ModelParams, s: SemiclassicalState) -> CouplingCoefficients:
    """Rotation angles from the equilibrium: cos(theta) = -2 Z, phi from the field direction."""
    d = derived_couplings(p)
    z = s.spin[:, 2]
    if np.any(np.abs(z) < 1e-12):
        raise PreconditionError("spin lies in the equatorial plane", z=z.tolist())
    cos_theta = -2 * z
    u, v = s.alpha.real, s.alpha.imag
    amp = np.sqrt((d.eta_plus * u) ** 2 + (d.eta_minus * v) ** 2)
    cos_phi = np.ones(N_SITES)
    sin_phi = np.zeros(N_SITES)
    nz = amp > 1e-14
    cos_phi[nz] = d.eta_plus * u[nz] / amp[nz]
    sin_phi[nz] = -d.eta_minus * v[nz] / amp[nz]
    lam = d.lam
    return CouplingCoefficients(
        lpp=(lam * d.eta_plus * cos_theta * cos_phi).astype(complex),
        lpm=-1j * lam * d.eta_plus * sin_phi,
        lmp=1j * lam * d.eta_minus * cos_theta * sin_phi,
        lmm=(-lam * d.eta_minus * cos_phi).astype(complex),
        omega_eff=p.omega_a / cos_theta,
    )


def drift_matrices(p: ModelParams, coeffs: CouplingCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """(M, N) of dc/dt = M c + N c^dagger."""
    j = derived_couplings(p).j
    h = np.zeros((MODES, MODES), dtype=complex)
    k = np.zeros((MODES, MODES), dtype=complex)
    for n in range(N_SITES):
        b = N_SITES + n
        h[n, n] = p.omega0
        h[b, b] = coeffs.omega_eff[n]
        h[n, (n + 1) % N_SITES] += j * np.exp(1j * p.phi)
        h[n, (n - 1) % N_SITES] += j * np.exp(-1j * p.phi)
        # coefficients of a^d b and a^d b^d
        h[n, b] = coeffs.lpp[n] + coeffs.lpm[n] - coeffs.lmp[n] - coeffs.lmm[n]
        h[b, n] = np.conj(h[n, b])
        k[n, b] = k[b, n] = coeffs.lpp[n] - coeffs.lpm[n] - coeffs.lmp[n] + coeffs.lmm[n]
    damping = np.diag([p.kappa] * N_SITES + [0.0] * N_SITES)
    return -1j * h - damping, -1j * k


def _to_matrices(f: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mats = {
        name: np.zeros((MODES, MODES), dtype=complex) for name in ("pair", "number", "dagger_pair")
    }
    for (family, n, m), value in zip(MOMENT_KEYS, f):
        name, ro, co = _LOCATION[family]
        mats[name][ro + n, co + m] = value
        if name != "number":
            mats[name][co + m, ro + n] = value
    return mats["pair"], mats["number"], mats["dagger_pair"]


def _from_matrices(pair: np.ndarray, number: np.ndarray, dagger_pair: np.ndarray) -> np.ndarray:
    mats = {"pair": pair, "number": number, "dagger_pair": dagger_pair}
    out = np.empty(N_MOMENTS, dtype=complex)
    for i, (family, n, m) in enumerate(MOMENT_KEYS):
        name, ro, co = _LOCATION[family]
        out[i] = mats[name][ro + n, co + m]
    return out


def moment_drift(m: np.ndarray, nn: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Time derivative of the moment vector f."""
    pair, number, dagger_pair = _to_matrices(f)
    mc, nc = m.conj(), nn.conj()
    x = m @ pair + nn @ number
    d_pair = x + x.T + nn
    d_number = mc @ number + nc @ pair + number @ m.T + dagger_pair @ nn.T
    y = mc @ dagger_pair + nc @ number.T
    d_dagger = y + y.T + nc
    return _from_matrices(d_pair, d_number, d_dagger)


def moment_system(p: ModelParams, s: SemiclassicalState) -> tuple[np.ndarray, np.ndarray]:
    """(M_f, v_f) with df/dt = M_f f + v_f, assembled column by column from the drift."""
    m, nn = drift_matrices(p, coupling_coefficients(p, s))
    v_f = moment_drift(m, nn, np.zeros(N_MOMENTS, dtype=complex))
    m_f = np.empty((N_MOMENTS, N_MOMENTS), dtype=complex)
    unit = np.zeros(N_MOMENTS, dtype=complex)
    for i in range(N_MOMENTS):
        unit[i] = 1.0
        m_f[:, i] = moment_drift(m, nn, unit) - v_f
        unit[i] = 0.0
    return m_f, v_f


def assemble(p: ModelParams, e: Equilibrium) -> tuple[np.ndarray, np.ndarray]:
    """(M_f, v_f) at a stable equilibrium.

    78 x 78: the four same-operator families keep n <= m (6 pairs each), the other six keep all
    9 site pairs, and no further redundancy is removed.
    """
    if not e.stable:
        raise PreconditionError(
            "equilibrium is not stable, no steady state", max_re=e.max_re, eq_class=e.eq_class.value
        )
    return moment_system(p, e.state)


@time(SOLVER_DURATION, solver="moments")
def solve(m_f: np.ndarray, v_f: np.ndarray) -> SecondMoments:
    condition = float(np.linalg.cond(m_f))
    if not math.isfinite(condition) or condition > MAX_CONDITION:
        SOLVER_FAILURES.labels(solver="moments", reason="singular").inc()
        raise SingularSystemError("moment matrix is numerically singular", condition=condition)
    sign, _ = np.linalg.slogdet(m_f)
    f = np.linalg.solve(m_f, -v_f)
    residual = float(np.max(np.abs(m_f @ f + v_f)))
    moments = SecondMoments(
        values=f, residual=residual, condition=condition, det_nonzero=bool(sign != 0)
    )
    scale = max(1.0, float(np.max(np.abs(f))))
    herm = moments.hermiticity_error()
    lowest = moments.min_photon_eigenvalue()
    if herm > HERMITICITY_TOL * scale or lowest < -PSD_TOL * scale:
        SOLVER_FAILURES.labels(solver="moments", reason="invariant").inc()
        raise MomentInvariantError(
            "moment invariants violated", hermiticity=herm, min_photon_eig=lowest
        )
    log.debug(
        "moments",
        condition=condition,
        residual=residual,
        photons=moments.photon_numbers().tolist(),
    )
    return moments


def steady_moments(p: ModelParams, e: Equilibrium) -> SecondMoments:
    return solve(*assemble(p, e))


def quadrature_covariance(moments: SecondMoments) -> np.ndarray:
    """Symmetrized covariance of (q_1..q_6, p_1..p_6), q = (c + c^d)/sqrt2; vacuum 1/2."""
    pair, number, dagger_pair = moments.matrices()
    eye = np.eye(MODES)
    qq = 0.5 * (pair + dagger_pair + number + number.T + eye)
    pp = -0.5 * (pair + dagger_pair - number - number.T - eye)
    qp = (pair - dagger_pair + number - number.T) / 2j
    return np.block([[qq.real, qp.real], [qp.T.real, pp.real]])


def quadrature_drift(m: np.ndarray, nn: np.ndarray) -> np.ndarray:
    return np.block([[(m + nn).real, -(m - nn).imag], [(m + nn).imag, (m - nn).real]])


def lyapunov_covariance(
    p: ModelParams, e: Optional[Equilibrium] = None, s: Optional[SemiclassicalState] = None
) -> np.ndarray:
    """Same covariance from A V + V A^T + D = 0, D = kappa on the cavity quadratures."""
    state = e.state if e is not None else s
    if state is None:
        raise PreconditionError("need an equilibrium or a state")
    m, nn = drift_matrices(p, coupling_coefficients(p, state))
    a = quadrature_drift(m, nn)
    diffusion = np.diag(([p.kappa] * N_SITES + [0.0] * N_SITES) * 2)
    return solve_continuous_lyapunov(a, -diffusion)
