"""Linearization of the mean-field equations on the reduced (u, v, X, Y) chart.

Per site the order is (Re a, Im a, X, Y); Z is eliminated through Z dZ = -(X dX + Y dY).
"""

import math

import numpy as np
import structlog

from trimer.dynamics.equations import full_jacobian, sphere_tangent_basis
from trimer.dynamics.state import SemiclassicalState
from trimer.model import N_SITES, ModelParams, TrimerError, derived_couplings

log = structlog.get_logger(__name__)

CHART_TOL = 1e-10
REDUCED_SIZE = 4 * N_SITES


class ChartError(TrimerError):
    """Some Z_n vanishes, so the reduced chart cannot express the linearization."""


def site_block(p: ModelParams, alpha: complex, x: float, y: float, z: float) -> np.ndarray:
    d = derived_couplings(p)
    a, b = 4 * d.lam * d.eta_plus, 4 * d.lam * d.eta_minus
    u, v = alpha.real, alpha.imag
    return np.array(
        [
            [-p.kappa, p.omega0, 0.0, -2 * d.lam * d.eta_minus],
            [-p.omega0, -p.kappa, -2 * d.lam * d.eta_plus, 0.0],
            [0.0, -b * z, b * v * x / z, -p.omega_a + b * v * y / z],
            [-a * z, 0.0, p.omega_a + a * u * x / z, a * u * y / z],
        ]
    )


def hopping_blocks(p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """(B, C): coupling of a site to its successor and to its predecessor."""
    j = derived_couplings(p).j
    js, jc = j * math.sin(p.phi), j * math.cos(p.phi)
    b = np.zeros((4, 4))
    c = np.zeros((4, 4))
    b[:2, :2] = [[js, jc], [-jc, js]]
    c[:2, :2] = [[-js, jc], [-jc, -js]]
    return b, c


def jacobian(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    """12 x 12 block-circulant layout [[A1, B, C], [C, A2, B], [B, C, A3]]."""
    z = s.spin[:, 2]
    if np.any(np.abs(z) < CHART_TOL):
        raise ChartError("Z vanishes on some site", z=z.tolist())
    b, c = hopping_blocks(p)
    jac = np.zeros((REDUCED_SIZE, REDUCED_SIZE))
    for n in range(N_SITES):
        rows = slice(4 * n, 4 * n + 4)
        nxt, prv = (n + 1) % N_SITES, (n - 1) % N_SITES
        jac[rows, rows] = site_block(p, complex(s.alpha[n]), *s.spin[n])
        jac[rows, 4 * nxt : 4 * nxt + 4] += b
        jac[rows, 4 * prv : 4 * prv + 4] += c
    return jac


def stability_matrix(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    """Reduced Jacobian, or the full Jacobian projected on the spin-sphere tangent space."""
    try:
        return jacobian(p, s)
    except ChartError:
        log.debug("reduced chart invalid, projecting the full jacobian")
        y = s.as_vector()
        basis = sphere_tangent_basis(y)
        return basis.T @ full_jacobian(p, y) @ basis


def sorted_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Descending real part; ties broken by descending imaginary part."""
    eigs = np.linalg.eigvals(matrix)
    return eigs[np.lexsort((-eigs.imag, -eigs.real))]


def jacobian_eigenvalues(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    return sorted_eigenvalues(stability_matrix(p, s))
