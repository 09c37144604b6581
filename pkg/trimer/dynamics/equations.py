"""Mean-field equations of motion of the open trimer."""

import math

import numpy as np

from trimer.dynamics.state import IM, RE, STATE_SIZE, X, Y, Z, SemiclassicalState
from trimer.model import N_SITES, ModelParams, derived_couplings

_NEXT = np.roll(np.eye(N_SITES), 1, axis=1)  # (_NEXT @ v)[n] = v[n+1]
_PREV = _NEXT.T


def rhs_vector(p: ModelParams, y: np.ndarray) -> np.ndarray:
    d = derived_couplings(p)
    lam, j = d.lam, d.j
    alpha = y[RE] + 1j * y[IM]
    sx, sy, sz = y[X], y[Y], y[Z]
    u, v = alpha.real, alpha.imag
    hop = np.exp(1j * p.phi) * np.roll(alpha, -1) + np.exp(-1j * p.phi) * np.roll(alpha, 1)
    dalpha = (
        -(p.kappa + 1j * p.omega0) * alpha
        - 2j * lam * d.eta_plus * sx
        - 2 * lam * d.eta_minus * sy
        - 1j * j * hop
    )
    dx = -p.omega_a * sy - 4 * lam * d.eta_minus * sz * v
    dy = p.omega_a * sx - 4 * lam * d.eta_plus * sz * u
    dz = 4 * lam * d.eta_plus * sy * u + 4 * lam * d.eta_minus * sx * v
    return np.concatenate([dalpha.real, dalpha.imag, dx, dy, dz])


def rhs(p: ModelParams, s: SemiclassicalState) -> np.ndarray:
    return rhs_vector(p, s.as_vector())


def mean_field_energy(p: ModelParams, s: SemiclassicalState) -> float:
    """Conserved when kappa = 0."""
    d = derived_couplings(p)
    a = s.alpha
    x, y, z = s.spin[:, 0], s.spin[:, 1], s.spin[:, 2]
    onsite = (
        p.omega0 * np.abs(a) ** 2
        + p.omega_a * z
        + 4 * d.lam * d.eta_plus * x * a.real
        - 4 * d.lam * d.eta_minus * y * a.imag
    )
    hop = np.exp(1j * p.phi) * np.conj(a) * np.roll(a, -1)
    return float(np.sum(onsite) + 2 * d.j * np.sum(hop.real))


def full_jacobian(p: ModelParams, y: np.ndarray) -> np.ndarray:
    """Jacobian of rhs_vector in all fifteen coordinates."""
    d = derived_couplings(p)
    lam, j = d.lam, d.j
    c, s = j * math.cos(p.phi), j * math.sin(p.phi)
    eye = np.eye(N_SITES)
    u, v = y[RE], y[IM]
    sx, sy, sz = y[X], y[Y], y[Z]
    a, b = 4 * lam * d.eta_plus, 4 * lam * d.eta_minus
    jac = np.zeros((STATE_SIZE, STATE_SIZE))

    def put(row: slice, col: slice, block: np.ndarray) -> None:
        jac[row, col] = block

    put(RE, RE, -p.kappa * eye + s * (_NEXT - _PREV))
    put(RE, IM, p.omega0 * eye + c * (_NEXT + _PREV))
    put(RE, Y, -2 * lam * d.eta_minus * eye)
    put(IM, RE, -p.omega0 * eye - c * (_NEXT + _PREV))
    put(IM, IM, -p.kappa * eye + s * (_NEXT - _PREV))
    put(IM, X, -2 * lam * d.eta_plus * eye)
    put(X, IM, -b * np.diag(sz))
    put(X, Y, -p.omega_a * eye)
    put(X, Z, -b * np.diag(v))
    put(Y, RE, -a * np.diag(sz))
    put(Y, X, p.omega_a * eye)
    put(Y, Z, -a * np.diag(u))
    put(Z, RE, a * np.diag(sy))
    put(Z, IM, b * np.diag(sx))
    put(Z, X, b * np.diag(v))
    put(Z, Y, a * np.diag(u))
    return jac


def sphere_tangent_basis(y: np.ndarray) -> np.ndarray:
    """Orthonormal basis (15 x 12) of the directions that keep every spin length fixed."""
    normals = np.zeros((N_SITES, STATE_SIZE))
    for n in range(N_SITES):
        normals[n, [X.start + n, Y.start + n, Z.start + n]] = [y[X][n], y[Y][n], y[Z][n]]
    q, _ = np.linalg.qr(normals.T, mode="complete")
    return q[:, N_SITES:]


def project_tangent(y: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Remove the radial spin components of a perturbation."""
    delta = delta.copy()
    for n in range(N_SITES):
        idx = [X.start + n, Y.start + n, Z.start + n]
        spin = y[idx]
        delta[idx] -= spin * (spin @ delta[idx]) / (spin @ spin)
    return delta
