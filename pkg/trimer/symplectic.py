"""Williamson normal form of real quadratic bosonic Hamiltonians.

Quadratures are interleaved, r = (q1, p1, q2, p2, ...), and the symplectic form is the
block diagonal of [[0, 1], [-1, 0]].
"""

from typing import Any

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.linalg import null_space

from trimer import config
from trimer.instrumentation import SOLVER_DURATION
from trimer.metrics import time
from trimer.model import TrimerError

log = structlog.get_logger(__name__)

PSD_TOL = 1e-8
# eigenvalues closer than this (relative) are treated as one degenerate cluster
CLUSTER_TOL = 1e-8


class SpectralError(TrimerError):
    """Quadratic form is not positive semidefinite; the expansion point is not a minimum."""


def symplectic_form(modes: int) -> np.ndarray:
    return np.kron(np.eye(modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


class QuadraticHamiltonian(BaseModel):
    """H = 1/2 r^T M r for a real symmetric M."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray
    source: Any = None

    @field_validator("matrix", mode="before")
    @classmethod
    def symmetric(cls, v: Any) -> np.ndarray:
        m = np.array(v, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError(f"expected an even square matrix, got shape {m.shape}")
        if not np.allclose(m, m.T, atol=1e-12, rtol=0):
            raise ValueError("quadratic form must be symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        return m

    @property
    def modes(self) -> int:
        return self.matrix.shape[0] // 2


class SymplecticSpectrum(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    epsilons: np.ndarray
    transform: np.ndarray
    zero_modes: np.ndarray

    @property
    def modes(self) -> int:
        return len(self.epsilons)

    @property
    def symplectic_form(self) -> np.ndarray:
        return symplectic_form(self.modes)

    def mode_vectors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.transform[:, 2 * i], self.transform[:, 2 * i + 1]

    def covariance(self) -> np.ndarray:
        """Ground-state covariance 1/2 S S^T; quadratures overlapping a zero mode get inf."""
        s = self.transform
        dim = s.shape[0]
        cov = np.zeros((dim, dim))
        for i in range(self.modes):
            sq, sp = self.mode_vectors(i)
            if self.zero_modes[i]:
                continue
            cov += 0.5 * (np.outer(sq, sq) + np.outer(sp, sp))
        for i in np.flatnonzero(self.zero_modes):
            free, _ = self.mode_vectors(int(i))
            touched = np.abs(free) > 1e-9
            cov[np.ix_(touched, touched)] = np.inf
        return cov


def _check_psd(h: np.ndarray) -> None:
    eigs = np.linalg.eigvalsh(h)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if eigs[0] < -PSD_TOL * scale:
        raise SpectralError(
            "quadratic form is not positive semidefinite", min_eigenvalue=float(eigs[0])
        )


def _clusters(eps: np.ndarray) -> list[list[int]]:
    groups: list[list[int]] = []
    for i in range(len(eps)):
        if groups and abs(eps[i] - eps[groups[-1][0]]) <= CLUSTER_TOL * max(1.0, eps[i]):
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _orthonormal_pairs(h: np.ndarray, vecs: np.ndarray, eps: float) -> list[np.ndarray]:
    """Gram-Schmidt in the H inner product inside one eigenspace, scaled so v^+ H v = 2 eps."""
    done: list[np.ndarray] = []
    for k in range(vecs.shape[1]):
        v = vecs[:, k].astype(complex)
        for u in done:
            v = v - (u.conj() @ h @ v) / (u.conj() @ h @ u) * u
        norm = (v.conj() @ h @ v).real
        if norm <= 0:
            raise SpectralError("degenerate eigenvectors are linearly dependent", epsilon=eps)
        done.append(v * np.sqrt(2 * eps / norm))
    return done


def _zero_mode_pairs(
    h: np.ndarray, omega: np.ndarray, paired: np.ndarray
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Symplectic basis of the complement of the finite modes, starting from H-null directions."""
    dim = h.shape[0]
    complement = null_space(paired.T @ omega) if paired.size else np.eye(dim)
    restricted = complement.T @ h @ complement
    w, u = np.linalg.eigh(0.5 * (restricted + restricted.T))
    remaining = [complement @ u[:, k] for k in np.argsort(w)]
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    while remaining:
        e = remaining.pop(0)
        overlaps = [abs(e @ omega @ f) for f in remaining]
        if not overlaps or max(overlaps) < 1e-12:
            raise SpectralError("zero-mode subspace is not symplectic", size=len(remaining) + 1)
        f = remaining.pop(int(np.argmax(overlaps)))
        f = f / (e @ omega @ f)
        remaining = [v + (v @ omega @ e) * f - (v @ omega @ f) * e for v in remaining]
        pairs.append((e, f))
    return pairs


@time(SOLVER_DURATION, solver="williamson")
def williamson(hq: QuadraticHamiltonian) -> SymplecticSpectrum:
    h = hq.matrix
    n = hq.modes
    _check_psd(h)
    omega = symplectic_form(n)
    vals, vecs = np.linalg.eig(omega @ h)
    positive = np.flatnonzero(vals.imag > config.ZERO_MODE_TOL)
    positive = positive[np.argsort(vals.imag[positive])]
    if len(positive) > n:
        raise SpectralError("too many positive frequencies", count=len(positive), modes=n)
    eps = vals.imag[positive]

    finite: list[tuple[float, np.ndarray]] = []
    for group in _clusters(eps):
        cluster_eps = float(np.mean(eps[group]))
        for v in _orthonormal_pairs(h, vecs[:, positive[group]], cluster_eps):
            finite.append((cluster_eps, v))

    columns: list[np.ndarray] = []
    for _, v in finite:
        columns += [v.real, v.imag]
    paired = np.array(columns).T if columns else np.zeros((2 * n, 0))

    zero_pairs = _zero_mode_pairs(h, omega, paired) if len(finite) < n else []
    if zero_pairs:
        log.debug("zero modes", count=len(zero_pairs))

    transform = np.zeros((2 * n, 2 * n))
    epsilons = np.zeros(n)
    zero = np.zeros(n, dtype=bool)
    for i, (e, f) in enumerate(zero_pairs):
        transform[:, 2 * i], transform[:, 2 * i + 1] = e, f
        zero[i] = True
    offset = len(zero_pairs)
    for i, (value, v) in enumerate(finite):
        transform[:, 2 * (offset + i)] = v.real
        transform[:, 2 * (offset + i) + 1] = v.imag
        epsilons[offset + i] = value
    return SymplecticSpectrum(epsilons=epsilons, transform=transform, zero_modes=zero)


def frequencies(h: np.ndarray) -> np.ndarray:
    """|eig(i Omega H)| with the +/- pairing removed, ascending."""
    n = h.shape[0] // 2
    vals = np.linalg.eigvals(1j * symplectic_form(n) @ h)
    return np.sort(np.abs(vals))[::2]
