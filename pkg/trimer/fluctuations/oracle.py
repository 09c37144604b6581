"""Brute-force Lindblad steady state of one Dicke site in a truncated Fock space."""

import math
from typing import Any

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from trimer.instrumentation import SOLVER_DURATION
from trimer.metrics import time
from trimer.model import ModelParams, PreconditionError, UnsupportedError, derived_couplings

log = structlog.get_logger(__name__)

DEFAULT_FOCK = 30


class FockSteadyState(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_atoms: int
    n_max: int
    photons: float
    field: complex
    spin_z: float
    # occupation of the highest Fock level, a truncation check
    edge_population: float

    @property
    def fluctuation_photons(self) -> float:
        return self.photons - abs(self.field) ** 2


def _qutip() -> Any:
    try:
        import qutip  # type: ignore[import-not-found]
    except ImportError as e:
        raise UnsupportedError("qutip is not installed, install the oracle extra") from e
    return qutip


@time(SOLVER_DURATION, solver="fock")
def fock_steady_state(p: ModelParams, n_atoms: int, n_max: int = DEFAULT_FOCK) -> FockSteadyState:
    """Single site, hopping ignored; couplings carry the 1/sqrt(N) of the collective spin."""
    if p.kappa <= 0:
        raise PreconditionError("a steady state needs cavity loss", kappa=p.kappa)
    qt = _qutip()
    d = derived_couplings(p)
    j = n_atoms / 2
    a = qt.tensor(qt.destroy(n_max + 1), qt.qeye(n_atoms + 1))
    jx = qt.tensor(qt.qeye(n_max + 1), qt.jmat(j, "x"))
    jy = qt.tensor(qt.qeye(n_max + 1), qt.jmat(j, "y"))
    jz = qt.tensor(qt.qeye(n_max + 1), qt.jmat(j, "z"))
    scale = 2 * d.lam / math.sqrt(n_atoms)
    h = (
        p.omega0 * a.dag() * a
        + p.omega_a * jz
        + scale * (d.eta_plus * (a + a.dag()) * jx + 1j * d.eta_minus * (a - a.dag()) * jy)
    )
    rho = qt.steadystate(h, [math.sqrt(2 * p.kappa) * a])
    photon_dist = np.real(rho.ptrace(0).diag())
    result = FockSteadyState(
        n_atoms=n_atoms,
        n_max=n_max,
        photons=float(np.real(qt.expect(a.dag() * a, rho))),
        field=complex(qt.expect(a, rho)),
        spin_z=float(np.real(qt.expect(jz, rho))) / n_atoms,
        edge_population=float(photon_dist[-1]),
    )
    log.info("fock steady state", n_atoms=n_atoms, n_max=n_max, photons=result.photons)
    return result
