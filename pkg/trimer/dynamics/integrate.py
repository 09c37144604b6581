from typing import Any, Optional

import numpy as np
import structlog
from scipy.integrate import DOP853

from trimer.dynamics.equations import rhs_vector
from trimer.dynamics.state import SemiclassicalState, Trajectory, renormalize_vector, spin_drift
from trimer.instrumentation import SOLVER_DURATION, SOLVER_FAILURES
from trimer.metrics import time
from trimer.model import ModelParams, PreconditionError, TrimerError

log = structlog.get_logger(__name__)

METHOD = "DOP853"
# spins are pulled back onto the sphere after any step that leaves them further off than this
RENORM_TOL = 1e-12
START_NORM_TOL = 1e-6


class StiffnessError(TrimerError):
    def __init__(self, message: str, partial: Optional[Trajectory] = None, **context: Any):
        super().__init__(message, **context)
        self.partial = partial


def _sample_grid(t0: float, t1: float, dt: float) -> np.ndarray:
    k0 = int(np.ceil(t0 / dt - 1e-9))
    k1 = int(np.floor(t1 / dt + 1e-9))
    return np.clip(np.arange(k0, k1 + 1) * dt, t0, t1)


@time(SOLVER_DURATION, solver="integrate")
def integrate(
    p: ModelParams,
    s0: SemiclassicalState,
    t_end: float,
    tol: float = 1e-10,
    dt: Optional[float] = None,
    t_start: float = 0.0,
) -> Trajectory:
    """Embedded 8(5,3) Runge-Kutta, stepped by hand so the spins can be projected per step.

    With dt the trajectory is sampled on the uniform grid k*dt from the dense output of each
    step; otherwise the accepted steps are recorded.
    """
    if s0.spin_norm_error() > START_NORM_TOL:
        raise PreconditionError("initial spins are off the sphere", error=s0.spin_norm_error())
    y0 = s0.as_vector()
    grid = _sample_grid(t_start, t_end, dt) if dt is not None else None
    times: list[np.ndarray] = []
    states: list[np.ndarray] = []
    renormalized = 0

    def fun(_: float, yy: np.ndarray) -> np.ndarray:
        return rhs_vector(p, yy)

    def collected() -> Trajectory:
        return Trajectory(
            times=np.concatenate(times) if times else np.array([t_start]),
            states=np.vstack(states) if states else y0[None, :],
            params=p,
            sampling="adaptive" if dt is None else "uniform",
            dt=dt,
        )

    if grid is None or (grid.size and grid[0] <= t_start + 1e-12):
        times.append(np.array([t_start]))
        states.append(y0[None, :])
    if t_end <= t_start + 1e-12:
        return collected()
    solver = DOP853(fun, t_start, y0, t_end, rtol=tol, atol=tol)
    while solver.status == "running":
        message = solver.step()
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            SOLVER_FAILURES.labels(solver="integrate", reason="step").inc()
            raise StiffnessError(
                message or "non-finite state", partial=collected(), t=float(solver.t)
            )
        t_old, t = float(solver.t_old), float(solver.t)
        if grid is not None:
            inside = grid[(grid > t_old + 1e-12) & (grid <= t + 1e-12)]
            if inside.size:
                times.append(inside)
                states.append(np.atleast_2d(solver.dense_output()(inside).T))
        if spin_drift(solver.y) > RENORM_TOL:
            solver.y = renormalize_vector(solver.y)
            solver.f = fun(t, solver.y)
            renormalized += 1
        if grid is None:
            times.append(np.array([t]))
            states.append(solver.y[None, :].copy())

    traj = collected()
    log.debug(
        "integrated",
        t_end=t_end,
        samples=len(traj),
        renormalized=renormalized,
        drift=traj.max_spin_drift(),
    )
    return traj


def final_state(
    p: ModelParams, s0: SemiclassicalState, t_end: float, tol: float = 1e-10
) -> SemiclassicalState:
    """State at t_end without keeping the samples."""
    return integrate(p, s0, t_end, tol=tol, dt=t_end).final
