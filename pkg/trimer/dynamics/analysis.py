"""Attractor diagnostics for mean-field trajectories."""

import math
from enum import Enum
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict
from scipy import signal
from scipy.integrate import solve_ivp

from trimer.dynamics.equations import (
    full_jacobian,
    project_tangent,
    rhs_vector,
    sphere_tangent_basis,
)
from trimer.dynamics.integrate import METHOD, final_state, integrate
from trimer.dynamics.state import (
    STATE_SIZE,
    SemiclassicalState,
    Trajectory,
    random_state,
    renormalize_vector,
    spin_drift,
)
from trimer.model import N_SITES, ModelParams, TrimerError

log = structlog.get_logger(__name__)

MIN_SAMPLES = 16
WINDOW = "hann"
EQUILIBRIUM_VARIATION = 1e-8
PERIODIC_LYAPUNOV = 1e-3
CHAOTIC_LYAPUNOV = 1e-2
HARMONIC_RTOL = 1e-3
MAX_RETURN_POINTS = 16
LYAPUNOV_TIME = 500.0
ESCAPE_NORM = 1e-4
ESCAPE_SUSTAIN = 50.0
PLATEAU_FRACTION = 0.3
LAG_TOL = 0.05


class ResolutionError(TrimerError):
    pass


class AttractorKind(str, Enum):
    EQUILIBRIUM = "equilibrium"
    PERIODIC = "periodic"
    QUASIPERIODIC = "quasiperiodic"
    CHAOTIC = "chaotic"
    INCONCLUSIVE = "inconclusive"


class Synchrony(str, Enum):
    UNIFORM = "uniform"
    TWO_ONE = "two-one"
    LAGGED = "lagged"
    NONE = "none"


class AttractorReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: AttractorKind
    period: Optional[float] = None
    base_frequencies: list[float] = []
    lyapunov_max: float
    extrema: list[list[float]]
    synchrony: Synchrony
    diagnostics: dict[str, Any] = {}


class BurstReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    is_burst: bool
    period: Optional[float] = None
    lags: list[float] = []
    amplitude: float = 0.0
    plateau_fraction: float = 0.0


class TransientChaosReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    escape_times: list[Optional[float]]
    target: str = "N"
    t_max: float

    @property
    def censored(self) -> list[bool]:
        return [t is None for t in self.escape_times]

    @property
    def spread(self) -> float:
        """Ratio of the longest to the shortest escape time among escaped runs."""
        escaped = [t for t in self.escape_times if t is not None and t > 0]
        if len(escaped) < 2:
            return 1.0
        return max(escaped) / min(escaped)


class PoincareSection(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray

    def distinct_points(self, rtol: float = 1e-4) -> int:
        if self.values.size == 0:
            return 0
        scale = max(1e-12, float(np.max(np.abs(self.values))))
        ordered = np.sort(self.values)
        return int(1 + np.sum(np.diff(ordered) > rtol * scale))


def _uniform_step(traj: Trajectory) -> float:
    if len(traj) < MIN_SAMPLES:
        raise ResolutionError("trajectory too short for a spectrum", samples=len(traj))
    steps = np.diff(traj.times)
    if np.ptp(steps) > 1e-9 * max(1.0, float(steps.mean())):
        raise ResolutionError("trajectory is not uniformly sampled", sampling=traj.sampling)
    return float(steps.mean())


def power_spectrum(traj: Trajectory, site: int = 0) -> pd.DataFrame:
    """Periodogram of |alpha_site(t)| against angular frequency."""
    dt = _uniform_step(traj)
    x = traj.field_magnitudes()[:, site % N_SITES]
    freq, power = signal.periodogram(x, fs=1 / dt, window=WINDOW, detrend=False, scaling="spectrum")
    frame = pd.DataFrame({"frequency": 2 * math.pi * freq, "power": power})
    frame.attrs["window"] = WINDOW
    return frame


def spectral_peaks(
    spectrum: pd.DataFrame, rel_height: float = 1e-3, max_peaks: int = 8
) -> list[float]:
    """Angular frequencies of the strongest non-zero peaks, strongest first."""
    freq = spectrum["frequency"].to_numpy()
    power = spectrum["power"].to_numpy()
    if power.size < 3:
        return []
    body = power[1:]
    top = float(np.max(body)) if body.size else 0.0
    if top <= 0:
        return []
    idx, _ = signal.find_peaks(power, height=rel_height * top)
    idx = idx[np.argsort(power[idx])[::-1]][:max_peaks]
    step = freq[1] - freq[0]
    peaks: list[float] = []
    for i in idx:
        a, b, c = np.log(power[i - 1 : i + 2] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
        peaks.append(float(freq[i] + shift * step))
    return peaks


def _multiple_of(f: float, base: float, tol: float) -> bool:
    k = round(f / base)
    return k >= 1 and abs(f - k * base) <= tol


def harmonic_bases(peaks: Sequence[float], resolution: float) -> list[float]:
    """One base if every peak is a harmonic of the lowest, two if combinations are needed."""
    if not peaks:
        return []
    ordered = sorted(peaks)
    base = ordered[0]

    def tol(f: float) -> float:
        return max(HARMONIC_RTOL * f, resolution)

    if all(_multiple_of(f, base, tol(f)) for f in ordered):
        return [base]
    second = next(f for f in ordered if not _multiple_of(f, base, tol(f)))
    for f in ordered:
        if not any(
            abs(f - (m * base + n * second)) <= tol(f)
            for m in range(-5, 6)
            for n in range(-5, 6)
        ):
            return [base, second, f]
    return [base, second]


def poincare_section(
    traj: Trajectory, site: int = 0, level: Optional[float] = None
) -> PoincareSection:
    """Upward crossings of |alpha_site| through level, recording |alpha_{site+1}| there."""
    mags = traj.field_magnitudes()
    x = mags[:, site % N_SITES]
    other = mags[:, (site + 1) % N_SITES]
    level = float(np.mean(x)) if level is None else level
    below, above = x[:-1] < level, x[1:] >= level
    idx = np.flatnonzero(below & above)
    w = (level - x[idx]) / (x[idx + 1] - x[idx])
    times = traj.times[idx] + w * (traj.times[idx + 1] - traj.times[idx])
    values = other[idx] + w * (other[idx + 1] - other[idx])
    return PoincareSection(times=times, values=values)


def _augmented(p: ModelParams):
    def fun(_: float, z: np.ndarray) -> np.ndarray:
        y, d = z[:STATE_SIZE], z[STATE_SIZE:]
        return np.concatenate([rhs_vector(p, y), full_jacobian(p, y) @ d])

    return fun


def lyapunov_max(
    p: ModelParams,
    s0: SemiclassicalState,
    t: float,
    tol: float = 1e-9,
    renorm: float = 1.0,
    rng_seed: int = 0,
) -> float:
    """Largest exponent from a tangent vector kept on the spin spheres and renormalized."""
    y = s0.as_vector()
    d = project_tangent(y, np.random.default_rng(rng_seed).normal(size=STATE_SIZE))
    d /= np.linalg.norm(d)
    fun = _augmented(p)
    total, elapsed = 0.0, 0.0
    while elapsed < t - 1e-12:
        step = min(renorm, t - elapsed)
        sol = solve_ivp(fun, (0.0, step), np.concatenate([y, d]), method=METHOD, rtol=tol, atol=tol)
        if sol.status < 0:
            raise ResolutionError("tangent integration failed", t=elapsed, reason=sol.message)
        y, d = sol.y[:STATE_SIZE, -1], sol.y[STATE_SIZE:, -1]
        if spin_drift(y) > 1e-12:
            y = renormalize_vector(y)
        d = project_tangent(y, d)
        norm = float(np.linalg.norm(d))
        total += math.log(norm)
        d /= norm
        elapsed += step
    return total / t


def equilibrium_growth_rate(p: ModelParams, s: SemiclassicalState) -> float:
    y = s.as_vector()
    basis = sphere_tangent_basis(y)
    return float(np.max(np.linalg.eigvals(basis.T @ full_jacobian(p, y) @ basis).real))


def local_extrema(traj: Trajectory, keep: int = 200) -> list[list[float]]:
    out: list[list[float]] = []
    for x in traj.field_magnitudes().T:
        maxima, _ = signal.find_peaks(x)
        minima, _ = signal.find_peaks(-x)
        idx = np.sort(np.concatenate([maxima, minima]))[-keep:]
        out.append([float(v) for v in x[idx]])
    return out


def _lagged(x: np.ndarray, y: np.ndarray, lag_samples: float) -> float:
    """Max deviation between y(t) and x(t + lag), normalized by the spread of x."""
    n = np.arange(x.size)
    shifted = np.interp(n + lag_samples, n, x)
    valid = (n + lag_samples >= 0) & (n + lag_samples <= x.size - 1)
    return float(np.max(np.abs(shifted[valid] - y[valid])) / max(np.ptp(x), 1e-12))


def synchrony(traj: Trajectory, period: Optional[float] = None) -> Synchrony:
    a = traj.alpha
    scale = max(1.0, float(np.max(np.abs(a))))
    same = [
        float(np.max(np.abs(a[:, n] - a[:, m]))) < 1e-6 * scale
        for n, m in ((0, 1), (1, 2), (0, 2))
    ]
    if all(same):
        return Synchrony.UNIFORM
    if any(same):
        return Synchrony.TWO_ONE
    if period and traj.dt:
        x = np.abs(a)
        lag = period / 3 / traj.dt
        forward = _lagged(x[:, 0], x[:, 2], lag), _lagged(x[:, 0], x[:, 1], -lag)
        backward = _lagged(x[:, 0], x[:, 1], lag), _lagged(x[:, 0], x[:, 2], -lag)
        if max(forward) < LAG_TOL or max(backward) < LAG_TOL:
            return Synchrony.LAGGED
    return Synchrony.NONE


def classify_attractor(
    p: ModelParams,
    s0: SemiclassicalState,
    t_transient: float = 500.0,
    t_measure: float = 2000.0,
    dt: float = 0.05,
    tol: float = 1e-10,
    lyapunov_time: float = LYAPUNOV_TIME,
) -> AttractorReport:
    start = final_state(p, s0, t_transient, tol=tol) if t_transient > 0 else s0
    traj = integrate(p, start, t_transient + t_measure, tol=tol, dt=dt, t_start=t_transient)
    variation = float(np.max(np.abs(traj.states - traj.states[-1])))
    extrema = local_extrema(traj)
    diagnostics: dict[str, Any] = {"variation": variation}

    if variation < EQUILIBRIUM_VARIATION:
        rate = equilibrium_growth_rate(p, traj.final)
        return AttractorReport(
            kind=AttractorKind.EQUILIBRIUM,
            lyapunov_max=rate,
            extrema=extrema,
            synchrony=synchrony(traj),
            diagnostics=diagnostics,
        )

    site = int(np.argmax(np.ptp(traj.field_magnitudes(), axis=0)))
    spectrum = power_spectrum(traj, site)
    resolution = float(spectrum["frequency"].iloc[1])
    peaks = spectral_peaks(spectrum)
    bases = harmonic_bases(peaks, resolution)
    section = poincare_section(traj, site)
    returns = section.distinct_points()
    lyap = lyapunov_max(p, traj.final, min(lyapunov_time, t_measure), tol=max(tol, 1e-10))
    diagnostics.update(peaks=peaks, return_points=returns, crossings=len(section.times))

    comb = len(bases) == 1
    finite_returns = 0 < returns <= MAX_RETURN_POINTS and len(section.times) >= 2 * returns
    period: Optional[float] = None
    if lyap > CHAOTIC_LYAPUNOV:
        kind = AttractorKind.CHAOTIC
    elif (comb or finite_returns) and lyap < PERIODIC_LYAPUNOV:
        kind = AttractorKind.PERIODIC
        if comb:
            period = 2 * math.pi / bases[0]
        else:
            period = float(np.mean(np.diff(section.times))) * returns
    elif len(bases) == 2 and lyap < CHAOTIC_LYAPUNOV:
        kind = AttractorKind.QUASIPERIODIC
    else:
        kind = AttractorKind.INCONCLUSIVE
        log.warning("ambiguous attractor", lyapunov=lyap, bases=bases, return_points=returns)

    report = AttractorReport(
        kind=kind,
        period=period,
        base_frequencies=bases[:2],
        lyapunov_max=lyap,
        extrema=extrema,
        synchrony=synchrony(traj, period),
        diagnostics=diagnostics,
    )
    log.info(
        "attractor",
        kind=kind.value,
        period=period,
        lyapunov=lyap,
        synchrony=report.synchrony.value,
    )
    return report


def _autocorrelation_period(x: np.ndarray, dt: float) -> Optional[float]:
    x = x - x.mean()
    if np.ptp(x) == 0:
        return None
    ac = signal.correlate(x, x, mode="full", method="fft")[x.size - 1 :]
    ac /= np.arange(x.size, 0, -1)
    ac /= ac[0]
    idx, _ = signal.find_peaks(ac[: x.size // 2], height=0.5)
    if idx.size == 0:
        return None
    i = int(idx[0])
    a, b, c = ac[i - 1 : i + 2]
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return (i + shift) * dt


def _lag_fraction(x: np.ndarray, y: np.ndarray, period_samples: float) -> float:
    """Lag tau in units of the period maximizing sum x(t + tau) y(t)."""
    xc, yc = x - x.mean(), y - y.mean()
    corr = signal.correlate(xc, yc, mode="full", method="fft")
    lags = np.arange(-y.size + 1, x.size)
    corr = corr / (x.size - np.abs(lags))
    window = (lags >= 0) & (lags < period_samples)
    best = lags[window][int(np.argmax(corr[window]))]
    return float(best / period_samples)


def detect_burst(traj: Trajectory) -> BurstReport:
    """Plateau-plus-burst oscillation with each site lagging the next by a third of a period."""
    dt = _uniform_step(traj)
    x = traj.field_magnitudes()
    x1 = x[:, 0]
    amplitude = float(np.ptp(x1))
    if amplitude < 1e-9:
        return BurstReport(is_burst=False)
    slope = np.abs(np.gradient(x1, dt))
    plateau = float(np.mean(slope < 0.05 * slope.max()))
    period = _autocorrelation_period(x1, dt)
    if period is None:
        return BurstReport(is_burst=False, amplitude=amplitude, plateau_fraction=plateau)
    samples = period / dt
    lags = [_lag_fraction(x1, x[:, n], samples) for n in (1, 2)]
    forward = abs(lags[0] - 2 / 3) < LAG_TOL and abs(lags[1] - 1 / 3) < LAG_TOL
    backward = abs(lags[0] - 1 / 3) < LAG_TOL and abs(lags[1] - 2 / 3) < LAG_TOL
    is_burst = plateau >= PLATEAU_FRACTION and (forward or backward)
    return BurstReport(
        is_burst=is_burst,
        period=period,
        lags=lags,
        amplitude=amplitude,
        plateau_fraction=plateau,
    )


def escape_time(
    p: ModelParams, s0: SemiclassicalState, t_max: float, tol: float = 1e-9, dt: float = 0.5
) -> Optional[float]:
    """First time the field norm drops below ESCAPE_NORM and stays there; None if censored."""
    state, t0 = s0, 0.0
    entered: Optional[float] = None
    while t0 < t_max:
        t1 = min(t0 + 100.0, t_max)
        traj = integrate(p, state, t1, tol=tol, dt=dt, t_start=t0)
        norm = np.linalg.norm(traj.alpha, axis=1)
        for t, value in zip(traj.times, norm):
            if value < ESCAPE_NORM:
                entered = t if entered is None else entered
                if t - entered >= ESCAPE_SUSTAIN:
                    return float(entered)
            else:
                entered = None
        state, t0 = traj.final, t1
    return None


def random_ensemble(
    count: int, rng_seed: int = 0, amplitude: float = 1.0
) -> list[SemiclassicalState]:
    rng = np.random.default_rng(rng_seed)
    return [random_state(rng, amplitude) for _ in range(count)]


def detect_transient_chaos(
    p: ModelParams,
    initial_states: Sequence[SemiclassicalState],
    t_max: float,
    tol: float = 1e-9,
    threads: int = 1,
) -> TransientChaosReport:
    times: list[Optional[float]] = Parallel(n_jobs=threads)(
        delayed(escape_time)(p, s, t_max, tol) for s in initial_states
    )
    report = TransientChaosReport(escape_times=times, t_max=t_max)
    log.info(
        "transient chaos",
        runs=len(times),
        censored=sum(report.censored),
        spread=report.spread,
    )
    return report
