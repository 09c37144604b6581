"""Mean-field state of the open trimer and sampled trajectories.

Flat layout: [Re a (3), Im a (3), X (3), Y (3), Z (3)].
"""

import math
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from trimer.model import N_SITES, DomainError, ModelParams, derived_couplings

STATE_SIZE = 5 * N_SITES
SPIN_NORM = 0.25
RE, IM, X, Y, Z = (slice(k * N_SITES, (k + 1) * N_SITES) for k in range(5))
PRESETS = ("N", "nfs-seed", "fs-seed", "mixed-seed", "random")


class SemiclassicalState(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    alpha: np.ndarray
    spin: np.ndarray

    @field_validator("alpha", mode="before")
    @classmethod
    def complex_fields(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=complex).reshape(N_SITES)
        arr.setflags(write=False)
        return arr

    @field_validator("spin", mode="before")
    @classmethod
    def spin_triples(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float).reshape(N_SITES, 3)
        arr.setflags(write=False)
        return arr

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "SemiclassicalState":
        return cls(alpha=y[RE] + 1j * y[IM], spin=np.stack([y[X], y[Y], y[Z]], axis=1))

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.alpha.real, self.alpha.imag, self.spin[:, 0], self.spin[:, 1], self.spin[:, 2]]
        )

    def spin_norm_error(self) -> float:
        return float(np.max(np.abs(np.sum(self.spin**2, axis=1) - SPIN_NORM)))

    def renormalized(self) -> "SemiclassicalState":
        norms = np.linalg.norm(self.spin, axis=1, keepdims=True)
        return SemiclassicalState(alpha=self.alpha, spin=0.5 * self.spin / norms)

    def permuted(self, order: Sequence[int]) -> "SemiclassicalState":
        order = list(order)
        return SemiclassicalState(alpha=self.alpha[order], spin=self.spin[order])

    def parity(self) -> "SemiclassicalState":
        return SemiclassicalState(alpha=-self.alpha, spin=self.spin * np.array([-1.0, -1.0, 1.0]))


def renormalize_vector(y: np.ndarray) -> np.ndarray:
    y = y.copy()
    norms = np.sqrt(y[X] ** 2 + y[Y] ** 2 + y[Z] ** 2)
    for part in (X, Y, Z):
        y[part] = 0.5 * y[part] / norms
    return y


def spin_drift(y: np.ndarray) -> float:
    return float(np.max(np.abs(y[X] ** 2 + y[Y] ** 2 + y[Z] ** 2 - SPIN_NORM)))


def aligned_spins(p: ModelParams, alpha: np.ndarray, sigma: float = -1.0) -> np.ndarray:
    """Spins along +-(effective field) of the given cavity fields; sigma=-1 is the lower energy."""
    d = derived_couplings(p)
    field = np.stack(
        [
            4 * d.lam * d.eta_plus * alpha.real,
            -4 * d.lam * d.eta_minus * alpha.imag,
            np.full(N_SITES, p.omega_a),
        ],
        axis=1,
    )
    return sigma * 0.5 * field / np.linalg.norm(field, axis=1, keepdims=True)


def random_state(rng: np.random.Generator, amplitude: float = 1.0) -> SemiclassicalState:
    r = amplitude * np.sqrt(rng.uniform(size=N_SITES))
    alpha = r * np.exp(2j * math.pi * rng.uniform(size=N_SITES))
    cos_theta = rng.uniform(-1, 1, size=N_SITES)
    azimuth = rng.uniform(0, 2 * math.pi, size=N_SITES)
    sin_theta = np.sqrt(1 - cos_theta**2)
    spin = 0.5 * np.stack(
        [sin_theta * np.cos(azimuth), sin_theta * np.sin(azimuth), cos_theta], axis=1
    )
    return SemiclassicalState(alpha=alpha, spin=spin)


def preset_state(
    name: str, p: ModelParams, rng: Optional[np.random.Generator] = None, amplitude: float = 0.1
) -> SemiclassicalState:
    """Named initial conditions: the N state or small seeds near each equilibrium class."""
    if name == "N":
        alpha = np.zeros(N_SITES, dtype=complex)
    elif name == "nfs-seed":
        alpha = np.full(N_SITES, amplitude, dtype=complex)
    elif name == "fs-seed":
        alpha = amplitude * np.array([1.0, -0.5, -0.5], dtype=complex)
    elif name == "mixed-seed":
        alpha = amplitude * np.array([0.0, 1.0, -1.0], dtype=complex)
    elif name == "random":
        return random_state(rng if rng is not None else np.random.default_rng(0))
    else:
        raise DomainError(f"unknown preset {name!r}", known=", ".join(PRESETS))
    return SemiclassicalState(alpha=alpha, spin=aligned_spins(p, alpha))


class Trajectory(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    states: np.ndarray
    params: ModelParams
    sampling: str = "uniform"
    dt: Optional[float] = None

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> SemiclassicalState:
        return SemiclassicalState.from_vector(self.states[i])

    @property
    def final(self) -> SemiclassicalState:
        return self.state(-1)

    @property
    def alpha(self) -> np.ndarray:
        return self.states[:, RE] + 1j * self.states[:, IM]

    def field_magnitudes(self) -> np.ndarray:
        return np.abs(self.alpha)

    def max_spin_drift(self) -> float:
        s = self.states
        return float(np.max(np.abs(s[:, X] ** 2 + s[:, Y] ** 2 + s[:, Z] ** 2 - SPIN_NORM)))

    def after(self, t: float) -> "Trajectory":
        keep = self.times >= t
        return Trajectory(
            times=self.times[keep], states=self.states[keep], params=self.params,
            sampling=self.sampling, dt=self.dt,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"t": self.times})
        names = ("re_alpha", "im_alpha", "x", "y", "z")
        for k, name in enumerate(names):
            for n in range(N_SITES):
                frame[f"{name}{n + 1}"] = self.states[:, k * N_SITES + n]
        return frame
