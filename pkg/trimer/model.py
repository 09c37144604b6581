"""Parameters, derived couplings, site arithmetic and the symmetry operations of the trimer."""

import math
from typing import Any, Literal, Protocol, Sequence, TypeVar

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

N_SITES = 3


class TrimerError(Exception):
    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class DomainError(TrimerError):
    """Parameters outside the region where an operation is defined."""


class UnsupportedError(TrimerError):
    """Operation has no closed form or implementation for this input."""


class PreconditionError(TrimerError):
    pass


class ModelParams(BaseModel):
    """All couplings in units of omega0."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    omega0: float = 1.0
    omega_a: float = 1.0
    g: float = 0.0
    eta: float = 1.0
    jbar: float = 0.3
    phi: float = 0.0
    kappa: float = 0.0
    n_atoms: int = 1
    n_sites: Literal[3] = N_SITES

    @field_validator("omega0", "omega_a")
    @classmethod
    def positive_frequency(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("frequencies must be positive")
        return v

    @field_validator("kappa")
    @classmethod
    def non_negative_kappa(cls, v: float) -> float:
        if v < 0:
            raise ValueError("kappa must be >= 0")
        return v

    @field_validator("n_atoms")
    @classmethod
    def positive_atoms(cls, v: int) -> int:
        if v < 1:
            raise ValueError("n_atoms must be >= 1")
        return v

    @field_validator("eta")
    @classmethod
    def eta_in_range(cls, v: float) -> float:
        if abs(v) > 1.0 + 1e-12:
            raise ValueError("|eta| > 1 is not supported")
        return v

    @field_validator("phi")
    @classmethod
    def phi_in_range(cls, v: float) -> float:
        if v < -1e-12 or v > math.pi + 1e-12:
            raise ValueError("phi must lie in [0, pi]")
        return v

    @classmethod
    def from_frequencies(
        cls,
        omega0: float,
        omega_a: float,
        lam: float,
        eta: float,
        hopping: float,
        phi: float,
        kappa: float = 0.0,
        n_atoms: int = 1,
    ) -> "ModelParams":
        """Build from raw frequencies (lambda, J, kappa in absolute units), rescaled by omega0."""
        return cls(
            omega0=1.0,
            omega_a=omega_a / omega0,
            g=2 * lam / math.sqrt(omega0 * omega_a),
            eta=eta,
            jbar=hopping / omega0,
            phi=phi,
            kappa=kappa / omega0,
            n_atoms=n_atoms,
        )

    def replace(self, **changes: Any) -> "ModelParams":
        return self.model_validate({**self.model_dump(), **changes})

    def constraint_violations(self) -> list[str]:
        violated: list[str] = []
        if not 1 + 2 * self.jbar * math.cos(self.phi) > 0:
            violated.append("1 + 2*jbar*cos(phi) > 0")
        if not 1 - 2 * self.jbar * math.cos(self.phi - math.pi / 3) > 0:
            violated.append("1 - 2*jbar*cos(phi - pi/3) > 0")
        return violated

    @property
    def valid(self) -> bool:
        return not self.constraint_violations()

    def require_valid(self) -> None:
        violated = self.constraint_violations()
        if violated:
            raise DomainError(
                f"hopping constraint violated: {violated[0]}",
                jbar=self.jbar,
                phi=self.phi,
            )

    @property
    def time_reversal_symmetric(self) -> bool:
        return abs(math.sin(self.phi)) < 1e-12


class DerivedCouplings(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta_plus: float
    eta_minus: float
    lam: float
    j: float


def derived_couplings(p: ModelParams) -> DerivedCouplings:
    return DerivedCouplings(
        eta_plus=(1 + p.eta) / 2,
        eta_minus=(1 - p.eta) / 2,
        lam=p.g * math.sqrt(p.omega0 * p.omega_a) / 2,
        j=p.jbar * p.omega0,
    )


def coupling_from_lambda(p: ModelParams, lam: float) -> float:
    return 2 * lam / math.sqrt(p.omega0 * p.omega_a)


class SiteIndex(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: int

    @field_validator("value")
    @classmethod
    def wrap(cls, v: int) -> int:
        return v % N_SITES

    @property
    def next(self) -> "SiteIndex":
        return SiteIndex(value=self.value + 1)

    @property
    def prev(self) -> "SiteIndex":
        return SiteIndex(value=self.value - 1)

    def __int__(self) -> int:
        return self.value


# site permutations are written as "new[n] = old[order[n]]"
Permutation = tuple[int, int, int]

IDENTITY: Permutation = (0, 1, 2)


def translation_order(steps: int = 1) -> Permutation:
    order = tuple(SiteIndex(value=n - steps).value for n in range(N_SITES))
    return order  # type: ignore[return-value]


def reflection_order(fixed_site: int) -> Permutation:
    fixed = SiteIndex(value=fixed_site)
    order = list(range(N_SITES))
    order[fixed.next.value], order[fixed.prev.value] = fixed.prev.value, fixed.next.value
    return tuple(order)  # type: ignore[return-value]


def compose(first: Permutation, second: Permutation) -> Permutation:
    """Permutation equal to applying `first` and then `second`."""
    return tuple(first[second[n]] for n in range(N_SITES))  # type: ignore[return-value]


def symmetry_group() -> list[Permutation]:
    return [
        compose(translation_order(t), reflection_order(0)) if r else translation_order(t)
        for r in (False, True)
        for t in range(N_SITES)
    ]


C = TypeVar("C", bound="Configuration")


class Configuration(Protocol):
    def permuted(self: C, order: Sequence[int]) -> C: ...

    def parity(self: C) -> C: ...


def apply_parity(s: Any) -> Any:
    if isinstance(s, np.ndarray):
        return -s
    return s.parity()


def apply_translation(s: Any, steps: int = 1) -> Any:
    order = list(translation_order(steps))
    if isinstance(s, np.ndarray):
        return s[order]
    return s.permuted(order)


def apply_reflection(s: Any, fixed_site: int = 0) -> Any:
    order = list(reflection_order(fixed_site))
    if isinstance(s, np.ndarray):
        return s[order]
    return s.permuted(order)
