import numpy as np
from pydantic import BaseModel, ConfigDict

from trimer.model import TrimerError


class InconclusiveError(TrimerError):
    pass


class PowerLawFit(BaseModel):
    """y ~ prefactor * x**exponent, fitted as a straight line in log-log space."""

    model_config = ConfigDict(frozen=True)

    exponent: float
    prefactor: float
    residual: float
    points: int

    def conclusive(self, max_residual: float = 0.05) -> bool:
        return self.residual <= max_residual


def fit_power_law(x: np.ndarray, y: np.ndarray) -> PowerLawFit:
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    keep = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if keep.sum() < 3:
        raise InconclusiveError(
            "not enough positive samples for a power-law fit", points=int(keep.sum())
        )
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    rms = float(np.sqrt(np.mean((ly - (slope * lx + intercept)) ** 2)))
    return PowerLawFit(
        exponent=float(slope),
        prefactor=float(np.exp(intercept)),
        residual=rms,
        points=int(keep.sum()),
    )


def delta_grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.geomspace(lo, hi, points)
