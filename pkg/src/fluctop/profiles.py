"""Density profiles used to prepare lattice states and analytic integrands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Floor for affine profiles that would otherwise cross zero far from the
# measurement window: the fugacity inversion needs rho > 0 everywhere, and
# the probed (rho, grad) region never comes close to the floor.
DENSITY_FLOOR = 0.1


@dataclass(frozen=True)
class AffineProfile:
    """rho(x) = rho_center + slope * (x - x_center), clipped below at floor."""

    rho_center: float
    slope: float = 0.0
    x_center: float = 0.5
    floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if not np.isfinite(self.rho_center) or self.rho_center <= 0.0:
            raise ValueError(f"rho_center must be positive and finite, got {self.rho_center}")
        if not np.isfinite(self.slope):
            raise ValueError("slope must be finite")
        if not (0.0 < self.floor):
            raise ValueError(f"floor must be positive, got {self.floor}")

    def unclipped(self, x):
        return self.rho_center + self.slope * (np.asarray(x, dtype=float) - self.x_center)

    def __call__(self, x):
        return np.maximum(self.unclipped(x), self.floor)

    def min_unclipped(self, lo: float, hi: float) -> float:
        """Minimum of the raw affine law over [lo, hi]."""
        return float(min(self.unclipped(lo), self.unclipped(hi)))
