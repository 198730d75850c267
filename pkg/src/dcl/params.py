"""Model and control parameter containers."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class ModelParams:
    """Brownian surplus dX = mu dt + sigma dB."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma)):
            raise DomainError(f"model parameters must be finite, got {self}")
        if self.sigma <= 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class ControlParams:
    """Discount rate q and maximal linear payout rate factor k.

    ``k = 0`` is accepted so that the simulator can run the plain Brownian
    model; every closed form involving the OU function requires ``k > 0``.
    """

    q: float
    k: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.q) and math.isfinite(self.k)):
            raise DomainError(f"control parameters must be finite, got {self}")
        if self.q <= 0:
            raise DomainError(f"q must be > 0, got {self.q}")
        if self.k < 0:
            raise DomainError(f"k must be >= 0, got {self.k}")
