"""Neumann traces of ``u`` and ``v`` on the obstacle boundary."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BoundaryQuadrature

__all__ = ["BoundaryTraceSet"]


@dataclass(frozen=True)
class BoundaryTraceSet:
    """``d_nu u`` and ``d_nu v`` at boundary quadrature nodes.

    ``du`` and ``dv`` have shape ``(len(omegas), len(quadrature))``; row ``l``
    belongs to the incidence angle ``omegas[l]``.
    """

    lam: float
    omegas: np.ndarray
    quadrature: BoundaryQuadrature
    du: np.ndarray
    dv: np.ndarray

    def __post_init__(self):
        shape = (len(self.omegas), len(self.quadrature))
        if self.du.shape != shape or self.dv.shape != shape:
            raise ValueError(f"trace arrays must have shape {shape}")
        if not (np.all(np.isfinite(self.du)) and np.all(np.isfinite(self.dv))):
            raise ValueError("non-finite Neumann trace values")
