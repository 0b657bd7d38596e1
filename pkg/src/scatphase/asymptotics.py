"""Comparison curves for the scattering phase.

* two-term Weyl law ``-|O| lam^2 / 4 pi - |dO| lam / 4 pi``,
* a conjectural constant correction from corners and curvature,
* Breit-Wigner sums of Lorentzians over nearby resonances,
* the logarithmic capacity entering the low-energy form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np

from .geometry import ObstacleShape, measures

__all__ = [
    "AsymptoticModel",
    "model_from_shape",
    "weyl2",
    "weyl2_deriv",
    "weyl3",
    "WEYL3_IS_CONJECTURAL",
    "breit_wigner",
    "capacity_disc",
    "estimate_capacity",
    "read_resonances",
]

# The constant term is suggested by interior heat asymptotics; it is not proved.
WEYL3_IS_CONJECTURAL = True


@dataclass(frozen=True)
class AsymptoticModel:
    area: float
    perimeter: float
    corner_angles: tuple = ()
    curvature_integral: float = 0.0
    capacity: float | None = None
    resonances: tuple = field(default=())

    def __post_init__(self):
        if not (self.area > 0 and self.perimeter > 0):
            raise ValueError("area and perimeter must be positive")
        th = np.asarray(self.corner_angles, dtype=float)
        if np.any((th <= 0) | (th >= 2 * np.pi)):
            raise ValueError("corner angles must lie in (0, 2 pi)")
        res = np.asarray(self.resonances, dtype=complex)
        if np.any(res.imag >= 0):
            raise ValueError("resonances must lie strictly below the real axis")

    @property
    def constant_term(self) -> float:
        th = np.asarray(self.corner_angles, dtype=float)
        corners = float(np.sum(th / np.pi - np.pi / th)) / 24.0 if th.size else 0.0
        return corners - self.curvature_integral / (24.0 * np.pi)


def model_from_shape(shape: ObstacleShape, capacity: float | None = None, resonances=()) -> AsymptoticModel:
    m = measures(shape)
    if capacity is None and shape.is_disk:
        capacity = capacity_disc(shape.params.get("a", 1.0))
    return AsymptoticModel(area=m["area"], perimeter=m["perimeter"],
                           corner_angles=tuple(m["corner_angles"].tolist()),
                           curvature_integral=m["curvature_integral"], capacity=capacity,
                           resonances=tuple(resonances))


def _lam(lam):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("lam must be nonnegative")
    return lam


def weyl2(lam, model: AsymptoticModel):
    lam = _lam(lam)
    return -(model.area * lam**2 + model.perimeter * lam) / (4 * np.pi)


def weyl2_deriv(lam, model: AsymptoticModel):
    lam = _lam(lam)
    return -(model.area * lam / (2 * np.pi)) - model.perimeter / (4 * np.pi)


def weyl3(lam, model: AsymptoticModel):
    """Two-term law plus the corner and curvature constant (conjectural)."""
    return weyl2(lam, model) + model.constant_term


def breit_wigner(lam, model: AsymptoticModel, background=None):
    """Lorentzians over resonances with ``|lam_j - lam| < 1`` on a smooth background.

    ``background`` defaults to the derivative of the two-term Weyl law.
    """
    lam = _lam(lam)
    res = np.asarray(model.resonances, dtype=complex)
    base = weyl2_deriv(lam, model) if background is None else np.asarray(background, dtype=float)
    if res.size == 0:
        return np.broadcast_to(base, lam.shape).astype(float)
    d = lam[..., None] - res
    peaks = np.where(np.abs(d) < 1.0, np.abs(res.imag) / (np.pi * np.abs(d) ** 2), 0.0)
    return base + peaks.sum(axis=-1)


def capacity_disc(a: float) -> float:
    """``C = log a``: the exterior Green function of the disk is ``log(|x| / a)``."""
    if not a > 0:
        raise ValueError("disk radius must be positive")
    return math.log(a)


def estimate_capacity(shape: ObstacleShape, n: int = 400, shrink: float = 0.7) -> float:
    """Constant ``C`` in ``G(x) = log|x| - C + o(1)`` by the method of fundamental solutions.

    ``G = sum_j c_j log|x - z_j| - C`` with ``sum c_j = 1`` and sources ``z_j``
    on the boundary shrunk towards the origin; ``G = 0`` is imposed in the
    least-squares sense at ``2n`` boundary points.  Meant for smooth
    star-shaped obstacles; accuracy degrades near corners.
    """
    if len(shape.components) != 1:
        raise ValueError("capacity estimator handles one component")
    c = shape.components[0]
    s_src = c.length * (np.arange(n) + 0.5) / n
    s_col = c.length * np.arange(2 * n) / (2 * n)
    z = shrink * c.point(s_src)
    x = c.point(s_col)
    K = np.log(np.hypot(*(x[:, None, :] - z[None, :, :]).transpose(2, 0, 1)))
    # unknowns (c_1..c_n, C): K c - C = 0 and sum c = 1
    A = np.vstack([np.hstack([K, -np.ones((len(x), 1))]), np.hstack([np.ones((1, n)), [[0.0]]]) * 1e3])
    b = np.zeros(len(x) + 1)
    b[-1] = 1e3
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(sol[-1])


def read_resonances(path) -> tuple:
    """Resonances from a text file with one ``re im`` pair per line (``#`` comments)."""
    out = []
    with open(Path(path), newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 're im'")
            try:
                z = complex(float(parts[0]), float(parts[1]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number") from None
            if z.imag >= 0:
                raise ValueError(f"{path}:{lineno}: resonance {z} is not below the real axis")
            out.append(z)
    return tuple(out)
