"""Integer-order Bessel and Hankel functions of positive real argument.

``J_n`` comes from Miller's downward recurrence normalized with
``J_0 + 2 sum_k J_2k = 1``.  ``Y_0`` and ``Y_1`` are the Neumann series in the
same ``J_k`` for moderate arguments and Hankel's asymptotic expansion for large
ones; higher ``Y_n`` follow by the (stable) upward recurrence.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["BesselEval", "bessel_jy", "bessel_table", "hankel_products", "hankel1"]

EULER_GAMMA = 0.57721566490153286061
_RESCALE = 1e200
_ASYMPTOTIC_X = 25.0


@dataclass(frozen=True)
class BesselEval:
    """Values ``J_n(x), Y_n(x)`` and their ``x``-derivatives."""

    n: int
    x: float
    J: float
    Y: float
    dJ: float
    dY: float

    @property
    def H1(self) -> complex:
        return complex(self.J, self.Y)

    @property
    def H2(self) -> complex:
        return complex(self.J, -self.Y)

    @property
    def dH1(self) -> complex:
        return complex(self.dJ, self.dY)


def _miller_start(nmax, xmax):
    m = max(nmax, xmax)
    start = int(m + 30 + 12 * m ** (1.0 / 3.0) + np.sqrt(60.0 * m))
    return start + (start % 2)


def _j_table(nmax, x):
    """``J_0..J_nmax`` at every entry of ``x`` and the Neumann sums for ``Y_0, Y_1``."""
    start = _miller_start(nmax, float(np.max(x)))
    J = np.zeros((nmax + 1, len(x)))
    jp1 = np.zeros_like(x)
    j = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    s0 = np.zeros_like(x)  # sum_k (-1)^k J_2k / k
    s1 = np.zeros_like(x)  # sum_k (-1)^k (J_2k-1 - J_2k+1) / k
    for k in range(start, 0, -1):
        jm1 = (2.0 * k / x) * j - jp1  # J_{k-1}
        if k <= nmax:
            J[k] = j
        if k % 2 == 0:
            kk = k // 2
            sign = 1.0 if kk % 2 == 0 else -1.0
            norm += 2.0 * j
            s0 += sign * j / kk
            s1 += sign * (jm1 - jp1) / kk
        jp1, j = j, jm1
        big = np.abs(j) > _RESCALE
        if np.any(big):
            f = np.where(big, 1.0 / _RESCALE, 1.0)
            j, jp1 = j * f, jp1 * f
            norm, s0, s1 = norm * f, s0 * f, s1 * f
            if k <= nmax:
                J[k:] *= f
    J[0] = j
    norm += j
    J /= norm
    return J, s0 / norm, s1 / norm


def _y01_asymptotic(x):
    """Hankel's expansion for ``Y_0, Y_1``; truncation error ~ exp(-2x)."""
    out = []
    for nu in (0, 1):
        mu = 4.0 * nu * nu
        P = np.ones_like(x)
        Q = np.zeros_like(x)
        term = np.ones_like(x)
        for k in range(1, 60):
            term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
            if k % 2 == 1:
                Q += (-1) ** ((k - 1) // 2) * term
            else:
                P += (-1) ** (k // 2) * term
            if np.all(np.abs(term) < 1e-17):
                break
        chi = x - (0.5 * nu + 0.25) * np.pi
        out.append(np.sqrt(2.0 / (np.pi * x)) * (P * np.sin(chi) + Q * np.cos(chi)))
    return out


def bessel_table(nmax: int, x):
    """Tables ``J, Y, dJ, dY`` of shape ``(nmax + 1,) + x.shape`` for orders ``0..nmax``.

    ``Y`` entries that overflow are returned as ``-inf``; callers decide whether
    that regime is acceptable.
    """
    x = np.asarray(x, dtype=float)
    shape = x.shape
    xf = x.ravel()
    if np.any(~(xf > 0)):
        raise ValueError("Bessel functions are only provided for x > 0")
    if nmax < 0:
        raise ValueError("order must be nonnegative")
    n1 = max(nmax, 1)
    J, s0, s1 = _j_table(n1 + 1, xf)
    lg = np.log(xf / 2.0) + EULER_GAMMA
    y0 = (2.0 / np.pi) * (lg * J[0] - 2.0 * s0)
    y1 = (2.0 / np.pi) * (lg * J[1] - J[0] / xf + s1)
    far = xf > _ASYMPTOTIC_X
    if np.any(far):
        a0, a1 = _y01_asymptotic(xf[far])
        y0[far], y1[far] = a0, a1
    Y = np.empty((n1 + 2, len(xf)))
    Y[0], Y[1] = y0, y1
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n1 + 1):
            Y[k + 1] = (2.0 * k / xf) * Y[k] - Y[k - 1]
        Y = np.where(np.isfinite(Y), Y, -np.inf)
        n = np.arange(n1 + 2)[:, None]
        dJ = np.empty_like(J)
        dY = np.empty_like(Y)
        dJ[0], dY[0] = -J[1], -Y[1]
        dJ[1:] = J[:-1] - n[1:] / xf * J[1:]
        dY[1:] = Y[:-1] - n[1:] / xf * Y[1:]
    sl = slice(0, nmax + 1)
    return tuple(a[sl].reshape((nmax + 1,) + shape) for a in (J, Y, dJ, dY))


def bessel_jy(n: int, x: float) -> BesselEval:
    """``J_n(x), Y_n(x)`` and derivatives for a single order and argument.

    Raises ``OverflowError`` when ``Y_n(x)`` exceeds the double range.
    """
    n = int(n)
    x = float(x)
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    if n < 0:
        raise ValueError(f"order must be nonnegative, got {n}")
    J, Y, dJ, dY = (float(a[n, 0]) for a in bessel_table(n, np.array([x])))
    if not (np.isfinite(Y) and np.isfinite(dY)):
        raise OverflowError(f"Y_{n}({x}) overflows double precision")
    return BesselEval(n, x, J, Y, dJ, dY)


def hankel1(nmax: int, x):
    """``H^(1)_n(x)`` and its derivative for ``n = 0..nmax``."""
    J, Y, dJ, dY = bessel_table(nmax, x)
    return J + 1j * Y, dJ + 1j * dY


def hankel_products(nmax: int, x: float) -> np.ndarray:
    """``H^(1)_n(x) H^(2)_n(x) = J_n(x)^2 + Y_n(x)^2`` for ``n = 0..nmax``."""
    x = float(x)
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    J, Y, _, _ = bessel_table(nmax, np.array([x]))
    J, Y = J[:, 0], Y[:, 0]
    if not np.all(np.isfinite(Y)):
        bad = int(np.argmax(~np.isfinite(Y)))
        raise OverflowError(f"Y_{bad}({x}) overflows double precision")
    with np.errstate(over="raise"):
        return J * J + Y * Y
