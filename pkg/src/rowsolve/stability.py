"""Linear stability analysis on the scalar test equation.

Three kinds of stability function are supported: the rational function of a
one-step linearly implicit tableau, the trapezoidal (Crank-Nicolson)
reference, and explicit Runge-Kutta polynomials. ``classify`` scans the
imaginary axis and rays into the left half plane to decide A-stability,
L-stability, and the largest verified sector angle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import PoleError, StructuralError
from .tableaus import RowTableau

AMP_TOL = 1e-8       # |R| <= 1 + AMP_TOL counts as stable at a sample
L_STABLE_TOL = 1e-10


class RowStability:
    """R(z) = 1 + z b (I - z (alpha + gamma))^-1 1, evaluated by forward
    substitution; poles sit at 1/gamma_ii."""

    def __init__(self, tableau: RowTableau):
        self.tableau = tableau
        self._big = tableau.alpha + tableau.gamma
        self._gd = tableau.gamma_diag

    def __call__(self, z: complex) -> complex:
        s = self.tableau.stages
        x = np.zeros(s, dtype=complex)
        for i in range(s):
            den = 1.0 - z * self._gd[i]
            if den == 0.0:
                raise PoleError(f"z={z} is a pole (1/gamma at stage {i})")
            acc = 1.0 + z * np.dot(self._big[i, :i], x[:i])
            x[i] = acc / den
        return 1.0 + z * np.dot(self.tableau.b, x)

    def r_infinity(self) -> complex:
        if np.any(self._gd == 0.0):
            raise StructuralError("stiff limit undefined: zero diagonal gamma")
        x = solve_triangular(self._big, np.ones(self.tableau.stages), lower=True)
        return complex(1.0 - np.dot(self.tableau.b, x))

    def poles(self) -> np.ndarray:
        return 1.0 / self._gd


class CrankNicolson:
    """Trapezoidal reference: R(z) = (1 + z/2) / (1 - z/2)."""

    def __call__(self, z: complex) -> complex:
        den = 1.0 - z / 2.0
        if den == 0.0:
            raise PoleError("z=2 is the trapezoidal pole")
        return (1.0 + z / 2.0) / den

    def r_infinity(self) -> complex:
        return complex(-1.0)

    def poles(self) -> np.ndarray:
        return np.array([2.0])


class ExplicitRK:
    """Stability polynomial 1 + z + ... + z^p/p! plus optional tail terms
    extra[j] z^(p+1+j) for schemes with more stages than order."""

    def __init__(self, order: int, extra: tuple[float, ...] = ()):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        coeffs = [1.0 / math.factorial(k) for k in range(order + 1)]
        coeffs.extend(extra)
        self._coeffs = np.array(coeffs)

    def __call__(self, z: complex) -> complex:
        acc = 0.0 + 0.0j
        for c in self._coeffs[::-1]:
            acc = acc * z + c
        return acc

    def r_infinity(self) -> float:
        return math.inf

    def poles(self) -> np.ndarray:
        return np.array([])


@dataclass(frozen=True)
class ScanSettings:
    """Density of the stability scans."""

    ray_tol_deg: float = 0.1
    n_radii: int = 200
    r_max: float = 1.0e8
    r_min: float = 1.0e-6


@dataclass(frozen=True)
class StabilityReport:
    r_infinity: complex | float
    a_stable: bool
    l_stable: bool
    alpha_deg: float
    settings: ScanSettings
    samples: tuple  # (z, |R(z)|) pairs from the imaginary-axis scan


def _abs_r(model, z: complex) -> float:
    try:
        return abs(model(z))
    except PoleError:
        return math.inf


def _radii(settings: ScanSettings) -> np.ndarray:
    return np.logspace(math.log10(settings.r_min), math.log10(settings.r_max),
                       settings.n_radii)


def _ray_stable(model, angle_deg: float, radii: np.ndarray) -> bool:
    """Is |R| <= 1 + tol along the ray at angle_deg off the negative real
    axis (upper half; real coefficients make the lower half symmetric)?"""
    direction = -np.exp(1j * math.radians(angle_deg))
    for r in radii:
        if _abs_r(model, direction * r) > 1.0 + AMP_TOL:
            return False
    return True


def classify(model, settings: ScanSettings = ScanSettings()) -> StabilityReport:
    """Scan-based stability classification.

    A-stable: the imaginary-axis samples stay within 1 + tol, every pole has
    positive real part, and the stiff limit does not exceed 1 + tol.
    L-stable additionally needs a vanishing stiff limit. The sector angle is
    the largest bisected angle (to ray_tol_deg) whose ray scan passes; it is
    reported as 90 for A-stable functions and 0 when even the negative real
    axis fails.
    """
    radii = _radii(settings)
    samples = []
    axis_ok = True
    for r in radii:
        mag = _abs_r(model, 1j * r)
        samples.append((1j * r, mag))
        if mag > 1.0 + AMP_TOL:
            axis_ok = False
    r_inf = model.r_infinity()
    limit_ok = abs(r_inf) <= 1.0 + AMP_TOL
    poles_ok = all(np.real(p) > 0.0 for p in model.poles())
    a_stable = bool(axis_ok and limit_ok and poles_ok)
    l_stable = bool(a_stable and abs(r_inf) <= L_STABLE_TOL)

    if a_stable:
        alpha = 90.0
    elif not _ray_stable(model, 0.0, radii) or not limit_ok:
        alpha = 0.0
    else:
        lo, hi = 0.0, 90.0
        while hi - lo > settings.ray_tol_deg:
            mid = 0.5 * (lo + hi)
            if _ray_stable(model, mid, radii):
                lo = mid
            else:
                hi = mid
        alpha = lo
    return StabilityReport(r_infinity=r_inf, a_stable=a_stable,
                           l_stable=l_stable, alpha_deg=alpha,
                           settings=settings, samples=tuple(samples))


def region_scan(model, re_range=(-4.0, 4.0), im_range=(-4.0, 4.0),
                nx: int = 81, ny: int = 81):
    """|R| sampled on a rectangular grid, row-major in (im, re) order.

    Returns (re, im, abs_r) flat arrays; abs_r is +inf at exact poles.
    """
    res = np.linspace(re_range[0], re_range[1], nx)
    ims = np.linspace(im_range[0], im_range[1], ny)
    re_out = np.empty(nx * ny)
    im_out = np.empty(nx * ny)
    mag_out = np.empty(nx * ny)
    k = 0
    for im in ims:
        for re in res:
            re_out[k] = re
            im_out[k] = im
            mag_out[k] = _abs_r(model, complex(re, im))
            k += 1
    return re_out, im_out, mag_out
