"""Numerical checks of the Bessel/Hankel identities used by the determinant bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import (
    cylinder_h1,
    cylinder_j,
    modified_IK,
    spherical_h1,
    spherical_h1_prime,
    spherical_j,
    spherical_jn_prime,
)

__all__ = [
    "IdentityResult",
    "wronskian_check",
    "modulus_identity_check",
    "hankel_identity_check",
    "growth_bound_check",
    "identity_suite",
    "DEFAULT_S_GRID",
]

DEFAULT_S_GRID = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)


@dataclass(frozen=True)
class IdentityResult:
    name: str
    metric: float
    tol: float
    n_points: int
    higher_is_better: bool = False

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.metric):
            return False
        return self.metric > self.tol if self.higher_is_better else self.metric <= self.tol


def wronskian_check(ell_max: int = 40, n_radii: int = 12, n_angles: int = 9, tol: float = 1e-10) -> IdentityResult:
    """Worst error of ``j h1' - j' h1 = i / z^2`` over ``ell <= ell_max``, ``0.1 <= |z| <= 100``.

    In the closed upper half-plane the error is relative to ``|z|^-2``.  Below
    the axis both products grow like ``e^{2|Im z|}`` and cancel down to
    ``i/z^2``, so there the error is taken relative to the cancellation scale
    ``|j h1'| + |j' h1|`` (what double precision can resolve).
    """
    radii = np.geomspace(0.1, 100.0, n_radii)
    angles = np.linspace(-0.9 * math.pi, 0.9 * math.pi, n_angles)
    z = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()
    upper = z.imag >= 0
    worst = 0.0
    for ell in range(ell_max + 1):
        a = spherical_j(ell, z) * spherical_h1_prime(ell, z)
        b = spherical_jn_prime(ell, z) * spherical_h1(ell, z)
        ref = 1j / z ** 2
        scale = np.where(upper, np.abs(ref), np.maximum(np.abs(a) + np.abs(b), np.abs(ref)))
        worst = max(worst, float(np.max(np.abs(a - b - ref) / scale)))
    return IdentityResult("wronskian", worst, tol, (ell_max + 1) * z.size)


def modulus_identity_check(n_max: int = 40, s_grid=DEFAULT_S_GRID, tol: float = 1e-10) -> IdentityResult:
    """max relative gap of ``|J_nu(-is)| = I_nu(s)`` for ``nu = n + 1/2``, ``n <= n_max``."""
    worst = 0.0
    for n in range(n_max + 1):
        for s in s_grid:
            lhs = abs(cylinder_j(n, -1j * s))
            rhs = modified_IK(n, s)[0]
            worst = max(worst, abs(lhs - rhs) / rhs)
    return IdentityResult("modulus_identity", worst, tol, (n_max + 1) * len(s_grid))


def hankel_identity_check(n_max: int = 40, s_grid=DEFAULT_S_GRID, tol: float = 1e-9) -> IdentityResult:
    """``H1_nu(-is) = (2i/pi) e^{-3 nu pi i/2} K_nu(s) + 2 e^{-nu pi i/2} I_nu(s)``, max relative gap."""
    worst = 0.0
    for n in range(n_max + 1):
        nu = n + 0.5
        for s in s_grid:
            i_nu, k_nu = modified_IK(n, s)
            rhs = (2j / math.pi) * np.exp(-1.5j * nu * math.pi) * k_nu + 2 * np.exp(-0.5j * nu * math.pi) * i_nu
            lhs = cylinder_h1(n, -1j * s)
            # H_{3/2}(-i) = 0 exactly, so measure against the size of the two terms
            scale = 2 * k_nu / math.pi + 2 * i_nu
            worst = max(worst, abs(lhs - rhs) / scale)
    return IdentityResult("hankel_identity", worst, tol, (n_max + 1) * len(s_grid))


def growth_bound_check(s_values=(4.0, 6.0, 8.0), n_range=(10, 79)) -> IdentityResult:
    """Infimum of ``(1/nu) log(sqrt(nu) |F_nu(-i nu s)|)`` for F = J and F = H1.

    The check passes when the infimum over the half-integer orders in
    ``n_range`` is strictly positive.
    """
    lo = math.inf
    count = 0
    for s in s_values:
        for n in range(n_range[0], n_range[1] + 1):
            nu = n + 0.5
            z = -1j * nu * s
            for val in (cylinder_j(n, z), cylinder_h1(n, z)):
                lo = min(lo, math.log(math.sqrt(nu) * abs(val)) / nu)
                count += 1
    return IdentityResult("growth_lower_bound", lo, 0.0, count, higher_is_better=True)


def identity_suite() -> list[IdentityResult]:
    return [wronskian_check(), modulus_identity_check(), hankel_identity_check(), growth_bound_check()]
