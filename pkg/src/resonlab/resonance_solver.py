"""Resonances and partial-wave scattering for radial step potentials.

The potential is ``V = c * 1_{|x| < a}`` in odd dimension ``d`` and the
operator is ``-Laplacian + V``; the free outgoing resolvent
``(-Laplacian - lam**2)^{-1}`` is holomorphic for ``Im lam > 0`` and
resonances are the poles of its continuation, all of them in ``Im lam < 0``
for the potentials handled here.

On the angular mode ``ell`` (spherical order ``n = ell + (d-3)/2``) the
resolvent poles are the zeros of the mode Fredholm determinant
``det(I + B_ell(lam))``, which for a step has the closed form

    F_n(lam) = i * [ jhat_n(w) ehat_n(z)
                     - w**2 jhat_{n+1}(w) ehat_n(z) / ((2n+1)(2n+3))
                     - z**2 jhat_n(w) ehat_{n-1}(z) / ((2n+1)(2n-1)) ]

with ``z = lam*a`` and ``w**2 = (lam**2 - c) a**2``.  Since ``jhat`` is even,
``F`` does not depend on the branch of the interior wavenumber, it is
identically 1 for ``c = 0`` and the partial-wave scattering matrix is
``S_ell(lam) = F(-lam) / F(lam)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .contour import Box, ContourError, find_zeros
from .specfun import ehat, ehat_all, jhat, jhat_all

__all__ = [
    "PotentialSpec",
    "SearchRegion",
    "Resonance",
    "ResonanceSet",
    "ModeBudgetError",
    "SingularityError",
    "ContourError",
    "mode_multiplicity",
    "mode_determinant",
    "mode_determinants_all",
    "find_mode_resonances",
    "find_resonances",
    "mode_smatrix",
    "sdet_log_derivative",
    "swave_jost",
    "scan_swave_zeros",
]

# Offset of the left edge of the search box for real couplings: zeros on the
# imaginary axis must lie strictly inside, and the value is deliberately not
# a round number so that box edges avoid accidental zeros.
_AXIS_PAD = 0.0123456789


class ModeBudgetError(RuntimeError):
    """The mode sweep would exceed the configured number of angular modes."""


class SingularityError(ArithmeticError):
    """A real-axis evaluation hit a zero of the mode determinant."""


@dataclass(frozen=True)
class PotentialSpec:
    """Step potential ``coupling * 1_{|x| < radius}`` in odd dimension ``dim``."""

    dim: int = 3
    radius: float = 1.0
    coupling: complex = 5.0

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 3 or self.dim % 2 == 0:
            raise ValueError(f"dimension must be an odd integer >= 3, got {self.dim}")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")
        c = complex(self.coupling)
        if not (math.isfinite(c.real) and math.isfinite(c.imag)):
            raise ValueError(f"coupling must be finite, got {self.coupling}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "coupling", c)

    @property
    def is_real(self) -> bool:
        return self.coupling.imag == 0.0

    @property
    def is_free(self) -> bool:
        return self.coupling == 0

    def order(self, ell: int) -> int:
        """Spherical order ``n = ell + (dim - 3)/2`` of mode ``ell``."""
        return int(ell) + (self.dim - 3) // 2

    def nu(self, ell: int) -> float:
        return ell + self.dim / 2 - 1

    def with_coupling(self, coupling: complex) -> "PotentialSpec":
        return replace(self, coupling=complex(coupling))


def mode_multiplicity(ell: int, dim: int = 3) -> int:
    """Dimension of the degree-``ell`` spherical harmonics on the sphere in R^dim."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if dim == 2:
        return 1 if ell == 0 else 2
    return (2 * ell + dim - 2) * math.comb(ell + dim - 3, ell) // (dim - 2)


@dataclass(frozen=True)
class SearchRegion:
    """Rectangle in the lower half-plane with an exclusion strip below the real axis.

    Zeros with ``-exclusion_strip < Im lam`` are searched separately and are
    never counted as resonances.
    """

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    exclusion_strip: float = 1e-3

    def __post_init__(self):
        if not self.re_min < self.re_max:
            raise ValueError("re_min must be below re_max")
        if not self.im_min < self.im_max:
            raise ValueError("im_min must be below im_max")
        if not self.exclusion_strip > 0:
            raise ValueError("the exclusion strip must have positive width")
        if self.im_max > 0:
            raise ValueError("the search region must lie in the closed lower half-plane")
        if self.im_min >= -self.exclusion_strip:
            raise ValueError("the region lies entirely inside the exclusion strip")

    def main_box(self) -> Box:
        return Box(self.re_min, self.re_max, self.im_min, min(self.im_max, -self.exclusion_strip))

    def strip_box(self) -> Box | None:
        if self.im_max <= -self.exclusion_strip:
            return None
        return Box(self.re_min, self.re_max, -self.exclusion_strip, self.im_max)

    @classmethod
    def for_radius(cls, r_max: float, real_coupling: bool, strip: float = 1e-3) -> "SearchRegion":
        """Default rectangle covering the lower half-disc of radius ``r_max``.

        For real couplings only ``Re lam >= 0`` is searched (plus a small pad so
        the imaginary axis is interior) and the rest follows from symmetry.
        """
        re_min = -_AXIS_PAD * max(1.0, r_max / 40.0) if real_coupling else -r_max
        return cls(re_min, r_max, -r_max, 0.0, strip)


@dataclass(frozen=True)
class Resonance:
    """A zero of the mode determinant.

    ``multiplicity`` is the winding number of the isolating box, ``degeneracy``
    the number of spherical harmonics of the mode; a resonance contributes
    ``multiplicity * degeneracy`` to the counting function.
    """

    lam: complex
    ell: int
    multiplicity: int
    residual: float
    box: tuple[float, float, float, float]
    degeneracy: int = 1
    step: float = 0.0
    converged: bool = True
    in_strip: bool = False

    @property
    def weight(self) -> int:
        return self.multiplicity * self.degeneracy

    @property
    def modulus(self) -> float:
        return abs(self.lam)


def _sort_key(r: Resonance):
    return (abs(r.lam), r.ell, r.lam.real, r.lam.imag)


@dataclass
class ResonanceSet:
    spec: PotentialSpec
    items: list[Resonance]
    ell_max: int
    region: SearchRegion
    complete_below: float
    strip: list[Resonance] = field(default_factory=list)
    windings: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.items = sorted(self.items, key=_sort_key)
        self.strip = sorted(self.strip, key=_sort_key)

    def __len__(self) -> int:
        return len(self.items)

    def moduli(self) -> np.ndarray:
        return np.array([abs(r.lam) for r in self.items])

    def weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.items], dtype=np.int64)

    def count(self, r: float) -> int:
        """Multiplicity-weighted number of resonances with ``|lam| < r``."""
        return int(sum(x.weight for x in self.items if abs(x.lam) < r))

    def restrict(self, ells) -> "ResonanceSet":
        keep = set(int(e) for e in np.atleast_1d(ells))
        return ResonanceSet(
            self.spec,
            [r for r in self.items if r.ell in keep],
            max(keep) if keep else 0,
            self.region,
            self.complete_below,
            [r for r in self.strip if r.ell in keep],
            {k: v for k, v in self.windings.items() if k in keep},
        )


def _jost(n: int, lam, coupling: complex, radius: float):
    lam = np.asarray(lam, dtype=complex)
    z = lam * radius
    w = np.sqrt(lam * lam - coupling) * radius
    j0, j1 = jhat(n, w, extra=1)
    em, e = ehat(n, z, with_lower=True)
    with np.errstate(invalid="ignore"):
        if n == 0:
            last = z * j0 * np.exp(1j * z)
        else:
            last = z * z * j0 * em / ((2 * n + 1) * (2 * n - 1))
        out = 1j * (j0 * e - w * w * j1 * e / ((2 * n + 1) * (2 * n + 3)) - last)
    return complex(out) if np.ndim(out) == 0 else out


def _check_lambda(lam) -> np.ndarray:
    arr = np.asarray(lam, dtype=complex)
    if not np.all(np.isfinite(arr)):
        raise ValueError("lambda must be finite")
    if np.any(arr == 0):
        raise ValueError("the mode determinant is not evaluated at lambda = 0")
    return arr


def mode_determinant(spec: PotentialSpec, ell: int, lam):
    """Mode Fredholm determinant ``det(I + B_ell(lam))`` in closed form (vectorized in lam)."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    _check_lambda(lam)
    return _jost(spec.order(ell), lam, spec.coupling, spec.radius)


def mode_determinants_all(spec: PotentialSpec, ell_max: int, lam) -> np.ndarray:
    """Mode determinants for ``ell = 0..ell_max`` at once; shape ``(ell_max+1,) + lam.shape``."""
    lam = np.asarray(lam, dtype=complex)
    n0 = spec.order(0)
    nmax = n0 + int(ell_max)
    z = lam * spec.radius
    w = np.sqrt(lam * lam - spec.coupling) * spec.radius
    jw = jhat_all(nmax + 1, w)
    ez = ehat_all(nmax, z)
    out = np.empty((int(ell_max) + 1,) + lam.shape, dtype=complex)
    for i, n in enumerate(range(n0, nmax + 1)):
        j0, j1, e = jw[n], jw[n + 1], ez[n]
        if n == 0:
            last = z * j0 * np.exp(1j * z)
        else:
            last = z * z * j0 * ez[n - 1] / ((2 * n + 1) * (2 * n - 1))
        out[i] = 1j * (j0 * e - w * w * j1 * e / ((2 * n + 1) * (2 * n + 3)) - last)
    return out


def _to_resonances(zeros, ell: int, degeneracy: int, in_strip: bool = False) -> list[Resonance]:
    return [
        Resonance(z.location, ell, z.multiplicity, z.residual, z.box.as_tuple(),
                  degeneracy, z.step, z.converged, in_strip)
        for z in zeros
    ]


def find_mode_resonances(spec: PotentialSpec, ell: int, region: SearchRegion, tol: float = 1e-10) -> list[Resonance]:
    """All zeros of the mode determinant in ``region`` (strip zeros flagged ``in_strip``).

    Every zero sits in a box whose boundary winding number is its reported
    multiplicity; simple zeros are Newton-polished until the step is below
    ``tol * max(1, |lam|)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    found, _, _ = _search_mode(spec, ell, region, tol, prune_radius=None)
    return found


def _search_mode(spec: PotentialSpec, ell: int, region: SearchRegion, tol: float,
                 prune_radius: float | None):
    n = spec.order(ell)
    c, a = spec.coupling, spec.radius
    deg = mode_multiplicity(ell, spec.dim)

    def f(x):
        return _jost(n, x, c, a)

    prune = None
    if prune_radius is not None:
        def prune(b: Box) -> bool:
            return b.min_modulus() >= prune_radius

    zeros, log = find_zeros(f, region.main_box(), tol=tol, prune=prune)
    found = _to_resonances(zeros, ell, deg)
    strip_box = region.strip_box()
    if strip_box is not None:
        szeros, _ = find_zeros(f, strip_box, tol=tol, prune=prune)
        found += _to_resonances(szeros, ell, deg, in_strip=True)
    return found, log.total_winding, log


def _mirror(found: list[Resonance]) -> list[Resonance]:
    """Complete a right-half search using the symmetry lam -> -conj(lam) of real couplings."""
    out = []
    for r in found:
        lam = r.lam
        on_axis = abs(lam.real) <= 1e-8 * max(1.0, abs(lam))
        if on_axis:
            out.append(r)
        elif lam.real > 0:
            out.append(r)
            b = r.box
            out.append(replace(r, lam=-lam.conjugate(), box=(-b[1], -b[0], b[2], b[3])))
        # lam.real < 0: the mirror of a zero just right of the axis, already counted
    return out


def _mode_job(args):
    spec, ell, r_max, tol, region = args
    found, winding, _ = _search_mode(spec, ell, region, tol, prune_radius=r_max)
    if spec.is_real:
        found = _mirror(found)
    found = [r for r in found if abs(r.lam) < r_max]
    return ell, found, winding


def find_resonances(
    spec: PotentialSpec,
    r_max: float,
    tol: float = 1e-10,
    *,
    strip: float = 1e-3,
    mode_budget: int = 4000,
    workers: int = 1,
    empty_run: int = 10,
) -> ResonanceSet:
    """All resonances with ``|lam| < r_max``, mode by mode.

    The sweep stops once ``nu > e*r_max*a/2 + 10`` and the last ``empty_run``
    modes had no zeros in the disc.  Results do not depend on ``workers``.
    """
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    region = SearchRegion.for_radius(r_max, spec.is_real, strip)
    nu_min = math.e * r_max * spec.radius / 2 + 10
    if nu_min - spec.nu(0) > mode_budget:
        raise ModeBudgetError(f"r_max={r_max} needs more than {mode_budget} modes")
    items: list[Resonance] = []
    strip_items: list[Resonance] = []
    windings: dict[int, int] = {}
    empty = 0
    ell = 0
    done = False
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        while not done:
            batch = list(range(ell, ell + max(1, 2 * workers)))
            jobs = [(spec, e, r_max, tol, region) for e in batch]
            results = pool.map(_mode_job, jobs) if pool else map(_mode_job, jobs)
            for e, found, winding in results:
                if done:
                    continue
                windings[e] = winding
                for r in found:
                    (strip_items if r.in_strip else items).append(r)
                empty = 0 if any(not r.in_strip for r in found) else empty + 1
                ell = e + 1
                if spec.nu(e) > nu_min and empty >= empty_run:
                    done = True
                elif e >= mode_budget:
                    raise ModeBudgetError(f"mode sweep exceeded the budget of {mode_budget} modes")
    finally:
        if pool is not None:
            pool.shutdown()
    return ResonanceSet(spec, items, ell - 1, region, float(r_max), strip_items, windings)


def mode_smatrix(spec: PotentialSpec, ell: int, lam):
    """Partial-wave scattering matrix ``S_ell(lam) = F(-lam) / F(lam)`` for real ``lam``."""
    arr = np.asarray(lam)
    if np.iscomplexobj(arr) and np.any(arr.imag != 0):
        raise ValueError("the scattering matrix is evaluated on the real axis only")
    arr = _check_lambda(arr.real)
    n = spec.order(ell)
    den = _jost(n, arr, spec.coupling, spec.radius)
    if np.any(np.abs(den) < 1e-300):
        raise SingularityError("mode determinant vanishes on the real axis")
    res = _jost(n, -arr, spec.coupling, spec.radius) / den
    return complex(res) if np.ndim(res) == 0 else res


@dataclass(frozen=True)
class LogDerivative:
    value: complex
    truncation_error: float
    ell_max: int
    step: float


_STENCIL = np.array([-2.0, -1.0, 1.0, 2.0])
_STENCIL_W = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def sdet_log_derivative(spec: PotentialSpec, lam: float, ell_max: int | None = None,
                        step: float | None = None) -> LogDerivative:
    """``d/dlam log det S(lam)`` from the partial-wave sum of ``log S_ell``.

    Each mode is differentiated by a fourth-order central difference of the
    unwrapped ``log S_ell``; the sum stops at the first mode with
    ``nu > |lam| a`` whose ``|S_ell - 1|`` stays below 1e-14 on the stencil.
    The contribution of the following modes is reported as the truncation
    error.
    """
    lam = float(lam)
    if abs(lam) < 1:
        raise ValueError("the log-derivative is evaluated for |lam| >= 1")
    h = step if step is not None else 1e-3 * max(1.0, abs(lam)) / max(1.0, spec.radius)
    if spec.is_free:
        return LogDerivative(0j, 0.0, 0, h)
    pts = lam + h * np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    nmodes = int(ell_max) + 1 if ell_max is not None else int(math.e * abs(lam) * spec.radius / 2) + 40
    while True:
        fp = mode_determinants_all(spec, nmodes + 4, pts)
        fm = mode_determinants_all(spec, nmodes + 4, -pts)
        if np.any(np.abs(fp) < 1e-300) or not np.all(np.isfinite(fp)):
            raise SingularityError("the stencil touches a zero of the mode determinant")
        S = fm / fp
        logs = np.log(np.abs(S)) + 1j * np.unwrap(np.angle(S), axis=1)
        d = logs[:, [0, 1, 3, 4]] @ _STENCIL_W / h
        small = np.max(np.abs(S - 1), axis=1) < 1e-14
        nus = np.array([spec.nu(e) for e in range(S.shape[0])])
        stop = np.nonzero(small & (nus > abs(lam) * spec.radius))[0]
        if ell_max is not None:
            cut = int(ell_max) + 1
            break
        if stop.size:
            cut = int(stop[0])
            break
        nmodes *= 2
    mult = np.array([mode_multiplicity(e, spec.dim) for e in range(S.shape[0])])
    value = complex(np.sum(mult[:cut] * d[:cut]))
    trunc = float(np.sum(mult[cut:] * np.abs(d[cut:])))
    return LogDerivative(value, trunc, cut - 1, h)


def swave_jost(lam, coupling: complex, radius: float = 1.0):
    """Closed-form s-wave determinant in d = 3: ``e^{i lam a} (cos(k a) - i lam sin(k a)/k)``."""
    lam = np.asarray(lam, dtype=complex)
    k = np.sqrt(lam * lam - coupling)
    ka = k * radius
    val = np.exp(1j * lam * radius) * (np.cos(ka) - 1j * lam * radius * np.sinc(ka / np.pi))
    return complex(val) if np.ndim(val) == 0 else val


def _swave_condition(lam, c, a):
    """g = cos(ka) - i lam sin(ka)/k and dg/dlam; zeros solve k cot(ka) = i lam."""
    k = np.sqrt(lam * lam - c)
    ka = k * a
    cs = np.cos(ka)
    sk = a * np.sinc(ka / np.pi)  # sin(ka)/k
    g = cs - 1j * lam * sk
    k2 = np.where(k == 0, 1e-300, k * k)
    dsk = np.where(k == 0, -lam * a ** 3 / 3.0, lam * (a * cs - sk) / k2)
    dg = -a * lam * sk - 1j * sk - 1j * lam * dsk
    return g, dg


def scan_swave_zeros(coupling: complex, region: Box, radius: float = 1.0, spacing: float = 0.05,
                     tol: float = 1e-13) -> np.ndarray:
    """Zeros of ``k cot(k a) = i lam`` in ``region`` by Newton from a dense seed grid."""
    pad = 2 * spacing
    xs = np.arange(region.re_min - pad, region.re_max + pad + spacing / 2, spacing)
    ys = np.arange(region.im_min - pad, region.im_max + pad + spacing / 2, spacing)
    z = (xs[None, :] + 1j * ys[:, None]).ravel()
    for _ in range(60):
        with np.errstate(all="ignore"):
            g, dg = _swave_condition(z, coupling, radius)
            z = z - g / dg
    with np.errstate(all="ignore"):
        g, dg = _swave_condition(z, coupling, radius)
        ok = np.isfinite(z) & (np.abs(g / dg) < tol * np.maximum(1.0, np.abs(z)))
    z = z[ok]
    z = z[[region.contains(complex(v)) for v in z]] if z.size else z
    uniq: list[complex] = []
    for v in sorted(z, key=lambda t: (t.real, t.imag)):
        if not any(abs(v - u) < 1e-7 for u in uniq):
            uniq.append(complex(v))
    return np.array(sorted(uniq, key=lambda t: (abs(t), t.real)))
