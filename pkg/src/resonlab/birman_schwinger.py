"""Nystrom discretization of the mode Birman-Schwinger operators of radial potentials.

For a radial potential ``V`` the operator ``B_V(lam) = (V/|V|^{1/2}) R0(lam) |V|^{1/2}``
splits over angular modes.  With the measure ``r**(d-1) dr`` symmetrized into
the kernel, the mode-``ell`` free resolvent kernel is

    G(r, r') = i * r_<**(n+1) / r_>**n * jhat_n(lam r_<) ehat_n(lam r_>) / (2n+1),

``n = ell + (d-3)/2``, which equals ``(i pi/2) sqrt(r r') J_nu(lam r_<) H1_nu(lam r_>)``.
On Gauss-Legendre nodes the matrix entries are
``sqrt(w_i w_j) phase(V_i) |V_i|^{1/2} G(r_i, r_j) |V_j|^{1/2}``.

Along the negative imaginary axis the kernel splits exactly as
``G(-is) = G(+is) + 2 (-1)^n g(r) g(r')``: a bounded positive part plus a
rank-one part carrying all the exponential growth.  Determinants there are
computed through that split so that they keep full relative accuracy even
when the matrix entries are ~e^{2sa}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment

from .contour import Box, find_zeros
from .resonance_solver import (
    PotentialSpec,
    SearchRegion,
    find_mode_resonances,
    mode_determinants_all,
    mode_multiplicity,
)
from .specfun import ehat, jhat, log_double_factorial

__all__ = [
    "RadialPotential",
    "ModeOperatorMatrix",
    "EigenSpectrum",
    "FredholmResult",
    "ConfigurationError",
    "NumericError",
    "PreconditionError",
    "radial_grid",
    "mode_kernel",
    "mode_eigenvalues",
    "mode_log_det",
    "fredholm_det",
    "domination_check",
    "det_zero_crosscheck",
    "ray_limit_check",
    "norm_growth_check",
    "default_nodes",
]

MIN_NODES = 16


class ConfigurationError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class RadialPotential:
    """Radial potential supported in ``r <= support_radius``.

    Piecewise-constant profiles are given by ``steps = ((R_1, h_1), ...)``
    meaning ``V = sum_k h_k 1_{r < R_k}``; their jump radii become quadrature
    panel boundaries and their mode traces are known in closed form.  Any
    other profile can be passed as a vectorized callable.
    """

    dim: int
    support_radius: float
    steps: tuple[tuple[float, complex], ...] = ()
    profile: Callable[[np.ndarray], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dim < 3 or self.dim % 2 == 0:
            raise ConfigurationError(f"dimension must be odd and >= 3, got {self.dim}")
        if not self.support_radius > 0:
            raise ConfigurationError("support radius must be positive")
        if not self.steps and self.profile is None:
            raise ConfigurationError("give either steps or a profile")
        steps = tuple((float(R), complex(h)) for R, h in self.steps)
        if any(not 0 < R <= self.support_radius for R, _ in steps):
            raise ConfigurationError("step radii must lie in (0, support_radius]")
        object.__setattr__(self, "steps", steps)
        bps = set(float(b) for b in self.breakpoints) | {R for R, _ in steps}
        bps = tuple(sorted(b for b in bps if 0 < b < self.support_radius))
        object.__setattr__(self, "breakpoints", bps)

    @classmethod
    def step(cls, dim: int, radius: float, coupling: complex) -> "RadialPotential":
        return cls(dim, radius, ((radius, coupling),))

    @classmethod
    def from_spec(cls, spec: PotentialSpec) -> "RadialPotential":
        return cls.step(spec.dim, spec.radius, spec.coupling)

    @classmethod
    def sum_of_steps(cls, dim: int, pieces: Sequence[tuple[float, complex]]) -> "RadialPotential":
        return cls(dim, max(R for R, _ in pieces), tuple(pieces))

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.profile is not None:
            return np.asarray(self.profile(r), dtype=complex) * (r <= self.support_radius)
        out = np.zeros(r.shape, dtype=complex)
        for R, h in self.steps:
            out = out + h * (r < R)
        return out

    def scaled(self, factor: complex) -> "RadialPotential":
        if self.profile is not None:
            prof = self.profile
            return RadialPotential(self.dim, self.support_radius, (), lambda r: factor * prof(r), self.breakpoints)
        return RadialPotential(self.dim, self.support_radius, tuple((R, factor * h) for R, h in self.steps))

    def sup_norm(self) -> float:
        r = np.linspace(0, self.support_radius, 4001)[:-1]
        return float(np.max(np.abs(self(r))))

    def mode_trace_zero(self, n: np.ndarray) -> np.ndarray:
        """``tr B_n(0)^2`` for spherical orders ``n`` (exact for steps, an upper bound otherwise)."""
        n = np.asarray(n, dtype=float)
        if self.profile is not None or not self.steps:
            a = self.support_radius
            return self.sup_norm() ** 2 * a ** 4 / (2 * (2 * n + 1) ** 2 * (2 * n + 3))
        total = np.zeros(n.shape, dtype=complex)
        for Rk, hk in self.steps:
            for Rl, hl in self.steps:
                if Rl >= Rk:
                    val = Rk ** 4 / (4 * (2 * n + 3))
                else:
                    q = Rl / Rk
                    tail = (1 - q ** (2 * n - 1)) / (2 * n - 1)
                    val = Rl ** 4 / (4 * (2 * n + 3)) + Rl ** 4 * tail / (2 * n + 3)
                total = total + hk * hl * val
        return (2 * total / (2 * n + 1) ** 2).real if np.all(np.isreal(total)) else 2 * total / (2 * n + 1) ** 2


def radial_grid(n_nodes: int, support_radius: float, breakpoints: Sequence[float] = ()) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [0, support_radius] with panels split at ``breakpoints``."""
    if n_nodes < MIN_NODES:
        raise ConfigurationError(f"need at least {MIN_NODES} nodes, got {n_nodes}")
    edges = np.array([0.0, *sorted(b for b in breakpoints if 0 < b < support_radius), support_radius])
    lengths = np.diff(edges)
    counts = np.maximum(4, np.floor(n_nodes * lengths / support_radius).astype(int))
    counts[np.argmax(lengths)] += n_nodes - counts.sum()
    nodes, weights = [], []
    for lo, hi, k in zip(edges[:-1], edges[1:], counts):
        x, w = np.polynomial.legendre.leggauss(int(k))
        nodes.append(lo + (hi - lo) * (x + 1) / 2)
        weights.append(w * (hi - lo) / 2)
    return np.concatenate(nodes), np.concatenate(weights)


def default_nodes(lam: complex, support_radius: float) -> int:
    """max(64, ceil(8 |lam| a)): at least eight nodes per unit of phase."""
    return max(64, int(math.ceil(8 * abs(lam) * support_radius)))


@dataclass
class ModeOperatorMatrix:
    ell: int
    lam: complex
    nodes: np.ndarray
    weights: np.ndarray
    entries: np.ndarray
    dim: int = 3

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass
class EigenSpectrum:
    mode: int
    mu: np.ndarray
    discretization_size: int


def _factors(pot: RadialPotential, nodes, weights):
    v = pot(nodes)
    mag = np.sqrt(np.abs(v))
    phase = np.where(v == 0, 0.0, v / np.where(v == 0, 1, np.abs(v)))
    sw = np.sqrt(weights)
    return phase * mag * sw, mag * sw


def _green(n: int, lam: complex, r: np.ndarray) -> np.ndarray:
    """Mode kernel matrix G(r_i, r_j) on sorted nodes, from O(N) special-function values."""
    jv = np.asarray(jhat(n, lam * r), dtype=complex)
    ev = np.asarray(ehat(n, lam * r), dtype=complex)
    idx = np.arange(r.size)
    lo = np.minimum.outer(idx, idx)
    hi = np.maximum.outer(idx, idx)
    rl, rh = r[lo], r[hi]
    power = rl * np.exp(n * np.log(rl / rh))
    return 1j * power * jv[lo] * ev[hi] / (2 * n + 1)


def _grid_for(pot: RadialPotential, n_nodes: int, grid):
    if grid is not None:
        return grid
    return radial_grid(n_nodes, pot.support_radius, pot.breakpoints)


def mode_kernel(pot: RadialPotential, ell: int, lam: complex, n_nodes: int | None = None,
                grid: tuple[np.ndarray, np.ndarray] | None = None) -> ModeOperatorMatrix:
    """Symmetrized Nystrom matrix of ``B_ell(lam)``."""
    lam = complex(lam)
    if n_nodes is None:
        n_nodes = default_nodes(lam, pot.support_radius)
    if grid is None and n_nodes < MIN_NODES:
        raise ConfigurationError(f"need at least {MIN_NODES} nodes, got {n_nodes}")
    nodes, weights = _grid_for(pot, n_nodes, grid)
    n = ell + (pot.dim - 3) // 2
    left, right = _factors(pot, nodes, weights)
    entries = left[:, None] * _green(n, lam, nodes) * right[None, :]
    return ModeOperatorMatrix(ell, lam, nodes, weights, entries, pot.dim)


def mode_eigenvalues(matrix) -> EigenSpectrum:
    """All eigenvalues, sorted by descending modulus (ties by real, then imaginary part)."""
    if isinstance(matrix, ModeOperatorMatrix):
        a, mode = matrix.entries, matrix.ell
    else:
        a, mode = np.asarray(matrix), -1
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    try:
        if np.max(np.abs(a.imag), initial=0.0) <= 1e-12 * max(scale, 1e-300) and \
                np.allclose(a.real, a.real.T, rtol=0, atol=1e-12 * max(scale, 1e-300)):
            sym = 0.5 * (a.real + a.real.T)
            mu = linalg.eigvalsh(sym).astype(complex)
        else:
            mu = linalg.eigvals(a)
    except linalg.LinAlgError as err:
        raise NumericError(f"eigensolver failed on a {a.shape} matrix with max entry {scale:.3e}: {err}") from err
    order = np.lexsort((-mu.imag, -mu.real, -np.abs(mu)))
    return EigenSpectrum(mode, mu[order], a.shape[0])


def _negative_axis_split(pot: RadialPotential, ell: int, s: float, nodes, weights):
    """``M(-is) = A + 2(-1)^n p q^T`` with A the (bounded) matrix at +is."""
    n = ell + (pot.dim - 3) // 2
    left, right = _factors(pot, nodes, weights)
    A = left[:, None] * _green(n, 1j * s, nodes) * right[None, :]
    jv = np.asarray(jhat(n, -1j * s * nodes)).real
    # g(r) = s^{n+1/2} r^{n+1} jhat_n(-isr) / (2n+1)!!, in logs to avoid overflow
    g = np.exp(-0.5 * math.log(s) + (n + 1) * np.log(s * nodes) - log_double_factorial(2 * n + 1)) * jv
    return A, left * g, right * g, 2.0 * (-1) ** n


def _roots_of_minus_one(power: int) -> np.ndarray:
    k = np.arange(power)
    return np.exp(1j * np.pi * (2 * k + 1) / power)


def _logdet(mat: np.ndarray) -> complex:
    lu, piv = linalg.lu_factor(mat, check_finite=False)
    d = np.diag(lu)
    if np.any(d == 0):
        return complex(-np.inf)
    flips = np.count_nonzero(piv != np.arange(piv.size))
    return complex(np.sum(np.log(d.astype(complex)))) + (1j * np.pi if flips % 2 else 0.0)


def mode_log_det(pot: RadialPotential, ell: int, lam: complex, power: int = 2, n_nodes: int | None = None,
                 grid=None, method: str = "auto") -> complex:
    """``log det(I + B_ell(lam)^power)`` on the Nystrom grid (power >= 1).

    ``method``: "split" (negative imaginary axis only), "direct" (LU of the
    linear factors), "power" (LU of ``I + M^power``), "eig" (eigenvalue
    product), or "auto" (split on the negative imaginary axis, else direct).
    The imaginary part is only defined modulo 2*pi.
    """
    lam = complex(lam)
    if n_nodes is None:
        n_nodes = default_nodes(lam, pot.support_radius)
    nodes, weights = _grid_for(pot, n_nodes, grid)
    on_axis = lam.real == 0 and lam.imag < 0
    if method == "auto":
        method = "split" if on_axis else "direct"
    # I + x^p = prod (1 - zeta x) over zeta^p = -1
    zetas = _roots_of_minus_one(power)
    eye = np.eye(nodes.size)
    if method == "split":
        if not on_axis:
            raise ValueError("the split evaluation needs lam = -is with s > 0")
        A, p, q, beta = _negative_axis_split(pot, ell, -lam.imag, nodes, weights)
        total = 0j
        for zeta in zetas:
            mat = eye - zeta * A
            total += _logdet(mat)
            sol = linalg.solve(mat, p, check_finite=False)
            total += np.log(1 - zeta * beta * (q @ sol))
        return total
    M = mode_kernel(pot, ell, lam, grid=(nodes, weights)).entries
    if method == "direct":
        return sum(_logdet(eye - zeta * M) for zeta in zetas)
    if method == "power":
        return _logdet(eye + np.linalg.matrix_power(M, power))
    if method == "eig":
        mu = mode_eigenvalues(M).mu
        return complex(np.sum(np.log(1 + mu.astype(complex) ** power)))
    raise ValueError(f"unknown method {method!r}")


def _tail_sum(pot: RadialPotential, first_ell: int, m: int) -> float:
    """Sum over ell >= first_ell of mult(ell) * (tr B_ell(0)^2)^m."""
    d = pot.dim
    ells = np.arange(first_ell, first_ell + 200000)
    n = ells + (d - 3) // 2
    mult = np.array([mode_multiplicity(int(e), d) for e in ells[:64]] +
                    [0] * (ells.size - 64), dtype=float)
    if ells.size > 64:
        # closed form for the tail of the multiplicity: (2l+d-2) C(l+d-3, d-3)/(d-2)
        e = ells[64:].astype(float)
        comb = np.ones_like(e)
        for k in range(1, d - 2):
            comb *= (e + k) / k
        mult[64:] = (2 * e + d - 2) * comb / (d - 2)
    terms = mult * np.abs(pot.mode_trace_zero(n)) ** m
    # remainder beyond the explicit range: terms ~ ell^{-p}
    p = 3 * m - (d - 2)
    rest = terms[-1] * ells[-1] / max(p - 1, 1) if p > 1 else math.inf
    return float(np.sum(terms) + rest)


@dataclass
class FredholmResult:
    lam: complex
    power: int
    log_det: complex
    log_det_modes: complex
    tail: float
    ell_max: int
    n_nodes: int
    drift: float
    per_mode: np.ndarray = field(repr=False, default=None)


def _mode_cutoff(lam: complex, a: float, dim: int) -> int:
    nu_cut = math.e * abs(lam) * a / 2 + 10
    return max(0, int(math.ceil(nu_cut - (dim / 2 - 1))))


def fredholm_det(pot: RadialPotential, lam: complex, power: int = 2, ell_max: int | None = None,
                 n_nodes: int | None = None, check_drift: bool = True, method: str = "auto") -> FredholmResult:
    """``log det(I + B(lam)^power)`` summed over modes with their multiplicities.

    Modes up to ``nu > e|lam|a/2 + 10`` are discretized; the remaining modes
    decay only algebraically and are represented by the first-order tail
    ``sum mult(ell) tr B_ell(0)^2`` (added for ``power == 2``; for higher
    powers its ``m``-th power is reported as a bound only).  With
    ``check_drift`` the sum is recomputed on twice as many nodes; the finer
    value is returned together with the relative drift.
    """
    lam = complex(lam)
    if power < 2 or power % 2:
        raise ConfigurationError("power must be an even integer 2m")
    m = power // 2
    if not m > pot.dim / 4:
        raise ConfigurationError(f"m = {m} must exceed d/4 = {pot.dim / 4}")
    a = pot.support_radius
    L = _mode_cutoff(lam, a, pot.dim) if ell_max is None else int(ell_max)
    if n_nodes is None:
        n_nodes = default_nodes(lam, a)

    def run(nn):
        grid = radial_grid(nn, a, pot.breakpoints)
        return np.array([mode_log_det(pot, ell, lam, power, grid=grid, method=method) for ell in range(L + 1)])

    mult = np.array([mode_multiplicity(ell, pot.dim) for ell in range(L + 1)])
    per = run(n_nodes)
    total = complex(np.sum(mult * per.real) + 1j * np.sum(mult * per.imag))
    drift = math.nan
    if check_drift:
        fine = run(2 * n_nodes)
        fine_total = complex(np.sum(mult * fine.real) + 1j * np.sum(mult * fine.imag))
        drift = abs(fine_total.real - total.real) / max(abs(fine_total.real), 1e-300)
        per, total = fine, fine_total
    tail = _tail_sum(pot, L + 1, m)
    log_det = total + (tail if power == 2 else 0.0)
    return FredholmResult(lam, power, log_det, total, tail, L, n_nodes, drift, mult * per)


@dataclass
class DominationReport:
    s: float
    margins: np.ndarray
    abs_margins: np.ndarray
    big: np.ndarray
    small: np.ndarray
    log_det_big: float
    log_det_small: float
    det_margin: float
    tol: float
    n_nodes: int

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margins)) if self.margins.size else 0.0

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.tol and self.det_margin >= -self.tol


def _top_eigs_squared(pot, s, grid, L, top_k):
    vals = []
    for ell in range(L + 1):
        M = mode_kernel(pot, ell, -1j * s, grid=grid)
        mu = mode_eigenvalues(M).mu
        sq = np.sort(np.abs(mu) ** 2)[::-1][:top_k]
        vals.extend(np.repeat(sq, mode_multiplicity(ell, pot.dim)))
    vals = np.sort(np.array(vals))[::-1]
    return vals[:top_k]


def domination_check(pot_big: RadialPotential, pot_small: RadialPotential, s: float, m: int = 1,
                     top_k: int = 20, n_nodes: int | None = None, ell_max: int | None = None,
                     tol: float = 1e-8) -> DominationReport:
    """Compare sorted eigenvalues of ``B^2(-is)`` and determinants for ``V_big >= V_small >= 0``.

    Both operators live on one shared grid (panels split at the jumps of
    either potential).  Eigenvalue margins are relative,
    ``(mu_big - mu_small) / max(mu_big, mu_small, 1)``, since discretization
    and rounding errors scale with the eigenvalue; absolute margins are
    reported as well.  ``det_margin`` is the relative difference of
    ``log det(I + B^{2m}(-is))``.
    """
    if pot_big.dim != pot_small.dim:
        raise PreconditionError("potentials live in different dimensions")
    a = max(pot_big.support_radius, pot_small.support_radius)
    if n_nodes is None:
        n_nodes = default_nodes(-1j * s, a)
    grid = radial_grid(n_nodes, a, sorted(set(pot_big.breakpoints) | set(pot_small.breakpoints) |
                                          {pot_big.support_radius, pot_small.support_radius}))
    vb, vs = pot_big(grid[0]), pot_small(grid[0])
    if np.any(np.abs(vb.imag) > 0) or np.any(np.abs(vs.imag) > 0):
        raise PreconditionError("domination needs real-valued potentials")
    if np.any(vs.real < 0) or np.any(vb.real < vs.real):
        raise PreconditionError("need V_big >= V_small >= 0 on the node grid")
    L = _mode_cutoff(-1j * s, a, pot_big.dim) if ell_max is None else ell_max
    big = _top_eigs_squared(pot_big, s, grid, L, top_k)
    small = _top_eigs_squared(pot_small, s, grid, L, top_k)
    k = min(big.size, small.size)
    abs_margins = big[:k] - small[:k]
    margins = abs_margins / np.maximum(np.maximum(big[:k], small[:k]), 1.0)
    power = 2 * m
    ld_big = sum(mode_multiplicity(e, pot_big.dim) * mode_log_det(pot_big, e, -1j * s, power, grid=grid).real
                 for e in range(L + 1))
    ld_small = sum(mode_multiplicity(e, pot_small.dim) * mode_log_det(pot_small, e, -1j * s, power, grid=grid).real
                   for e in range(L + 1))
    det_margin = (ld_big - ld_small) / max(abs(ld_big), abs(ld_small), 1.0)
    return DominationReport(s, margins, abs_margins, big, small, ld_big, ld_small, det_margin, tol, grid[0].size)


@dataclass
class CrosscheckReport:
    m: int
    pairs: list[tuple[int, complex, complex]]
    unmatched_operator: list[tuple[int, complex]]
    unmatched_reference: list[tuple[int, complex]]
    max_distance: float
    factorization_error: float
    tol_pair: float
    tol_factor: float
    n_nodes: int

    @property
    def passed(self) -> bool:
        return (not self.unmatched_operator and not self.unmatched_reference
                and self.max_distance <= self.tol_pair and self.factorization_error <= self.tol_factor)


def _h_mode_factory(pot: RadialPotential, ell: int, m: int, grid):
    """lam -> det(I - (-1)^m M_ell(lam)^m) via its m linear factors."""
    omegas = np.exp(2j * np.pi * np.arange(1, m + 1) / m)
    eye = np.eye(grid[0].size)

    def h(lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        out = np.empty(lams.shape, dtype=complex)
        for i, lam in enumerate(lams.ravel()):
            M = mode_kernel(pot, ell, lam, grid=grid).entries
            val = 1.0 + 0j
            for om in omegas:
                val *= linalg.det(eye + om * M, check_finite=False)
            out.ravel()[i] = val
        return out

    return h


def det_zero_crosscheck(spec: PotentialSpec, m: int = 2, region: SearchRegion | None = None,
                        n_nodes: int | None = None, tol: float = 1e-10, tol_pair: float = 1e-4,
                        tol_factor: float = 1e-8, ell_max: int | None = None) -> CrosscheckReport:
    """Match zeros of ``det(I - (-1)^m B^m)`` with resonances of ``omega^k c``, ``omega = e^{2 pi i/m}``.

    Operator zeros come from an argument-principle search on the Nystrom
    determinant of each mode; the reference zeros from the closed-form mode
    determinants.  The factorization ``I - (-1)^m M^m = prod_k (I + omega^k M)``
    is checked on a 5x5 grid over the region using the explicit matrix power.
    """
    if not m > spec.dim / 2:
        raise ConfigurationError(f"m = {m} must exceed d/2 = {spec.dim / 2}")
    region = region or SearchRegion(0.5, 8.0, -3.0, -0.05)
    box = region.main_box()
    rmax = max(abs(complex(c)) for c in box.corners())
    if n_nodes is None:
        n_nodes = max(192, default_nodes(rmax, spec.radius))
    pot = RadialPotential.from_spec(spec)
    grid = radial_grid(n_nodes, spec.radius)
    L = _mode_cutoff(rmax, spec.radius, spec.dim) if ell_max is None else ell_max
    omegas = np.exp(2j * np.pi * np.arange(1, m + 1) / m)
    pairs, un_op, un_ref = [], [], []
    maxd = 0.0
    for ell in range(L + 1):
        ref = []
        if not spec.is_free:
            for om in omegas:
                ref += [r.lam for r in find_mode_resonances(spec.with_coupling(om * spec.coupling), ell, region, tol)
                        for _ in range(r.multiplicity)]
        if spec.is_free:
            ops = []
        else:
            zs, _ = find_zeros(_h_mode_factory(pot, ell, m, grid), box, tol=tol)
            ops = [z.location for z in zs for _ in range(z.multiplicity)]
        if ops and ref:
            cost = np.abs(np.subtract.outer(np.array(ops), np.array(ref)))
            ri, ci = linear_sum_assignment(cost)
            for i, j in zip(ri, ci):
                if cost[i, j] <= tol_pair:
                    pairs.append((ell, ops[i], ref[j]))
                    maxd = max(maxd, float(cost[i, j]))
                else:
                    un_op.append((ell, ops[i]))
                    un_ref.append((ell, ref[j]))
            un_op += [(ell, ops[i]) for i in set(range(len(ops))) - set(ri)]
            un_ref += [(ell, ref[j]) for j in set(range(len(ref))) - set(ci)]
        else:
            un_op += [(ell, z) for z in ops]
            un_ref += [(ell, z) for z in ref]
    # algebraic factorization on a coarse grid
    fac_err = 0.0
    xs = np.linspace(box.re_min, box.re_max, 5)
    ys = np.linspace(box.im_min, box.im_max, 5)
    sign = (-1) ** m
    eye = np.eye(grid[0].size)
    for ell in range(min(L, 2) + 1):
        for x in xs:
            for y in ys:
                M = mode_kernel(pot, ell, complex(x, y), grid=grid).entries
                lhs = linalg.det(eye - sign * np.linalg.matrix_power(M, m))
                rhs = np.prod([linalg.det(eye + om * M) for om in omegas])
                fac_err = max(fac_err, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    return CrosscheckReport(m, pairs, un_op, un_ref, maxd, fac_err, tol_pair, tol_factor, grid[0].size)


@dataclass
class RayReport:
    theta: float
    radii: np.ndarray
    log_h: np.ndarray
    deviation: np.ndarray
    slope: float
    threshold: float
    nystrom_gap: float
    modes: list[tuple[int, int]]

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.slope) and self.slope <= self.threshold)


def _log_h_jost(spec: PotentialSpec, m: int, lam: complex, first: int, last: int) -> complex:
    """sum_{ell=first..last} mult(ell) log prod_k F_{omega^k c}(lam) from the closed form."""
    if last < first:
        return 0j
    omegas = np.exp(2j * np.pi * np.arange(1, m + 1) / m)
    total = np.zeros(last + 1, dtype=complex)
    for om in omegas:
        F = mode_determinants_all(spec.with_coupling(om * spec.coupling), last, np.array([lam]))[:, 0]
        total += np.log(F)
    mult = np.array([mode_multiplicity(e, spec.dim) for e in range(last + 1)], dtype=float)
    return complex(np.sum((mult * total)[first:]))


def ray_limit_check(spec: PotentialSpec, m: int = 2, theta: float = math.pi / 2,
                    r_grid: Sequence[float] = (4, 8, 16, 32, 64), n_nodes: int | None = None,
                    threshold: float = -0.8, jost_factor: float = 8.0) -> RayReport:
    """Fit the decay of ``|h(r e^{i theta}) - 1|``, ``h = det(I - (-1)^m B^m)``, along a ray.

    Low modes (``nu <= e r a/2 + 10``) use the Nystrom matrices; higher modes
    up to ``nu ~ jost_factor (r a)^2`` use the closed-form mode determinants,
    beyond which the first-order trace tail is added (m = 2).  The largest
    per-mode gap between the two evaluations on the low modes is reported.
    """
    if not m > spec.dim / 2:
        raise ConfigurationError(f"m = {m} must exceed d/2 = {spec.dim / 2}")
    if not 0.1 <= theta <= math.pi - 0.1:
        raise ConfigurationError("theta must stay at least 0.1 away from 0 and pi")
    radii = np.asarray(r_grid, dtype=float)
    pot = RadialPotential.from_spec(spec)
    a = spec.radius
    omegas = np.exp(2j * np.pi * np.arange(1, m + 1) / m)
    log_h = np.zeros(radii.size, dtype=complex)
    gap = 0.0
    modes = []
    for i, r in enumerate(radii):
        lam = r * np.exp(1j * theta)
        if spec.is_free:
            modes.append((0, 0))
            continue
        L = _mode_cutoff(lam, a, spec.dim)
        L2 = max(L + 1, int(jost_factor * (r * a) ** 2) + 50)
        nn = n_nodes or default_nodes(lam, a)
        grid = radial_grid(nn, a)
        eye = np.eye(grid[0].size)
        ref = sum(np.log(mode_determinants_all(spec.with_coupling(om * spec.coupling), L, np.array([lam]))[:, 0])
                  for om in omegas)
        low = 0j
        for ell in range(L + 1):
            M = mode_kernel(pot, ell, lam, grid=grid).entries
            val = sum(_logdet(eye + om * M) for om in omegas)
            low += mode_multiplicity(ell, spec.dim) * val
            gap = max(gap, abs(np.exp(val) - np.exp(ref[ell])) / max(abs(np.exp(ref[ell])), 1e-300))
        high = _log_h_jost(spec, m, lam, L + 1, L2)
        tail = -_tail_sum(pot, L2 + 1, 1) if m == 2 else 0.0
        log_h[i] = low + high + tail
        modes.append((L, L2))
    dev = np.abs(np.expm1(log_h))
    ok = dev > 0
    slope = float(np.polyfit(np.log(radii[ok]), np.log(dev[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return RayReport(theta, radii, log_h, dev, slope, threshold, gap, modes)


@dataclass
class NormGrowthReport:
    s: float
    ells: np.ndarray
    top: np.ndarray
    fitted_c: float

    @property
    def passed(self) -> bool:
        return self.fitted_c > 0


def norm_growth_check(pot: RadialPotential, s: float, ells: Sequence[int] | None = None,
                      n_nodes: int | None = None) -> NormGrowthReport:
    """Largest ``c`` with ``max|mu(B_ell^2(-is))| >= c e^{c ell} / (ell + alpha)^2`` over ``ells``.

    The default window is ``ell + alpha < s a / 12``, ``alpha = d/2 - 1``.
    """
    alpha = pot.dim / 2 - 1
    a = pot.support_radius
    if ells is None:
        ells = [e for e in range(0, int(s * a)) if e + alpha < s * a / 12]
    ells = np.asarray(ells, dtype=int)
    grid = radial_grid(n_nodes or default_nodes(-1j * s, a), a, pot.breakpoints)
    top = np.array([np.abs(mode_eigenvalues(mode_kernel(pot, int(e), -1j * s, grid=grid)).mu[0]) ** 2
                    for e in ells])

    def holds(c):
        return bool(np.all(top >= c * np.exp(c * ells) / (ells + alpha) ** 2))

    lo, hi = 0.0, 1.0
    while holds(hi) and hi < 1e6:
        lo, hi = hi, hi * 2
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if holds(mid) else (lo, mid)
    return NormGrowthReport(float(s), ells, top, lo)
