"""Counting functions, growth-order fits and Weierstrass canonical products."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CountingTable",
    "OrderFit",
    "ZeroSet",
    "InsufficientDataError",
    "CompletenessError",
    "geometric_radii",
    "counting_function",
    "convergence_exponent",
    "canonical_factor",
    "canonical_log_factor",
    "canonical_product",
    "order_fit",
    "loglog_fit",
]

GRID_RATIO = 2 ** 0.25


class InsufficientDataError(ValueError):
    pass


class CompletenessError(ValueError):
    """A radius beyond the region where the zero set is known to be complete."""


@dataclass
class ZeroSet:
    """Minimal zero-set container: locations, weights, completeness radius.

    ``ResonanceSet`` satisfies the same interface; this one serves synthetic
    data and zero sets read back from files.
    """

    locations: np.ndarray
    weights_: np.ndarray | None = None
    complete_below: float = math.inf

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=complex)
        if self.weights_ is None:
            self.weights_ = np.ones(self.locations.size, dtype=np.int64)
        self.weights_ = np.asarray(self.weights_, dtype=np.int64)

    def moduli(self) -> np.ndarray:
        return np.abs(self.locations)

    def weights(self) -> np.ndarray:
        return self.weights_

    def zeros(self) -> np.ndarray:
        return self.locations


def _locations(zset) -> np.ndarray:
    if hasattr(zset, "zeros"):
        return np.asarray(zset.zeros(), dtype=complex)
    return np.array([r.lam for r in zset.items], dtype=complex)


@dataclass
class CountingTable:
    radii: np.ndarray
    counts: np.ndarray
    source: object = None

    def rows(self) -> list[tuple[float, int]]:
        return [(float(r), int(c)) for r, c in zip(self.radii, self.counts)]


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    window: tuple[float, float]
    rms_residual: float
    n_points: int

    def summary(self) -> str:
        return (f"slope={self.slope:.6f},window={self.window[0]:g}:{self.window[1]:g},"
                f"rms={self.rms_residual:.3e}")


def geometric_radii(lo: float, hi: float, ratio: float = GRID_RATIO) -> np.ndarray:
    """``lo * ratio**k`` up to ``hi`` inclusive (``hi`` is appended if the grid misses it)."""
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    k = int(math.floor(math.log(hi / lo) / math.log(ratio) + 1e-9))
    r = lo * ratio ** np.arange(k + 1)
    if hi / r[-1] - 1 > 1e-9:
        r = np.append(r, hi)
    else:
        r[-1] = hi
    return r


def counting_function(zset, radii: Iterable[float]) -> CountingTable:
    """Multiplicity-weighted ``N(r) = #{|lam| < r}`` (strict inequality)."""
    radii = np.asarray(list(radii), dtype=float)
    if radii.size and np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be increasing")
    limit = getattr(zset, "complete_below", math.inf)
    if radii.size and radii[-1] > limit:
        raise CompletenessError(f"radius {radii[-1]} exceeds the certified radius {limit}")
    mod = np.asarray(zset.moduli(), dtype=float)
    w = np.asarray(zset.weights(), dtype=np.int64)
    order = np.argsort(mod, kind="stable")
    mod, w = mod[order], w[order]
    cum = np.concatenate([[0], np.cumsum(w)])
    counts = cum[np.searchsorted(mod, radii, side="left")]
    return CountingTable(radii, counts.astype(np.int64), zset)


def loglog_fit(x: np.ndarray, y: np.ndarray, window: tuple[float, float]) -> OrderFit:
    """Least-squares line through (log x, log y)."""
    lx, ly = np.log(x), np.log(y)
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return OrderFit(float(coef[0]), float(coef[1]), (float(window[0]), float(window[1])),
                    float(np.sqrt(np.mean(resid ** 2))), int(x.size))


def convergence_exponent(zset, window: tuple[float, float], n_points: int | None = None) -> OrderFit:
    """Slope of ``log N(r)`` against ``log r`` on a geometric grid over ``window``.

    The grid has ratio ``2**(1/4)`` unless ``n_points`` fixes its size.
    """
    lo, hi = window
    radii = geometric_radii(lo, hi) if n_points is None else np.geomspace(lo, hi, int(n_points))
    table = counting_function(zset, radii)
    ok = table.counts > 0
    if ok.sum() < 4:
        raise InsufficientDataError(f"only {int(ok.sum())} radii with nonzero counts in {window}")
    return loglog_fit(table.radii[ok], table.counts[ok].astype(float), (lo, hi))


def canonical_factor(u, p: int):
    """Weierstrass factor ``(1 - u) exp(u + u^2/2 + ... + u^p/p)``."""
    if p < 0:
        raise ValueError("p must be nonnegative")
    u = np.asarray(u, dtype=complex)
    s = np.zeros_like(u)
    for k in range(1, p + 1):
        s = s + u ** k / k
    out = (1 - u) * np.exp(s)
    return complex(out) if out.ndim == 0 else out


def canonical_log_factor(u, p: int):
    """Continuous branch of ``log G(u; p)`` (zero at u = 0) for ``|u| < 1``, else principal log(1-u) plus the sum."""
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < 0.5
    out = np.empty_like(u)
    if np.any(small):
        us = u[small]
        # log G = -sum_{k > p} u^k / k
        acc = np.zeros_like(us)
        term = us ** (p + 1)
        k = p + 1
        while True:
            add = term / k
            acc = acc - add
            if np.all(np.abs(add) <= 1e-17 * np.maximum(np.abs(acc), 1e-300)) or k > p + 200:
                break
            term = term * us
            k += 1
        out[small] = acc
    if np.any(~small):
        ub = u[~small]
        s = np.zeros_like(ub)
        for k in range(1, p + 1):
            s = s + ub ** k / k
        with np.errstate(divide="ignore"):
            out[~small] = np.log1p(-ub) + s
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ProductValue:
    value: complex
    log_value: complex
    tail_bound: float
    exact_zero: bool


def canonical_product(zset, p: int, lam: complex, fit_window: tuple[float, float] | None = None) -> ProductValue:
    """``prod_j G(lam / lam_j; p)^{w_j}`` over the (finite, certified) zero set.

    ``tail_bound`` bounds the omitted factors with ``|lam_j| >= R`` (R the
    completeness radius) by ``sum 2 |lam/lam_j|^{p+1}``, the zeros beyond R
    being modelled by the power law fitted over ``fit_window`` (default: the
    top decade below R).  It is infinite when ``|lam| > R/2`` or the fitted
    exponent is not below ``p + 1``.
    """
    lam = complex(lam)
    locs = _locations(zset)
    w = np.asarray(zset.weights(), dtype=float)
    if locs.size == 0:
        return ProductValue(1 + 0j, 0j, 0.0, False)
    if np.any(locs == lam):
        return ProductValue(0j, complex(-math.inf), 0.0, True)
    logs = canonical_log_factor(lam / locs, p)
    log_value = complex(np.sum(w * logs))
    R = float(getattr(zset, "complete_below", math.inf))
    tail = math.inf
    if math.isfinite(R) and abs(lam) <= R / 2:
        window = fit_window or (R / 10, R)
        try:
            fit = convergence_exponent(zset, window)
            rho = fit.slope
            if rho < p + 1:
                A = counting_function(zset, [R]).counts[0] / R ** rho
                tail = 2 * A * rho * abs(lam) ** (p + 1) * R ** (rho - p - 1) / (p + 1 - rho)
        except InsufficientDataError:
            pass
    elif not math.isfinite(R):
        tail = 0.0
    with np.errstate(over="ignore"):
        value = complex(np.exp(log_value))
    return ProductValue(value, log_value, tail, False)


def order_fit(samples: Sequence[tuple[float, float]]) -> OrderFit:
    """Slope of ``log(log M(r))`` against ``log r`` from samples ``(r, log M(r))``.

    Samples with ``log M <= 0`` carry no information about the order and are
    dropped.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 4:
        raise InsufficientDataError("need at least 4 samples")
    r, lm = arr[:, 0], arr[:, 1]
    if np.any(np.diff(r) <= 0):
        raise ValueError("radii must be increasing")
    ok = np.isfinite(lm) & (lm > 0)
    if ok.sum() < 4:
        raise InsufficientDataError("fewer than 4 samples with positive log-modulus")
    if np.ptp(lm[ok]) == 0:
        raise InsufficientDataError("constant samples carry no growth information")
    return loglog_fit(r[ok], lm[ok], (float(r[ok][0]), float(r[ok][-1])))
