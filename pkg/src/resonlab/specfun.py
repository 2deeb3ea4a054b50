"""Half-integer order Bessel machinery for complex arguments.

Everything is built on two scaled, entire families indexed by the spherical
order ``n = nu - 1/2``::

    jhat_n(z) = (2n+1)!! j_n(z) / z**n          (even in z, jhat_n(0) = 1)
    ehat_n(z) = z**(n+1) h1_n(z) / (2n-1)!!      (ehat_n(0) = -1j)

They stay O(1) near the origin for every order, so determinants and kernels
built from them never overflow through the factorial prefactors.  The plain
spherical functions, the cylinder functions ``J_nu``/``H_nu`` and the modified
functions ``I_nu``/``K_nu`` are thin wrappers around these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "HalfIntOrder",
    "jhat",
    "ehat",
    "ehat2",
    "jhat_all",
    "ehat_all",
    "spherical_j",
    "spherical_h1",
    "spherical_jn_prime",
    "spherical_h1_prime",
    "cylinder_j",
    "cylinder_h1",
    "modified_IK",
    "log_double_factorial",
]

_SERIES_TERMS = 30
_RESCALE = 1e200


@dataclass(frozen=True)
class HalfIntOrder:
    """Angular index ``ell`` in odd dimension ``dim``; ``nu = ell + dim/2 - 1``."""

    ell: int
    dim: int = 3

    def __post_init__(self):
        if self.dim < 3 or self.dim % 2 == 0:
            raise ValueError(f"dimension must be odd and >= 3, got {self.dim}")
        if self.ell < 0:
            raise ValueError(f"angular index must be nonnegative, got {self.ell}")

    @property
    def nu(self) -> float:
        return self.ell + self.dim / 2 - 1

    @property
    def n(self) -> int:
        """Spherical order ``nu - 1/2``."""
        return self.ell + (self.dim - 3) // 2

    @classmethod
    def from_nu(cls, nu: float) -> "HalfIntOrder":
        n = nu - 0.5
        if n < 0 or abs(n - round(n)) > 1e-12:
            raise ValueError(f"order {nu} is not a nonnegative half-integer")
        return cls(int(round(n)), 3)


def _order(order) -> int:
    if isinstance(order, HalfIntOrder):
        return order.n
    n = int(order)
    if n < 0 or n != order:
        raise ValueError(f"spherical order must be a nonnegative integer, got {order}")
    return n


def log_double_factorial(k: int) -> float:
    """log(k!!) for odd k >= -1."""
    if k <= 0:
        return 0.0
    m = (k + 1) // 2
    return math.lgamma(2 * m + 1) - m * math.log(2.0) - math.lgamma(m + 1)


def _as_complex(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite argument")
    return z


def _jhat_series(n: int, z2: np.ndarray, nterms: int = _SERIES_TERMS) -> np.ndarray:
    term = np.ones_like(z2)
    total = np.ones_like(z2)
    for k in range(1, nterms):
        term = term * (-z2 / 2.0) / (k * (2 * n + 2 * k + 1))
        total = total + term
    return total


def _jhat_miller(orders: list[int], z: np.ndarray) -> list[np.ndarray]:
    """Downward recurrence for jhat at the requested orders, normalized at order 0 or 1."""
    z2 = z * z
    top = max(orders)
    zmax = float(np.max(np.abs(z))) if z.size else 0.0
    start = int(max(top, zmax)) + 30 + int(4.0 * zmax ** (1.0 / 3.0))
    want = set(orders)
    # jhat_{k-1} = jhat_k - z^2 jhat_{k+1} / ((2k+1)(2k+3))
    upper = np.zeros_like(z)
    cur = np.full_like(z, 1e-30)
    stored = {}
    for k in range(start, 0, -1):
        if k in want:
            stored[k] = cur.copy()
        nxt = cur - z2 * upper / ((2 * k + 1) * (2 * k + 3))
        upper, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            scale = np.where(big, np.abs(cur), 1.0)
            cur, upper = cur / scale, upper / scale
            for key in stored:
                stored[key] = stored[key] / scale
    stored[0] = cur
    trial0, trial1 = cur, upper
    # closed-form anchors: jhat_0 = sin z / z, jhat_1 = 3 (sin z - z cos z) / z^3
    with np.errstate(all="ignore"):
        exact0 = np.sinc(z / np.pi)
        exact1 = 3.0 * (np.sin(z) - z * np.cos(z)) / (z2 * z)
    use1 = np.abs(exact0) < 0.25 * np.abs(exact1)
    factor = np.where(use1, exact1 / np.where(trial1 == 0, 1, trial1), exact0 / np.where(trial0 == 0, 1, trial0))
    return [stored[k] * factor for k in orders]


def jhat(order, z, extra: int = 0):
    """Scaled regular function ``(2n+1)!! j_n(z) / z**n``.

    With ``extra > 0`` the consecutive orders ``n, n+1, ..., n+extra`` are returned
    as a list.
    """
    n = _order(order)
    zz = _as_complex(z)
    shape = zz.shape
    zf = zz.ravel()
    orders = list(range(n, n + extra + 1))
    out = [np.empty_like(zf) for _ in orders]
    small = np.abs(zf) < max(1.0, n) / 2.0
    if np.any(small):
        z2 = zf[small] ** 2
        for i, k in enumerate(orders):
            out[i][small] = _jhat_series(k, z2)
    if np.any(~small):
        vals = _jhat_miller(orders, zf[~small])
        for i in range(len(orders)):
            out[i][~small] = vals[i]
    out = [o.reshape(shape) for o in out]
    if shape == ():
        out = [complex(o) for o in out]
    return out[0] if extra == 0 else out


def jhat_all(nmax: int, z) -> np.ndarray:
    """``jhat_k(z)`` for every order ``k = 0..nmax``; shape ``(nmax + 1,) + z.shape``.

    One downward sweep serves all orders, so this is the cheap way to get long
    runs of consecutive modes at a handful of points.
    """
    nmax = _order(nmax)
    zz = _as_complex(z)
    shape = zz.shape
    zf = np.atleast_1d(zz.ravel())
    z2 = zf * zf
    zmax = float(np.max(np.abs(zf))) if zf.size else 0.0
    start = int(max(nmax, zmax)) + 30 + int(4.0 * zmax ** (1.0 / 3.0))
    vals = np.empty((nmax + 2, zf.size), dtype=complex)
    logs = np.empty((nmax + 2, zf.size))
    upper = np.zeros_like(zf)
    cur = np.full_like(zf, 1e-30)
    logscale = np.zeros(zf.size)
    for k in range(start, -1, -1):
        if k <= nmax + 1:
            vals[k] = cur
            logs[k] = logscale
        if k == 0:
            break
        nxt = cur - z2 * upper / ((2 * k + 1) * (2 * k + 3))
        upper, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            sc = np.where(big, np.abs(cur), 1.0)
            cur, upper = cur / sc, upper / sc
            logscale = logscale + np.log(sc)
    with np.errstate(all="ignore"):
        exact0 = np.sinc(zf / np.pi)
        exact1 = 3.0 * (np.sin(zf) - zf * np.cos(zf)) / (z2 * zf)
    use1 = np.abs(exact0) < 0.25 * np.abs(exact1)
    ref = np.where(use1, vals[1], vals[0])
    ref_log = np.where(use1, logs[1], logs[0])
    target = np.where(use1, exact1, exact0)
    out = vals[: nmax + 1] * np.exp(logs[: nmax + 1] - ref_log) * (target / np.where(ref == 0, 1, ref))
    return out.reshape((nmax + 1,) + shape)


def ehat_all(nmax: int, z) -> np.ndarray:
    """``ehat_k(z)`` for every order ``k = 0..nmax``; shape ``(nmax + 1,) + z.shape``."""
    nmax = _order(nmax)
    zz = _as_complex(z)
    shape = zz.shape
    zf = np.atleast_1d(zz.ravel())
    lower = zf.imag < 0
    # upward recurrence is stable for h1 in the closed upper half-plane; below
    # the axis use h1 = 2 j - h2 with h2(z) = conj(h1(conj z)).
    w = np.where(lower, np.conj(zf), zf)
    w2 = w * w
    out = np.empty((nmax + 1, zf.size), dtype=complex)
    e = np.exp(1j * w)
    out[0] = -1j * e
    if nmax >= 1:
        out[1] = -e * (w + 1j)
    for k in range(1, nmax):
        out[k + 1] = out[k] - w2 * out[k - 1] / ((2 * k - 1) * (2 * k + 1))
    if np.any(lower):
        zl = zf[lower]
        jh = jhat_all(nmax, zl)
        z2 = zl * zl
        coef = zl.copy()  # z**(2k+1) / ((2k+1)!! (2k-1)!!)
        for k in range(nmax + 1):
            if k > 0:
                coef = coef * z2 / ((2 * k + 1) * (2 * k - 1))
            out[k, lower] = 2.0 * coef * jh[k] - np.conj(out[k, lower])
    return out.reshape((nmax + 1,) + shape)


def _ehat_upward(n: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(ehat_{n-1}, ehat_n) by upward recurrence; stable where h1 is dominant."""
    z2 = z * z
    e = np.exp(1j * z)
    prev = -1j * e
    if n == 0:
        return np.full_like(z, np.nan), prev
    cur = -e * (z + 1j)
    for k in range(1, n):
        prev, cur = cur, cur - z2 * prev / ((2 * k - 1) * (2 * k + 1))
    return prev, cur


def _ehat_pair(n: int, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(ehat_{n-1}, ehat_n) for arbitrary complex z (flat array)."""
    lower = z.imag < 0
    out_prev = np.empty_like(z)
    out_cur = np.empty_like(z)
    if np.any(~lower):
        p, c = _ehat_upward(n, z[~lower])
        out_prev[~lower], out_cur[~lower] = p, c
    if np.any(lower):
        zl = z[lower]
        # h1 = 2 j - h2 in the lower half-plane; h2(z) = conj(h1(conj z)).
        p2, c2 = _ehat_upward(n, np.conj(zl))
        p2, c2 = np.conj(p2), np.conj(c2)
        logz = np.log(zl)
        if n == 0:
            jh = jhat(0, zl)
            out_cur[lower] = 2.0 * zl * jh - c2
            out_prev[lower] = np.nan
        else:
            jm, jn = jhat(n - 1, zl, extra=1)
            lc = (2 * n + 1) * logz - log_double_factorial(2 * n + 1) - log_double_factorial(2 * n - 1)
            lp = (2 * n - 1) * logz - log_double_factorial(2 * n - 1) - log_double_factorial(2 * n - 3)
            # combine in log space: z**(2n+1) can overflow while jhat underflows
            with np.errstate(divide="ignore"):
                out_cur[lower] = 2.0 * np.exp(lc + np.log(jn)) - c2
                out_prev[lower] = 2.0 * np.exp(lp + np.log(jm)) - p2
    return out_prev, out_cur


def ehat(order, z, with_lower: bool = False):
    """Scaled outgoing function ``z**(n+1) h1_n(z) / (2n-1)!!``.

    ``with_lower=True`` also returns ``ehat_{n-1}`` (NaN for n = 0), which is what
    the derivative ``d/dz ehat_n = z ehat_{n-1} / (2n-1)`` needs.
    """
    n = _order(order)
    zz = _as_complex(z)
    shape = zz.shape
    prev, cur = _ehat_pair(n, zz.ravel())
    prev, cur = prev.reshape(shape), cur.reshape(shape)
    if shape == ():
        prev, cur = complex(prev), complex(cur)
    return (prev, cur) if with_lower else cur


def ehat2(order, z, with_lower: bool = False):
    """Incoming counterpart ``z**(n+1) h2_n(z) / (2n-1)!! = -ehat_n(-z)``."""
    zz = _as_complex(z)
    res = ehat(order, -zz, with_lower=with_lower)
    if with_lower:
        # ehat2_{n-1}(z) = -ehat_{n-1}(-z) as well
        return -res[0], -res[1]
    return -res


def _scale_power(z: np.ndarray, k: int, log_const: float) -> np.ndarray:
    """z**k * exp(-log_const) without intermediate overflow."""
    with np.errstate(divide="ignore"):
        return np.exp(k * np.log(z) - log_const)


def spherical_j(order, z):
    """Spherical Bessel ``j_n(z)``; ``J_nu(z) = sqrt(2z/pi) j_n(z)``."""
    n = _order(order)
    zz = _as_complex(z)
    val = jhat(n, zz)
    if n == 0:
        return val
    zarr = np.asarray(zz)
    res = np.where(zarr == 0, 0.0, _scale_power(np.where(zarr == 0, 1, zarr), n, log_double_factorial(2 * n + 1)) * val)
    return complex(res) if np.ndim(res) == 0 else res


def spherical_h1(order, z):
    """Spherical Hankel ``h1_n(z)``; ``H1_nu(z) = sqrt(2z/pi) h1_n(z)``."""
    n = _order(order)
    zz = _as_complex(z)
    if np.any(zz == 0):
        raise ZeroDivisionError("spherical Hankel function has a pole at z = 0")
    shape = zz.shape
    zf = np.atleast_1d(zz.ravel())
    lower = zf.imag < 0
    # unscaled upward recurrence h_{k+1} = (2k+1)/z h_k - h_{k-1}, stable for
    # h1 in the closed upper half-plane; below it h1 = 2 j - conj(h1(conj z)).
    w = np.where(lower, np.conj(zf), zf)
    prev = -1j * np.exp(1j * w) / w
    cur = prev if n == 0 else -np.exp(1j * w) * (w + 1j) / (w * w)
    for k in range(1, n):
        prev, cur = cur, (2 * k + 1) / w * cur - prev
    if np.any(lower):
        cur = cur.copy()
        cur[lower] = 2.0 * spherical_j(n, zf[lower]) - np.conj(cur[lower])
    res = cur.reshape(shape)
    return complex(res) if np.ndim(res) == 0 else res


def spherical_jn_prime(order, z):
    """d/dz j_n via ``j_n' = j_{n-1} - (n+1) j_n / z`` (``j_0' = -j_1``)."""
    n = _order(order)
    if n == 0:
        return -spherical_j(1, z)
    zz = _as_complex(z)
    return spherical_j(n - 1, zz) - (n + 1) * spherical_j(n, zz) / zz


def spherical_h1_prime(order, z):
    n = _order(order)
    if n == 0:
        return -spherical_h1(1, z)
    zz = _as_complex(z)
    return spherical_h1(n - 1, zz) - (n + 1) * spherical_h1(n, zz) / zz


def _sqrt_factor(z):
    return np.sqrt(2.0 * np.asarray(z, dtype=complex) / np.pi)


def cylinder_j(order, z):
    """``J_nu(z)`` for half-integer nu, principal branch of sqrt(2z/pi)."""
    res = _sqrt_factor(z) * spherical_j(order, z)
    return complex(res) if np.ndim(res) == 0 else res


def cylinder_h1(order, z):
    res = _sqrt_factor(z) * spherical_h1(order, z)
    return complex(res) if np.ndim(res) == 0 else res


def modified_IK(order, s: float) -> tuple[float, float]:
    """Modified Bessel ``(I_nu(s), K_nu(s))`` for half-integer nu and s > 0.

    I is obtained by Miller's downward recurrence normalized to
    ``I_{1/2}(s) = sqrt(2/(pi s)) sinh s``; K by upward recurrence from
    ``K_{1/2} = K_{-1/2} = sqrt(pi/(2s)) e^{-s}``.
    """
    n = _order(order)
    s = float(s)
    if not math.isfinite(s) or s <= 0:
        raise ValueError(f"modified Bessel functions need s > 0, got {s}")
    # K upward: K_{v+1} = K_{v-1} + (2v/s) K_v
    k_prev = k_cur = math.sqrt(math.pi / (2 * s)) * math.exp(-s)
    for k in range(n):
        v = k + 0.5
        k_prev, k_cur = k_cur, k_prev + (2 * v / s) * k_cur
    # I downward: I_{v-1} = I_{v+1} + (2v/s) I_v; trial value = cur * exp(acc)
    start = n + 30 + int(math.sqrt(40.0 * max(n, s)))
    upper, cur, acc = 0.0, 1e-300, 0.0
    target = (cur, acc) if start == n else None
    for k in range(start, 0, -1):
        v = k + 0.5
        upper, cur = cur, upper + (2 * v / s) * cur
        if abs(cur) > _RESCALE:
            acc += math.log(cur)
            upper /= cur
            cur = 1.0
        if k - 1 == n:
            target = (cur, acc)
    if target is None:
        target = (cur, acc)
    # log I_{1/2}(s) = log(sqrt(2/(pi s)) sinh s)
    log_i_half = 0.5 * math.log(2.0 / (math.pi * s)) + s + math.log1p(-math.exp(-2 * s)) - math.log(2.0)
    log_i = math.log(target[0]) + target[1] - math.log(cur) - acc + log_i_half
    return math.exp(log_i), k_cur
