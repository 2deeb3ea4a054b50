"""Argument-principle root isolation for holomorphic functions on rectangles.

A rectangle's winding number is obtained by tracking the phase of ``f`` along
its boundary; edges are bisected until consecutive samples differ by less
than ``max_log_step`` in complex logarithm, which makes the integer count a
certificate rather than an estimate.  Boxes are quadrisected until each holds
a single simple zero (then polished by Newton) or shrinks below the minimum
size (then reported as a cluster with its winding multiplicity).

All boxes of one quadtree level are processed together so that each
refinement round costs a single vectorized call of ``f``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

VectorFunction = Callable[[np.ndarray], np.ndarray]


class ContourError(RuntimeError):
    """Boundary phase tracking failed to certify an integer winding number."""

    def __init__(self, message: str, box: "Box | None" = None):
        super().__init__(message)
        self.box = box


@dataclass(frozen=True)
class Box:
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    @property
    def width(self) -> float:
        return self.re_max - self.re_min

    @property
    def height(self) -> float:
        return self.im_max - self.im_min

    @property
    def diameter(self) -> float:
        return math.hypot(self.width, self.height)

    def corners(self) -> list[complex]:
        return [
            complex(self.re_min, self.im_min),
            complex(self.re_max, self.im_min),
            complex(self.re_max, self.im_max),
            complex(self.re_min, self.im_max),
        ]

    def contains(self, z: complex, pad: float = 0.0) -> bool:
        return (
            self.re_min - pad <= z.real <= self.re_max + pad
            and self.im_min - pad <= z.imag <= self.im_max + pad
        )

    def min_modulus(self) -> float:
        dx = 0.0 if self.re_min <= 0 <= self.re_max else min(abs(self.re_min), abs(self.re_max))
        dy = 0.0 if self.im_min <= 0 <= self.im_max else min(abs(self.im_min), abs(self.im_max))
        return math.hypot(dx, dy)

    def split(self, frac_re: float = 0.5, frac_im: float = 0.5) -> list["Box"]:
        xm = self.re_min + frac_re * self.width
        ym = self.im_min + frac_im * self.height
        return [
            Box(self.re_min, xm, self.im_min, ym),
            Box(xm, self.re_max, self.im_min, ym),
            Box(self.re_min, xm, ym, self.im_max),
            Box(xm, self.re_max, ym, self.im_max),
        ]

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.re_min, self.re_max, self.im_min, self.im_max)


@dataclass
class Zero:
    """An isolated zero; ``residual`` is |f| at ``location``, ``step`` the last Newton step."""

    location: complex
    multiplicity: int
    residual: float
    box: Box
    converged: bool
    step: float = math.nan


@dataclass
class SearchLog:
    """Per-box certificate: every searched box with its winding number."""

    boxes: list[tuple[Box, int]] = field(default_factory=list)
    pruned: list[tuple[Box, int]] = field(default_factory=list)
    evaluations: int = 0

    @property
    def total_winding(self) -> int:
        return self.boxes[0][1] if self.boxes else 0


class _Edge:
    __slots__ = ("a", "b", "t", "vals", "phase", "_insert_at")

    def __init__(self, a: complex, b: complex):
        self.a, self.b = a, b
        self.t = None
        self.vals = None
        self.phase = None


class WindingCounter:
    """Memoized, batched boundary phase tracker for a single function."""

    def __init__(
        self,
        f: VectorFunction,
        scale: float,
        points_per_unit: float = 4.0,
        max_log_step: float = 0.6,
        max_rounds: int = 45,
    ):
        self.f = f
        self.scale = max(scale, 1.0)
        self.points_per_unit = points_per_unit
        self.max_log_step = max_log_step
        self.max_rounds = max_rounds
        self._cache: dict[tuple[int, int], complex] = {}
        self._edges: dict[tuple, float] = {}
        self.evaluations = 0
        self.calls = 0
        self._quantum = 1e-11 * self.scale

    def _key(self, z: complex) -> tuple[int, int]:
        q = self._quantum
        return (round(z.real / q), round(z.imag / q))

    def values(self, pts: np.ndarray) -> np.ndarray:
        keys = [self._key(z) for z in pts]
        missing = {}
        for i, k in enumerate(keys):
            if k not in self._cache and k not in missing:
                missing[k] = i
        if missing:
            idx = list(missing.values())
            with np.errstate(all="ignore"):
                fz = np.asarray(self.f(pts[idx]), dtype=complex)
            self.evaluations += len(idx)
            self.calls += 1
            for k, v in zip(missing.keys(), fz):
                self._cache[k] = complex(v)
        return np.array([self._cache[k] for k in keys], dtype=complex)

    def _edge_key(self, a: complex, b: complex) -> tuple:
        return (self._key(a), self._key(b))

    def _resolve(self, edges: list[_Edge]) -> None:
        """Refine all edges in lockstep until every phase step is small."""
        pending = []
        for e in edges:
            length = abs(e.b - e.a)
            n0 = max(8, 2 ** math.ceil(math.log2(max(1.0, length * self.points_per_unit))))
            e.t = np.linspace(0.0, 1.0, n0 + 1)
            pending.append(e)
        requests = [(e, e.t) for e in pending]
        for _ in range(self.max_rounds):
            if not requests:
                return
            pts = np.concatenate([e.a + (e.b - e.a) * t for e, t in requests])
            vals = self.values(pts)
            pos = 0
            next_requests = []
            for e, t in requests:
                v = vals[pos:pos + len(t)]
                pos += len(t)
                if e.vals is None:
                    e.vals = v
                else:
                    idx = e._insert_at
                    e.t = np.insert(e.t, idx + 1, t)
                    e.vals = np.insert(e.vals, idx + 1, v)
                if np.any(e.vals == 0) or not np.all(np.isfinite(e.vals)):
                    raise ContourError(f"function vanishes or is non-finite on edge {e.a} -> {e.b}")
                steps = np.log(e.vals[1:] / e.vals[:-1])
                bad = np.nonzero(np.abs(steps) > self.max_log_step)[0]
                if bad.size == 0:
                    e.phase = float(np.sum(steps.imag))
                    continue
                if np.min(np.diff(e.t)[bad]) * abs(e.b - e.a) < 1e-13 * self.scale:
                    raise ContourError(f"edge {e.a} -> {e.b} passes through or next to a zero")
                e._insert_at = bad
                next_requests.append((e, 0.5 * (e.t[bad] + e.t[bad + 1])))
            requests = next_requests
        if requests:
            e = requests[0][0]
            raise ContourError(f"edge {e.a} -> {e.b} not resolved after {self.max_rounds} rounds")

    def windings(self, boxes: Iterable[Box]) -> list[int]:
        boxes = list(boxes)
        pending: dict[tuple, _Edge] = {}
        plan = []
        for box in boxes:
            c = box.corners()
            sides = []
            for i in range(4):
                a, b = c[i], c[(i + 1) % 4]
                # canonical orientation: lexicographically smaller endpoint first
                if (a.real, a.imag) > (b.real, b.imag):
                    a, b, sign = b, a, -1.0
                else:
                    sign = 1.0
                key = self._edge_key(a, b)
                if key not in self._edges and key not in pending:
                    pending[key] = _Edge(a, b)
                sides.append((key, sign))
            plan.append(sides)
        if pending:
            self._resolve(list(pending.values()))
            for key, e in pending.items():
                self._edges[key] = e.phase
        out = []
        for box, sides in zip(boxes, plan):
            total = sum(sign * self._edges[key] for key, sign in sides)
            w = total / (2 * math.pi)
            k = round(w)
            if abs(w - k) > 0.25:
                raise ContourError(f"non-integral winding {w:.3f}", box)
            if k < 0:
                raise ContourError(f"negative winding {k} for a holomorphic function", box)
            out.append(int(k))
        return out

    def winding(self, box: Box) -> int:
        return self.windings([box])[0]


def newton_batch(
    f: VectorFunction,
    z0: np.ndarray,
    tol: float,
    max_iter: int = 60,
    radius: np.ndarray | float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized Newton iteration with a central-difference derivative.

    Iterates that wander further than ``radius`` from their start are marked
    as failed. Returns (roots, last |step|, converged flags).
    """
    z = np.array(z0, dtype=complex)
    start = z.copy()
    limit = np.broadcast_to(np.inf if radius is None else np.asarray(radius, dtype=float), z.shape)
    step = np.full(z.shape, np.inf)
    done = np.zeros(z.shape, dtype=bool)
    failed = np.zeros(z.shape, dtype=bool)
    for _ in range(max_iter):
        act = np.nonzero(~done & ~failed)[0]
        if act.size == 0:
            break
        za = z[act]
        h = 1e-6 * np.maximum(1.0, np.abs(za))
        pts = np.concatenate([za, za + h, za - h, za + 1j * h, za - 1j * h])
        with np.errstate(all="ignore"):
            vals = np.asarray(f(pts), dtype=complex).reshape(5, -1)
            d = 0.5 * ((vals[1] - vals[2]) / (2 * h) + (vals[3] - vals[4]) / (2j * h))
            dz = vals[0] / d
        bad = ~np.isfinite(dz)
        exact = vals[0] == 0
        dz = np.where(exact, 0.0, dz)
        failed[act[bad & ~exact]] = True
        ok = ~bad | exact
        z[act[ok]] = za[ok] - dz[ok]
        step[act[ok]] = np.abs(dz[ok])
        conv = ok & (np.abs(dz) <= tol * np.maximum(1.0, np.abs(za - dz)))
        done[act[conv]] = True
        far = ok & ((np.abs(z[act] - start[act]) > limit[act]) | (np.abs(z[act]) > 1e6 * np.maximum(1.0, np.abs(za))))
        failed[act[far]] = True
    return z, step, done


def newton(f: VectorFunction, z0: complex, tol: float, max_iter: int = 60) -> tuple[complex, float, bool]:
    z, s, ok = newton_batch(f, np.array([z0]), tol, max_iter)
    return complex(z[0]), float(s[0]), bool(ok[0])


_SPLITS = [(0.5, 0.5), (0.4837, 0.5213), (0.5291, 0.4671), (0.4419, 0.5573)]


def find_zeros(
    f: VectorFunction,
    region: Box,
    tol: float = 1e-10,
    min_size: float | None = None,
    prune: Callable[[Box], bool] | None = None,
    counter: WindingCounter | None = None,
    points_per_unit: float = 4.0,
) -> tuple[list[Zero], SearchLog]:
    """Locate every zero of ``f`` inside ``region``.

    ``prune(box)`` may discard boxes that are known to be irrelevant (for
    instance outside a disc of interest); discarded boxes are logged with
    their winding numbers.
    """
    scale = max(abs(region.re_min), abs(region.re_max), abs(region.im_min), abs(region.im_max), 1.0)
    counter = counter or WindingCounter(f, scale, points_per_unit=points_per_unit)
    if min_size is None:
        min_size = max(tol, 1e-9 * scale)
    log = SearchLog()
    zeros: list[Zero] = []
    w0 = counter.winding(region)
    log.boxes.append((region, w0))
    level = [(region, w0)]
    while level:
        to_split: list[tuple[Box, int]] = []
        singles: list[tuple[Box, int]] = []
        for box, w in level:
            if w == 0:
                continue
            if prune is not None and prune(box):
                log.pruned.append((box, w))
                continue
            if w == 1:
                singles.append((box, w))
            elif box.diameter < min_size:
                zeros.append(Zero(box.center, w, math.nan, box, False, box.diameter))
            else:
                to_split.append((box, w))
        if singles:
            roots, steps, ok = newton_batch(
                f, np.array([b.center for b, _ in singles]), tol,
                radius=np.array([2.0 * b.diameter for b, _ in singles]))
            accept = [bool(good) and box.contains(complex(r)) for (box, _), r, good in zip(singles, roots, ok)]
            if any(accept):
                with np.errstate(all="ignore"):
                    resid = np.abs(np.asarray(f(roots[accept]), dtype=complex))
            k = 0
            for (box, w), r, s, good in zip(singles, roots, steps, accept):
                if good:
                    zeros.append(Zero(complex(r), 1, float(resid[k]), box, True, float(s)))
                    k += 1
                elif box.diameter < min_size:
                    zeros.append(Zero(box.center, 1, math.nan, box, False, box.diameter))
                else:
                    to_split.append((box, w))
        level = _subdivide_all(counter, to_split)
        log.boxes.extend(level)
    log.evaluations = counter.evaluations
    zeros.sort(key=lambda z: (abs(z.location), z.location.real, z.location.imag))
    return zeros, log


def _subdivide_all(counter: WindingCounter, boxes: list[tuple[Box, int]]) -> list[tuple[Box, int]]:
    if not boxes:
        return []
    try:
        kids = [k for box, _ in boxes for k in box.split()]
        ws = counter.windings(kids)
        out = []
        consistent = True
        for i, (box, w) in enumerate(boxes):
            cw = ws[4 * i:4 * i + 4]
            if sum(cw) != w:
                consistent = False
                break
            out.extend(zip(kids[4 * i:4 * i + 4], cw))
        if consistent:
            return out
    except ContourError:
        pass
    # fall back to one box at a time with perturbed split points
    out = []
    for box, w in boxes:
        out.extend(_subdivide(counter, box, w))
    return out


def _subdivide(counter: WindingCounter, box: Box, w: int) -> list[tuple[Box, int]]:
    last_err: Exception | None = None
    for fr, fi in _SPLITS:
        try:
            kids = box.split(fr, fi)
            ws = counter.windings(kids)
        except ContourError as err:
            last_err = err
            continue
        if sum(ws) == w:
            return list(zip(kids, ws))
        last_err = ContourError(f"children windings {ws} do not add up to {w}", box)
    raise ContourError(f"could not subdivide box: {last_err}", box)
