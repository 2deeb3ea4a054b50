"""Command-line experiment runner.

Every command writes CSV with a ``#``-prefixed header that echoes the full
configuration.  Rows after the header (the data section) depend only on the
configuration, never on the thread count or the wall clock.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import __version__
from .birman_schwinger import (
    ConfigurationError,
    NumericError,
    PreconditionError,
    RadialPotential,
    det_zero_crosscheck,
    domination_check,
    fredholm_det,
    ray_limit_check,
)
from .contour import Box, ContourError
from .growth import (
    CompletenessError,
    InsufficientDataError,
    ZeroSet,
    counting_function,
    convergence_exponent,
    geometric_radii,
    loglog_fit,
)
from .identities import identity_suite
from .resonance_solver import (
    ModeBudgetError,
    PotentialSpec,
    SearchRegion,
    SingularityError,
    find_mode_resonances,
    find_resonances,
    mode_multiplicity,
    mode_smatrix,
    scan_swave_zeros,
    sdet_log_derivative,
)

SCHEMA_VERSION = 1
THREADS_ENV = "RESONLAB_THREADS"

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

COMMANDS = ("resonances", "count-fit", "bs-det", "smatrix", "bessel-check", "crosscheck-zeros", "verify")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configuration


@dataclass
class RunConfig:
    command: str = "verify"
    dim: int = 3
    radius: float = 1.0
    coupling_re: float = 5.0
    coupling_im: float = 0.0
    rmax: float = 12.0
    tol: float = 1e-10
    nodes: int | None = None
    m: int | None = None
    s_grid: str = "8:30:12"
    lam_grid: str = "5:60:12"
    window: str = "10:40"
    region: str | None = None
    threads: int = 1
    out: str | None = None
    input: str | None = None

    @property
    def coupling(self) -> complex:
        return complex(self.coupling_re, self.coupling_im)

    def spec(self) -> PotentialSpec:
        return PotentialSpec(self.dim, self.radius, self.coupling)

    def echo(self) -> list[str]:
        """``key = value`` lines for every field except output plumbing."""
        skip = {"out", "threads"}
        return [f"{k} = {v}" for k, v in asdict(self).items() if k not in skip]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw) -> object:
    if raw is None:
        return None
    kind = _FIELD_TYPES[key]
    try:
        if kind.startswith("int"):
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        if kind.startswith("float"):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return str(raw)


def read_config_file(path: str | os.PathLike) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; dashes and underscores are interchangeable."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES or key == "command":
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = val
    return out


def parse_grid(text: str, name: str) -> np.ndarray:
    """``lo:hi:n`` -> n geometric points from lo to hi."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"{name} must look like lo:hi:n, got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}") from None
    if not (0 < lo <= hi) or n < 1 or (n > 1 and lo == hi):
        raise ConfigError(f"{name} needs 0 < lo < hi and n >= 1")
    return np.geomspace(lo, hi, n) if n > 1 else np.array([lo])


def parse_window(text: str) -> tuple[float, float]:
    parts = text.split(":")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except (ValueError, IndexError):
        raise ConfigError(f"window must look like lo:hi, got {text!r}") from None
    if len(parts) != 2 or not 0 < lo < hi:
        raise ConfigError("window needs 0 < lo < hi")
    return lo, hi


def parse_region(text: str) -> SearchRegion:
    parts = text.split(":")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"region must look like re_min:re_max:im_min:im_max, got {text!r}") from None
    if len(vals) != 4:
        raise ConfigError("region must look like re_min:re_max:im_min:im_max")
    try:
        return SearchRegion(*vals)
    except ValueError as exc:
        raise ConfigError(f"region: {exc}") from None


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    """Defaults, then the config file, then the thread variable, then flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    if environ.get(THREADS_ENV):
        values["threads"] = environ[THREADS_ENV]
    for key in _FIELD_TYPES:
        flag = getattr(args, key, None)
        if key != "command" and flag is not None:
            values[key] = flag
    cfg = RunConfig(command=args.command)
    for key, raw in values.items():
        setattr(cfg, key, _coerce(key, raw))
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.dim < 3 or cfg.dim % 2 == 0:
        raise ConfigError(f"dim must be an odd integer >= 3, got {cfg.dim}")
    if not (math.isfinite(cfg.radius) and cfg.radius > 0):
        raise ConfigError("radius must be positive")
    if not (math.isfinite(cfg.coupling_re) and math.isfinite(cfg.coupling_im)):
        raise ConfigError("coupling must be finite")
    if not cfg.rmax > 0:
        raise ConfigError("rmax must be positive")
    if not 0 < cfg.tol < 1:
        raise ConfigError("tol must lie in (0, 1)")
    if cfg.nodes is not None and cfg.nodes < 16:
        raise ConfigError("nodes must be at least 16")
    if cfg.threads < 1:
        raise ConfigError("threads must be at least 1")
    if cfg.m is not None and cfg.m < 1:
        raise ConfigError("m must be a positive integer")
    parse_grid(cfg.s_grid, "s-grid")
    parse_grid(cfg.lam_grid, "lam-grid")
    parse_window(cfg.window)
    if cfg.region is not None:
        parse_region(cfg.region)


# ---------------------------------------------------------------- output


def fmt(x) -> str:
    """Shortest round-trip text for a float (deterministic across runs)."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else ("inf" if x > 0 else "-inf"))


def render(cfg: RunConfig, columns: Sequence[str], rows: Iterable[Sequence], extra: Sequence[str] = (),
           elapsed: float | None = None) -> str:
    buf = io.StringIO()
    buf.write(f"# resonlab {cfg.command} schema={SCHEMA_VERSION} version={__version__}\n")
    for line in cfg.echo():
        buf.write(f"# {line}\n")
    for line in extra:
        buf.write(f"# {line}\n")
    if elapsed is not None:
        buf.write(f"# elapsed_s = {elapsed:.3f}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def data_section(text: str) -> list[str]:
    """Non-comment lines of a CSV produced by this module."""
    return [ln for ln in text.splitlines() if ln and not ln.startswith("#")]


def read_csv(path: str | os.PathLike) -> tuple[dict, list[str], list[list[str]]]:
    """(header key/values, column names, rows) of a file written by ``render``."""
    header: dict = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body and not body.startswith("resonlab"):
                k, v = (p.strip() for p in body.split("=", 1))
                header[k] = v
            continue
        if not columns:
            columns = line.split(",")
        else:
            rows.append(line.split(","))
    return header, columns, rows


# ---------------------------------------------------------------- commands


def cmd_resonances(cfg: RunConfig) -> int:
    spec = cfg.spec()
    t0 = time.perf_counter()
    rs = find_resonances(spec, cfg.rmax, cfg.tol, workers=cfg.threads)
    rows = [(r.ell, r.lam.real, r.lam.imag, r.multiplicity, r.residual) for r in rs.items]
    extra = [f"complete_below = {fmt(rs.complete_below)}", f"ell_max = {rs.ell_max}",
             f"total_weight = {int(rs.weights().sum()) if len(rs) else 0}",
             f"strip_zeros = {len(rs.strip)}"]
    emit(cfg, render(cfg, ("ell", "re_lambda", "im_lambda", "multiplicity", "residual"), rows, extra,
                     time.perf_counter() - t0))
    return EXIT_OK


def load_zero_set(path: str) -> ZeroSet:
    """Zero set from a ``resonances`` CSV; weights use the mode multiplicity of the file's dimension."""
    header, columns, rows = read_csv(path)
    need = ["ell", "re_lambda", "im_lambda", "multiplicity"]
    if rows and any(c not in columns for c in need):
        raise ConfigError(f"{path}: missing columns {need}")
    dim = int(header.get("dim", 3))
    complete = float(header.get("complete_below", "inf"))
    idx = [columns.index(c) for c in need] if rows else []
    locs, weights = [], []
    for row in rows:
        ell, re, im, mult = (row[i] for i in idx)
        locs.append(complex(float(re), float(im)))
        weights.append(int(mult) * mode_multiplicity(int(ell), dim))
    return ZeroSet(np.array(locs, dtype=complex), np.array(weights, dtype=np.int64), complete)


def cmd_count_fit(cfg: RunConfig) -> int:
    if not cfg.input:
        raise ConfigError("count-fit needs --input (a resonances CSV)")
    zset = load_zero_set(cfg.input)
    window = parse_window(cfg.window)
    if window[1] > zset.complete_below:
        raise CompletenessError(f"window {cfg.window} exceeds the certified radius {zset.complete_below}")
    fit = convergence_exponent(zset, window)
    table = counting_function(zset, geometric_radii(*window))
    extra = [f"complete_below = {fmt(zset.complete_below)}", "summary: " + fit.summary()]
    emit(cfg, render(cfg, ("r", "N"), table.rows(), extra))
    print(fit.summary())
    return EXIT_OK


def _bs_row(job):
    dim, radius, coupling, m, s, nodes = job
    pot = RadialPotential.step(dim, radius, coupling)
    try:
        res = fredholm_det(pot, -1j * s, power=2 * m, n_nodes=nodes)
    except (NumericError, FloatingPointError, OverflowError, np.linalg.LinAlgError) as exc:
        return (s, math.nan, math.nan, nodes or 0, math.nan, f"error:{type(exc).__name__}")
    ld = res.log_det.real
    lld = math.log(ld) if ld > 0 else math.nan
    status = "ok" if math.isfinite(ld) else "range"
    return (s, ld, lld, res.n_nodes, res.drift, status)


def _ordered_map(fn: Callable, jobs: list, threads: int) -> list:
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_bs_det(cfg: RunConfig) -> int:
    m = cfg.m or 1
    if not m > cfg.dim / 4:
        raise ConfigurationError(f"m = {m} must exceed d/4 = {cfg.dim / 4}")
    s_vals = parse_grid(cfg.s_grid, "s-grid")
    t0 = time.perf_counter()
    jobs = [(cfg.dim, cfg.radius, cfg.coupling, m, float(s), cfg.nodes) for s in s_vals]
    rows = _ordered_map(_bs_row, jobs, cfg.threads)
    ok = [r for r in rows if r[5] == "ok"]
    extra = []
    fitted = [(r[0], r[1]) for r in ok if r[1] > 0]
    if len(fitted) >= 2:
        s_arr, ld = np.array(fitted).T
        fit = loglog_fit(s_arr, ld, (s_arr[0], s_arr[-1]))
        extra.append("summary: " + fit.summary())
    emit(cfg, render(cfg, ("s", "log_det", "log_log_det", "nodes", "drift", "status"), rows, extra,
                     time.perf_counter() - t0))
    return EXIT_OK if ok else EXIT_NUMERIC


def derivative_growth(spec: PotentialSpec, lams: np.ndarray):
    """Rows (lam, d/dlam log det S, truncation, ell_max, unitarity error) and the fitted exponent."""
    rows = []
    for lam in lams:
        ld = sdet_log_derivative(spec, float(lam))
        unit = math.nan
        if spec.is_real:
            unit = max(abs(abs(mode_smatrix(spec, ell, float(lam))) - 1) for ell in range(ld.ell_max + 1))
        rows.append((float(lam), ld.value.real, ld.value.imag, abs(ld.value), ld.truncation_error, ld.ell_max, unit))
    mags = np.array([r[3] for r in rows])
    fit = loglog_fit(lams[mags > 0], mags[mags > 0], (lams[0], lams[-1]))
    return rows, fit


def cmd_smatrix(cfg: RunConfig) -> int:
    spec = cfg.spec()
    lams = parse_grid(cfg.lam_grid, "lam-grid")
    t0 = time.perf_counter()
    rows, fit = derivative_growth(spec, lams)
    emit(cfg, render(cfg, ("lambda", "re_dlog", "im_dlog", "abs_dlog", "truncation", "ell_max", "unitarity_error"),
                     rows, ["summary: " + fit.summary()], time.perf_counter() - t0))
    print(fit.summary())
    return EXIT_OK


def _check_rows(results) -> list[tuple[str, str, float]]:
    return [(name, "pass" if ok else "fail", metric) for name, ok, metric in results]


def cmd_bessel_check(cfg: RunConfig) -> int:
    res = [(r.name, r.passed, r.metric) for r in identity_suite()]
    rows = _check_rows(res)
    emit(cfg, render(cfg, ("check_name", "status", "metric"), rows))
    return EXIT_OK if all(ok for _, ok, _ in res) else EXIT_VERIFY


def cmd_crosscheck_zeros(cfg: RunConfig) -> int:
    spec = cfg.spec()
    m = cfg.m or 2
    region = parse_region(cfg.region) if cfg.region else None
    t0 = time.perf_counter()
    rep = det_zero_crosscheck(spec, m=m, region=region, n_nodes=cfg.nodes, tol=cfg.tol)
    rows = []
    for ell, a, b in rep.pairs:
        rows.append(("pair", ell, a.real, a.imag, b.real, b.imag, abs(a - b)))
    for ell, a in rep.unmatched_operator:
        rows.append(("operator_only", ell, a.real, a.imag, math.nan, math.nan, math.nan))
    for ell, b in rep.unmatched_reference:
        rows.append(("reference_only", ell, math.nan, math.nan, b.real, b.imag, math.nan))
    extra = [f"max_distance = {fmt(rep.max_distance)}", f"factorization_error = {fmt(rep.factorization_error)}",
             f"nodes_used = {rep.n_nodes}", f"passed = {rep.passed}"]
    emit(cfg, render(cfg, ("kind", "ell", "re_operator", "im_operator", "re_reference", "im_reference", "distance"),
                     rows, extra, time.perf_counter() - t0))
    return EXIT_OK if rep.passed else EXIT_VERIFY


def pair_zero_sets(a: np.ndarray, b: np.ndarray) -> tuple[float, int]:
    """(max distance of the optimal one-to-one pairing, number of unpaired points)."""
    a, b = np.asarray(a, complex), np.asarray(b, complex)
    if a.size == 0 or b.size == 0:
        return (0.0 if a.size == b.size else math.inf), abs(a.size - b.size)
    cost = np.abs(a[:, None] - b[None, :])
    ri, ci = linear_sum_assignment(cost)
    return float(cost[ri, ci].max()), abs(a.size - b.size)


def swave_oracle_check(coupling: complex, radius: float, tol: float,
                       bounds=(0.1, 12.0, -4.0, -0.01), match: float = 1e-8) -> tuple[bool, float]:
    """General solver (mode 0, d = 3) against the ``k cot k = i lam`` scan."""
    spec = PotentialSpec(3, radius, coupling)
    region = SearchRegion(*bounds)
    found = np.array([r.lam for r in find_mode_resonances(spec, 0, region, tol) if not r.in_strip])
    box = region.main_box()
    ref = scan_swave_zeros(coupling, Box(box.re_min, box.re_max, box.im_min, box.im_max), radius)
    dist, unpaired = pair_zero_sets(found, ref)
    return (unpaired == 0 and dist <= match), dist if unpaired == 0 else math.inf


def verification_suite(cfg: RunConfig) -> list[tuple[str, bool, float]]:
    out = [(r.name, r.passed, float(r.metric)) for r in identity_suite()]
    spec = cfg.spec()
    ok, dist = swave_oracle_check(spec.coupling, spec.radius, cfg.tol)
    out.append(("swave_oracle", ok, dist))
    big = RadialPotential.step(spec.dim, spec.radius, 2.0)
    small = RadialPotential.step(spec.dim, spec.radius, 1.0)
    dom = domination_check(big, small, 5.0)
    out.append(("domination", dom.passed, dom.min_margin))
    region = parse_region(cfg.region) if cfg.region else SearchRegion(0.5, 5.0, -2.0, -0.05)
    cross = det_zero_crosscheck(spec, m=2, region=region, n_nodes=cfg.nodes, tol=cfg.tol)
    metric = cross.max_distance if not (cross.unmatched_operator or cross.unmatched_reference) else math.inf
    out.append(("zero_pairing", cross.passed, metric))
    out.append(("det_factorization", cross.factorization_error <= cross.tol_factor, cross.factorization_error))
    ray = ray_limit_check(spec, m=2)
    out.append(("ray_decay", ray.passed, ray.slope))
    rows, fit = derivative_growth(spec, np.geomspace(5, 60, 12))
    out.append(("derivative_bound", fit.slope <= 1.3, fit.slope))
    if spec.is_real:
        unit = max(r[6] for r in rows)
        out.append(("unitarity", unit <= 1e-10, unit))
    return out


def cmd_verify(cfg: RunConfig) -> int:
    t0 = time.perf_counter()
    res = verification_suite(cfg)
    lines = [f"{name}: {'pass' if ok else 'FAIL'} ({metric:.3e})" for name, ok, metric in res]
    emit(cfg, render(cfg, ("check_name", "status", "metric"), _check_rows(res),
                     ["defaults applied for every key not set on the command line or in --config"] + lines,
                     time.perf_counter() - t0))
    return EXIT_OK if all(ok for _, ok, _ in res) else EXIT_VERIFY


HANDLERS = {
    "resonances": cmd_resonances,
    "count-fit": cmd_count_fit,
    "bs-det": cmd_bs_det,
    "smatrix": cmd_smatrix,
    "bessel-check": cmd_bessel_check,
    "crosscheck-zeros": cmd_crosscheck_zeros,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="resonlab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--dim", type=int)
        sp.add_argument("--radius", type=float)
        sp.add_argument("--coupling-re", dest="coupling_re", type=float)
        sp.add_argument("--coupling-im", dest="coupling_im", type=float)
        sp.add_argument("--rmax", type=float)
        sp.add_argument("--tol", type=float)
        sp.add_argument("--nodes", type=int)
        sp.add_argument("--m", type=int)
        sp.add_argument("--s-grid", dest="s_grid", help="lo:hi:n geometric")
        sp.add_argument("--lam-grid", dest="lam_grid", help="lo:hi:n geometric")
        sp.add_argument("--window", help="lo:hi")
        sp.add_argument("--region", help="re_min:re_max:im_min:im_max")
        sp.add_argument("--threads", type=int, help=f"worker processes (also ${THREADS_ENV})")
        sp.add_argument("--out")
        sp.add_argument("--input")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return HANDLERS[cfg.command](cfg)
    except InsufficientDataError as exc:
        sys.stderr.write(f"numeric failure: insufficient data: {exc}\n")
        return EXIT_NUMERIC
    except (ConfigError, ConfigurationError, PreconditionError, CompletenessError, ValueError) as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except ContourError as exc:
        box = ",".join(fmt(v) for v in exc.box.as_tuple()) if exc.box is not None else "none"
        sys.stderr.write(f"numeric failure: {exc}\n# failing_box = {box}\n")
        return EXIT_NUMERIC
    except (NumericError, ModeBudgetError, SingularityError,
            FloatingPointError, ArithmeticError, RuntimeError) as exc:
        sys.stderr.write(f"numeric failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
