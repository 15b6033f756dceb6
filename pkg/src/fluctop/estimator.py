"""Fluctuation-based estimation of the discrete dissipative operator.

For a frozen macroscopic profile, each realization draws site occupations
from the product measure at the local fugacity, relaxes them briefly, and
records the basis projections P_a = eps * sum_i k_i gamma_a(x_i) at both
ends of a short macroscopic window h.  With the scaled increments
D_a = (P_a(t0 + h) - P_a(t0)) / sqrt(eps), centered across realizations,
the operator column at the profile's center node b is

    K[b + off, b] = E[D_{b+off} D_b] / (2 h),    off in {+1, 0, -1},

reported with its Monte Carlo standard error.  Column triples are named
(sub, diag, super) = (K[b+1,b], K[b,b], K[b-1,b]).

Realizations use streams keyed by (master_seed, point.index, r) and the
reduction runs in realization order, so a table is byte-identical for any
worker count.  Workers are threads; the event loop releases the GIL.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import _kernels, thermo
from .basis import BasisSet
from .errors import ConfigError, DomainError, SchemaError
from .kinetics import Periodic, RateModel, Reservoir
from .profiles import DENSITY_FLOOR, AffineProfile

log = logging.getLogger(__name__)

COLUMNS = ("sub", "diag", "super")
_OFFSETS = (1, 0, -1)          # node offsets, aligned with COLUMNS
_CSV_HEADER = ("profile_index", "rho", "grad_rho",
               "k_sub", "k_diag", "k_super", "se_sub", "se_diag", "se_super")
_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ProfilePoint:
    """One (density, gradient) probe; index keys the realization streams."""

    index: int
    rho: float
    grad: float = 0.0

    def __post_init__(self):
        if self.index < 0:
            raise ConfigError(f"profile index must be non-negative, got {self.index}")
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ConfigError(f"rho must be positive and finite, got {self.rho}")
        if not np.isfinite(self.grad):
            raise ConfigError(f"grad must be finite, got {self.grad}")

    def profile(self, floor: float = DENSITY_FLOOR) -> AffineProfile:
        return AffineProfile(self.rho, self.grad, floor=floor)


@dataclass(frozen=True)
class EstimatorParams:
    lattice_size: int = 1000
    n_basis: int = 20
    realizations: int = 10_000
    window: float = 1e-9           # macroscopic h
    equilibration: float = 1e-4    # macroscopic relaxation before the window
    workers: int = 1
    boundary: str = "auto"         # auto: periodic when flat, reservoirs otherwise
    density_floor: float = DENSITY_FLOOR

    def __post_init__(self):
        if self.lattice_size < 2 * self.n_basis:
            raise ConfigError("lattice_size must be at least twice n_basis")
        if self.realizations < 2:
            raise ConfigError("need at least 2 realizations for a standard error")
        if not (np.isfinite(self.window) and self.window > 0):
            raise ConfigError(f"window must be positive, got {self.window}")
        if not (np.isfinite(self.equilibration) and self.equilibration >= 0):
            raise ConfigError(
                f"equilibration must be non-negative, got {self.equilibration}")
        if self.workers < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if self.boundary not in ("auto", "periodic", "reservoir"):
            raise ConfigError(f"unknown boundary mode {self.boundary!r}")
        if not (np.isfinite(self.density_floor) and self.density_floor > 0):
            raise ConfigError("density_floor must be positive")


def _boundary_for(point: ProfilePoint, params: EstimatorParams):
    if params.boundary == "periodic" or (params.boundary == "auto"
                                         and point.grad == 0.0):
        return Periodic()
    prof = point.profile(params.density_floor)
    return Reservoir(float(prof(0.0)), float(prof(1.0)))


def measure_increments(point: ProfilePoint, params: EstimatorParams,
                       master_seed: int, node_offsets=_OFFSETS,
                       model: RateModel | None = None) -> np.ndarray:
    """Scaled projection increments, shape (realizations, len(node_offsets)).

    Column j tracks the basis node center + node_offsets[j].  The sampling
    law is always the quadratic-rate stationary family; ``model`` replaces
    the dynamics only.
    """
    L = params.lattice_size
    basis = BasisSet(params.n_basis, L)
    if model is None:
        model = RateModel.quadratic(L)
    profile = point.profile(params.density_floor)
    x = np.arange(L) / L
    rho_sites = profile(x)
    if np.any(rho_sites <= 0):
        raise DomainError("profile must stay positive on the lattice")
    phi_sites = thermo.fugacity_from_density(rho_sites)
    cdf = np.ascontiguousarray(thermo.occupation_cdf_matrix(phi_sites))

    center = basis.center_node()
    nodes = [(center + off) % params.n_basis for off in node_offsets]
    rows = basis.site_rows(nodes)

    boundary = _boundary_for(point, params)
    if isinstance(boundary, Periodic):
        bc, inj_l, inj_r = _kernels.BC_PERIODIC, 0.0, 0.0
    else:
        bc = _kernels.BC_RESERVOIR
        inj_l = model.time_scale * 0.5 * thermo.fugacity_from_density(boundary.rho_left)
        inj_r = model.time_scale * 0.5 * thermo.fugacity_from_density(boundary.rho_right)

    table = model.rate_table(cdf.shape[1] + 64)
    R = params.realizations
    n_rows = len(nodes)
    D = np.empty((R, n_rows))
    inv_sqrt_eps = math.sqrt(L)
    eps = 1.0 / L
    seed = np.uint64(master_seed)
    pidx = np.uint64(point.index)

    def run_block(lo: int, hi: int) -> None:
        occ = np.empty(L, dtype=np.int64)
        tree = np.empty(L + 1)
        rng = np.empty(4, dtype=np.uint64)
        p0 = np.empty(n_rows)
        p1 = np.empty(n_rows)
        tab = table
        for r in range(lo, hi):
            while True:
                status = _kernels.run_realization(
                    seed, pidx, np.uint64(r), cdf, tab, rows, eps,
                    model.time_scale, params.equilibration, params.window,
                    bc, inj_l, inj_r, occ, tree, rng, p0, p1)
                if status != _kernels.GROW:
                    break
                # growth replays the realization exactly, so results never
                # depend on the table size a worker happened to hold
                tab = model.grow_table()
            D[r] = (p1 - p0) * inv_sqrt_eps

    if params.workers == 1:
        run_block(0, R)
    else:
        base, extra = divmod(R, params.workers)
        bounds = [0]
        for w in range(params.workers):
            bounds.append(bounds[-1] + base + (1 if w < extra else 0))
        with ThreadPoolExecutor(max_workers=params.workers) as pool:
            futures = [pool.submit(run_block, bounds[w], bounds[w + 1])
                       for w in range(params.workers)]
            for f in futures:
                f.result()
    return D


@dataclass
class RowEstimate:
    point: ProfilePoint
    entries: np.ndarray            # (sub, diag, super)
    stderr: np.ndarray
    realizations: int
    window: float
    complete: bool = True
    error: str = ""

    @classmethod
    def failed(cls, point: ProfilePoint, params: EstimatorParams,
               message: str) -> "RowEstimate":
        nan = np.full(3, np.nan)
        return cls(point, nan, nan.copy(), params.realizations, params.window,
                   complete=False, error=message)


def _reduce(D: np.ndarray, center_col: int, window: float):
    Dc = D - D.mean(axis=0)
    products = Dc * Dc[:, center_col:center_col + 1]
    R = D.shape[0]
    entries = products.mean(axis=0) / (2.0 * window)
    stderr = products.std(axis=0, ddof=1) / math.sqrt(R) / (2.0 * window)
    return entries, stderr


def estimate_row(point: ProfilePoint, params: EstimatorParams,
                 master_seed: int, model: RateModel | None = None) -> RowEstimate:
    """Measure one column triple (sub, diag, super) with standard errors."""
    D = measure_increments(point, params, master_seed, _OFFSETS, model)
    entries, stderr = _reduce(D, 1, params.window)
    return RowEstimate(point, entries, stderr, params.realizations, params.window)


@dataclass(frozen=True)
class LocalityReport:
    separation: int
    entry: float
    stderr: float
    diag_entry: float              # same-run diagonal, for scale

    def consistent_with_zero(self, n_sigma: float = 3.0) -> bool:
        return abs(self.entry) <= n_sigma * self.stderr


def locality_probe(point: ProfilePoint, params: EstimatorParams,
                   master_seed: int, separation: int,
                   model: RateModel | None = None) -> LocalityReport:
    """Measure K[b + separation, b]; beyond nearest neighbors it must vanish.

    At separation 1 this reproduces the sub entry of ``estimate_row``
    bit for bit: the trajectory never looks at the projected rows.
    """
    if separation < 1:
        raise ConfigError("separation must be at least 1")
    if separation > params.n_basis // 2:
        raise ConfigError("separation exceeds half the basis size")
    D = measure_increments(point, params, master_seed, (separation, 0), model)
    entries, stderr = _reduce(D, 1, params.window)
    return LocalityReport(separation, float(entries[0]), float(stderr[0]),
                          float(entries[1]))


@dataclass(frozen=True)
class BiasReport:
    """Same column measured at the configured window and at half of it."""

    point: ProfilePoint
    window: float
    full: RowEstimate
    half: RowEstimate
    in_small_window_regime: bool

    def combined_stderr(self) -> np.ndarray:
        # the two runs reuse the realization streams, which correlates them
        # positively; treating them as independent overstates this spread
        return np.sqrt(self.full.stderr**2 + self.half.stderr**2)

    def consistent(self, n_sigma: float = 3.0) -> bool:
        gap = np.abs(self.full.entries - self.half.entries)
        return bool(np.all(gap <= n_sigma * self.combined_stderr()))


def bias_probe(point: ProfilePoint, params: EstimatorParams, master_seed: int,
               model: RateModel | None = None) -> BiasReport:
    full = estimate_row(point, params, master_seed, model)
    half = estimate_row(point, replace(params, window=params.window / 2.0),
                        master_seed, model)
    delta = 1.0 / params.n_basis
    regime = params.window < delta * delta / thermo.diffusivity(point.rho)
    return BiasReport(point, params.window, full, half, regime)


@dataclass
class RawOperatorTable:
    """Measured column triples over a grid of (rho, grad) points."""

    rows: list
    params: EstimatorParams
    master_seed: int
    created: str = ""
    package_version: str = ""

    def complete_rows(self) -> list:
        return [r for r in self.rows if r.complete]

    def arrays(self):
        """(rho, grad, entries (N,3), stderr (N,3)) over complete rows."""
        rows = self.complete_rows()
        if not rows:
            raise DomainError("table has no complete rows")
        rho = np.array([r.point.rho for r in rows])
        grad = np.array([r.point.grad for r in rows])
        entries = np.vstack([r.entries for r in rows])
        stderr = np.vstack([r.stderr for r in rows])
        return rho, grad, entries, stderr

    def save(self, csv_path) -> None:
        """Write the CSV table plus a .meta.json sidecar next to it."""
        csv_path = Path(csv_path)
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(_CSV_HEADER)
            for r in self.rows:
                w.writerow([r.point.index, repr(float(r.point.rho)),
                            repr(float(r.point.grad))]
                           + [repr(float(v)) for v in r.entries]
                           + [repr(float(v)) for v in r.stderr])
        meta = {
            "schema_version": _SCHEMA_VERSION,
            "created": self.created,
            "package_version": self.package_version,
            "master_seed": self.master_seed,
            "params": _params_to_dict(self.params),
            "failures": [{"profile_index": r.point.index, "error": r.error}
                         for r in self.rows if not r.complete],
        }
        meta_path = csv_path.with_suffix(".meta.json")
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, csv_path) -> "RawOperatorTable":
        csv_path = Path(csv_path)
        meta_path = csv_path.with_suffix(".meta.json")
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta.get("schema_version") != _SCHEMA_VERSION:
            raise SchemaError(
                f"unsupported table schema {meta.get('schema_version')!r}")
        params = _params_from_dict(meta["params"])
        failed = {f["profile_index"]: f["error"] for f in meta["failures"]}
        rows = []
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != _CSV_HEADER:
                raise SchemaError(f"unexpected CSV header {header}")
            for rec in reader:
                idx = int(rec[0])
                point = ProfilePoint(idx, float(rec[1]), float(rec[2]))
                vals = np.array([float(v) for v in rec[3:9]])
                rows.append(RowEstimate(
                    point, vals[:3], vals[3:], params.realizations,
                    params.window, complete=idx not in failed,
                    error=failed.get(idx, "")))
        return cls(rows, params, int(meta["master_seed"]),
                   created=meta.get("created", ""),
                   package_version=meta.get("package_version", ""))


def _params_to_dict(params: EstimatorParams) -> dict:
    return {
        "lattice_size": params.lattice_size,
        "n_basis": params.n_basis,
        "realizations": params.realizations,
        "window": params.window,
        "equilibration": params.equilibration,
        "workers": params.workers,
        "boundary": params.boundary,
        "density_floor": params.density_floor,
    }


def _params_from_dict(d: dict) -> EstimatorParams:
    known = set(_params_to_dict(EstimatorParams()))
    stray = set(d) - known
    if stray:
        raise SchemaError(f"unknown estimator parameter keys {sorted(stray)}")
    return EstimatorParams(**d)


def tabulate(points, params: EstimatorParams, master_seed: int,
             model: RateModel | None = None) -> RawOperatorTable:
    """Estimate every point in sequence; failures are recorded, not fatal."""
    points = list(points)
    indices = [p.index for p in points]
    if len(set(indices)) != len(indices):
        raise ConfigError("profile indices must be unique within a table")
    rows = []
    for point in points:
        try:
            row = estimate_row(point, params, master_seed, model)
        except (DomainError, FloatingPointError, ValueError) as exc:
            log.warning("point %d (rho=%g, grad=%g) failed: %s",
                        point.index, point.rho, point.grad, exc)
            row = RowEstimate.failed(point, params, str(exc))
        else:
            log.info("point %d done: rho=%g grad=%g diag=%.6g",
                     point.index, point.rho, point.grad, row.entries[1])
        rows.append(row)
    from . import __version__
    return RawOperatorTable(rows, params, master_seed,
                            created=datetime.now(timezone.utc).isoformat(),
                            package_version=__version__)
