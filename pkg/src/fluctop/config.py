"""Run configuration: strict dataclasses, JSON persistence, named presets.

A RunConfig bundles what a full pipeline invocation needs: estimator
parameters, the (rho, grad) probe grid, fit options, and optionally a
solver stage.  Parsing is strict; unknown keys raise instead of being
ignored, so config files cannot silently drift from the code.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .estimator import EstimatorParams, ProfilePoint
from .profiles import AffineProfile
from .solver import DirichletBC, NodalField, PeriodicBC


def density_range(start: float, stop: float, step: float) -> tuple:
    """Inclusive arithmetic progression with drift-proof rounding."""
    if step <= 0 or stop < start:
        raise ConfigError(f"bad range [{start}, {stop}] step {step}")
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


def symmetric_gradients(*magnitudes: float) -> tuple:
    out = []
    for g in sorted(magnitudes):
        if g <= 0:
            raise ConfigError("gradient magnitudes must be positive")
        out.extend((-g, g))
    return tuple(sorted(out))


@dataclass(frozen=True)
class GridSpec:
    """Probe layout: flat points, then every affine density at every slope."""

    flat_rho: tuple = ()
    affine_rho: tuple = ()
    gradients: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "flat_rho", tuple(float(r) for r in self.flat_rho))
        object.__setattr__(self, "affine_rho", tuple(float(r) for r in self.affine_rho))
        object.__setattr__(self, "gradients", tuple(float(g) for g in self.gradients))
        for r in self.flat_rho + self.affine_rho:
            if not (np.isfinite(r) and r > 0):
                raise ConfigError(f"grid density must be positive, got {r}")
        for g in self.gradients:
            if not np.isfinite(g) or g == 0.0:
                raise ConfigError(f"grid gradients must be finite and nonzero, got {g}")
        if bool(self.affine_rho) != bool(self.gradients):
            raise ConfigError("affine_rho and gradients must be given together")
        if not self.flat_rho and not self.affine_rho:
            raise ConfigError("grid is empty")

    @property
    def n_points(self) -> int:
        return len(self.flat_rho) + len(self.affine_rho) * len(self.gradients)

    def build_points(self) -> list:
        pts = [ProfilePoint(i, r, 0.0) for i, r in enumerate(self.flat_rho)]
        idx = len(pts)
        for r in self.affine_rho:
            for g in self.gradients:
                pts.append(ProfilePoint(idx, r, g))
                idx += 1
        return pts


_INITIAL_KINDS = ("cosine", "power", "affine")


@dataclass(frozen=True)
class InitialSpec:
    """Initial macroscopic profile for the solver stage."""

    kind: str
    mean: float = 7.0            # cosine
    amplitude: float = 2.0       # cosine and power
    base: float = 4.0            # power: base + amplitude * x**exponent
    exponent: float = 3.0
    rho_center: float = 7.0      # affine
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in _INITIAL_KINDS:
            raise ConfigError(f"unknown initial profile kind {self.kind!r}")

    def values(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "cosine":
            return self.mean + self.amplitude * np.cos(2.0 * np.pi * x)
        if self.kind == "power":
            return self.base + self.amplitude * x ** self.exponent
        return AffineProfile(self.rho_center, self.slope)(x)


@dataclass(frozen=True)
class SolverSection:
    initial: InitialSpec
    boundary: str = "periodic"        # "periodic" | "dirichlet"
    n_nodes: int = 40
    horizon: float = 2.5e-3
    n_snapshots: int = 20
    safety: float = 0.1

    def __post_init__(self):
        if self.boundary not in ("periodic", "dirichlet"):
            raise ConfigError(f"unknown solver boundary {self.boundary!r}")
        if self.n_nodes < 4:
            raise ConfigError("solver needs at least 4 nodes")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.n_snapshots < 1:
            raise ConfigError("need at least one snapshot")
        if not (0 < self.safety < 1.0 / 6.0):
            raise ConfigError("safety must sit in (0, 1/6) for explicit stepping")

    def build_initial_field(self) -> NodalField:
        if self.boundary == "periodic":
            x = np.arange(self.n_nodes) / self.n_nodes
            return NodalField(self.initial.values(x), PeriodicBC())
        x = np.linspace(0.0, 1.0, self.n_nodes)
        vals = self.initial.values(x)
        return NodalField(vals, DirichletBC(float(vals[0]), float(vals[-1])))


@dataclass(frozen=True)
class FitSection:
    constrained: bool = True
    weighted: bool = False
    rho_ref: float = 7.0

    def __post_init__(self):
        if not (np.isfinite(self.rho_ref) and self.rho_ref > 0):
            raise ConfigError(f"rho_ref must be positive, got {self.rho_ref}")


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 2024
    estimator: EstimatorParams = field(default_factory=EstimatorParams)
    grid: GridSpec = field(default_factory=lambda: GridSpec(flat_rho=(4.0, 7.0, 10.0)))
    fit: FitSection = field(default_factory=FitSection)
    solver: SolverSection | None = None

    def with_overrides(self, master_seed: int | None = None,
                       workers: int | None = None) -> "RunConfig":
        cfg = self
        if master_seed is not None:
            cfg = replace(cfg, master_seed=int(master_seed))
        if workers is not None:
            cfg = replace(cfg, estimator=replace(cfg.estimator, workers=int(workers)))
        return cfg


def _strict(d: dict, cls, what: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{what} must be a JSON object")
    allowed = set(cls.__dataclass_fields__)
    stray = set(d) - allowed
    if stray:
        raise ConfigError(f"unknown {what} keys: {sorted(stray)}")
    return d


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    for key in ("flat_rho", "affine_rho", "gradients"):
        d["grid"][key] = list(d["grid"][key])
    return d


def config_from_dict(d: dict) -> RunConfig:
    d = dict(_strict(d, RunConfig, "config"))
    est = EstimatorParams(**_strict(d.pop("estimator", {}), EstimatorParams,
                                    "estimator"))
    grid_d = d.pop("grid", None)
    if grid_d is None:
        grid = RunConfig.__dataclass_fields__["grid"].default_factory()
    else:
        grid = GridSpec(**{k: tuple(v) for k, v in
                           _strict(grid_d, GridSpec, "grid").items()})
    fit = FitSection(**_strict(d.pop("fit", {}), FitSection, "fit"))
    solver = None
    sol_d = d.pop("solver", None)
    if sol_d is not None:
        sol_d = dict(_strict(sol_d, SolverSection, "solver"))
        init = InitialSpec(**_strict(sol_d.pop("initial", {}), InitialSpec,
                                     "solver initial"))
        solver = SolverSection(initial=init, **sol_d)
    seed = d.pop("master_seed", 2024)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"master_seed must be a non-negative integer, got {seed!r}")
    return RunConfig(master_seed=seed, estimator=est, grid=grid, fit=fit,
                     solver=solver)


def save_config(cfg: RunConfig, path) -> None:
    with open(Path(path), "w") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> RunConfig:
    with open(Path(path)) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# presets


def _desk_scale() -> RunConfig:
    return RunConfig(
        estimator=EstimatorParams(lattice_size=1000, n_basis=20,
                                  realizations=10_000, window=1e-9,
                                  equilibration=1e-4),
        grid=GridSpec(flat_rho=(4.0, 7.0, 10.0),
                      affine_rho=(4.0, 7.0, 10.0),
                      gradients=symmetric_gradients(5.0)),
        fit=FitSection(constrained=True),
    )


def _full_scale() -> RunConfig:
    # 60 flat + 21 x 8 affine = 228 probe points
    return RunConfig(
        estimator=EstimatorParams(lattice_size=5000, n_basis=40,
                                  realizations=800_000, window=4e-11,
                                  equilibration=4.004e-6),
        grid=GridSpec(flat_rho=density_range(4.0, 9.9, 0.1),
                      affine_rho=density_range(4.0, 10.0, 0.3),
                      gradients=symmetric_gradients(5.0, 11.0, 15.0, 19.0)),
        fit=FitSection(constrained=True),
    )


def _full_scale_unconstrained() -> RunConfig:
    # 97 flat + 97 x 62 affine = 6111 probe points
    return RunConfig(
        estimator=EstimatorParams(lattice_size=5000, n_basis=40,
                                  realizations=800_000, window=4e-11,
                                  equilibration=4.004e-6),
        grid=GridSpec(flat_rho=density_range(4.0, 10.0, 0.0625),
                      affine_rho=density_range(4.0, 10.0, 0.0625),
                      gradients=symmetric_gradients(*range(1, 32))),
        fit=FitSection(constrained=False),
    )


def _relax_cosine() -> RunConfig:
    cfg = _desk_scale()
    return replace(cfg, solver=SolverSection(
        initial=InitialSpec(kind="cosine", mean=7.0, amplitude=2.0),
        boundary="periodic", n_nodes=40, horizon=3e-3, n_snapshots=12))


def _relax_power() -> RunConfig:
    cfg = _desk_scale()
    return replace(cfg, solver=SolverSection(
        initial=InitialSpec(kind="power", base=4.0, amplitude=7.0, exponent=3.0),
        boundary="dirichlet", n_nodes=40, horizon=2e-3, n_snapshots=10))


PRESETS = {
    "desk-scale": _desk_scale,
    "full-scale": _full_scale,
    "full-scale-unconstrained": _full_scale_unconstrained,
    "relax-cosine": _relax_cosine,
    "relax-power": _relax_power,
}


def preset(name: str) -> RunConfig:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    return builder()
