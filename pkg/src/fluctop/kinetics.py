"""Zero-range lattice gas on the unit interval with diffusive time scaling.

A configuration assigns k_i particles to each of L sites at x_i = i/L.  Site
i fires at rate g(k_i) (default g(k) = k^2); the mover steps left or right
with equal probability.  All rates carry the macroscopic factor
time_scale = L^2, so one unit of simulation time is one unit of diffusive
(hydrodynamic) time.

Boundaries: periodic wrap, or particle reservoirs that destroy off-domain
movers and inject new particles at each boundary site at the constant rate
time_scale * phi(rho_boundary) / 2, which pins the local fugacity.

The event loop lives in ``_kernels`` (numba); this module owns state
construction, validation, and the deterministic stream plumbing.  Streams
are keyed by (master_seed, profile_index, realization_index), so any
realization can be reproduced in isolation and nothing depends on how work
is scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels, thermo
from .errors import AbsorbedStateError, DomainError
from .profiles import AffineProfile

_MAX_EVENTS = np.int64(2**62)


class RandomStream:
    """xoshiro256++ stream with explicit uint64[4] state."""

    def __init__(self, state: np.ndarray):
        self.state = state

    @classmethod
    def from_key(cls, master_seed: int, profile_index: int = 0,
                 realization_index: int = 0) -> "RandomStream":
        state = np.empty(4, dtype=np.uint64)
        _kernels.seed_stream(state, np.uint64(master_seed),
                             np.uint64(profile_index), np.uint64(realization_index))
        return cls(state)

    def u64(self) -> int:
        return int(_kernels.next_u64(self.state))

    def random(self) -> float:
        """Uniform on [0, 1)."""
        return float(_kernels.next_double(self.state))

    def copy(self) -> "RandomStream":
        return RandomStream(self.state.copy())


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class Reservoir:
    rho_left: float
    rho_right: float

    def __post_init__(self):
        for v in (self.rho_left, self.rho_right):
            if not np.isfinite(v) or v <= 0:
                raise DomainError(f"reservoir density must be positive, got {v}")


Boundary = Periodic | Reservoir


@dataclass
class RateModel:
    """Jump-rate law g(k) plus the macroscopic clock factor."""

    jump_rate: Callable[[int], float]
    time_scale: float

    _table: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def quadratic(cls, lattice_size: int) -> "RateModel":
        return cls(jump_rate=lambda k: float(k) ** 2,
                   time_scale=float(lattice_size) ** 2)

    def __post_init__(self):
        if self.time_scale <= 0 or not np.isfinite(self.time_scale):
            raise DomainError(f"time_scale must be positive, got {self.time_scale}")
        if self.jump_rate(0) != 0.0:
            raise DomainError("jump rate must vanish at k = 0")

    def rate_table(self, k_max: int) -> np.ndarray:
        """g(k) for k = 0..k_max as float64, validated non-negative."""
        if self._table is None or self._table.shape[0] <= k_max:
            tab = np.array([float(self.jump_rate(k)) for k in range(k_max + 1)])
            if np.any(tab < 0) or not np.all(np.isfinite(tab)):
                raise DomainError("jump rates must be finite and non-negative")
            self._table = tab
        return self._table

    def grow_table(self) -> np.ndarray:
        return self.rate_table(2 * (self._table.shape[0] - 1) + 64)


@dataclass
class LatticeState:
    occupations: np.ndarray          # int64 counts per site
    boundary: Boundary
    time: float = 0.0                # macroscopic clock

    def __post_init__(self):
        self.occupations = np.ascontiguousarray(self.occupations, dtype=np.int64)
        if self.occupations.ndim != 1 or self.occupations.shape[0] < 2:
            raise DomainError("occupations must be a 1-d array with at least 2 sites")
        if np.any(self.occupations < 0):
            raise DomainError("occupations must be non-negative")

    @property
    def lattice_size(self) -> int:
        return self.occupations.shape[0]

    @property
    def cell_volume(self) -> float:
        return 1.0 / self.occupations.shape[0]

    def site_positions(self) -> np.ndarray:
        return np.arange(self.lattice_size) / self.lattice_size

    def total_particles(self) -> int:
        return int(self.occupations.sum())

    def copy(self) -> "LatticeState":
        return LatticeState(self.occupations.copy(), self.boundary, self.time)


def _boundary_args(state: LatticeState, model: RateModel):
    if isinstance(state.boundary, Periodic):
        return _kernels.BC_PERIODIC, 0.0, 0.0
    res = state.boundary
    inj_l = model.time_scale * 0.5 * thermo.fugacity_from_density(res.rho_left)
    inj_r = model.time_scale * 0.5 * thermo.fugacity_from_density(res.rho_right)
    return _kernels.BC_RESERVOIR, inj_l, inj_r


def sample_initial_state(profile: AffineProfile, lattice_size: int,
                         boundary: Boundary, stream: RandomStream) -> LatticeState:
    """Draw site occupations i.i.d. from the stationary single-site law at the
    local fugacity phi(rho(x_i)) of the quadratic-rate model."""
    lattice_size = int(lattice_size)
    if lattice_size < 2:
        raise DomainError("lattice_size must be at least 2")
    x = np.arange(lattice_size) / lattice_size
    rho = profile(x)
    if np.any(rho <= 0) or not np.all(np.isfinite(rho)):
        raise DomainError("profile must be positive and finite at every site")
    phi = thermo.fugacity_from_density(rho)
    cdf = thermo.occupation_cdf_matrix(phi)
    occ = np.empty(lattice_size, dtype=np.int64)
    _kernels.sample_occupations(cdf, stream.state, occ)
    return LatticeState(occ, boundary)


def total_rate(state: LatticeState, model: RateModel) -> float:
    """time_scale * sum_i g(k_i); exact for integer-valued g below 2^53."""
    table = model.rate_table(int(state.occupations.max(initial=0)))
    return model.time_scale * float(_kernels.weights_total(state.occupations, table))


def _run_kernel(state: LatticeState, model: RateModel, stream: RandomStream,
                t_end: float, max_events) -> tuple[int, int]:
    """Drive the compiled loop, growing the rate table on demand.

    Returns (status, events).  The GROW path replays the interrupted event
    with identical draws, so results never depend on the table's initial size.
    """
    occ = state.occupations
    table = model.rate_table(max(int(occ.max(initial=0)) + 2, 64))
    tree = np.zeros(occ.shape[0] + 1)
    bc, inj_l, inj_r = _boundary_args(state, model)
    wtot = _kernels.build_rate_tree(tree, occ, table)
    t_now = state.time
    events = 0
    budget = max_events
    while True:
        t_now, status, n, wtot = _kernels.zrp_evolve(
            occ, tree, table, stream.state, model.time_scale, t_now, t_end,
            budget, bc, inj_l, inj_r, wtot)
        events += int(n)
        if status == _kernels.GROW:
            table = model.grow_table()
            budget = max_events - events
            continue
        state.time = t_now
        return status, events


def step(state: LatticeState, model: RateModel, stream: RandomStream) -> float:
    """Apply exactly one event in place and return its waiting time."""
    t0 = state.time
    status, n = _run_kernel(state, model, stream, np.inf, np.int64(1))
    if status == _kernels.ABSORBED:
        raise AbsorbedStateError("total event rate is zero; state is absorbed")
    return state.time - t0


def evolve(state: LatticeState, model: RateModel, duration: float,
           stream: RandomStream) -> int:
    """Advance the state by ``duration`` macroscopic time units in place.

    Returns the number of applied events.  A state that absorbs (zero total
    rate, only possible without reservoirs) simply coasts to the horizon.
    """
    if duration < 0 or not np.isfinite(duration):
        raise DomainError(f"duration must be non-negative and finite, got {duration}")
    if duration == 0.0:
        return 0
    horizon = state.time + duration
    status, events = _run_kernel(state, model, stream, horizon, _MAX_EVENTS)
    if status == _kernels.ABSORBED:
        # no event can ever fire again; the clock coasts to the horizon
        state.time = horizon
    return events


def apply_jump(state: LatticeState, model: RateModel, site: int,
               go_right: bool) -> None:
    """Forced single move with the same boundary semantics as the event loop.

    Test and debugging hook; raises like the sampler would if the site is
    empty.
    """
    occ = state.occupations
    n = occ.shape[0]
    if occ[site] <= 0:
        raise DomainError(f"site {site} is empty; nothing can jump")
    dest = site + 1 if go_right else site - 1
    if isinstance(state.boundary, Periodic):
        dest %= n
    occ[site] -= 1
    if 0 <= dest < n:
        occ[dest] += 1
