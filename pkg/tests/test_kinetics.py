"""Event-driven lattice dynamics: rates, boundaries, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluctop import _kernels
from fluctop.errors import AbsorbedStateError, DomainError
from fluctop.kinetics import (LatticeState, Periodic, RandomStream, RateModel,
                              Reservoir, apply_jump, evolve,
                              sample_initial_state, step, total_rate)
from fluctop.profiles import AffineProfile
from fluctop.thermo import fugacity_from_density, occupation_pmf

from .conftest import make_flat_state
from .oracles import chi_square_pvalue, naive_weighted_pick


def test_stream_is_deterministic_and_copyable():
    a = RandomStream.from_key(9, 3, 14)
    b = RandomStream.from_key(9, 3, 14)
    assert [a.u64() for _ in range(8)] == [b.u64() for _ in range(8)]
    c = a.copy()
    assert a.u64() == c.u64()


def test_distinct_keys_give_distinct_streams():
    draws = {RandomStream.from_key(1, p, r).u64()
             for p in range(20) for r in range(20)}
    assert len(draws) == 400


def test_stream_uniform_range(stream):
    u = np.array([stream.random() for _ in range(5000)])
    assert np.all((u >= 0.0) & (u < 1.0))
    assert abs(u.mean() - 0.5) < 0.02


@given(st.lists(st.integers(min_value=0, max_value=9), min_size=2,
                max_size=60),
       st.floats(min_value=0.0, max_value=1.0, exclude_max=True))
@settings(max_examples=120, deadline=None)
def test_tree_search_matches_linear_scan(ks, u):
    occ = np.array(ks, dtype=np.int64)
    g = (np.arange(10, dtype=np.float64)) ** 2
    weights = g[occ]
    total = weights.sum()
    if total <= 0.0:
        return
    tree = np.zeros(len(occ) + 1, dtype=np.float64)  # 1-indexed, slot 0 unused
    wtot = _kernels.build_rate_tree(tree, occ, g)
    assert wtot == pytest.approx(total, rel=1e-12)
    target = u * total
    i_tree = _kernels.fenwick_search(tree, len(occ),
                                     _kernels._top_bit(len(occ)), target)
    assert i_tree == naive_weighted_pick(weights, target)


def test_incremental_total_rate_survives_many_events():
    model = RateModel.quadratic(50)
    state = make_flat_state(50, 5)
    stream = RandomStream.from_key(31, 0, 0)
    evolve(state, model, 2e-3, stream)  # order 1e6 events at this scale
    occ = state.occupations
    g = model.rate_table(int(occ.max()) + 1)
    fresh = float((g[occ]).sum()) * model.time_scale
    assert total_rate(state, model) == pytest.approx(fresh, rel=1e-12)


def test_forced_single_move_periodic():
    model = RateModel.quadratic(4)
    state = LatticeState(np.array([1, 0, 0, 0]), Periodic())
    apply_jump(state, model, 0, go_right=True)
    assert state.occupations.tolist() == [0, 1, 0, 0]
    apply_jump(state, model, 1, go_right=False)
    apply_jump(state, model, 0, go_right=False)  # wraps to the last site
    assert state.occupations.tolist() == [0, 0, 0, 1]
    with pytest.raises(DomainError):
        apply_jump(state, model, 1, go_right=True)


def test_forced_move_reservoir_destroys_leavers():
    model = RateModel.quadratic(4)
    state = LatticeState(np.array([2, 0, 0, 1]), Reservoir(4.0, 4.0))
    apply_jump(state, model, 0, go_right=False)
    apply_jump(state, model, 3, go_right=True)
    assert state.occupations.tolist() == [1, 0, 0, 0]
    assert state.total_particles() == 1


def test_waiting_time_mean_matches_total_rate():
    # occupations (2, 0) with L^2 scaling: total macroscopic rate 16
    model = RateModel.quadratic(2)
    base = LatticeState(np.array([2, 0]), Periodic())
    assert total_rate(base, model) == pytest.approx(16.0)
    stream = RandomStream.from_key(77, 0, 0)
    n = 100_000
    acc = 0.0
    for _ in range(n):
        s = base.copy()
        acc += step(s, model, stream)
    assert acc / n == pytest.approx(1.0 / 16.0, rel=0.01)


def test_periodic_mass_exactly_conserved():
    model = RateModel.quadratic(64)
    state = make_flat_state(64, 6)
    before = state.total_particles()
    evolve(state, model, 5e-4, RandomStream.from_key(5, 0, 0))
    assert state.total_particles() == before
    assert np.all(state.occupations >= 0)


def test_evolve_advances_clock_exactly():
    model = RateModel.quadratic(32)
    state = make_flat_state(32, 4)
    evolve(state, model, 3.5e-4, RandomStream.from_key(8, 0, 0))
    assert state.time == pytest.approx(3.5e-4, abs=0.0)
    evolve(state, model, 0.0, RandomStream.from_key(8, 0, 0))
    assert state.time == pytest.approx(3.5e-4, abs=0.0)


def test_identical_seeds_identical_trajectories():
    model = RateModel.quadratic(40)
    s1 = make_flat_state(40, 5)
    s2 = make_flat_state(40, 5)
    n1 = evolve(s1, model, 1e-4, RandomStream.from_key(123, 2, 7))
    n2 = evolve(s2, model, 1e-4, RandomStream.from_key(123, 2, 7))
    assert n1 == n2
    assert np.array_equal(s1.occupations, s2.occupations)
    assert s1.time == s2.time


def test_absorbed_state_signals_on_step_and_coasts_on_evolve():
    model = RateModel.quadratic(8)
    state = make_flat_state(8, 0)
    with pytest.raises(AbsorbedStateError):
        step(state, model, RandomStream.from_key(1, 0, 0))
    n = evolve(state, model, 1e-3, RandomStream.from_key(1, 0, 0))
    assert n == 0
    assert state.time == pytest.approx(1e-3)


def test_rate_table_growth_does_not_change_trajectory():
    # start one run with a table far too short and force mid-run regrowth
    model_lazy = RateModel.quadratic(30)
    model_lazy.rate_table(4)
    model_grown = RateModel.quadratic(30)
    model_grown.rate_table(512)

    out = []
    for model in (model_lazy, model_grown):
        state = LatticeState(np.concatenate([np.full(15, 9), np.zeros(15,
                             dtype=np.int64)]), Periodic())
        evolve(state, model, 2e-4, RandomStream.from_key(404, 0, 0))
        out.append((state.occupations.copy(), state.time))
    assert np.array_equal(out[0][0], out[1][0])
    assert out[0][1] == out[1][1]


def test_sampled_state_matches_profile_in_windows():
    profile = AffineProfile(6.0, 4.0)
    L = 4000
    state = sample_initial_state(profile, L, Periodic(),
                                 RandomStream.from_key(55, 0, 0))
    x = state.site_positions()
    for lo in (0.1, 0.45, 0.7):
        sel = (x >= lo) & (x < lo + 0.2)
        target = profile(x[sel]).mean()
        got = state.occupations[sel].mean()
        # var(k) ~ rho * coupling; 4 sigma with a safe variance bound
        sigma = np.sqrt(2.0 * target / sel.sum())
        assert abs(got - target) < 4.0 * sigma


def test_flat_density_is_stationary():
    model = RateModel.quadratic(1000)
    state = sample_initial_state(AffineProfile(4.0), 1000, Periodic(),
                                 RandomStream.from_key(66, 0, 0))
    evolve(state, model, 1e-5, RandomStream.from_key(66, 0, 1))
    mean = state.occupations.mean()
    stderr = state.occupations.std(ddof=1) / np.sqrt(state.lattice_size)
    assert abs(mean - 4.0) <= 3.0 * stderr


def test_equilibrium_histogram_matches_product_law():
    rho = 4.0
    model = RateModel.quadratic(500)
    state = sample_initial_state(AffineProfile(rho), 500, Periodic(),
                                 RandomStream.from_key(99, 0, 0))
    evolve(state, model, 2e-5, RandomStream.from_key(99, 0, 1))
    pmf = occupation_pmf(fugacity_from_density(rho))
    counts = np.bincount(state.occupations, minlength=len(pmf))[:len(pmf)]
    assert chi_square_pvalue(counts, pmf) > 1e-3


def test_reservoir_holds_boundary_density():
    rho = 5.0
    model = RateModel.quadratic(200)
    state = sample_initial_state(AffineProfile(rho), 200,
                                 Reservoir(rho, rho),
                                 RandomStream.from_key(12, 0, 0))
    evolve(state, model, 5e-5, RandomStream.from_key(12, 0, 1))
    mean = state.occupations.mean()
    stderr = state.occupations.std(ddof=1) / np.sqrt(state.lattice_size)
    assert abs(mean - rho) <= 4.0 * stderr


def test_rejects_bad_inputs():
    model = RateModel.quadratic(10)
    state = make_flat_state(10, 3)
    with pytest.raises(DomainError):
        evolve(state, model, -1.0, RandomStream.from_key(0, 0, 0))
    with pytest.raises(DomainError):
        LatticeState(np.array([1, -2, 0]), Periodic())
    with pytest.raises(DomainError):
        Reservoir(0.0, 4.0)
