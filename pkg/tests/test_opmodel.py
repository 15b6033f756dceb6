"""Quadratic surrogate: recovery, constraint, stencils, persistence."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluctop.errors import ConfigError, RankDeficientError, SchemaError
from fluctop.estimator import ProfilePoint
from fluctop.opmodel import (MONOMIALS, QuadraticFit, analytic_fit,
                             design_matrix, fit_from_arrays, load_fit,
                             save_fit, stencil_decompose)


def synthetic_grid():
    rho = np.repeat([4.0, 6.0, 8.0, 10.0], 5)
    grad = np.tile([-10.0, -5.0, 0.0, 5.0, 10.0], 4)
    return rho, grad


def synthetic_entries(rho, grad, c_sub, c_super):
    X = design_matrix(rho, grad)
    sub = X @ c_sub
    sup = X @ c_super
    return np.stack([sub, -(sub + sup), sup], axis=1)


def test_design_matrix_monomials():
    X = design_matrix([2.0], [3.0])
    assert X.tolist() == [[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]]
    assert len(MONOMIALS) == X.shape[1]


def test_constrained_fit_recovers_exact_coefficients():
    rng = np.random.default_rng(11)
    rho, grad = synthetic_grid()
    c_sub = rng.normal(size=6)
    c_sup = rng.normal(size=6)
    entries = synthetic_entries(rho, grad, c_sub, c_sup)
    fit = fit_from_arrays(rho, grad, entries, constrained=True)
    assert fit.coefficients[0] == pytest.approx(c_sub, abs=1e-9)
    assert fit.coefficients[2] == pytest.approx(c_sup, abs=1e-9)
    assert fit.residual_rms == pytest.approx(np.zeros(3), abs=1e-9)


def test_unconstrained_fit_recovers_independent_columns():
    rng = np.random.default_rng(12)
    rho, grad = synthetic_grid()
    cs = rng.normal(size=(3, 6))
    entries = design_matrix(rho, grad) @ cs.T
    fit = fit_from_arrays(rho, grad, entries, constrained=False)
    assert fit.coefficients == pytest.approx(cs, abs=1e-9)
    assert not fit.constrained


def test_constrained_diagonal_identity_holds_coefficientwise():
    rng = np.random.default_rng(13)
    rho, grad = synthetic_grid()
    entries = synthetic_entries(rho, grad, rng.normal(size=6),
                                rng.normal(size=6))
    entries += rng.normal(scale=5.0, size=entries.shape)  # noise stays
    fit = fit_from_arrays(rho, grad, entries, constrained=True)
    total = fit.coefficients.sum(axis=0)
    assert total == pytest.approx(np.zeros(6), abs=1e-12)


@given(st.floats(min_value=3.0, max_value=11.0),
       st.floats(min_value=-25.0, max_value=25.0))
@settings(max_examples=200, deadline=None)
def test_evaluated_triple_sums_to_rounding(rho, grad):
    rng = np.random.default_rng(14)
    r, g = synthetic_grid()
    entries = synthetic_entries(r, g, rng.normal(size=6, scale=300.0),
                                rng.normal(size=6, scale=300.0))
    entries += rng.normal(scale=20.0, size=entries.shape)
    fit = fit_from_arrays(r, g, entries, constrained=True)
    sub, diag, sup = fit.evaluate(rho, grad)
    # the diagonal is one rounded negation of (sub + super), nothing more
    assert abs(math.fsum((sub, diag, sup))) <= \
        2.3e-16 * (abs(sub) + abs(sup)) + 1e-300


def test_constrained_fit_ignores_common_triple_shifts():
    # shifting one point's (sub, diag, super) by the same amount lies
    # outside the zero-column-sum model space, so the fit cannot move
    rng = np.random.default_rng(21)
    rho, grad = synthetic_grid()
    entries = synthetic_entries(rho, grad, rng.normal(size=6),
                                rng.normal(size=6))
    shifted = entries.copy()
    shifted[3] += 1789.0
    a = fit_from_arrays(rho, grad, entries, constrained=True)
    b = fit_from_arrays(rho, grad, shifted, constrained=True)
    assert b.coefficients == pytest.approx(a.coefficients, abs=1e-8)


def test_weighted_fit_downweights_noisy_rows():
    rng = np.random.default_rng(15)
    rho, grad = synthetic_grid()
    c_sub = rng.normal(size=6)
    c_sup = rng.normal(size=6)
    clean = synthetic_entries(rho, grad, c_sub, c_sup)
    entries = clean.copy()
    stderr = np.full_like(entries, 1e-6)
    entries[0, 0] += 500.0      # one wrecked measurement
    stderr[0, 0] = 1e4          # flagged as nearly worthless
    fit = fit_from_arrays(rho, grad, entries, stderr, constrained=True,
                          weighted=True)
    assert fit.coefficients[0] == pytest.approx(c_sub, abs=1e-4)
    unweighted = fit_from_arrays(rho, grad, entries, constrained=True)
    err_w = np.abs(fit.coefficients[0] - c_sub).max()
    err_u = np.abs(unweighted.coefficients[0] - c_sub).max()
    assert err_w < err_u * 1e-2


def test_rank_deficiency_names_missing_monomials():
    rho = np.array([4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0])
    grad = np.zeros(7)
    entries = np.ones((7, 3))
    with pytest.raises(RankDeficientError) as exc:
        fit_from_arrays(rho, grad, entries)
    assert "grad" in exc.value.monomials
    assert "grad^2" in exc.value.monomials


def test_fit_input_validation():
    rho, grad = synthetic_grid()
    entries = np.ones((len(rho), 3))
    with pytest.raises(ConfigError):
        fit_from_arrays(rho[:4], grad[:4], entries[:4])
    bad = entries.copy()
    bad[2, 1] = np.nan
    with pytest.raises(ConfigError):
        fit_from_arrays(rho, grad, bad)
    with pytest.raises(ConfigError):
        fit_from_arrays(rho, grad, entries, weighted=True)


def test_gradient_coefficient_matches_odd_part():
    rng = np.random.default_rng(16)
    r, g = synthetic_grid()
    entries = synthetic_entries(r, g, rng.normal(size=6), rng.normal(size=6))
    fit = fit_from_arrays(r, g, entries, constrained=True)
    for rho in (4.5, 7.0, 9.5):
        s = 3.0
        odd = (fit.evaluate(rho, s) - fit.evaluate(rho, -s)) / (2.0 * s)
        assert fit.gradient_coefficient(rho) == pytest.approx(odd, rel=1e-9)


def test_in_hull_tracks_training_box():
    rho, grad = synthetic_grid()
    entries = np.ones((len(rho), 3)) + rho[:, None] * 0.1 \
        + grad[:, None] * 0.01 + (rho * grad)[:, None] * 0.001 \
        + (rho ** 2)[:, None] * 0.002 + (grad ** 2)[:, None] * 0.003
    fit = fit_from_arrays(rho, grad, entries, constrained=False)
    assert fit.in_hull(5.0, 0.0)
    assert not fit.in_hull(11.0, 0.0)
    assert not fit.in_hull(5.0, 12.0)


# --- stencils ----------------------------------------------------------------


def desk_points():
    pts = [ProfilePoint(i, r) for i, r in enumerate((4.0, 7.0, 10.0))]
    k = 3
    for r in (4.0, 7.0, 10.0):
        for s in (-5.0, 5.0):
            pts.append(ProfilePoint(k, r, s))
            k += 1
    return pts


def test_analytic_fit_yields_laplacian_and_advection_stencils():
    fit = analytic_fit(desk_points(), 20)
    rep = stencil_decompose(fit, rho_ref=7.0)
    assert rep.base_normalized == pytest.approx((-1.0, 2.0, -1.0), abs=1e-9)
    assert rep.gradient_normalized == pytest.approx((-1.0, 0.0, 1.0),
                                                    abs=1e-9)
    assert rep.base_scale > 0 and rep.gradient_scale > 0
    # normalization pins the first component exactly
    assert rep.base_normalized[0] == -1.0
    assert rep.gradient_normalized[0] == -1.0


def test_stencil_report_serializes():
    rep = stencil_decompose(analytic_fit(desk_points(), 20))
    d = rep.as_dict()
    assert set(d) >= {"base_normalized", "gradient_normalized", "rho_ref"}


def test_analytic_fit_base_scale_tracks_mobility():
    # flat response: sub = -m(rho)/delta, so the scale is delta/m-like
    from fluctop.thermo import m_from_density
    fit = analytic_fit(desk_points(), 20)
    sub_flat = fit.evaluate(7.0, 0.0)[0]
    assert sub_flat == pytest.approx(-m_from_density(7.0) * 20, rel=1e-6)


# --- persistence --------------------------------------------------------------


def test_fit_round_trips_through_json(tmp_path):
    rng = np.random.default_rng(17)
    r, g = synthetic_grid()
    entries = synthetic_entries(r, g, rng.normal(size=6), rng.normal(size=6))
    fit = fit_from_arrays(r, g, entries, constrained=True,
                          provenance={"note": "round trip"})
    path = tmp_path / "fit.json"
    save_fit(fit, path)
    back = load_fit(path)
    assert np.array_equal(back.coefficients, fit.coefficients)
    assert back.constrained == fit.constrained
    assert back.rho_range == fit.rho_range
    assert back.provenance == fit.provenance


def test_fit_load_rejects_schema_drift(tmp_path):
    import json

    rng = np.random.default_rng(18)
    r, g = synthetic_grid()
    entries = synthetic_entries(r, g, rng.normal(size=6), rng.normal(size=6))
    fit = fit_from_arrays(r, g, entries)
    path = tmp_path / "fit.json"
    save_fit(fit, path)

    doc = json.loads(path.read_text())
    doc["stray"] = 1
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_fit(path)

    doc.pop("stray")
    doc["kind"] = "other"
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_fit(path)

    doc = json.loads(json.dumps(doc))
    doc["kind"] = "quadratic-triple-fit"
    doc.pop("coefficients")
    path.write_text(json.dumps(doc))
    with pytest.raises(SchemaError):
        load_fit(path)
