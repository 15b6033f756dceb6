"""Quadratic surrogate for the operator's column triples.

Each of the three column entries (sub, diag, super) is modeled as a
quadratic polynomial in the local density rho and gradient s:

    entry(rho, s) = c0 + c1 rho + c2 s + c3 rho^2 + c4 rho s + c5 s^2.

The constrained variant eliminates the diagonal via the zero-column-sum
identity diag = -(sub + super), which is what exact mass conservation of
the evolved density rests on; the sub and super coefficient vectors are
then fit jointly on the stacked system.  Evaluation always recomputes the
constrained diagonal as -(sub + super), so a triple sums to the rounding
error of one addition and nothing more.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, RankDeficientError, SchemaError

MONOMIALS = ("1", "rho", "grad", "rho^2", "rho*grad", "grad^2")
COLUMNS = ("sub", "diag", "super")
_SCHEMA_VERSION = 1
_FIT_KIND = "quadratic-triple-fit"


def design_matrix(rho, grad) -> np.ndarray:
    """Monomial rows [1, rho, s, rho^2, rho*s, s^2], shape (N, 6)."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    if rho.shape != grad.shape or rho.ndim != 1:
        raise ConfigError("rho and grad must be 1-d arrays of equal length")
    return np.column_stack([np.ones_like(rho), rho, grad,
                            rho * rho, rho * grad, grad * grad])


def _check_rank(X: np.ndarray) -> None:
    """Raise RankDeficientError naming the unidentifiable monomials."""
    if np.linalg.matrix_rank(X) == X.shape[1]:
        return
    kept: list[int] = []
    deficient: list[str] = []
    for j in range(X.shape[1]):
        cand = X[:, kept + [j]]
        if np.linalg.matrix_rank(cand) > len(kept):
            kept.append(j)
        else:
            deficient.append(MONOMIALS[j])
    raise RankDeficientError(tuple(deficient))


@dataclass
class QuadraticFit:
    coefficients: np.ndarray       # (3, 6); rows follow COLUMNS
    constrained: bool
    weighted: bool
    residual_rms: np.ndarray       # (3,), unweighted
    n_points: int
    rho_range: tuple
    grad_range: tuple
    provenance: dict

    def evaluate(self, rho, grad) -> np.ndarray:
        """Column triples at (rho, grad); shape (3,) scalar in, (3, N) else."""
        scalar = np.isscalar(rho) and np.isscalar(grad)
        X = design_matrix(np.atleast_1d(rho), np.atleast_1d(grad))
        sub = X @ self.coefficients[0]
        sup = X @ self.coefficients[2]
        if self.constrained:
            diag = -(sub + sup)
        else:
            diag = X @ self.coefficients[1]
        out = np.vstack([sub, diag, sup])
        return out[:, 0] if scalar else out

    def in_hull(self, rho, grad):
        """True where (rho, grad) lies inside the fitted bounding box."""
        rho = np.asarray(rho, dtype=float)
        grad = np.asarray(grad, dtype=float)
        ok = ((rho >= self.rho_range[0]) & (rho <= self.rho_range[1])
              & (grad >= self.grad_range[0]) & (grad <= self.grad_range[1]))
        return bool(ok) if ok.ndim == 0 else ok

    def gradient_coefficient(self, rho: float) -> np.ndarray:
        """d(triple)/d(grad) at (rho, 0): c2 + c4 * rho per column."""
        c = self.coefficients
        out = c[:, 2] + c[:, 4] * rho
        if self.constrained:
            out[1] = -(out[0] + out[2])
        return out


def fit_from_arrays(rho, grad, entries, stderr=None, *, constrained=True,
                    weighted=False, provenance=None) -> QuadraticFit:
    """Least squares over measured triples.

    entries has shape (N, 3) in COLUMNS order.  With weighted=True each
    scalar equation is scaled by 1/stderr of its entry.
    """
    rho = np.asarray(rho, dtype=float)
    grad = np.asarray(grad, dtype=float)
    entries = np.asarray(entries, dtype=float)
    if entries.shape != (rho.shape[0], 3):
        raise ConfigError(f"entries must have shape (N, 3), got {entries.shape}")
    if not np.all(np.isfinite(entries)):
        raise ConfigError("entries must be finite; drop incomplete rows first")
    if rho.shape[0] < 6:
        raise ConfigError("need at least 6 points to identify 6 monomials")
    if weighted:
        if stderr is None:
            raise ConfigError("weighted fit needs standard errors")
        stderr = np.asarray(stderr, dtype=float)
        if stderr.shape != entries.shape or np.any(stderr <= 0):
            raise ConfigError("weighted fit needs positive stderr per entry")

    X = design_matrix(rho, grad)
    _check_rank(X)
    w = 1.0 / stderr if weighted else np.ones_like(entries)

    if constrained:
        # unknowns [c_sub; c_super]; the diagonal equations couple the two
        Z = np.zeros_like(X)
        A = np.vstack([
            np.hstack([X, Z]) * w[:, 0:1],
            np.hstack([-X, -X]) * w[:, 1:2],
            np.hstack([Z, X]) * w[:, 2:3],
        ])
        y = np.concatenate([entries[:, 0] * w[:, 0],
                            entries[:, 1] * w[:, 1],
                            entries[:, 2] * w[:, 2]])
        theta, *_ = np.linalg.lstsq(A, y, rcond=None)
        coeff = np.vstack([theta[:6], -(theta[:6] + theta[6:]), theta[6:]])
    else:
        coeff = np.empty((3, 6))
        for j in range(3):
            Xw = X * w[:, j:j + 1]
            coeff[j], *_ = np.linalg.lstsq(Xw, entries[:, j] * w[:, j],
                                           rcond=None)

    resid = entries - (X @ coeff.T)
    rms = np.sqrt(np.mean(resid * resid, axis=0))
    return QuadraticFit(
        coefficients=coeff, constrained=constrained, weighted=weighted,
        residual_rms=rms, n_points=rho.shape[0],
        rho_range=(float(rho.min()), float(rho.max())),
        grad_range=(float(grad.min()), float(grad.max())),
        provenance=dict(provenance or {}))


def analytic_fit(points, n_basis: int, *, constrained=True,
                 tol=1e-12) -> QuadraticFit:
    """Fit the surrogate to exact weak-form triples instead of measurements.

    Each probe point contributes the center column of the operator
    evaluated along its frozen affine profile by quadrature.  Useful as a
    noise-free baseline for the measured pipeline.
    """
    from .basis import BasisSet
    from .thermo import analytic_operator_triple

    points = list(points)
    basis = BasisSet(n_basis)
    rho = np.array([p.rho for p in points])
    grad = np.array([p.grad for p in points])
    entries = np.array([
        analytic_operator_triple(p.profile(), basis.center_node(), basis, tol)
        for p in points])
    prov = {"source": "analytic", "n_basis": n_basis,
            "n_rows_total": len(points)}
    return fit_from_arrays(rho, grad, entries, constrained=constrained,
                           provenance=prov)


def fit_table(table, *, constrained=True, weighted=False) -> QuadraticFit:
    """Fit a measured table, skipping incomplete rows."""
    rho, grad, entries, stderr = table.arrays()
    prov = {
        "source": "measured-table",
        "master_seed": table.master_seed,
        "realizations": table.params.realizations,
        "lattice_size": table.params.lattice_size,
        "n_basis": table.params.n_basis,
        "window": table.params.window,
        "n_rows_total": len(table.rows),
        "n_rows_complete": len(table.complete_rows()),
    }
    return fit_from_arrays(rho, grad, entries, stderr, constrained=constrained,
                           weighted=weighted, provenance=prov)


@dataclass(frozen=True)
class StencilReport:
    """Flat and gradient response of the fitted triple at a reference density.

    base is the triple at (rho_ref, 0); gradient is its derivative in the
    gradient direction.  The normalized forms rescale each so the sub entry
    is exactly -1; base_scale and gradient_scale are those multipliers.
    """

    rho_ref: float
    base: tuple
    base_normalized: tuple
    base_scale: float
    gradient: tuple
    gradient_normalized: tuple
    gradient_scale: float

    def as_dict(self) -> dict:
        return {
            "rho_ref": self.rho_ref,
            "base": list(self.base),
            "base_normalized": list(self.base_normalized),
            "base_scale": self.base_scale,
            "gradient": list(self.gradient),
            "gradient_normalized": list(self.gradient_normalized),
            "gradient_scale": self.gradient_scale,
        }


def stencil_decompose(fit: QuadraticFit, rho_ref: float = 7.0) -> StencilReport:
    base = fit.evaluate(rho_ref, 0.0)
    grad = fit.gradient_coefficient(rho_ref)
    if base[0] == 0.0 or grad[0] == 0.0:
        raise DomainError("sub entry vanishes at rho_ref; cannot normalize")
    s1 = -1.0 / base[0]
    s2 = -1.0 / grad[0]
    return StencilReport(
        rho_ref=float(rho_ref),
        base=tuple(float(v) for v in base),
        base_normalized=tuple(float(v * s1) for v in base),
        base_scale=float(s1),
        gradient=tuple(float(v) for v in grad),
        gradient_normalized=tuple(float(v * s2) for v in grad),
        gradient_scale=float(s2),
    )


_FIT_KEYS = {"schema_version", "kind", "constrained", "weighted", "monomials",
             "columns", "coefficients", "residual_rms", "n_points",
             "rho_range", "grad_range", "provenance"}


def save_fit(fit: QuadraticFit, path) -> None:
    doc = {
        "schema_version": _SCHEMA_VERSION,
        "kind": _FIT_KIND,
        "constrained": fit.constrained,
        "weighted": fit.weighted,
        "monomials": list(MONOMIALS),
        "columns": list(COLUMNS),
        "coefficients": [[float(v) for v in row] for row in fit.coefficients],
        "residual_rms": [float(v) for v in fit.residual_rms],
        "n_points": fit.n_points,
        "rho_range": list(fit.rho_range),
        "grad_range": list(fit.grad_range),
        "provenance": fit.provenance,
    }
    with open(Path(path), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_fit(path) -> QuadraticFit:
    with open(Path(path)) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise SchemaError("fit file must hold a JSON object")
    if doc.get("schema_version") != _SCHEMA_VERSION:
        raise SchemaError(f"unsupported fit schema {doc.get('schema_version')!r}")
    if doc.get("kind") != _FIT_KIND:
        raise SchemaError(f"unexpected fit kind {doc.get('kind')!r}")
    missing = _FIT_KEYS - set(doc)
    stray = set(doc) - _FIT_KEYS
    if missing or stray:
        raise SchemaError(
            f"fit file keys off: missing {sorted(missing)}, stray {sorted(stray)}")
    if tuple(doc["monomials"]) != MONOMIALS or tuple(doc["columns"]) != COLUMNS:
        raise SchemaError("fit file uses a different monomial or column order")
    coeff = np.array(doc["coefficients"], dtype=float)
    if coeff.shape != (3, 6):
        raise SchemaError(f"coefficients must be 3x6, got {coeff.shape}")
    return QuadraticFit(
        coefficients=coeff,
        constrained=bool(doc["constrained"]),
        weighted=bool(doc["weighted"]),
        residual_rms=np.array(doc["residual_rms"], dtype=float),
        n_points=int(doc["n_points"]),
        rho_range=tuple(doc["rho_range"]),
        grad_range=tuple(doc["grad_range"]),
        provenance=dict(doc["provenance"]))
