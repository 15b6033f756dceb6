#!/usr/bin/env python3
"""Stencil decomposition of the exact operator, no simulation involved.

Builds column triples by quadrature along frozen affine profiles, fits the
quadratic surrogate, and prints the normalized base and gradient stencils.
A sanity baseline for the measured pipeline: on a symmetric grid the base
stencil is (-1, 2, -1) and the gradient stencil (-1, 0, 1) to rounding.
"""

import argparse
import json
import sys

sys.path.insert(0, "src")  # allow running from a source checkout

from fluctop.config import preset
from fluctop.opmodel import analytic_fit, stencil_decompose


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", default="desk-scale",
                    help="grid/basis source (default desk-scale)")
    ap.add_argument("--n-basis", type=int, default=None,
                    help="override the basis size")
    ap.add_argument("--rho-ref", type=float, default=7.0)
    ap.add_argument("--unconstrained", action="store_true")
    args = ap.parse_args()

    cfg = preset(args.preset)
    n_basis = args.n_basis or cfg.estimator.n_basis
    fit = analytic_fit(cfg.grid.build_points(), n_basis,
                       constrained=not args.unconstrained)
    report = stencil_decompose(fit, rho_ref=args.rho_ref)
    print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
