"""Piecewise-linear hat functions on the unit interval.

The basis is periodic: n_basis nodes at x_a = a / n_basis with spacing
delta = 1 / n_basis, each hat rising linearly over one cell and falling over
the next.  Interior hats integrate to delta and the family sums to one
everywhere (partition of unity).  Lattice sites live at x_i = i / lattice_size;
when lattice_size is a multiple of n_basis every node coincides with a site
and gamma_a(x_b) = delta_ab holds exactly.
"""

from __future__ import annotations

import numpy as np


class BasisSet:
    def __init__(self, n_basis: int, lattice_size: int | None = None):
        if n_basis < 4:
            raise ValueError(f"n_basis must be at least 4, got {n_basis}")
        self.n_basis = int(n_basis)
        self.delta = 1.0 / self.n_basis
        self.nodes = np.arange(self.n_basis) * self.delta
        self.lattice_size = None
        self._site_rows = None
        if lattice_size is not None:
            self.attach_lattice(lattice_size)

    def attach_lattice(self, lattice_size: int) -> None:
        """Precompute gamma_a(x_i) for every node/site pair."""
        lattice_size = int(lattice_size)
        if lattice_size < 2 * self.n_basis:
            raise ValueError(
                f"lattice_size {lattice_size} too small for {self.n_basis} hats")
        self.lattice_size = lattice_size
        x = np.arange(lattice_size) / lattice_size
        self._site_rows = self.evaluate(self.nodes[:, None], x[None, :])

    def evaluate(self, node_x, x):
        """Hat centered at node_x evaluated at x (both broadcastable arrays)."""
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(node_x, dtype=float))
        d = np.minimum(d, 1.0 - d)  # periodic distance on the unit circle
        return np.maximum(0.0, 1.0 - d / self.delta)

    def site_rows(self, nodes) -> np.ndarray:
        """Cached gamma values on lattice sites for the given node indices."""
        if self._site_rows is None:
            raise RuntimeError("no lattice attached; call attach_lattice first")
        idx = np.asarray(nodes, dtype=int)
        return np.ascontiguousarray(self._site_rows[idx])

    def center_node(self) -> int:
        """Index of the node nearest the domain midpoint."""
        return int(np.argmin(np.abs(self.nodes - 0.5)))

    def node_position(self, a: int) -> float:
        return float(self.nodes[a % self.n_basis])
