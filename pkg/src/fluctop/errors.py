"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside the physical domain (non-positive density, bad window)."""


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


class SchemaError(ValueError):
    """Persisted file does not match the expected schema."""


class RankDeficientError(RuntimeError):
    """Design matrix rank-deficient; carries the offending monomial names."""

    def __init__(self, monomials):
        self.monomials = tuple(monomials)
        super().__init__(
            "design matrix is rank deficient in monomials: " + ", ".join(self.monomials))


class NonPositiveDensityError(RuntimeError):
    """Time stepping drove a nodal density to zero or below."""

    def __init__(self, node: int, time: float, value: float):
        self.node = node
        self.time = time
        self.value = value
        super().__init__(
            f"density became non-positive at node {node} (t={time:.6g}, value={value:.6g})")


class AbsorbedStateError(RuntimeError):
    """The lattice reached a zero-rate state and cannot advance."""
