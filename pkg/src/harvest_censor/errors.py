"""Exception hierarchy shared by the solvers, simulators and CLI."""


class HarvestCensorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HarvestCensorError, ValueError):
    """Invalid scenario or experiment configuration."""


class NoConvergence(HarvestCensorError):
    """Value iteration hit its iteration cap before reaching the tolerance."""

    def __init__(self, iterations, residual, tol):
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"value iteration did not converge after {iterations} iterations "
            f"(residual {residual:.3e} >= tol {tol:.3e})"
        )


class Degenerate(HarvestCensorError):
    """No stationary distribution could be computed for a transition matrix."""


class BadTopology(HarvestCensorError, ValueError):
    """Routing table with a cycle, a disconnected node or too few nodes."""


class TooLarge(HarvestCensorError, ValueError):
    """Instance exceeds the size guards of the brute-force oracle."""
