"""Shared exception types."""


class PositiveDefiniteError(RuntimeError):
    """A conformal weight matrix failed its Cholesky factorization."""


class ClusterNotIsolatedError(RuntimeError):
    """A deformed eigenvalue cluster could not be separated from its neighbors."""


class SplitSearchError(RuntimeError):
    """No candidate factor split a degenerate cluster."""

    def __init__(self, message, rate_table=None):
        super().__init__(message)
        self.rate_table = list(rate_table or [])
