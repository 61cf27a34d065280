"""Exception hierarchy shared by all modules."""


class LundError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(LundError, ValueError):
    pass


class DegenerateGraphError(LundError):
    """A kernel row has zero mass, so the point cannot be normalized."""

    def __init__(self, point: int):
        self.point = point
        super().__init__(f"point {point} has zero total kernel weight")


class ReducibleChainError(LundError):
    """The transition graph splits into several connected components."""

    def __init__(self, components):
        self.components = components
        sizes = [len(c) for c in components]
        super().__init__(
            f"graph has {len(components)} connected components (sizes {sizes})"
        )


class UnsupportedChainError(LundError):
    pass


class NumericalError(LundError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class EstimationError(LundError):
    """No cluster count could be read off the sorted score sequence."""


class DegenerateScoreError(EstimationError):
    pass


class UnsupportedSizeError(LundError, ValueError):
    pass
