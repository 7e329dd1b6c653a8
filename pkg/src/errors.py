from typing import Optional


class ChainError(Exception):
    """Base class for every error raised by the toolkit"""


class InvalidChain(ChainError):
    """Malformed chain input: shape, negative entries, labels or file layout"""


class NotStochastic(InvalidChain):
    def __init__(self, row: int, row_sum: float, label: Optional[str] = None):
        self.row = row
        self.row_sum = row_sum
        self.label = label
        name = f"'{label}'" if label is not None else str(row)
        super().__init__(f"Row {name} sums to {row_sum!r}, deviation {abs(row_sum - 1.0):.3e} exceeds 1e-12")


class NotMixing(InvalidChain):
    def __init__(self, kind: str, witness: str):
        self.kind = kind
        self.witness = witness
        super().__init__(f"Chain is not mixing ({kind}): {witness}")


class InvalidWord(ChainError):
    """A word with zero probability or out-of-range symbols"""


class SolverFailure(ChainError):
    """A linear solve missed its residual tolerance"""


class NoConvergence(ChainError):
    def __init__(self, iterations: int, what: str = "power iteration"):
        self.iterations = iterations
        super().__init__(f"{what} did not converge after {iterations} iterations")


class CapExceeded(ChainError):
    def __init__(self, what: str, found: int, cap: int):
        self.what = what
        self.found = found
        self.cap = cap
        super().__init__(f"{what}: found {found} so far, cap is {cap}")


class HorizonExceeded(ChainError):
    def __init__(self, horizon: int):
        self.horizon = horizon
        super().__init__(f"Simulation passed the safety horizon of {horizon} steps")


class InsufficientPoints(ChainError):
    def __init__(self, found: int, needed: int = 4):
        self.found = found
        self.needed = needed
        super().__init__(f"Regression needs at least {needed} points, got {found}")


class UsageError(ChainError):
    """Bad command-line or config input"""
