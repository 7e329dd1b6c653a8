"""
Chain ingestion and per-chain spectral invariants.

All logarithms are natural logarithms: entropies and exponents are in nats.
"""

import json
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from src.errors import InvalidChain, NotMixing, NotStochastic, NoConvergence, SolverFailure

logger = logging.getLogger(__name__)

LOG_BASE_NOTE = 'nats'
ROW_SUM_TOLERANCE = 1e-12
STATIONARY_TOLERANCE = 1e-10
ZERO_TOLERANCE = 1e-15
RAYLEIGH_TOLERANCE = 1e-14
PERRON_RESIDUAL_TOLERANCE = 1e-12
PERRON_POLISH_LIMIT = 4096
PERRON_POLISH_ROUNDS = 2
DEFAULT_MME_TOLERANCE = 1e-9
DEFAULT_PERRON_MAX_ITER = 10 ** 6


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class MarkovChain:
    """A validated mixing chain; build it with validate_chain"""
    states: Tuple[str, ...]
    transition: np.ndarray
    stationary: np.ndarray
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # inverse-CDF rows; every entry past the last positive one is pinned to 1
        cumulative = np.cumsum(np.where(self.support, self.transition, 0.0), axis=1)
        for row, mask in enumerate(self.support):
            last = int(np.flatnonzero(mask)[-1])
            cumulative[row, last:] = 1.0
        object.__setattr__(self, 'cumulative', _frozen(cumulative))

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def support(self) -> np.ndarray:
        return self.transition > ZERO_TOLERANCE

    def successors(self, state: int) -> np.ndarray:
        return np.flatnonzero(self.support[state])

    def log_transition(self) -> np.ndarray:
        with np.errstate(divide='ignore'):
            return np.where(self.support, np.log(self.transition), -np.inf)


@dataclass(frozen=True)
class SpectralSummary:
    lam: float
    L: float
    entropy: float
    is_mme: bool
    mme_distance: float

    @property
    def pressure(self) -> float:
        """Pressure of f = log Q(x_1, x_2), equal to log of the Perron eigenvalue"""
        return math.log(self.lam)

    @property
    def gap(self) -> float:
        return self.entropy - self.L

    def to_dict(self) -> Dict:
        return {
            'lambda': self.lam,
            'L': self.L,
            'entropy': self.entropy,
            'is_mme': self.is_mme,
            'mme_distance': self.mme_distance,
            'pressure': self.pressure,
            'log_base': LOG_BASE_NOTE
        }


def wielandt_bound(size: int) -> int:
    return (size - 1) ** 2 + 1


def is_primitive(support: np.ndarray) -> bool:
    """Boolean powers by repeated squaring until positive or past the Wielandt bound"""
    power = np.asarray(support, dtype=bool).astype(np.float64)
    bound = wielandt_bound(power.shape[0])
    exponent = 1
    while True:
        if np.all(power > 0):
            return True
        if exponent >= bound:
            return False
        power = np.minimum(power @ power, 1.0)
        exponent *= 2


def mixing_witness(matrix, labels: Optional[Sequence[str]] = None) -> Optional[Tuple[str, str]]:
    """
    Diagnose why a support graph is not primitive.

    Returns None for an irreducible aperiodic support, otherwise (kind, detail)
    with kind 'reducible' or 'periodic'.
    """
    support = np.asarray(matrix) > ZERO_TOLERANCE
    size = support.shape[0]
    name = (lambda i: repr(labels[i])) if labels is not None else str
    graph = csr_matrix(support.astype(np.int8))

    n_components, _ = connected_components(graph, directed=True, connection='strong')
    if n_components > 1:
        for start in range(size):
            reached = set(breadth_first_order(graph, start, directed=True, return_predecessors=False).tolist())
            if len(reached) < size:
                missing = min(set(range(size)) - reached)
                return 'reducible', f"state {name(start)} cannot reach state {name(missing)}"

    order, predecessors = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.zeros(size, dtype=np.int64)
    for node in order[1:]:
        level[node] = level[predecessors[node]] + 1
    sources, targets = np.nonzero(support)
    period = int(np.gcd.reduce(np.abs(level[sources] + 1 - level[targets])))
    if period > 1:
        return 'periodic', f"period {period}"
    return None


def validate_chain(matrix, labels: Sequence[str]) -> MarkovChain:
    """Check a transition matrix and its labels, then build a MarkovChain with cached π"""
    try:
        transition = np.array(matrix, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InvalidChain(f"Transition matrix is not numeric: {e}")

    labels = tuple(labels)
    if transition.ndim != 2 or transition.shape[0] != transition.shape[1] or transition.shape[0] == 0:
        raise InvalidChain(f"Transition matrix must be square and non-empty, got shape {transition.shape}")
    if len(labels) != transition.shape[0]:
        raise InvalidChain(f"{len(labels)} labels for a {transition.shape[0]}-state matrix")
    if not all(isinstance(label, str) for label in labels):
        raise InvalidChain("State labels must be strings")
    if len(set(labels)) != len(labels):
        duplicates = sorted({label for label in labels if labels.count(label) > 1})
        raise InvalidChain(f"Duplicate state labels: {', '.join(duplicates)}")
    if not np.all(np.isfinite(transition)):
        raise InvalidChain("Transition matrix contains non-finite entries")

    negative_rows = np.flatnonzero((transition < 0).any(axis=1))
    if negative_rows.size:
        row = int(negative_rows[0])
        raise InvalidChain(f"Row {labels[row]!r} has a negative entry")

    row_sums = transition.sum(axis=1)
    for row, row_sum in enumerate(row_sums):
        if abs(row_sum - 1.0) > ROW_SUM_TOLERANCE:
            raise NotStochastic(row, float(row_sum), labels[row])

    support = transition > ZERO_TOLERANCE
    if not is_primitive(support):
        witness = mixing_witness(transition, labels) or (
            'periodic', f"no positive power within the Wielandt bound {wielandt_bound(len(labels))}")
        raise NotMixing(*witness)

    stationary = _solve_stationary(transition)
    chain = MarkovChain(states=labels, transition=_frozen(transition), stationary=_frozen(stationary))
    logger.debug(f"Validated {chain.size}-state chain")
    return chain


def _solve_stationary(transition: np.ndarray) -> np.ndarray:
    size = transition.shape[0]
    system = transition.T - np.eye(size)
    system[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        pi = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as e:
        raise SolverFailure(f"Stationary system is singular: {e}")

    pi = pi / pi.sum()
    residual = float(np.max(np.abs(pi @ transition - pi)))
    if not np.all(pi > 0) or residual > STATIONARY_TOLERANCE:
        raise SolverFailure(f"Stationary solve residual {residual:.3e} (min entry {pi.min():.3e})")
    return pi


def stationary_distribution(chain: MarkovChain) -> np.ndarray:
    return np.array(chain.stationary)


def stationary_by_power(chain: MarkovChain, max_iter: int = DEFAULT_PERRON_MAX_ITER) -> np.ndarray:
    """Cross-check for π: Perron vector of Pᵀ"""
    _, vector = perron(chain.transition.T, max_iter=max_iter)
    return vector


def entropy(chain: MarkovChain) -> float:
    support = chain.support
    with np.errstate(divide='ignore', invalid='ignore'):
        terms = np.where(support, chain.transition * np.log(np.where(support, chain.transition, 1.0)), 0.0)
    total = float(np.sum(chain.stationary[:, None] * terms))
    return max(0.0, -total)


def perron(matrix, max_iter: int = DEFAULT_PERRON_MAX_ITER) -> Tuple[float, np.ndarray]:
    """
    Perron eigenvalue and right eigenvector (normalized to sum 1) by power iteration.

    Starts from the all-ones vector and stops once successive Rayleigh quotients
    agree to 1e-14 and the residual is below 1e-12 times the infinity norm. The
    pair is then refined to working precision: by dense solves of
    (M - λI) r = 0 with a sum-to-one row, λ re-estimated from the left and right
    vectors, for matrices up to PERRON_POLISH_LIMIT states; larger ones keep
    iterating while the residual decreases.

    Args:
        matrix: Nonnegative square matrix with irreducible, aperiodic support
        max_iter: Power iteration budget

    Returns:
        (λ, r) with r > 0 and r.sum() == 1
    """
    M = np.asarray(matrix, dtype=np.float64)
    size = M.shape[0]
    scale = float(np.max(np.abs(M).sum(axis=1)))
    if size == 1:
        if M[0, 0] <= 0:
            raise NoConvergence(0, "perron on a zero 1x1 matrix")
        return float(M[0, 0]), np.ones(1)

    x = np.full(size, 1.0 / size)
    previous = None
    for iteration in range(1, max_iter + 1):
        y = M @ x
        total = y.sum()
        if total <= 0:
            raise NoConvergence(iteration, "perron (iterate collapsed to zero)")
        rayleigh = float(x @ y / (x @ x))
        residual = float(np.max(np.abs(y - rayleigh * x)))
        if (previous is not None and abs(rayleigh - previous) < RAYLEIGH_TOLERANCE
                and residual <= PERRON_RESIDUAL_TOLERANCE * scale):
            logger.debug(f"Perron converged after {iteration} iterations, residual {residual:.2e}")
            if size <= PERRON_POLISH_LIMIT:
                return _polish_perron_pair(M, rayleigh, x)
            return rayleigh, _iterate_while_improving(M, rayleigh, x, max_iter - iteration)
        previous = rayleigh
        x = y / total

    raise NoConvergence(max_iter)


def _perron_residual(M: np.ndarray, lam: float, r: np.ndarray) -> float:
    return float(np.max(np.abs(M @ r - lam * r)))


def _null_vector(system: np.ndarray) -> Optional[np.ndarray]:
    """Positive solution of system·v = 0 with v.sum() == 1, or None"""
    size = system.shape[0]
    # any size-1 rows of M - λI are independent for an irreducible M
    bordered = system.copy()
    bordered[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        v = np.linalg.solve(bordered, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(v > 0):
        return None
    return v / v.sum()


def _polish_perron_pair(M: np.ndarray, lam: float, x: np.ndarray) -> Tuple[float, np.ndarray]:
    best_lam, best_r, best_residual = lam, x, _perron_residual(M, lam, x)
    identity = np.eye(M.shape[0])
    for _ in range(PERRON_POLISH_ROUNDS):
        r = _null_vector(M - lam * identity)
        left = _null_vector(M.T - lam * identity)
        if r is None or left is None:
            break
        # two-sided quotient: error is the product of the left and right vector errors
        lam = float(left @ M @ r / (left @ r))
        r = _null_vector(M - lam * identity)
        if r is None:
            break
        residual = _perron_residual(M, lam, r)
        if residual > best_residual:
            break
        best_lam, best_r, best_residual = lam, r, residual
    return best_lam, best_r


def _iterate_while_improving(M: np.ndarray, lam: float, x: np.ndarray, budget: int) -> np.ndarray:
    residual = _perron_residual(M, lam, x)
    for _ in range(budget):
        y = M @ x
        candidate = y / y.sum()
        candidate_residual = _perron_residual(M, lam, candidate)
        if candidate_residual >= residual:
            break
        x, residual = candidate, candidate_residual
    return x


def is_measure_of_maximal_entropy(chain: MarkovChain, tol: float = DEFAULT_MME_TOLERANCE,
                                  max_iter: int = DEFAULT_PERRON_MAX_ITER) -> Tuple[bool, float]:
    parry = parry_transition(chain.support, max_iter=max_iter)
    distance = float(np.max(np.abs(chain.transition - parry)))
    return distance <= tol, distance


def parry_transition(adjacency, max_iter: int = DEFAULT_PERRON_MAX_ITER) -> np.ndarray:
    """P*(u,v) = A(u,v) r(v) / (λ_A r(u)) for the Perron pair of the 0/1 support matrix"""
    A = (np.asarray(adjacency) > 0).astype(np.float64)
    lam, r = perron(A, max_iter=max_iter)
    return A * r[None, :] / (lam * r[:, None])


def parry_chain(adjacency, labels: Sequence[str], max_iter: int = DEFAULT_PERRON_MAX_ITER) -> MarkovChain:
    """Measure of maximal entropy on a support graph"""
    transition = parry_transition(adjacency, max_iter=max_iter)
    transition = transition / transition.sum(axis=1, keepdims=True)
    return validate_chain(transition, labels)


def coalescence_exponent(chain: MarkovChain, tol: float = DEFAULT_MME_TOLERANCE,
                         max_iter: int = DEFAULT_PERRON_MAX_ITER) -> SpectralSummary:
    """Perron eigenvalue of Q = P∘P, L = -log λ, entropy and the MME verdict"""
    Q = np.where(chain.support, chain.transition ** 2, 0.0)
    lam, _ = perron(Q, max_iter=max_iter)
    L = 0.0 if chain.size == 1 else -math.log(lam)
    h = entropy(chain)
    is_mme, distance = is_measure_of_maximal_entropy(chain, tol=tol, max_iter=max_iter)

    if L > h + 1e-9:
        logger.warning(f"L = {L!r} exceeds entropy {h!r}; check the chain conditioning")

    summary = SpectralSummary(lam=lam, L=L, entropy=h, is_mme=is_mme, mme_distance=distance)
    logger.debug(f"Spectral summary: lambda={lam:.12g} L={L:.12g} h={h:.12g} mme={is_mme}")
    return summary


def product_mixing_time(chain: MarkovChain, eps: float = 0.5, max_steps: int = 10 ** 6) -> int:
    """
    Smallest T with min P_x^T((a,b),(c,d)) / (π(c)π(d)) >= 1 - eps for the product chain.

    P_x^T is the Kronecker square of P^T, so the minimum ratio is the square of
    min P^T(a,c)/π(c).
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    power = np.array(chain.transition)
    for steps in range(1, max_steps + 1):
        ratio = float(np.min(power / chain.stationary[None, :]))
        if ratio ** 2 >= 1.0 - eps:
            return steps
        power = power @ chain.transition
    raise NoConvergence(max_steps, "product mixing time")


def load_chain(path) -> MarkovChain:
    """Read the JSON chain format {"states": [...], "transition": [[...]]}"""
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise InvalidChain(f"Cannot read chain file {path}: {e}")
    except json.JSONDecodeError as e:
        raise InvalidChain(f"Invalid JSON in {path.name}: {e}")

    if not isinstance(data, dict) or 'states' not in data or 'transition' not in data:
        raise InvalidChain(f"{path.name} must hold an object with 'states' and 'transition'")
    chain = validate_chain(data['transition'], data['states'])
    logger.info(f"Loaded {chain.size}-state chain from {path}")
    return chain


def chain_to_dict(chain: MarkovChain) -> Dict[str, List]:
    return {
        'states': list(chain.states),
        'transition': chain.transition.tolist()
    }
