"""
Exact expected meeting times on (V_n, P_n).

Two independent walkers started at u and v occupy their start words at t = 1,
so E m(u, u) = 1 and for u != v

    E(u, v) = 1 + Σ_{c != d} P_n(u, c) P_n(v, d) E(c, d) + Σ_c P_n(u, c) P_n(v, c).

Diagonal product states are folded into the constant term, which leaves a
strictly substochastic system with a unique solution.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from src.chain_core import MarkovChain
from src.errors import CapExceeded, SolverFailure
from src.nblock import DEFAULT_NBLOCK_CAP, NBlockChain, build_nblock_chain, delta_exact

logger = logging.getLogger(__name__)

DEFAULT_PRODUCT_CAP = 10 ** 6
DEFAULT_DIRECT_SOLVE_LIMIT = 10 ** 5
DEFAULT_SOLVER_MAX_ITER = 10 ** 6
RESIDUAL_TOLERANCE = 1e-10
DEFAULT_N_MIN = 4


@dataclass(frozen=True, eq=False)
class MeetingTimeTable:
    n: int
    expectations: np.ndarray
    m_star: float
    m_bar: float
    labels: Tuple[str, ...] = ()

    def csv_rows(self) -> Iterator[Tuple[str, str, float]]:
        size = self.expectations.shape[0]
        for i in range(size):
            for j in range(size):
                yield self.labels[i], self.labels[j], float(self.expectations[i, j])

    def summary(self, delta_n: Optional[float] = None) -> Dict:
        return {
            'n': self.n,
            'm_star': self.m_star,
            'm_bar': self.m_bar,
            'delta_n': delta_n
        }


def meeting_time_table(nb: NBlockChain,
                       cap: int = DEFAULT_PRODUCT_CAP,
                       direct_limit: int = DEFAULT_DIRECT_SOLVE_LIMIT,
                       max_iter: int = DEFAULT_SOLVER_MAX_ITER,
                       damping: float = 1.0) -> MeetingTimeTable:
    """
    Solve the product-chain system for every ordered pair of words in V_n

    Args:
        nb: The n-block chain
        cap: Maximum number of product states |V_n|^2
        direct_limit: Unknowns above which the damped fixed-point iteration replaces spsolve
        max_iter: Fixed-point iteration budget
        damping: Fixed-point relaxation in (0, 1]

    Returns:
        MeetingTimeTable with E m(u, v) for all pairs (1 on the diagonal), m*_n and m_bar_n
    """
    size = nb.size
    product_states = size * size
    if product_states > cap:
        raise CapExceeded('product states', product_states, cap)

    expectations = np.ones(product_states)
    if size > 1:
        # Product chain restricted to unmet pairs
        P = nb.transition.tocsr()
        product = sparse.kron(P, P, format='csr')
        flat = np.arange(product_states)
        diagonal = flat[::size + 1]
        off_diagonal = flat[flat % (size + 1) != 0]

        rows = product[off_diagonal]
        T = rows[:, off_diagonal].tocsr()
        rhs = 1.0 + np.asarray(rows[:, diagonal].sum(axis=1)).ravel()

        expectations[off_diagonal] = _solve(T, rhs, direct_limit, max_iter, damping)

    expectations = expectations.reshape(size, size)
    expectations.setflags(write=False)

    # Worst pair and stationary average
    weights = nb.pi_n / nb.pi_n.sum()
    m_star = float(expectations.max())
    m_bar = float(weights @ expectations @ weights)

    logger.info(f"Meeting times for n={nb.n}: m*={m_star:.6g}, m_bar={m_bar:.6g} over {size} words")
    return MeetingTimeTable(n=nb.n, expectations=expectations, m_star=m_star, m_bar=m_bar,
                            labels=tuple(nb.labels()))


def _solve(T: sparse.csr_matrix, rhs: np.ndarray, direct_limit: int, max_iter: int, damping: float) -> np.ndarray:
    unknowns = rhs.shape[0]
    if unknowns <= direct_limit:
        system = (sparse.identity(unknowns, format='csr') - T).tocsc()
        solution = spsolve(system, rhs)
        residual = float(np.max(np.abs(system @ solution - rhs)))
        method = 'direct'
    else:
        solution, residual = _fixed_point(T, rhs, max_iter, damping)
        method = 'fixed-point'

    scale = max(1.0, float(np.max(np.abs(solution))))
    if not np.all(np.isfinite(solution)) or residual > RESIDUAL_TOLERANCE * scale:
        raise SolverFailure(f"Meeting-time {method} solve residual {residual:.3e} over {unknowns} unknowns")
    logger.debug(f"Meeting-time {method} solve: {unknowns} unknowns, residual {residual:.2e}")
    return solution


def _fixed_point(T: sparse.csr_matrix, rhs: np.ndarray, max_iter: int, damping: float) -> Tuple[np.ndarray, float]:
    if not 0.0 < damping <= 1.0:
        raise ValueError("damping must lie in (0, 1]")
    solution = rhs.copy()
    residual = float('inf')
    for iteration in range(1, max_iter + 1):
        update = rhs + T @ solution
        residual = float(np.max(np.abs(update - solution)))
        if residual <= RESIDUAL_TOLERANCE * max(1.0, float(np.max(solution))):
            return solution, residual
        solution = (1.0 - damping) * solution + damping * update
        if iteration % 10000 == 0:
            logger.debug(f"Fixed-point iteration {iteration}: residual {residual:.3e}")
    raise SolverFailure(f"Fixed-point iteration stalled at residual {residual:.3e} after {max_iter} iterations")


def brute_force_meeting_times(transition) -> np.ndarray:
    """
    Dense solve of the full |V|²-state absorbing product chain.

    Diagonal product states are absorbing with value 1; used as an oracle for
    meeting_time_table with n = 1.
    """
    P = np.asarray(transition, dtype=np.float64)
    size = P.shape[0]
    product = np.kron(P, P)
    system = np.eye(size * size) - product
    rhs = np.ones(size * size)
    for i in range(size):
        state = i * size + i
        system[state, :] = 0.0
        system[state, state] = 1.0
    return np.linalg.solve(system, rhs).reshape(size, size)


@dataclass(frozen=True)
class SandwichRow:
    n: int
    delta_n: float
    lower: float
    m_bar: float
    m_star: float
    upper_scale: float
    k_n: float
    ordered: bool
    lower_holds: bool
    lower_checked: bool

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class SandwichReport:
    rows: Tuple[SandwichRow, ...]
    n_min: int
    first_lower_n: Optional[int]
    k_max: float
    k_trend_ok: bool

    @property
    def passed(self) -> bool:
        return (all(row.ordered for row in self.rows)
                and all(row.lower_holds for row in self.rows if row.lower_checked)
                and self.k_trend_ok)

    def to_dict(self) -> Dict:
        return {
            'rows': [row.to_dict() for row in self.rows],
            'n_min': self.n_min,
            'first_lower_n': self.first_lower_n,
            'k_max': self.k_max,
            'k_trend_ok': self.k_trend_ok,
            'passed': self.passed
        }


def check_sandwich(chain: MarkovChain, n_range: Iterable[int],
                   n_min: int = DEFAULT_N_MIN,
                   nblock_cap: int = DEFAULT_NBLOCK_CAP,
                   product_cap: int = DEFAULT_PRODUCT_CAP,
                   **solver_options) -> SandwichReport:
    """1/(3Δ_n) <= m_bar_n <= m*_n and the implied constant K_n = m*_n Δ_n / n"""
    rows: List[SandwichRow] = []
    for n in sorted(set(n_range)):
        nb = build_nblock_chain(chain, n, cap=nblock_cap)
        table = meeting_time_table(nb, cap=product_cap, **solver_options)
        delta_n = delta_exact(chain, n)
        lower = 1.0 / (3.0 * delta_n)
        rows.append(SandwichRow(
            n=n, delta_n=delta_n, lower=lower, m_bar=table.m_bar, m_star=table.m_star,
            upper_scale=n / delta_n, k_n=table.m_star * delta_n / n,
            ordered=table.m_bar <= table.m_star,
            lower_holds=lower <= table.m_bar,
            lower_checked=n >= n_min
        ))

    first_lower_n = next((row.n for row in rows if row.lower_holds), None)
    k_max = max((row.k_n for row in rows), default=0.0)
    top_half = rows[len(rows) // 2:]
    ratios = [row.k_n / row.n for row in top_half]
    k_trend_ok = all(later <= earlier * (1.0 + 1e-9) for earlier, later in zip(ratios, ratios[1:]))

    report = SandwichReport(rows=tuple(rows), n_min=n_min, first_lower_n=first_lower_n,
                            k_max=k_max, k_trend_ok=k_trend_ok)
    if not report.passed:
        logger.warning(f"Sandwich check failed for n in {[row.n for row in rows]}")
    return report
