"""
Sweeps over n, exponent regression and the theorem-level report.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from src.chain_core import MarkovChain, coalescence_exponent, product_mixing_time
from src.config import ReportConfig, SweepCaps
from src.errors import CapExceeded, InsufficientPoints, UsageError
from src.exact import check_sandwich, meeting_time_table
from src.montecarlo import (
    DEFAULT_HORIZON,
    sample_coalescence_runs,
    sample_meeting_profiles,
    sample_meeting_times,
    sample_recurrence_times,
    sample_waiting_times,
    summarize,
)
from src.nblock import build_nblock_chain, log_delta_exact

logger = logging.getLogger(__name__)

MIN_REGRESSION_POINTS = 4
QUANTITIES = ('delta', 'm_star', 'm_bar', 'ec_mean')
PASS, FAIL, SKIPPED = 'pass', 'fail', 'skipped'


@dataclass
class SweepRecord:
    n: int
    delta_n: float
    L: float
    h: float
    m_star: Optional[float] = None
    m_bar: Optional[float] = None
    ec_mean: Optional[float] = None
    ec_se: Optional[float] = None
    trials: int = 0
    exps: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ExponentEstimate:
    quantity: str
    slope: float
    stderr: float
    n_window: Tuple[int, int]
    points: int

    def to_dict(self) -> Dict:
        return {
            'quantity': self.quantity,
            'slope': self.slope,
            'stderr': self.stderr,
            'n_window': list(self.n_window),
            'points': self.points
        }


@dataclass
class CheckResult:
    name: str
    statement: str
    status: str
    details: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'statement': self.statement,
            'status': self.status,
            'details': self.details
        }


@dataclass
class TheoremReport:
    states: List[str]
    summary: Dict
    config: Dict
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.status != FAIL for check in self.checks)

    def to_dict(self) -> Dict:
        return {
            'states': self.states,
            'summary': self.summary,
            'config': self.config,
            'checks': [check.to_dict() for check in self.checks],
            'passed': self.passed
        }


def run_sweep(chain: MarkovChain, n_lo: int, n_hi: int, trials: int, seed: int,
              caps: SweepCaps = SweepCaps(), workers: int = 1,
              horizon: int = DEFAULT_HORIZON,
              **solver_options) -> List[SweepRecord]:
    """
    One record per n in [n_lo, n_hi]: Δ_n always, exact meeting times while the
    product cap allows, Monte Carlo C_n while the walker cap allows.

    Args:
        chain: Base chain
        n_lo: First block length (>= 1)
        n_hi: Last block length (>= n_lo)
        trials: Coalescence trials per n
        seed: Root seed; trial streams are keyed by (n, trial)
        caps: n-block, product and walker caps
        workers: Worker processes for the Monte Carlo trials
        horizon: Step limit per simulation
        **solver_options: direct_limit, max_iter, damping for meeting_time_table

    Returns:
        List of SweepRecord ordered by n; fields past a cap stay None
    """
    if not 1 <= n_lo <= n_hi:
        raise UsageError(f"Invalid sweep range [{n_lo}, {n_hi}]")
    if trials < 1:
        raise UsageError("A sweep needs at least one trial per n")

    summary = coalescence_exponent(chain)
    exact_available = True
    simulation_available = True
    records = []

    for n in range(n_lo, n_hi + 1):
        # Collision probability
        log_delta = log_delta_exact(chain, n)
        record = SweepRecord(n=n, delta_n=math.exp(log_delta), L=summary.L, h=summary.entropy)
        record.exps['delta'] = log_delta / n

        # Exact meeting times
        if exact_available:
            try:
                nb = build_nblock_chain(chain, n, cap=caps.nblock_cap)
                table = meeting_time_table(nb, cap=caps.product_cap, **solver_options)
                record.m_star = table.m_star
                record.m_bar = table.m_bar
                record.exps['m_star'] = math.log(table.m_star) / n
                record.exps['m_bar'] = math.log(table.m_bar) / n
            except CapExceeded as e:
                logger.warning(f"Exact meeting times stop at n={n}: {e}")
                exact_available = False

        # Coalescence simulation
        if simulation_available:
            try:
                runs = sample_coalescence_runs(chain, n, trials, seed, workers=workers,
                                               walker_cap=caps.walker_cap, horizon=horizon)
                stats = summarize([run.coalescence_time for run in runs])
                record.ec_mean = stats.mean
                record.ec_se = stats.stderr
                record.trials = stats.trials
                record.exps['ec_mean'] = math.log(stats.mean) / n
            except CapExceeded as e:
                logger.warning(f"Coalescence simulation stops at n={n}: {e}")
                simulation_available = False

        logger.info(f"Sweep n={n}: " + ", ".join(f"{k}={v:.6f}" for k, v in record.exps.items()))
        records.append(record)

    return records


def fit_exponent(ns: Sequence[int], log_values: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of log(value) on n, with its standard error"""
    if len(ns) < MIN_REGRESSION_POINTS:
        raise InsufficientPoints(len(ns), MIN_REGRESSION_POINTS)
    fit = linregress(np.asarray(ns, dtype=np.float64), np.asarray(log_values, dtype=np.float64))
    return float(fit.slope), float(fit.stderr)


def default_window(records: Sequence[SweepRecord]) -> Tuple[int, int]:
    """Top half of the computed n range"""
    ns = sorted(record.n for record in records)
    if not ns:
        raise InsufficientPoints(0, MIN_REGRESSION_POINTS)
    return ns[len(ns) // 2], ns[-1]


def estimate_exponent(records: Sequence[SweepRecord], quantity: str,
                      n_window: Optional[Tuple[int, int]] = None) -> ExponentEstimate:
    if quantity not in QUANTITIES:
        raise UsageError(f"Unknown quantity '{quantity}', expected one of {', '.join(QUANTITIES)}")
    n_lo, n_hi = n_window if n_window is not None else default_window(records)
    if n_lo > n_hi:
        raise UsageError(f"Invalid regression window [{n_lo}, {n_hi}]")

    points = [(record.n, record.exps[quantity] * record.n)
              for record in sorted(records, key=lambda r: r.n)
              if n_lo <= record.n <= n_hi and quantity in record.exps]
    slope, stderr = fit_exponent([n for n, _ in points], [value for _, value in points])
    return ExponentEstimate(quantity=quantity, slope=slope, stderr=stderr,
                            n_window=(n_lo, n_hi), points=len(points))


def _relative_ok(slope: float, target: float, tolerance: float) -> bool:
    if target == 0.0:
        return abs(slope) <= tolerance
    return abs(slope - target) <= tolerance * abs(target)


def _trichotomy_check(chain: MarkovChain, summary, tolerance: float) -> CheckResult:
    L, h = summary.L, summary.entropy
    nonnegative = L >= -1e-12
    below_entropy = L <= h + 1e-9
    trivial_consistent = (L == 0.0) == (chain.size == 1)
    mme_consistent = summary.is_mme == (abs(L - h) <= tolerance)
    ok = nonnegative and below_entropy and trivial_consistent and mme_consistent
    return CheckResult(
        name='trichotomy',
        statement='0 <= L <= h, L = 0 iff |V| = 1, L = h iff the chain is the measure of maximal entropy',
        status=PASS if ok else FAIL,
        details={
            'L': L, 'h': h, 'gap': h - L, 'is_mme': summary.is_mme,
            'mme_distance': summary.mme_distance,
            'nonnegative': nonnegative, 'below_entropy': below_entropy,
            'trivial_consistent': trivial_consistent, 'mme_consistent': mme_consistent
        }
    )


def _exact_checks(chain: MarkovChain, L: float, config: ReportConfig, caps: SweepCaps,
                  solver_options: Dict) -> List[CheckResult]:
    n_range = range(config.regression_n_lo, config.regression_n_hi + 1)
    statement_sandwich = '1/(3 Delta_n) <= m_bar_n <= m*_n <= K n / Delta_n'
    statement_regression = '(1/n) log m*_n and (1/n) log m_bar_n tend to L'
    try:
        sandwich = check_sandwich(chain, n_range, nblock_cap=caps.nblock_cap,
                                  product_cap=caps.product_cap, **solver_options)
    except CapExceeded as e:
        logger.warning(f"Exact checks skipped: {e}")
        return [CheckResult('sandwich', statement_sandwich, SKIPPED, {'reason': str(e)}),
                CheckResult('meeting_regression', statement_regression, SKIPPED, {'reason': str(e)})]

    ns = [row.n for row in sandwich.rows]
    slopes = {}
    for quantity in ('m_star', 'm_bar'):
        logs = [math.log(getattr(row, quantity)) for row in sandwich.rows]
        slope, stderr = fit_exponent(ns, logs)
        slopes[quantity] = {'slope': slope, 'stderr': stderr,
                            'ok': _relative_ok(slope, L, config.regression_tolerance)}
    delta_slope, _ = fit_exponent(ns, [math.log(row.delta_n) for row in sandwich.rows])
    regression_ok = all(entry['ok'] for entry in slopes.values())

    return [
        CheckResult('sandwich', statement_sandwich, PASS if sandwich.passed else FAIL, sandwich.to_dict()),
        CheckResult('meeting_regression', statement_regression, PASS if regression_ok else FAIL,
                    {'L': L, 'n_window': [ns[0], ns[-1]], 'delta_slope': delta_slope, **slopes})
    ]


def _coalescence_checks(chain: MarkovChain, L: float, config: ReportConfig, caps: SweepCaps,
                        workers: int, horizon: int) -> List[CheckResult]:
    eps = config.epsilon
    rows = []
    for n in config.coalescence_grid:
        try:
            runs = sample_coalescence_runs(chain, n, config.coalescence_trials, config.seed,
                                           workers=workers, walker_cap=caps.walker_cap, horizon=horizon)
        except CapExceeded as e:
            logger.warning(f"Coalescence grid stops at n={n}: {e}")
            break
        rates = np.log([run.coalescence_time for run in runs]) / n
        rows.append({
            'n': n,
            'mean_rate': float(rates.mean()),
            'outside': float(np.mean(np.abs(rates - L) > eps)),
            'too_early': float(np.mean(rates < L - eps)),
            'too_late': float(np.mean(rates > L + eps))
        })

    statement = 'P(|(1/n) log C_n - L| > eps) decays in n'
    if not rows:
        reason = {'reason': 'walker cap exceeded on the whole grid'}
        return [CheckResult('coalescence_concentration', statement, SKIPPED, reason),
                CheckResult('too_early', 'P((1/n) log C_n < L - eps) is small', SKIPPED, reason),
                CheckResult('too_late', 'P((1/n) log C_n > L + eps) is small', SKIPPED, reason)]

    fractions = [row['outside'] for row in rows]
    non_increasing = all(later <= earlier for earlier, later in zip(fractions, fractions[1:]))
    last = rows[-1]
    concentration_ok = non_increasing and last['outside'] <= config.coalescence_ceiling
    return [
        CheckResult('coalescence_concentration', statement, PASS if concentration_ok else FAIL,
                    {'epsilon': eps, 'ceiling': config.coalescence_ceiling,
                     'non_increasing': non_increasing, 'grid': rows}),
        CheckResult('too_early', 'P((1/n) log C_n < L - eps) is small',
                    PASS if last['too_early'] <= config.too_early_bound else FAIL,
                    {'n': last['n'], 'frequency': last['too_early'], 'bound': config.too_early_bound}),
        CheckResult('too_late', 'P((1/n) log C_n > L + eps) is small',
                    PASS if last['too_late'] <= config.too_late_bound else FAIL,
                    {'n': last['n'], 'frequency': last['too_late'], 'bound': config.too_late_bound})
    ]


def _meeting_check(chain: MarkovChain, L: float, config: ReportConfig, workers: int, horizon: int) -> CheckResult:
    eps = config.epsilon
    profiles = sample_meeting_profiles(chain, config.meeting_grid, config.meeting_pairs, config.seed,
                                       workers=workers, horizon=horizon)
    grid = []
    for n in sorted(set(config.meeting_grid)):
        rates = np.array([math.log(profile[n]) / n for profile in profiles])
        grid.append({'n': n, 'mean_rate': float(rates.mean()),
                     'within': float(np.mean(np.abs(rates - L) <= eps))})
    ok = grid[-1]['within'] >= config.meeting_fraction
    return CheckResult(
        name='meeting_almost_sure',
        statement='(1/n) log M_n tends to L along almost every pair of trajectories',
        status=PASS if ok else FAIL,
        details={'epsilon': eps, 'pairs': config.meeting_pairs, 'fraction': config.meeting_fraction, 'grid': grid}
    )


def _separation_check(chain: MarkovChain, summary, config: ReportConfig, workers: int, horizon: int) -> CheckResult:
    statement = 'waiting and recurrence times grow at rate h, meeting times at rate L'
    if summary.is_mme:
        return CheckResult('separation', statement, SKIPPED, {'reason': 'L = h for this chain'})

    n = config.separation_n
    trials = config.separation_trials
    waiting = np.log(sample_waiting_times(chain, n, trials, config.seed, workers, horizon)) / n
    recurrence = np.log(sample_recurrence_times(chain, n, trials, config.seed, workers, horizon)) / n
    meeting = np.log(sample_meeting_times(chain, n, trials, config.seed, workers=workers, horizon=horizon)) / n
    gap = float(waiting.mean() - meeting.mean())
    return CheckResult(
        name='separation',
        statement=statement,
        status=PASS if gap >= config.separation_gap else FAIL,
        details={'n': n, 'trials': trials, 'waiting_rate': float(waiting.mean()),
                 'recurrence_rate': float(recurrence.mean()), 'meeting_rate': float(meeting.mean()),
                 'gap': gap, 'required_gap': config.separation_gap, 'asymptotic_gap': summary.gap}
    )


def theorem_report(chain: MarkovChain, config: ReportConfig = ReportConfig(),
                   caps: SweepCaps = SweepCaps(), workers: int = 1,
                   horizon: int = DEFAULT_HORIZON, **solver_options) -> TheoremReport:
    """Finite-n checks of the limit theorems, one CheckResult per statement"""
    summary = coalescence_exponent(chain, tol=config.mme_tolerance)
    L = summary.L
    logger.info(f"Building theorem report: L={L:.9f}, h={summary.entropy:.9f}")

    checks = [_trichotomy_check(chain, summary, config.mme_tolerance)]
    checks.extend(_exact_checks(chain, L, config, caps, solver_options))
    checks.extend(_coalescence_checks(chain, L, config, caps, workers, horizon))
    checks.append(_meeting_check(chain, L, config, workers, horizon))
    checks.append(_separation_check(chain, summary, config, workers, horizon))

    for check in checks:
        if check.status == FAIL:
            logger.warning(f"Check '{check.name}' failed")
        else:
            logger.info(f"Check '{check.name}': {check.status}")

    context = summary.to_dict()
    context['product_mixing_time'] = product_mixing_time(chain, eps=0.5)
    return TheoremReport(states=list(chain.states), summary=context, config=config.to_dict(), checks=checks)
