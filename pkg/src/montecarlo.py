"""
Seeded simulation of coalescing walks, meeting, recurrence, waiting and hitting
times on n-block chains.

Every walker on (V_n, P_n) is realized as a sliding length-n window over a
base-chain trajectory. Time starts at t = 1 with the initial windows.
"""

import math
import bisect
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.chain_core import MarkovChain
from src.errors import CapExceeded, HorizonExceeded, InvalidWord
from src.nblock import NBlockChain, build_nblock_chain, make_word

logger = logging.getLogger(__name__)

DEFAULT_WALKER_CAP = 2 ** 16
DEFAULT_HORIZON = 10 ** 9
UNIFORM_BUFFER = 4096


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream: int

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.Philox(sequence))


def stream_id(n: int, trial: int) -> int:
    """Stream for trial `trial` at block length n; independent of which other n run"""
    return (n << 32) | trial


@dataclass(frozen=True)
class Stationary:
    """Initial n-blocks drawn from μ"""


@dataclass(frozen=True)
class Pair:
    u: Tuple[int, ...]
    v: Tuple[int, ...]


Init = Union[Stationary, Pair]


@dataclass(frozen=True)
class MergeEvent:
    time: int
    survivor: int
    absorbed: int


@dataclass(frozen=True, eq=False)
class CoalescenceRun:
    n: int
    num_walkers_initial: int
    coalescence_time: int
    merge_events: Tuple[MergeEvent, ...]
    pair_meeting_times: Optional[np.ndarray] = None

    @property
    def max_pair_time(self) -> Optional[int]:
        if self.pair_meeting_times is None:
            return None
        return int(self.pair_meeting_times.max())

    def pairs_dominated(self) -> bool:
        return self.pair_meeting_times is None or self.max_pair_time <= self.coalescence_time


@dataclass(frozen=True)
class TrialSummary:
    trials: int
    mean: float
    variance: float
    stderr: float
    second_moment: float
    second_moment_stderr: float

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class TailReport:
    thresholds: Tuple[float, ...]
    empirical: Tuple[float, ...]
    bound: Tuple[float, ...]
    band: float
    max_violation: float
    violated: bool

    def to_dict(self) -> Dict:
        return dict(self.__dict__)


class _SymbolStream:
    """Base-chain symbols drawn by inverse CDF from a buffered uniform supply"""

    def __init__(self, chain: MarkovChain, rng: np.random.Generator):
        self.rng = rng
        self.cumulative = [row.tolist() for row in chain.cumulative]
        initial = np.cumsum(chain.stationary)
        initial[-1] = 1.0
        self.initial_cumulative = initial.tolist()
        self.buffer: List[float] = []
        self.position = 0

    def uniform(self) -> float:
        if self.position >= len(self.buffer):
            self.buffer = self.rng.random(UNIFORM_BUFFER).tolist()
            self.position = 0
        value = self.buffer[self.position]
        self.position += 1
        return value

    def first(self) -> int:
        return bisect.bisect_right(self.initial_cumulative, self.uniform())

    def step(self, state: int) -> int:
        return bisect.bisect_right(self.cumulative[state], self.uniform())

    def block(self, n: int) -> List[int]:
        """Initial n-block from μ: first symbol from π, then extended by P"""
        symbols = [self.first()]
        for _ in range(n - 1):
            symbols.append(self.step(symbols[-1]))
        return symbols


def step_chain(chain: MarkovChain, state: int, rng: np.random.Generator) -> int:
    return int(np.searchsorted(chain.cumulative[state], rng.random(), side='right'))


def _checked_word(chain: MarkovChain, word: Sequence[int], n: int) -> List[int]:
    symbols = list(make_word(chain, word))
    if len(symbols) != n:
        raise InvalidWord(f"Expected a word of length {n}, got {len(symbols)}")
    return symbols


def sample_meeting_time(chain: MarkovChain, n: int, init: Init = Stationary(),
                        rng: Optional[np.random.Generator] = None,
                        horizon: int = DEFAULT_HORIZON) -> int:
    """M_n: first t >= 1 at which the two length-n windows agree"""
    rng = rng if rng is not None else np.random.default_rng()
    stream = _SymbolStream(chain, rng)
    if isinstance(init, Pair):
        x = _checked_word(chain, init.u, n)
        y = _checked_word(chain, init.v, n)
    else:
        x = stream.block(n)
        y = stream.block(n)

    # windows agree exactly when the trailing run of agreeing symbols reaches n
    run = 0
    for a, b in zip(reversed(x), reversed(y)):
        if a != b:
            break
        run += 1
    if run >= n:
        return 1

    a, b = x[-1], y[-1]
    t = 1
    while t < horizon:
        t += 1
        a = stream.step(a)
        b = stream.step(b)
        run = run + 1 if a == b else 0
        if run >= n:
            return t
    raise HorizonExceeded(horizon)


def sample_meeting_profile(chain: MarkovChain, ns: Sequence[int],
                           rng: Optional[np.random.Generator] = None,
                           horizon: int = DEFAULT_HORIZON) -> Dict[int, int]:
    """
    M_n for several n along one pair of stationary trajectories x, y.

    The window for block length n at time t ends at position e = t + n - 1, so
    M_n = e - n + 1 for the first e >= n whose trailing agreement run reaches n.
    """
    rng = rng if rng is not None else np.random.default_rng()
    pending = sorted(set(int(n) for n in ns))
    if not pending or pending[0] < 1:
        raise ValueError("Block lengths must be positive")
    stream = _SymbolStream(chain, rng)
    result: Dict[int, int] = {}

    a, b = stream.first(), stream.first()
    run = 1 if a == b else 0
    position = 1
    while pending:
        while pending and position >= pending[0] and run >= pending[0]:
            n = pending.pop(0)
            result[n] = position - n + 1
        if not pending:
            break
        if position - pending[0] + 1 >= horizon:
            raise HorizonExceeded(horizon)
        position += 1
        a = stream.step(a)
        b = stream.step(b)
        run = run + 1 if a == b else 0
    return result


def _word_code(symbols: Sequence[int], base: int) -> int:
    code = 0
    for symbol in symbols:
        code = code * base + symbol
    return code


def _window_scan(chain: MarkovChain, stream: _SymbolStream, block: List[int], pattern: int,
                 first_time: int, horizon: int) -> int:
    """First t >= first_time whose window equals the pattern code; the window at t = 1 is block"""
    base = chain.size
    modulus = base ** len(block)
    code = _word_code(block, base)
    state = block[-1]
    t = 1
    if first_time <= 1 and code == pattern:
        return 1
    while t < horizon:
        t += 1
        state = stream.step(state)
        code = (code * base + state) % modulus
        if t >= first_time and code == pattern:
            return t
    raise HorizonExceeded(horizon)


def sample_recurrence_time(chain: MarkovChain, n: int, rng: Optional[np.random.Generator] = None,
                           horizon: int = DEFAULT_HORIZON) -> int:
    """R_n(x) = inf{t > 1 : x_t^{t+n-1} = x_1^n} along one stationary trajectory"""
    rng = rng if rng is not None else np.random.default_rng()
    stream = _SymbolStream(chain, rng)
    block = stream.block(n)
    return _window_scan(chain, stream, block, _word_code(block, chain.size), 2, horizon)


def sample_waiting_time(chain: MarkovChain, n: int, rng: Optional[np.random.Generator] = None,
                        horizon: int = DEFAULT_HORIZON) -> int:
    """W_n(x, y) = inf{t >= 1 : y_t^{t+n-1} = x_1^n} for independent stationary x, y"""
    rng = rng if rng is not None else np.random.default_rng()
    stream = _SymbolStream(chain, rng)
    pattern = _word_code(stream.block(n), chain.size)
    return _window_scan(chain, stream, stream.block(n), pattern, 1, horizon)


def sample_hitting_time(chain: MarkovChain, n: int, target: Sequence[int],
                        rng: Optional[np.random.Generator] = None,
                        horizon: int = DEFAULT_HORIZON) -> int:
    """First t >= 1 at which a stationary walker's window equals target"""
    rng = rng if rng is not None else np.random.default_rng()
    target = _checked_word(chain, target, n)
    stream = _SymbolStream(chain, rng)
    return _window_scan(chain, stream, stream.block(n), _word_code(target, chain.size), 1, horizon)


def simulate_coalescence(chain: MarkovChain, n: int, rng: Optional[np.random.Generator] = None,
                         record_pairs: bool = False,
                         walker_cap: int = DEFAULT_WALKER_CAP,
                         horizon: int = DEFAULT_HORIZON,
                         nb: Optional[NBlockChain] = None) -> CoalescenceRun:
    """
    Coalescing walk with one walker per word of V_n.

    Walkers that share a window at the same time merge into one cluster; the
    cluster keeps the smallest member id. All groups formed at a step merge in
    that step.

    Args:
        chain: Base chain
        n: Block length
        rng: Random generator (a fresh default generator when omitted)
        record_pairs: Also record the first co-occupancy time of every pair of walkers
        walker_cap: Maximum number of walkers |V_n|
        horizon: Step limit; HorizonExceeded past it
        nb: Prebuilt n-block chain to reuse across trials

    Returns:
        CoalescenceRun with C_n, the merge events and, if requested, pair meeting times
    """
    rng = rng if rng is not None else np.random.default_rng()
    if nb is None:
        try:
            nb = build_nblock_chain(chain, n, cap=walker_cap)
        except CapExceeded as e:
            raise CapExceeded('walkers', e.found, walker_cap)
    elif nb.size > walker_cap:
        raise CapExceeded('walkers', nb.size, walker_cap)

    # Pair bookkeeping
    size = nb.size
    pair_times = None
    members: Dict[int, List[int]] = {}
    if record_pairs:
        pair_times = np.zeros((size, size), dtype=np.int64)
        np.fill_diagonal(pair_times, 1)
        members = {i: [i] for i in range(size)}

    successor = nb.successor_table
    last_symbol = nb.words[:, -1]
    cumulative = chain.cumulative
    positions = np.arange(size, dtype=np.int64)
    cluster_ids = np.arange(size, dtype=np.int64)
    merges: List[MergeEvent] = []

    t = 1
    while positions.size > 1:
        if t >= horizon:
            raise HorizonExceeded(horizon)
        t += 1
        # Advance every cluster by one symbol
        uniforms = rng.random(positions.size)
        symbols = (uniforms[:, None] >= cumulative[last_symbol[positions]]).sum(axis=1)
        positions = successor[positions, symbols]

        unique_positions, inverse = np.unique(positions, return_inverse=True)
        if unique_positions.size == positions.size:
            continue

        # Merge clusters that share a window
        survivors = np.full(unique_positions.size, size, dtype=np.int64)
        np.minimum.at(survivors, inverse, cluster_ids)
        counts = np.bincount(inverse)
        for group in np.flatnonzero(counts > 1):
            clusters = np.sort(cluster_ids[inverse == group])
            survivor = int(clusters[0])
            for absorbed in clusters[1:].tolist():
                merges.append(MergeEvent(t, survivor, absorbed))
                if record_pairs:
                    left = np.array(members[survivor])
                    right = np.array(members[absorbed])
                    pair_times[np.ix_(left, right)] = t
                    pair_times[np.ix_(right, left)] = t
                    members[survivor].extend(members.pop(absorbed))
        positions = unique_positions
        cluster_ids = survivors

    run = CoalescenceRun(n=n, num_walkers_initial=size, coalescence_time=t,
                         merge_events=tuple(merges), pair_meeting_times=pair_times)
    if len(merges) != size - 1 or not run.pairs_dominated():
        raise RuntimeError(f"Coalescence bookkeeping broken: {len(merges)} merges for {size} walkers")
    return run


def _meeting_trial(chain: MarkovChain, n: int, init: Init, horizon: int, spec: RngSpec) -> int:
    return sample_meeting_time(chain, n, init, spec.generator(), horizon)


def _coalescence_trial(chain: MarkovChain, n: int, nb: NBlockChain, record_pairs: bool,
                       walker_cap: int, horizon: int, spec: RngSpec) -> CoalescenceRun:
    return simulate_coalescence(chain, n, spec.generator(), record_pairs=record_pairs,
                                walker_cap=walker_cap, horizon=horizon, nb=nb)


def _recurrence_trial(chain: MarkovChain, n: int, horizon: int, spec: RngSpec) -> int:
    return sample_recurrence_time(chain, n, spec.generator(), horizon)


def _waiting_trial(chain: MarkovChain, n: int, horizon: int, spec: RngSpec) -> int:
    return sample_waiting_time(chain, n, spec.generator(), horizon)


def _profile_trial(chain: MarkovChain, ns: Tuple[int, ...], horizon: int, spec: RngSpec) -> Dict[int, int]:
    return sample_meeting_profile(chain, ns, spec.generator(), horizon)


def run_trials(task: Callable[[RngSpec], object], seed: int, streams: Sequence[int], workers: int = 1) -> List:
    """Run independent trials, one RNG stream each; results come back ordered by stream"""
    specs = [RngSpec(seed, stream) for stream in streams]
    if workers <= 1 or len(specs) < 2:
        return [task(spec) for spec in specs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, specs, chunksize=max(1, len(specs) // (4 * workers))))


def sample_meeting_times(chain: MarkovChain, n: int, trials: int, seed: int,
                         init: Init = Stationary(), workers: int = 1,
                         horizon: int = DEFAULT_HORIZON) -> List[int]:
    streams = [stream_id(n, trial) for trial in range(trials)]
    return run_trials(partial(_meeting_trial, chain, n, init, horizon), seed, streams, workers)


def sample_coalescence_runs(chain: MarkovChain, n: int, trials: int, seed: int,
                            record_pairs: bool = False, workers: int = 1,
                            walker_cap: int = DEFAULT_WALKER_CAP,
                            horizon: int = DEFAULT_HORIZON) -> List[CoalescenceRun]:
    try:
        nb = build_nblock_chain(chain, n, cap=walker_cap)
    except CapExceeded as e:
        raise CapExceeded('walkers', e.found, walker_cap)
    streams = [stream_id(n, trial) for trial in range(trials)]
    task = partial(_coalescence_trial, chain, n, nb, record_pairs, walker_cap, horizon)
    runs = run_trials(task, seed, streams, workers)
    logger.debug(f"{trials} coalescence runs at n={n} over {nb.size} walkers")
    return runs


def sample_recurrence_times(chain: MarkovChain, n: int, trials: int, seed: int, workers: int = 1,
                            horizon: int = DEFAULT_HORIZON) -> List[int]:
    streams = [stream_id(n, trial) for trial in range(trials)]
    return run_trials(partial(_recurrence_trial, chain, n, horizon), seed, streams, workers)


def sample_waiting_times(chain: MarkovChain, n: int, trials: int, seed: int, workers: int = 1,
                         horizon: int = DEFAULT_HORIZON) -> List[int]:
    streams = [stream_id(n, trial) for trial in range(trials)]
    return run_trials(partial(_waiting_trial, chain, n, horizon), seed, streams, workers)


def summarize(samples: Sequence[float]) -> TrialSummary:
    values = np.asarray(samples, dtype=np.float64)
    trials = int(values.size)
    if trials == 0:
        raise ValueError("Cannot summarize an empty sample")
    variance = float(values.var(ddof=1)) if trials > 1 else 0.0
    squares = values ** 2
    square_variance = float(squares.var(ddof=1)) if trials > 1 else 0.0
    return TrialSummary(
        trials=trials,
        mean=float(values.mean()),
        variance=variance,
        stderr=math.sqrt(variance / trials),
        second_moment=float(squares.mean()),
        second_moment_stderr=math.sqrt(square_variance / trials)
    )


def coalescence_moments_check(times: Sequence[int], m_star: float, num_words: int, n: int,
                              base_size: int) -> Dict:
    """
    Compare Monte Carlo moments of C_n with
    E(C_n) <= e (log|V_n| + 1) m*_n and E(C_n²) <= e² (3 log|V| + 1) n² E(C_n)².
    """
    summary = summarize(times)
    first_bound = math.e * (math.log(num_words) + 1.0) * m_star
    second_bound = math.e ** 2 * (3.0 * math.log(base_size) + 1.0) * n ** 2 * summary.mean ** 2
    return {
        'n': n,
        'mean': summary.mean,
        'stderr': summary.stderr,
        'first_bound': first_bound,
        'first_ok': summary.mean <= first_bound + 3.0 * summary.stderr,
        'second_moment': summary.second_moment,
        'second_bound': second_bound,
        'second_ok': summary.second_moment <= second_bound + 3.0 * summary.second_moment_stderr
    }


def tail_profile(samples: Sequence[float], m_star: float, confidence: float = 0.99) -> TailReport:
    """
    Empirical survival at the sample deciles against exp(-t / (e m*)).

    A violation is an excess beyond the Dvoretzky-Kiefer-Wolfowitz band at the
    given confidence.
    """
    values = np.asarray(samples, dtype=np.float64)
    if values.size == 0:
        raise ValueError("tail_profile needs at least one sample")
    if m_star <= 0:
        raise ValueError("m_star must be positive")

    band = math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * values.size))
    thresholds = np.quantile(values, np.arange(1, 10) / 10.0, method='lower')
    empirical = np.array([float(np.mean(values > t)) for t in thresholds])
    bound = np.exp(-thresholds / (math.e * m_star))
    excess = empirical - bound - band

    report = TailReport(
        thresholds=tuple(float(t) for t in thresholds),
        empirical=tuple(float(e) for e in empirical),
        bound=tuple(float(b) for b in bound),
        band=band,
        max_violation=max(0.0, float(excess.max())),
        violated=bool(np.any(excess > 0))
    )
    if report.violated:
        logger.warning(f"Tail bound exceeded by {report.max_violation:.4f} beyond the DKW band")
    return report


def sample_meeting_profiles(chain: MarkovChain, ns: Sequence[int], pairs: int, seed: int, workers: int = 1,
                            horizon: int = DEFAULT_HORIZON) -> List[Dict[int, int]]:
    ns = tuple(sorted(set(int(n) for n in ns)))
    streams = [stream_id(ns[-1], pair) for pair in range(pairs)]
    return run_trials(partial(_profile_trial, chain, ns, horizon), seed, streams, workers)
