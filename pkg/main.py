import os
import sys
import csv
import math
import json
import logging
import argparse
from pathlib import Path
from dotenv import load_dotenv

from src.config import Config, ReportConfig
from src.chain_core import coalescence_exponent, load_chain, product_mixing_time
from src.errors import (
    CapExceeded, ChainError, InsufficientPoints, InvalidChain, InvalidWord, UsageError
)
from src.exact import meeting_time_table
from src.exporter import ResultExporter
from src.harness import QUANTITIES, estimate_exponent, run_sweep, theorem_report
from src.montecarlo import (
    Pair, Stationary, coalescence_moments_check, sample_coalescence_runs, sample_meeting_times,
    sample_recurrence_times, sample_waiting_times, stream_id, summarize
)
from src.nblock import build_nblock_chain, delta_exact, log_delta_exact
from src.utils import format_scalar, parse_word, setup_logging

logger = logging.getLogger(__name__)

VALIDATION_EXIT = 1
USAGE_EXIT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Coalescence and meeting times of n-block Markov chains')
    parser.add_argument('--log-level', help='Override LOG_LEVEL')
    parser.add_argument('--log-file', help='Override LOG_FILE')
    parser.add_argument('--workers', type=int, help='Worker processes for Monte Carlo trials (overrides WORKERS)')
    sub = parser.add_subparsers(dest='command', required=True)

    analyze = sub.add_parser('analyze', help='Spectral summary: L, entropy, MME verdict')
    analyze.add_argument('chain', help='Chain JSON file')

    nblock = sub.add_parser('nblock', help='Build the n-block chain')
    nblock.add_argument('chain')
    nblock.add_argument('--n', type=int, required=True)
    nblock.add_argument('--export', help='Write the n-block chain as chain JSON')

    delta = sub.add_parser('delta', help='Collision probabilities Δ_n as CSV')
    delta.add_argument('chain')
    delta.add_argument('--n-max', type=int, required=True)
    delta.add_argument('--out', help='Output directory (stdout when omitted)')

    meet = sub.add_parser('meet', help='Meeting times of two independent walkers')
    meet.add_argument('chain')
    meet.add_argument('--n', type=int, required=True)
    mode = meet.add_mutually_exclusive_group()
    mode.add_argument('--exact', action='store_true', help='Solve the product-chain system (default)')
    mode.add_argument('--mc', action='store_true', help='Monte Carlo sampling')
    meet.add_argument('--trials', type=int, default=1000)
    meet.add_argument('--seed', type=int, default=0)
    meet.add_argument('--pair', nargs=2, metavar=('U', 'V'), help='Start words, hyphen-joined labels')
    meet.add_argument('--statistic', choices=['meeting', 'recurrence', 'waiting'], default='meeting')
    meet.add_argument('--out', help='Output directory for the table or trial CSV')

    coalesce = sub.add_parser('coalesce', help='Coalescing walk from every n-block')
    coalesce.add_argument('chain')
    coalesce.add_argument('--n', type=int, required=True)
    coalesce.add_argument('--trials', type=int, default=100)
    coalesce.add_argument('--seed', type=int, default=0)
    coalesce.add_argument('--record-pairs', action='store_true')
    coalesce.add_argument('--out', help='Output directory for the trial CSV')

    sweep = sub.add_parser('sweep', help='Sweep n and regress exponents')
    sweep.add_argument('chain')
    sweep.add_argument('--n-lo', type=int, required=True)
    sweep.add_argument('--n-hi', type=int, required=True)
    sweep.add_argument('--trials', type=int, default=200)
    sweep.add_argument('--seed', type=int, default=0)
    sweep.add_argument('--out', required=True, help='Output directory')

    report = sub.add_parser('report', help='Finite-n checks of the limit theorems')
    report.add_argument('chain')
    report.add_argument('--config', help='Report config JSON')
    report.add_argument('--out', help='Output directory for report.json')

    return parser


def emit_json(data: dict):
    print(json.dumps(data, indent=2, ensure_ascii=False))


def solver_options(config: Config) -> dict:
    return {
        'direct_limit': config.direct_solve_limit,
        'max_iter': config.solver_max_iter,
        'damping': config.solver_damping
    }


def cmd_analyze(args, config: Config) -> int:
    chain = load_chain(args.chain)
    summary = coalescence_exponent(chain, tol=config.mme_tolerance, max_iter=config.perron_max_iter)
    data = summary.to_dict()
    data['states'] = list(chain.states)
    data['stationary'] = chain.stationary.tolist()
    data['product_mixing_time'] = product_mixing_time(chain, eps=0.5)
    logger.info(f"📊 L={summary.L:.12g} h={summary.entropy:.12g} mme={summary.is_mme}")
    emit_json(data)
    return 0


def cmd_nblock(args, config: Config) -> int:
    chain = load_chain(args.chain)
    nb = build_nblock_chain(chain, args.n, cap=config.nblock_cap)
    emit_json({'n': nb.n, 'words': nb.size, 'transitions': int(nb.transition.nnz),
               'delta_n': float((nb.pi_n ** 2).sum())})
    if args.export:
        export_path = Path(args.export)
        ResultExporter(export_path.parent).write_json(nb.to_chain_dict(), export_path.name)
    return 0


def cmd_delta(args, config: Config) -> int:
    if args.n_max < 1:
        raise UsageError("--n-max must be at least 1")
    chain = load_chain(args.chain)
    series = [(n, log_delta_exact(chain, n)) for n in range(1, args.n_max + 1)]
    if args.out:
        ResultExporter(args.out).write_delta_csv(series)
        return 0
    writer = csv.writer(sys.stdout, lineterminator='\n')
    writer.writerow(['n', 'delta_n', 'log_delta_n', 'exponent'])
    for n, log_delta in series:
        writer.writerow([n, format_scalar(math.exp(log_delta)),
                         format_scalar(log_delta), format_scalar(log_delta / n)])
    return 0


def _pair_init(chain, pair):
    try:
        return Pair(parse_word(pair[0], chain.states), parse_word(pair[1], chain.states))
    except KeyError as e:
        raise InvalidWord(f"Unknown state label {e} in --pair")
    except ValueError as e:
        raise InvalidWord(str(e))


def cmd_meet(args, config: Config) -> int:
    chain = load_chain(args.chain)
    if args.n < 1:
        raise UsageError("--n must be at least 1")

    if not args.mc:
        if args.statistic != 'meeting':
            raise UsageError("--statistic applies to --mc only")
        nb = build_nblock_chain(chain, args.n, cap=config.nblock_cap)
        table = meeting_time_table(nb, cap=config.product_cap, **solver_options(config))
        data = table.summary(delta_exact(chain, args.n))
        if args.pair:
            init = _pair_init(chain, args.pair)
            data['pair'] = list(args.pair)
            data['expectation'] = float(table.expectations[nb.index_of(init.u), nb.index_of(init.v)])
        emit_json(data)
        if args.out:
            ResultExporter(args.out).write_table_csv(table, f"meeting_table_n{args.n}.csv")
        return 0

    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    workers = config.workers
    horizon = config.safety_horizon
    if args.statistic == 'meeting':
        init = _pair_init(chain, args.pair) if args.pair else Stationary()
        samples = sample_meeting_times(chain, args.n, args.trials, args.seed, init=init,
                                       workers=workers, horizon=horizon)
    elif args.pair:
        raise UsageError("--pair applies to meeting times only")
    elif args.statistic == 'recurrence':
        samples = sample_recurrence_times(chain, args.n, args.trials, args.seed, workers, horizon)
    else:
        samples = sample_waiting_times(chain, args.n, args.trials, args.seed, workers, horizon)

    data = summarize(samples).to_dict()
    data.update({'n': args.n, 'statistic': args.statistic, 'seed': args.seed})
    emit_json(data)
    if args.out:
        rows = [(trial, args.n, args.statistic, value, args.seed, stream_id(args.n, trial))
                for trial, value in enumerate(samples)]
        ResultExporter(args.out).write_trials_csv(rows, f"{args.statistic}_n{args.n}.csv")
    return 0


def cmd_coalesce(args, config: Config) -> int:
    chain = load_chain(args.chain)
    if args.n < 1 or args.trials < 1:
        raise UsageError("--n and --trials must be at least 1")
    runs = sample_coalescence_runs(chain, args.n, args.trials, args.seed, record_pairs=args.record_pairs,
                                   workers=config.workers, walker_cap=config.walker_cap,
                                   horizon=config.safety_horizon)
    times = [run.coalescence_time for run in runs]
    data = summarize(times).to_dict()
    data.update({'n': args.n, 'walkers': runs[0].num_walkers_initial, 'seed': args.seed})
    if args.record_pairs:
        data['pairs_dominated'] = sum(run.pairs_dominated() for run in runs)

    try:
        nb = build_nblock_chain(chain, args.n, cap=config.nblock_cap)
        table = meeting_time_table(nb, cap=config.product_cap, **solver_options(config))
        data['moments'] = coalescence_moments_check(times, table.m_star, nb.size, args.n, chain.size)
    except CapExceeded as e:
        logger.warning(f"⚠️ Moment bounds skipped: {e}")

    emit_json(data)
    if args.out:
        rows = [(trial, args.n, 'coalescence', value, args.seed, stream_id(args.n, trial))
                for trial, value in enumerate(times)]
        ResultExporter(args.out).write_trials_csv(rows, f"coalescence_n{args.n}.csv")
    return 0


def cmd_sweep(args, config: Config) -> int:
    chain = load_chain(args.chain)
    records = run_sweep(chain, args.n_lo, args.n_hi, args.trials, args.seed, caps=config.caps(),
                        workers=config.workers, horizon=config.safety_horizon, **solver_options(config))
    exporter = ResultExporter(args.out)
    exporter.write_sweep_csv(records)

    exponents = {}
    for quantity in QUANTITIES:
        try:
            exponents[quantity] = estimate_exponent(records, quantity).to_dict()
        except InsufficientPoints as e:
            logger.warning(f"⚠️ No exponent for {quantity}: {e}")
    exporter.write_json({'seed': args.seed, 'trials': args.trials, 'L': records[0].L, 'h': records[0].h,
                         'exponents': exponents}, 'exponents.json')
    logger.info(f"✅ Sweep over n in [{args.n_lo}, {args.n_hi}] written to {args.out}")
    return 0


def cmd_report(args, config: Config) -> int:
    chain = load_chain(args.chain)
    report_config = ReportConfig.from_file(args.config) if args.config else ReportConfig()
    report = theorem_report(chain, report_config, caps=config.caps(), workers=config.workers,
                            horizon=config.safety_horizon, **solver_options(config))
    if args.out:
        ResultExporter(args.out).write_report_json(report)
    else:
        emit_json(report.to_dict())
    status = '✅ all checks passed' if report.passed else '❌ some checks failed'
    logger.info(f"Theorem report: {status}")
    return 0


COMMANDS = {
    'analyze': cmd_analyze,
    'nblock': cmd_nblock,
    'delta': cmd_delta,
    'meet': cmd_meet,
    'coalesce': cmd_coalesce,
    'sweep': cmd_sweep,
    'report': cmd_report
}


def main(argv=None) -> int:
    """Parse arguments, configure logging and dispatch one subcommand"""
    if os.path.exists('.env'):
        load_dotenv('.env')

    args = build_parser().parse_args(argv)
    config = Config()
    if args.log_level:
        config.log_level = args.log_level
    if args.log_file:
        config.log_file = args.log_file
    if args.workers is not None:
        config.workers = args.workers

    setup_logging(config.log_level, config.log_file)

    if not config.validate():
        logger.error("Configuration validation failed. Check your environment variables.")
        return USAGE_EXIT

    try:
        return COMMANDS[args.command](args, config)
    except (InvalidChain, InvalidWord) as e:
        logger.error(f"❌ {e}")
        return VALIDATION_EXIT
    except (CapExceeded, UsageError, InsufficientPoints) as e:
        logger.error(f"❌ {e}")
        return USAGE_EXIT
    except ChainError as e:
        logger.error(f"❌ {e}")
        return VALIDATION_EXIT
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        return VALIDATION_EXIT


if __name__ == "__main__":
    sys.exit(main())
