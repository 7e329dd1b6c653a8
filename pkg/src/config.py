import os
import json
import logging
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import List

from src.errors import UsageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepCaps:
    nblock_cap: int = 2 ** 20
    product_cap: int = 10 ** 6
    walker_cap: int = 2 ** 16


class Config:
    """Runtime configuration using environment variables"""

    def __init__(self):
        # Logging
        self.log_level = os.getenv('LOG_LEVEL', 'INFO')
        self.log_file = os.getenv('LOG_FILE') or None

        # State-space caps
        self.nblock_cap = int(os.getenv('NBLOCK_CAP', str(2 ** 20)))
        self.product_cap = int(os.getenv('PRODUCT_CAP', str(10 ** 6)))
        self.walker_cap = int(os.getenv('WALKER_CAP', str(2 ** 16)))

        # Solvers
        self.direct_solve_limit = int(os.getenv('DIRECT_SOLVE_LIMIT', str(10 ** 5)))
        self.solver_max_iter = int(os.getenv('SOLVER_MAX_ITER', str(10 ** 6)))
        self.solver_damping = float(os.getenv('SOLVER_DAMPING', '1.0'))
        self.perron_max_iter = int(os.getenv('PERRON_MAX_ITER', str(10 ** 6)))
        self.mme_tolerance = float(os.getenv('MME_TOLERANCE', '1e-9'))

        # Simulation
        self.safety_horizon = int(os.getenv('SAFETY_HORIZON', str(10 ** 9)))
        self.workers = int(os.getenv('WORKERS', '1'))

    def validate(self) -> bool:
        """Validate that configured values are usable"""
        problems = []
        for name in ('nblock_cap', 'product_cap', 'walker_cap', 'direct_solve_limit',
                     'solver_max_iter', 'perron_max_iter', 'safety_horizon'):
            if getattr(self, name) < 1:
                problems.append(f"{name.upper()} must be positive")
        if not 0.0 < self.solver_damping <= 1.0:
            problems.append("SOLVER_DAMPING must lie in (0, 1]")
        if self.mme_tolerance <= 0.0:
            problems.append("MME_TOLERANCE must be positive")
        if self.workers < 1:
            problems.append("WORKERS must be at least 1")

        for problem in problems:
            logger.error(f"Invalid configuration: {problem}")
        return not problems

    def caps(self) -> SweepCaps:
        return SweepCaps(
            nblock_cap=self.nblock_cap,
            product_cap=self.product_cap,
            walker_cap=self.walker_cap
        )


@dataclass
class ReportConfig:
    """Settings for theorem_report, loadable from the JSON given to `report --config`"""
    epsilon: float = 0.15
    seed: int = 0
    coalescence_grid: List[int] = field(default_factory=lambda: [4, 6, 8, 10])
    coalescence_trials: int = 2000
    coalescence_ceiling: float = 0.05
    too_early_bound: float = 0.05
    too_late_bound: float = 0.5
    meeting_grid: List[int] = field(default_factory=lambda: [8, 12, 16])
    meeting_pairs: int = 50
    meeting_fraction: float = 0.9
    regression_n_lo: int = 4
    regression_n_hi: int = 8
    regression_tolerance: float = 0.05
    separation_n: int = 12
    separation_trials: int = 2000
    separation_gap: float = 0.05
    mme_tolerance: float = 1e-9

    @classmethod
    def from_dict(cls, data: dict) -> 'ReportConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise UsageError(f"Unknown report config keys: {', '.join(unknown)}")
        config = cls(**data)
        config.check()
        return config

    @classmethod
    def from_file(cls, path) -> 'ReportConfig':
        try:
            with open(Path(path), 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"Cannot read report config {path}: {e}")
        if not isinstance(data, dict):
            raise UsageError(f"Report config {path} must hold a JSON object")
        return cls.from_dict(data)

    def check(self):
        if self.epsilon <= 0:
            raise UsageError("epsilon must be positive")
        for name in ('coalescence_grid', 'meeting_grid'):
            grid = getattr(self, name)
            if not grid or any(n < 1 for n in grid) or list(grid) != sorted(grid):
                raise UsageError(f"{name} must be a non-empty increasing list of positive integers")
        if self.regression_n_hi - self.regression_n_lo + 1 < 4:
            raise UsageError("regression window needs at least 4 values of n")
        for name in ('coalescence_trials', 'meeting_pairs', 'separation_trials'):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)
