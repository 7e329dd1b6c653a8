import csv
import json
import math
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from src.harness import QUANTITIES, SweepRecord
from src.utils import format_scalar

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['n', 'delta_n', 'L', 'h', 'm_star', 'm_bar', 'ec_mean', 'ec_se', 'trials']
EXP_PREFIX = 'exp_'
TRIAL_COLUMNS = ['trial_id', 'n', 'statistic', 'value', 'seed', 'stream']


def _parse_optional_float(text: str) -> Optional[float]:
    return float(text) if text != '' else None


class ResultExporter:
    """Writes sweep series, tables and reports under one output directory"""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, filename: str) -> Path:
        return self.output_dir / filename

    def write_json(self, data: Dict, filename: str) -> Path:
        path = self._path(filename)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
            f.write('\n')
        logger.info(f"📄 Wrote {path}")
        return path

    def _write_rows(self, filename: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self._path(filename)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([value if isinstance(value, str) else format_scalar(value) for value in row])
        logger.info(f"📄 Wrote {path}")
        return path

    def write_sweep_csv(self, records: Sequence[SweepRecord], filename: str = 'sweep.csv') -> Path:
        header = SWEEP_COLUMNS + [EXP_PREFIX + q for q in QUANTITIES]
        rows = []
        for record in records:
            row = [getattr(record, column) for column in SWEEP_COLUMNS]
            row.extend(record.exps.get(q) for q in QUANTITIES)
            rows.append(row)
        return self._write_rows(filename, header, rows)

    def write_delta_csv(self, series: Sequence[tuple], filename: str = 'delta.csv') -> Path:
        """series holds (n, log Δ_n) pairs"""
        rows = [(n, math.exp(log_delta), log_delta, log_delta / n) for n, log_delta in series]
        return self._write_rows(filename, ['n', 'delta_n', 'log_delta_n', 'exponent'], rows)

    def write_table_csv(self, table, filename: str) -> Path:
        return self._write_rows(filename, ['u', 'v', 'expectation'], table.csv_rows())

    def write_trials_csv(self, rows: Iterable[Sequence], filename: str = 'trials.csv') -> Path:
        """rows are (trial_id, n, statistic, value, seed, stream)"""
        return self._write_rows(filename, TRIAL_COLUMNS, rows)

    def write_report_json(self, report, filename: str = 'report.json') -> Path:
        return self.write_json(report.to_dict(), filename)


def read_sweep_csv(path) -> List[SweepRecord]:
    records = []
    with open(Path(path), 'r', encoding='utf-8', newline='') as f:
        for row in csv.DictReader(f):
            exps = {}
            for quantity in QUANTITIES:
                value = row.get(EXP_PREFIX + quantity, '')
                if value != '':
                    exps[quantity] = float(value)
            records.append(SweepRecord(
                n=int(row['n']),
                delta_n=float(row['delta_n']),
                L=float(row['L']),
                h=float(row['h']),
                m_star=_parse_optional_float(row['m_star']),
                m_bar=_parse_optional_float(row['m_bar']),
                ec_mean=_parse_optional_float(row['ec_mean']),
                ec_se=_parse_optional_float(row['ec_se']),
                trials=int(row['trials']),
                exps=exps
            ))
    return records
