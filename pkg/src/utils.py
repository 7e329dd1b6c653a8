import math
import logging
from pathlib import Path
from typing import List, Optional, Sequence

WORD_SEPARATOR = '-'


def separator_labels(labels: Sequence[str]) -> List[str]:
    """Labels that would make hyphen-joined words ambiguous"""
    return [label for label in labels if WORD_SEPARATOR in label]


def word_label(symbols: Sequence[int], labels: Sequence[str]) -> str:
    """Render a word as hyphen-joined state labels"""
    return WORD_SEPARATOR.join(labels[s] for s in symbols)


def parse_word(text: str, labels: Sequence[str]) -> tuple:
    """
    Inverse of word_label.

    Raises:
        ValueError: a state label contains the separator, so the split is ambiguous
        KeyError: an unknown label
    """
    ambiguous = separator_labels(labels)
    if ambiguous:
        raise ValueError(f"Cannot split words over labels containing '{WORD_SEPARATOR}': {', '.join(ambiguous)}")
    index = {label: i for i, label in enumerate(labels)}
    return tuple(index[part] for part in text.split(WORD_SEPARATOR))


def format_scalar(value) -> str:
    """Format a scalar for CSV output with 17 significant digits"""
    if value is None:
        return ''
    if isinstance(value, (bool, int)) and not isinstance(value, float):
        return str(int(value))
    value = float(value)
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return format(value, '.17g')


def setup_logging(log_level: str = 'INFO', log_file: Optional[str] = None):
    """Setup logging configuration"""
    log_format = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    handlers = [logging.StreamHandler()]

    if log_file:
        log_dir = Path(log_file).parent
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format=log_format,
        handlers=handlers,
        force=True
    )
