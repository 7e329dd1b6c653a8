import logging

import pytest

from src.config import Config, ReportConfig, SweepCaps
from src.errors import UsageError
from src.utils import format_scalar, parse_word, separator_labels, setup_logging, word_label


def test_config_defaults(monkeypatch):
    for name in ('NBLOCK_CAP', 'PRODUCT_CAP', 'WALKER_CAP', 'SOLVER_DAMPING', 'WORKERS'):
        monkeypatch.delenv(name, raising=False)
    config = Config()
    assert config.validate()
    assert config.caps() == SweepCaps()


def test_config_reads_environment(monkeypatch):
    monkeypatch.setenv('PRODUCT_CAP', '5000')
    monkeypatch.setenv('WORKERS', '3')
    config = Config()
    assert config.caps().product_cap == 5000
    assert config.workers == 3


def test_config_validation_logs_problems(monkeypatch, caplog):
    monkeypatch.setenv('SOLVER_DAMPING', '1.5')
    monkeypatch.setenv('WALKER_CAP', '0')
    with caplog.at_level(logging.ERROR):
        assert not Config().validate()
    assert 'SOLVER_DAMPING' in caplog.text
    assert 'WALKER_CAP' in caplog.text


def test_report_config_defaults():
    config = ReportConfig()
    assert config.epsilon == 0.15
    assert config.coalescence_grid == [4, 6, 8, 10]
    assert config.meeting_grid == [8, 12, 16]
    assert ReportConfig.from_dict(config.to_dict()) == config


@pytest.mark.parametrize("data", [
    {'unknown': 1},
    {'epsilon': 0.0},
    {'coalescence_grid': [6, 4]},
    {'regression_n_lo': 4, 'regression_n_hi': 6},
    {'meeting_pairs': 0},
])
def test_report_config_rejects_bad_values(data):
    with pytest.raises(UsageError):
        ReportConfig.from_dict(data)


def test_report_config_from_file(tmp_path):
    path = tmp_path / 'cfg.json'
    path.write_text('{"seed": 42, "epsilon": 0.2}', encoding='utf-8')
    config = ReportConfig.from_file(path)
    assert config.seed == 42 and config.epsilon == 0.2
    with pytest.raises(UsageError):
        ReportConfig.from_file(tmp_path / 'missing.json')


def test_word_labels_round_trip():
    labels = ['x', 'y', 'z']
    assert word_label((0, 2, 1), labels) == 'x-z-y'
    assert parse_word('x-z-y', labels) == (0, 2, 1)
    with pytest.raises(KeyError):
        parse_word('x-w', labels)


def test_parse_word_refuses_labels_with_separator():
    assert separator_labels(['a-b', 'a', 'c']) == ['a-b']
    with pytest.raises(ValueError):
        parse_word('a-b-a', ['a-b', 'a'])


@pytest.mark.parametrize("value,expected", [
    (None, ''),
    (3, '3'),
    (0.1, '0.10000000000000001'),
    (1.0, '1'),
    (float('inf'), 'inf'),
])
def test_format_scalar(value, expected):
    assert format_scalar(value) == expected


def test_setup_logging_creates_log_directory(tmp_path):
    log_file = tmp_path / 'logs' / 'run.log'
    setup_logging('DEBUG', str(log_file))
    logging.getLogger('src.test').debug('written')
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert 'written' in log_file.read_text(encoding='utf-8')
    setup_logging('WARNING')
