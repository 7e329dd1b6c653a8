import csv
import json

import pytest

import main
from src.chain_core import validate_chain
from tests.chains import LN2, two_state_chain


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    for name in ('NBLOCK_CAP', 'PRODUCT_CAP', 'WALKER_CAP', 'WORKERS', 'LOG_FILE'):
        monkeypatch.delenv(name, raising=False)


def _stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_analyze(chain_file, uniform, capsys):
    assert main.main(['analyze', str(chain_file(uniform))]) == 0
    data = _stdout_json(capsys)
    assert data['L'] == pytest.approx(LN2, abs=1e-12)
    assert data['is_mme'] is True
    assert data['log_base'] == 'nats'


def test_analyze_rejects_periodic_chain(tmp_path, capsys):
    path = tmp_path / 'periodic.json'
    path.write_text(json.dumps({'states': ['a', 'b'], 'transition': [[0, 1], [1, 0]]}), encoding='utf-8')
    assert main.main(['analyze', str(path)]) == 1


def test_nblock_export(chain_file, golden, tmp_path, capsys):
    out = tmp_path / 'exports' / 'golden3.json'
    assert main.main(['nblock', str(chain_file(golden)), '--n', '3', '--export', str(out)]) == 0
    assert _stdout_json(capsys)['words'] == 5
    assert len(json.loads(out.read_text(encoding='utf-8'))['states']) == 5


def test_nblock_cap_exit_code(chain_file, uniform, monkeypatch):
    monkeypatch.setenv('NBLOCK_CAP', '4')
    assert main.main(['nblock', str(chain_file(uniform)), '--n', '3']) == 2


def test_delta_to_stdout(chain_file, uniform, capsys):
    assert main.main(['delta', str(chain_file(uniform)), '--n-max', '5']) == 0
    rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert len(rows) == 5
    assert float(rows[-1]['delta_n']) == pytest.approx(2.0 ** -5, rel=1e-12)


def test_meet_exact_with_pair(chain_file, uniform, tmp_path, capsys):
    args = ['meet', str(chain_file(uniform)), '--n', '1', '--exact', '--pair', 'a', 'b', '--out', str(tmp_path)]
    assert main.main(args) == 0
    data = _stdout_json(capsys)
    assert data['m_star'] == pytest.approx(3.0)
    assert data['m_bar'] == pytest.approx(2.0)
    assert data['expectation'] == pytest.approx(3.0)
    assert (tmp_path / 'meeting_table_n1.csv').exists()


def test_meet_monte_carlo_statistics(chain_file, tmp_path, capsys):
    path = str(chain_file(two_state_chain()))
    for statistic in ('meeting', 'recurrence', 'waiting'):
        args = ['meet', path, '--n', '2', '--mc', '--trials', '50', '--seed', '3', '--statistic', statistic,
                '--out', str(tmp_path)]
        assert main.main(args) == 0
        data = _stdout_json(capsys)
        assert data['trials'] == 50 and data['statistic'] == statistic
        assert (tmp_path / f'{statistic}_n2.csv').exists()


def test_meet_rejects_unknown_label(chain_file, uniform):
    assert main.main(['meet', str(chain_file(uniform)), '--n', '1', '--mc', '--pair', 'a', 'z']) == 1


def test_meet_rejects_pair_over_hyphenated_labels(chain_file):
    chain = validate_chain([[0.5, 0.5], [0.5, 0.5]], ['a-b', 'a'])
    args = ['meet', str(chain_file(chain)), '--n', '1', '--mc', '--trials', '5', '--pair', 'a-b', 'a']
    assert main.main(args) == 1


def test_coalesce(chain_file, uniform, capsys):
    args = ['coalesce', str(chain_file(uniform)), '--n', '3', '--trials', '20', '--seed', '1', '--record-pairs']
    assert main.main(args) == 0
    data = _stdout_json(capsys)
    assert data['walkers'] == 8
    assert data['pairs_dominated'] == 20
    assert data['moments']['first_ok']


def test_sweep_is_deterministic(chain_file, biased, tmp_path):
    path = str(chain_file(biased))
    for name in ('first', 'second'):
        args = ['sweep', path, '--n-lo', '1', '--n-hi', '8', '--trials', '20', '--seed', '7',
                '--out', str(tmp_path / name)]
        assert main.main(args) == 0
    for filename in ('sweep.csv', 'exponents.json'):
        assert (tmp_path / 'first' / filename).read_bytes() == (tmp_path / 'second' / filename).read_bytes()
    exponents = json.loads((tmp_path / 'first' / 'exponents.json').read_text(encoding='utf-8'))['exponents']
    assert exponents['delta']['n_window'] == [5, 8]


def test_sweep_usage_error(chain_file, uniform, tmp_path):
    args = ['sweep', str(chain_file(uniform)), '--n-lo', '5', '--n-hi', '2', '--out', str(tmp_path)]
    assert main.main(args) == 2


def test_report_with_config(chain_file, golden, tmp_path):
    config = tmp_path / 'report.json'
    config.write_text(json.dumps({
        'coalescence_grid': [2, 3], 'coalescence_trials': 20, 'meeting_grid': [2], 'meeting_pairs': 5,
        'regression_n_lo': 1, 'regression_n_hi': 4, 'separation_n': 2, 'separation_trials': 20
    }), encoding='utf-8')
    out = tmp_path / 'out'
    assert main.main(['report', str(chain_file(golden)), '--config', str(config), '--out', str(out)]) == 0
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['checks'][0]['details']['is_mme'] is True


def test_report_rejects_unknown_config_keys(chain_file, golden, tmp_path):
    config = tmp_path / 'report.json'
    config.write_text(json.dumps({'epsilon': 0.1, 'colour': 'blue'}), encoding='utf-8')
    assert main.main(['report', str(chain_file(golden)), '--config', str(config)]) == 2
