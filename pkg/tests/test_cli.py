import csv
import json

import pytest

import cli

WIDE_PAIR = '{"type": "atomic", "atoms": [[0.25, 0.5], [1.75, 0.5]]}'
UNIT_ATOM = '{"type": "pointmass", "x": 1, "w": 1}'
BETA = '{"type": "beta23"}'


def run_json(tmp_path, *args):
    out = tmp_path / 'out.json'
    code = cli.main([*args, '--format', 'json', '--output', str(out)])
    return code, json.loads(out.read_text()) if out.exists() else None


class TestCommands:
    def test_solve(self, tmp_path):
        code, data = run_json(tmp_path, 'solve', '--input', WIDE_PAIR)
        assert code == 0
        assert data['law']['knots'] == pytest.approx([0.0, 0.5, 3.0])
        assert data['law']['curvatures'] == pytest.approx([1.0, 0.2])
        assert data['convergence']['scheme'] == 'exact'

    def test_solve_from_file(self, tmp_path):
        spec = tmp_path / 'mu.json'
        spec.write_text(UNIT_ATOM)
        code, data = run_json(tmp_path, 'solve', '-i', str(spec))
        assert code == 0
        assert data['law']['knots'] == pytest.approx([0.0, 2.0])

    def test_verify_atomic(self, tmp_path):
        code, data = run_json(tmp_path, 'verify', '--input', WIDE_PAIR, '--theta', '0.5')
        assert code == 0
        assert data['passed']
        assert data['value'] == pytest.approx(0.5)

    def test_verify_beta(self, tmp_path):
        code, data = run_json(tmp_path, 'verify', '--input', BETA, '--tol', '1e-4')
        assert code == 0
        assert data['astar']['passed']
        assert data['certificate_checked_against'].startswith('discretization')

    def test_simulate(self, tmp_path):
        code, data = run_json(tmp_path, 'simulate', '--input', UNIT_ATOM, '--n', '50000', '--seed', '7')
        assert code == 0
        assert data['n_trials'] == 50000
        assert abs(data['estimate'] - 0.5) < 4 * data['std_error']

    def test_simulate_challenger(self, tmp_path):
        code, data = run_json(tmp_path, 'simulate', '--input', UNIT_ATOM, '--n', '1000',
                              '--challenger', UNIT_ATOM)
        assert code == 0
        # An atom at the mean beats U[0, 2] half the time
        assert 0.4 < data['estimate'] < 0.6

    def test_curves_csv(self, tmp_path):
        out = tmp_path / 'curves.csv'
        assert cli.main(['curves', '--input', WIDE_PAIR, '--output', str(out)]) == 0
        rows = list(csv.reader(out.read_text().splitlines()))
        assert rows[0] == ['x', 'F_mu', 'F_nu', 'C_mu', 'C_nu', 'P_mu', 'P_nu', 'density_nu']
        values = [[float(v) for v in row] for row in rows[1:]]
        assert len(values) >= cli.CURVE_POINTS
        xs = [row[0] for row in values]
        assert all(b > a for a, b in zip(xs, xs[1:]))
        assert all(c_nu >= c_mu - 1e-9 for _, _, _, c_mu, c_nu, _, _, _ in values)
        assert values[-1][2] == pytest.approx(1.0)

    def test_discretize_csv(self, tmp_path):
        out = tmp_path / 'bins.csv'
        assert cli.main(['discretize', '--input', BETA, '--max-level', '3', '--format', 'csv',
                         '--output', str(out)]) == 0
        rows = list(csv.reader(out.read_text().splitlines()))
        assert rows[0] == ['location', 'weight']
        assert len(rows) == 9
        assert sum(float(w) for _, w in rows[1:]) == pytest.approx(1.0)

    def test_text_output(self, capsys):
        assert cli.main(['solve', '--input', WIDE_PAIR]) == 0
        out = capsys.readouterr().out
        assert 'Equilibrium law' in out
        assert 'converged' in out


class TestExitCodes:
    @pytest.mark.parametrize('args', [
        ['solve', '--input', '{"type": "atomic", "atoms": '],
        ['solve', '--input', '{"type": "unknown"}'],
        ['solve', '--input', WIDE_PAIR, '--theta', '1'],
        ['solve', '--input', 'no/such/file.json'],
        ['optimize', '--input', WIDE_PAIR],
        ['solve'],
    ])
    def test_input_errors(self, args, capsys):
        assert cli.main(args) == 1
        assert 'error' in capsys.readouterr().err

    def test_unwritable_output(self, tmp_path, capsys):
        assert cli.main(['solve', '--input', WIDE_PAIR, '--output', str(tmp_path)]) == 1
        assert 'error' in capsys.readouterr().err

    def test_failed_verification(self, tmp_path, mocker):
        report = {'astar': {'passed': False, 'worst_violation': None}, 'certificate': {},
                  'best_response': {}, 'value': 0.5, 'passed': False}
        patched = mocker.patch('cli.verification_report', return_value=report)
        code, data = run_json(tmp_path, 'verify', '--input', WIDE_PAIR)
        assert code == 2
        assert patched.call_count == 1
        assert data['passed'] is False


class TestConfiguration:
    def test_environment_defaults(self, monkeypatch):
        monkeypatch.setenv('CONTEST_THETA', '0.25')
        monkeypatch.setenv('CONTEST_MAX_LEVEL', '9')
        monkeypatch.setenv('CONTEST_WORKERS', '2')
        args = cli.build_parser().parse_args(['solve', '--input', UNIT_ATOM])
        config = cli.RunConfig(**vars(args))
        assert config.theta == 0.25
        assert config.max_level == 9
        assert config.workers == 2

    def test_output_format_defaults(self):
        assert cli.RunConfig('curves', UNIT_ATOM).output_format == 'csv'
        assert cli.RunConfig('solve', UNIT_ATOM).output_format == 'text'
        assert cli.RunConfig('solve', UNIT_ATOM, format='json').output_format == 'json'

    def test_validate(self):
        with pytest.raises(cli.InputError):
            cli.RunConfig('solve', UNIT_ATOM, tol=0.0).validate()
        with pytest.raises(cli.InputError):
            cli.RunConfig('simulate', UNIT_ATOM, n_trials=0).validate()
