import io
import json

import pytest

from floquet_sg import cli
from floquet_sg.cli import (
    EXIT_DOMAIN,
    EXIT_IO,
    EXIT_OK,
    EXIT_STRUCTURE,
    main,
    make_args,
)


def run(*argv: str) -> tuple[int, dict]:
    stdout = io.StringIO()
    code = main(list(argv), stdout=stdout)
    return code, json.loads(stdout.getvalue())


def test_every_command_is_registered():
    parser = make_args()
    for command in ('classify', 'spectrum', 'bands', 'hill', 'imag-spectrum', 'certify', 'selfcheck'):
        args = parser.parse_args([command, '--c', '2', '--E', '3'])
        assert args.command == command


def test_negative_energy_parses_as_a_value():
    args = make_args().parse_args(['classify', '--c', '0.5', '--E', '-1', '--box', '-1', '1', '-2', '2'])
    assert args.E == -1.0
    assert args.box == [-1.0, 1.0, -2.0, 2.0]


def test_luminal_speed_is_a_domain_error():
    code, document = run('classify', '--c', '1', '--E', '3')
    assert code == EXIT_DOMAIN
    assert document['kind'] == 'DomainError'
    assert 'luminal' in document['error']
    assert document['config']['c'] == 1.0


def test_rtol_out_of_range_is_a_domain_error():
    code, document = run('hill', '--c', '2', '--E', '3', '--rtol', '1e-3')
    assert code == EXIT_DOMAIN
    assert document['kind'] == 'ValidationError'


def test_empty_mu_window_is_a_structure_error(tmp_path):
    code, document = run(
        'hill', '--c', '2', '--E', '3', '--mu-min', '1', '--mu-max', '0', '--out', str(tmp_path)
    )
    assert code == EXIT_STRUCTURE
    assert document['kind'] == 'StructureError'
    assert document['config']['mu_min'] == 1.0


def test_certify_subluminal_rotational_is_a_search_error():
    code, document = run('certify', '--c', '0.5', '--E', '-1')
    assert code == EXIT_STRUCTURE
    assert document['kind'] == 'SearchError'
    assert document['diagnostics'] == {'class': 'subluminal-rotational'}


def test_hill_writes_csv(tmp_path):
    code, document = run('hill', '--c', '2', '--E', '3', '--n', '40', '--out', str(tmp_path))
    assert code == EXIT_OK
    path = tmp_path / 'hill.csv'
    assert document['files'] == [str(path)]
    assert document['rows'] == 40
    lines = path.read_text().splitlines()
    assert lines[0] == 'mu,delta_q'
    assert len(lines) == 41
    assert document['class'] == 'superluminal-rotational'
    assert document['config']['format'] == 'csv'


def test_hill_json_table():
    code, document = run('hill', '--c', '2', '--E', '3', '--n', '25', '--format', 'json',
                         '--mu-min', '-1', '--mu-max', '0.5')
    assert code == EXIT_OK
    assert len(document['mu']) == len(document['delta_q']) == 25
    assert document['mu'][0] == -1.0 and document['mu'][-1] == 0.5


def test_unwritable_output_is_an_io_error(tmp_path):
    blocker = tmp_path / 'blocker'
    blocker.write_text('not a directory')
    code, document = run('hill', '--c', '2', '--E', '3', '--n', '20', '--out', str(blocker))
    assert code == EXIT_IO
    assert document['kind'] == 'FileExistsError'


def test_imag_spectrum_reports_the_gap():
    code, document = run('imag-spectrum', '--c', '2', '--E', '3', '--n', '200', '--beta-max', '3')
    assert code == EXIT_OK
    lo, hi = document['beta_gaps'][0]
    assert lo == pytest.approx(1.2247448713915890, abs=1e-6)
    assert hi == pytest.approx(2.1213203435596424, abs=1e-6)
    assert document['gamma'] == pytest.approx(1.0 / 3.0)


def test_output_is_stable_json():
    first = io.StringIO()
    second = io.StringIO()
    main(['hill', '--c', '2', '--E', '3', '--n', '10', '--format', 'json'], stdout=first)
    main(['hill', '--c', '2', '--E', '3', '--n', '10', '--format', 'json'], stdout=second)
    assert first.getvalue() == second.getvalue()


@pytest.mark.slow
def test_classify_stable_wave():
    code, document = run('classify', '--c', '0.5', '--E', '-1')
    assert code == EXIT_OK
    assert document['verdict'] == 'stable'
    assert document['class'] == 'subluminal-rotational'
    assert document['audit']['max_gp'] < 0.0


@pytest.mark.slow
def test_bands_superluminal_librational():
    code, document = run('bands', '--c', str(3.0**0.5), '--E', '1')
    assert code == EXIT_OK
    assert document['alpha_star'] == pytest.approx(1.0, abs=1e-7)
    assert document['mu_star'] == pytest.approx(-0.125, abs=1e-8)
    assert document['beta_star'] == pytest.approx(0.5**0.5, abs=1e-7)
    assert document['T'] == pytest.approx(10.48823, abs=1e-5)


@pytest.mark.slow
def test_certify_superluminal_rotational():
    code, document = run('certify', '--c', '2', '--E', '3')
    assert code == EXIT_OK
    assert document['certificate']['lambda_star']['re'] > 0.0
    assert document['certificate']['gp_residual'] < 1e-8


@pytest.mark.slow
def test_spectrum_writes_files(tmp_path):
    code, document = run(
        'spectrum', '--c', '2', '--E', '3', '--box', '-0.5', '0.5', '-2.5', '2.5',
        '--nx', '16', '--ny', '16', '--n', '100', '--format', 'svg', '--out', str(tmp_path)
    )
    assert code == EXIT_OK
    names = sorted(path.name for path in tmp_path.iterdir())
    assert names == ['spectrum.svg', 'spectrum_contours.csv', 'spectrum_grid.csv', 'spectrum_imag_axis.csv']
    assert document['failed_points'] == 0
    assert (tmp_path / 'spectrum_grid.csv').read_text().splitlines()[0] == 're,im,gp'
    assert (tmp_path / 'spectrum_imag_axis.csv').read_text().splitlines()[0] == 'beta_lo,beta_hi'
    gap_lo = document['imag_axis_beta_intervals'][0][1]
    assert gap_lo == pytest.approx(1.2247448713915890, abs=1e-6)


@pytest.mark.slow
def test_selfcheck_superluminal_rotational():
    code, document = run('selfcheck', '--c', '2', '--E', '3')
    assert code == EXIT_OK, [check for check in document['checks'] if not check['passed']]
    assert document['passed'] is True


def test_commands_receive_the_run_config_tolerances(monkeypatch):
    def report(config, tolerances):
        return {'tolerances': tolerances.model_dump()}, EXIT_OK

    monkeypatch.setitem(cli.COMMANDS, 'hill', (report, 'report tolerances'))
    monkeypatch.setenv('FLOQUET_SG_RTOL', '1e-8')
    code, document = run('hill', '--c', '2', '--E', '3', '--root-tol', '1e-11', '--workers', '3')
    assert code == EXIT_OK
    used = document['tolerances']
    assert used['ode_rtol'] == document['config']['ode_rtol'] == 1e-8
    assert used['root_tol'] == document['config']['root_tol'] == 1e-11
    assert used['workers'] == document['config']['workers'] == 3


@pytest.mark.slow
def test_stable_spectrum_has_no_polylines_but_reports_axis_bands():
    code, document = run(
        'spectrum', '--c', '0.5', '--E', '-1', '--box', '-0.5', '0.5', '-1.5', '1.5',
        '--nx', '16', '--ny', '16', '--n', '100', '--format', 'json'
    )
    assert code == EXIT_OK
    assert document['off_axis_points'] == 0
    assert document['imag_axis_beta_intervals'][0][0] == pytest.approx(0.0, abs=1e-12)
    lo, hi = document['imag_axis_beta_intervals'][0][1], document['imag_axis_beta_intervals'][1][0]
    assert (lo, hi) == pytest.approx((0.612372435695795, 1.0606601717798212), abs=1e-6)


@pytest.mark.slow
def test_spectrum_files_are_byte_identical_across_runs(tmp_path):
    for name in ('first', 'second'):
        code, _ = run(
            'spectrum', '--c', '2', '--E', '3', '--box', '-0.5', '0.5', '-2.5', '2.5',
            '--nx', '16', '--ny', '16', '--n', '100', '--format', 'svg', '--out', str(tmp_path / name)
        )
        assert code == EXIT_OK
    first = sorted((tmp_path / 'first').iterdir())
    assert len(first) == 4
    for path in first:
        assert path.read_bytes() == (tmp_path / 'second' / path.name).read_bytes()
