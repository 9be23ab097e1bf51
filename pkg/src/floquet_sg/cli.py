import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import TextIO

import pydantic

from .checks import run_identity_suite
from .config import RunConfig, Tolerances
from .errors import (
    AccuracyError,
    ConvergenceError,
    DomainError,
    FloquetError,
    SearchError,
    StructureError,
)
from .hill import band_structure, delta_q_table, lame_band_edges
from .output import (
    contour_frame,
    dump_json,
    hill_frame,
    imag_axis_frame,
    render_contours_svg,
    spectrum_frame,
    write_csv,
)
from .stability import (
    classify_stability,
    contour_symmetry_defect,
    find_unstable_eigenvalue,
    imaginary_axis_spectrum,
    real_periodic_eigenvalue,
    spectrum_contours,
)
from .wave import WaveProfile, wave_profile

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_DOMAIN = 2
EXIT_IO = 3
EXIT_NUMERICS = 4
EXIT_STRUCTURE = 5

DEFAULT_FORMATS = {'spectrum': 'csv', 'hill': 'csv'}

Document = dict[str, object]


def _wave_document(config: RunConfig) -> tuple[Document, WaveProfile]:
    wave = wave_profile(config.c, config.E)
    return {'c': wave.c, 'E': wave.E, 'gamma': wave.gamma, 'class': wave.wave_class.label, 'T': wave.T}, wave


def cmd_classify(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    """Class, period and stability verdict of one wave."""
    document, wave = _wave_document(config)
    verdict = classify_stability(wave, tolerances)
    return document | verdict.to_dict(), EXIT_OK


def cmd_bands(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    document, wave = _wave_document(config)
    bands = band_structure(
        wave,
        mu_min=config.mu_min,
        rtol=tolerances.ode_rtol,
        root_tol=tolerances.root_tol
    )
    return document | {
        'mu0_0': bands.mu0_0,
        'mu1_0': bands.mu1_0,
        'gap': list(bands.gap),
        'mu_star': bands.mu_star,
        'beta_star': bands.beta_star,
        'alpha_star': bands.alpha_star,
        'edges': list(bands.edges),
        'window': list(bands.window),
        'period': bands.period,
        'half_period': bands.half_period,
        'lame_edges': list(bands.lame_edges),
        'lame_deltas': list(bands.lame_deltas),
        'delta_slope_at_zero': bands.delta_slope_at_zero,
    }, EXIT_OK


def cmd_hill(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    """Tabulate the Hill discriminant on a uniform mu grid."""
    document, wave = _wave_document(config)
    edges = lame_band_edges(wave)
    mu_min = min(edges) - 1.0 if config.mu_min is None else config.mu_min
    mu_max = max(edges) + 1.0 if config.mu_max is None else config.mu_max
    mu, delta = delta_q_table(wave, mu_min, mu_max, config.n, tolerances.ode_rtol)
    frame = hill_frame(mu, delta)
    if config.format == 'json':
        return document | {'mu': mu, 'delta_q': delta}, EXIT_OK
    path = write_csv(frame, Path(config.output_path) / 'hill.csv')
    return document | {'files': [str(path)], 'rows': frame.height}, EXIT_OK


def cmd_imag_spectrum(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    document, wave = _wave_document(config)
    spectrum = imaginary_axis_spectrum(wave, config.beta_max, config.n, tolerances.ode_rtol)
    return document | {
        'beta_intervals': [list(interval) for interval in spectrum.beta_intervals],
        'beta_gaps': [list(gap) for gap in spectrum.gaps],
        'beta_max': spectrum.beta_max,
    }, EXIT_OK


def cmd_certify(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    document, wave = _wave_document(config)
    certificate = find_unstable_eigenvalue(wave, tolerances)
    document |= {'certificate': certificate.to_dict()}
    if wave.wave_class.subluminal and wave.wave_class.librational:
        lam, rho = real_periodic_eigenvalue(wave, tolerances)
        document |= {'real_periodic_eigenvalue': {'lambda_star': lam, 'multiplier': rho}}
    return document, EXIT_OK


def cmd_spectrum(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    """Sample G_p on the box and report its zero level set with the imaginary-axis bands.

    A stable wave has spectrum only on the imaginary axis, where G_p touches
    zero without changing sign, so its contour usually has no polylines; the
    bands from ``imaginary_axis_spectrum`` are reported alongside for that
    reason. csv and svg formats write the grid, contour and band CSVs, and svg
    adds the plot.
    """
    document, wave = _wave_document(config)
    contour = spectrum_contours(
        wave,
        config.box,
        config.nx,
        config.ny,
        tolerances.ode_rtol,
        tolerances.workers
    )
    axis = imaginary_axis_spectrum(
        wave,
        max(abs(config.box[2]), abs(config.box[3])),
        config.n,
        tolerances.ode_rtol
    )
    document |= {
        'polyline_count': len(contour.polylines),
        'off_axis_points': len(contour.off_axis_points()),
        'failed_points': contour.failed_points,
        'symmetry_defect_cells': contour_symmetry_defect(contour),
        'imag_axis_beta_intervals': [list(interval) for interval in axis.beta_intervals],
    }
    if config.format == 'json':
        return document | {'polylines': list(contour.polylines)}, EXIT_OK

    out = Path(config.output_path)
    files = [
        write_csv(spectrum_frame(contour), out / 'spectrum_grid.csv'),
        write_csv(contour_frame(contour), out / 'spectrum_contours.csv'),
        write_csv(imag_axis_frame(axis), out / 'spectrum_imag_axis.csv'),
    ]
    if config.format == 'svg':
        title = f'{document["class"]}, c={config.c}, E={config.E}'
        files.append(render_contours_svg(contour, out / 'spectrum.svg', axis, title))
    return document | {'files': [str(path) for path in files]}, EXIT_OK


def cmd_selfcheck(config: RunConfig, tolerances: Tolerances) -> tuple[Document, int]:
    document, wave = _wave_document(config)
    results = run_identity_suite(wave, tolerances)
    passed = all(result.passed for result in results)
    document |= {'checks': [result.to_dict() for result in results], 'passed': passed}
    return document, EXIT_OK if passed else EXIT_CHECKS_FAILED


COMMANDS: dict[str, tuple[Callable[[RunConfig, Tolerances], tuple[Document, int]], str]] = {
    'classify': (cmd_classify, 'Classify a wave and decide its spectral stability'),
    'spectrum': (cmd_spectrum, 'Trace the zero level set of G_p over a box'),
    'bands': (cmd_bands, "Band edges and gap of Hill's equation"),
    'hill': (cmd_hill, 'Tabulate the Hill discriminant'),
    'imag-spectrum': (cmd_imag_spectrum, 'Spectrum on the imaginary axis'),
    'certify': (cmd_certify, 'Instability certificate'),
    'selfcheck': (cmd_selfcheck, 'Run the identity suite'),
}


def make_args() -> argparse.ArgumentParser:
    """Build the parser with one subcommand per analysis, all sharing the wave and solver flags."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--c', type=float, required=True, help='Wave speed')
    common.add_argument('--E', type=float, required=True, help='Total energy of the pendulum orbit')
    common.add_argument('--rtol', type=float, default=None, help='Integration tolerance (overrides FLOQUET_SG_RTOL)')
    common.add_argument('--root-tol', type=float, default=None, help='Band edge tolerance')
    common.add_argument(
        '--box',
        type=float,
        nargs=4,
        metavar=('RE_MIN', 'RE_MAX', 'IM_MIN', 'IM_MAX'),
        default=(-1.0, 1.0, -1.5, 1.5),
        help='Spectral parameter box'
    )
    common.add_argument('--nx', type=int, default=200, help='Grid points along Re lambda')
    common.add_argument('--ny', type=int, default=200, help='Grid points along Im lambda')
    common.add_argument('--mu-min', type=float, default=None, help='Lower end of the mu window')
    common.add_argument('--mu-max', type=float, default=None, help='Upper end of the mu window')
    common.add_argument('--n', type=int, default=400, help='Sample count for scans')
    common.add_argument('--beta-max', type=float, default=3.0, help='Upper end of the imaginary-axis scan')
    common.add_argument('--format', choices=('json', 'csv', 'svg'), default=None, help='Output format')
    common.add_argument('--out', default='.', help='Directory for output files')
    common.add_argument('--workers', type=int, default=None, help='Processes for grid evaluation')
    common.add_argument(
        '--log-level',
        choices=('debug', 'info', 'warning', 'error'),
        default='warning',
        help='Logging level on standard error'
    )

    parser = argparse.ArgumentParser(
        prog='floquet-sg',
        description='Floquet spectra and stability of periodic sine-Gordon traveling waves'
    )
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, (_, help_text) in COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def _configure_logging(level: str) -> None:
    logging.basicConfig(format='%(levelname)s (%(name)s): %(message)s', level=level.upper(), stream=sys.stderr)
    logging.getLogger('dagster').setLevel(level.upper())


def _exit_code(error: Exception) -> int:
    match error:
        case DomainError() | pydantic.ValidationError():
            return EXIT_DOMAIN
        case ConvergenceError() | AccuracyError():
            return EXIT_NUMERICS
        case StructureError() | SearchError():
            return EXIT_STRUCTURE
        case OSError():
            return EXIT_IO
        case _:
            return EXIT_NUMERICS


def main(argv: Sequence[str] | None = None, stdout: TextIO | None = None) -> int:
    """Run one command; the JSON document goes to ``stdout`` and the exit code is returned."""
    stdout = stdout or sys.stdout
    args = make_args().parse_args(argv)
    _configure_logging(args.log_level)

    echo: dict[str, object] = {'command': args.command, 'c': args.c, 'E': args.E}
    try:
        settings = Tolerances.from_env(ode_rtol=args.rtol, root_tol=args.root_tol, workers=args.workers)
        config = RunConfig(
            command=args.command,
            c=args.c,
            E=args.E,
            ode_rtol=settings.ode_rtol,
            root_tol=settings.root_tol,
            box=tuple(args.box),
            nx=args.nx,
            ny=args.ny,
            mu_min=args.mu_min,
            mu_max=args.mu_max,
            n=args.n,
            beta_max=args.beta_max,
            output_path=args.out,
            format=args.format or DEFAULT_FORMATS.get(args.command, 'json'),
            workers=settings.workers
        )
        tolerances = config.tolerances()
        echo = config.echo()
        command, _ = COMMANDS[args.command]
        document, code = command(config, tolerances)
    except (FloquetError, pydantic.ValidationError, OSError) as error:
        code = _exit_code(error)
        if isinstance(error, FloquetError):
            report = error.to_dict()
        else:
            report = {'error': str(error), 'kind': type(error).__name__}
        logger.error(f'{args.command} failed: {report["error"]}')
        stdout.write(dump_json(report | {'config': echo}) + '\n')
        return code

    stdout.write(dump_json(document | {'config': echo}) + '\n')
    return code


if __name__ == '__main__':
    sys.exit(main())
