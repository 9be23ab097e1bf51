import dagster as dg
import polars as pl

from ...config import Tolerances
from ...hill import band_structure, delta_q_table, lame_band_edges
from ...output import hill_frame, plain
from ...wave import WaveProfile, wave_profile
from ..solver.resources import floquet_failure


class WaveConfig(dg.Config):
    """Speed and energy of the traveling wave analysed by this run."""

    c: float
    E: float


class HillConfig(dg.Config):
    mu_min: float | None = None
    mu_max: float | None = None
    n: int = 400


def wave_from_summary(wave_summary: pl.LazyFrame) -> WaveProfile:
    """Rebuild the profile from the one-row ``wave_summary`` table.

    Parameters
    ----------
    wave_summary : pl.LazyFrame
        Output of the ``wave_summary`` asset

    Returns
    -------
    WaveProfile
        Profile with the same speed and energy
    """
    row = wave_summary.collect().row(0, named=True)
    return wave_profile(row['c'], row['E'])


@dg.asset(io_manager_key='polars_parquet_io_manager')
def wave_summary(context: dg.AssetExecutionContext, config: WaveConfig) -> pl.LazyFrame:
    """Classify the configured wave and record its period and Lame parameters.

    Returns
    -------
    pl.LazyFrame
        One row with c, E, gamma, class, T, min_period, k and scale
    """
    context.log.info(f'Starting wave summary for c={config.c} E={config.E}')
    with floquet_failure():
        wave = wave_profile(config.c, config.E)

    summary = pl.LazyFrame({
        'c': [wave.c],
        'E': [wave.E],
        'gamma': [wave.gamma],
        'class': [wave.wave_class.label],
        'T': [wave.T],
        'min_period': [wave.min_period],
        'k': [wave.k],
        'scale': [wave.scale],
    })

    context.log.info(f'Completed wave summary: {wave.wave_class.label}, T={wave.T:.12g}')
    return summary


@dg.asset(io_manager_key='polars_parquet_io_manager')
def hill_discriminant(
    context: dg.AssetExecutionContext,
    solver: dg.ResourceParam[Tolerances],
    config: HillConfig,
    wave_summary: pl.LazyFrame
) -> pl.LazyFrame:
    """Tabulate Delta_q over a mu window that by default brackets every Lame edge by one unit.

    Returns
    -------
    pl.LazyFrame
        Columns mu and delta_q; delta_q is NaN where the Abel check failed
    """
    wave = wave_from_summary(wave_summary)
    edges = lame_band_edges(wave)
    mu_min = min(edges) - 1.0 if config.mu_min is None else config.mu_min
    mu_max = max(edges) + 1.0 if config.mu_max is None else config.mu_max
    context.log.info(f'Starting Hill discriminant table on [{mu_min}, {mu_max}] with {config.n} points')

    with floquet_failure():
        mu, delta = delta_q_table(wave, mu_min, mu_max, config.n, solver.ode_rtol)
        frame = hill_frame(mu, delta)

    context.log.info(f'Completed Hill discriminant table: {frame["delta_q"].is_nan().sum()} failed points')
    return frame.lazy()


@dg.asset
def band_structure_report(
    context: dg.AssetExecutionContext,
    solver: dg.ResourceParam[Tolerances],
    wave_summary: pl.LazyFrame
) -> dg.MaterializeResult:
    """Band edges, the open gap and its distinguished points, checked against the Lame edges."""
    wave = wave_from_summary(wave_summary)
    context.log.info(f'Starting band structure for {wave.wave_class.label} wave')

    with floquet_failure():
        bands = band_structure(wave, rtol=solver.ode_rtol, root_tol=solver.root_tol)

    context.log.info(f'Completed band structure: gap {bands.gap}')
    return dg.MaterializeResult(
        metadata={
            'points': dg.MetadataValue.json(plain({  # pyright: ignore[reportArgumentType]
                'mu0_0': bands.mu0_0,
                'mu1_0': bands.mu1_0,
                'mu_star': bands.mu_star,
                'beta_star': bands.beta_star,
                'alpha_star': bands.alpha_star,
            })),
            'gap': dg.MetadataValue.json(plain(bands.gap)),  # pyright: ignore[reportArgumentType]
            'edges': dg.MetadataValue.json(plain(bands.edges)),  # pyright: ignore[reportArgumentType]
            'lame_deltas': dg.MetadataValue.json(plain(bands.lame_deltas)),  # pyright: ignore[reportArgumentType]
            'period': bands.period,
            'half_period': bands.half_period,
        }
    )


defs = dg.Definitions(
    assets=[
        wave_summary,
        hill_discriminant,
        band_structure_report,
    ],
)
