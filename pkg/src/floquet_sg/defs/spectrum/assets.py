import dagster as dg
import numpy as np
import polars as pl

from ...config import Tolerances
from ...output import contour_frame, plain, spectrum_frame
from ...stability import classify_stability, contour_symmetry_defect, spectrum_contours, trace_zero_level
from ..hill.assets import wave_from_summary
from ..solver.resources import floquet_failure


class SpectrumGridConfig(dg.Config):
    """Rectangle (re_min, re_max, im_min, im_max) of the lambda plane and its sampling."""

    box: list[float] = [-1.0, 1.0, -1.5, 1.5]
    nx: int = 200
    ny: int = 200


@dg.asset(io_manager_key='polars_parquet_io_manager')
def spectrum_grid(
    context: dg.AssetExecutionContext,
    solver: dg.ResourceParam[Tolerances],
    config: SpectrumGridConfig,
    wave_summary: pl.LazyFrame
) -> pl.LazyFrame:
    """Sample G_p on the configured grid.

    Parameters
    ----------
    solver : Tolerances
        Integration tolerance and worker count
    config : SpectrumGridConfig
        Box and resolution
    wave_summary : pl.LazyFrame
        Configured wave

    Returns
    -------
    pl.LazyFrame
        Columns re, im, gp with the imaginary part as the outer index
    """
    wave = wave_from_summary(wave_summary)
    if len(config.box) != 4:
        raise dg.Failure(description=f'box needs four numbers, got {config.box}')
    box = (config.box[0], config.box[1], config.box[2], config.box[3])
    context.log.info(f'Starting G_p grid {config.nx} x {config.ny} on {box}')

    with floquet_failure():
        contour = spectrum_contours(wave, box, config.nx, config.ny, solver.ode_rtol, solver.workers)

    context.log.info(f'Completed G_p grid: {contour.failed_points} failed points')
    return spectrum_frame(contour).lazy()


@dg.asset(io_manager_key='polars_parquet_io_manager')
def spectrum_contour_points(
    context: dg.AssetExecutionContext,
    spectrum_grid: pl.LazyFrame
) -> pl.LazyFrame:
    """Trace the zero level curves of the stored G_p grid.

    Returns
    -------
    pl.LazyFrame
        Columns polyline_id, re, im
    """
    grid = spectrum_grid.sort(['im', 're']).collect()
    re_axis = grid['re'].unique().sort().to_numpy()
    im_axis = grid['im'].unique().sort().to_numpy()
    gp = grid['gp'].to_numpy().reshape(len(im_axis), len(re_axis))
    box = (float(re_axis[0]), float(re_axis[-1]), float(im_axis[0]), float(im_axis[-1]))

    contour = trace_zero_level(re_axis, im_axis, gp, box)
    defect = contour_symmetry_defect(contour)
    context.log.info(
        f'Traced {len(contour.polylines)} polylines, '
        f'{len(contour.off_axis_points())} off-axis points, symmetry defect {defect:.3g} cells'
    )
    context.add_output_metadata({
        'polylines': len(contour.polylines),
        'symmetry_defect_cells': float(defect),
        'failed_points': int(np.isnan(gp).sum()),
    })
    return contour_frame(contour).lazy()


@dg.asset
def stability_verdict(
    context: dg.AssetExecutionContext,
    solver: dg.ResourceParam[Tolerances],
    wave_summary: pl.LazyFrame
) -> dg.MaterializeResult:
    """Stable with a negativity audit, or unstable with a certified eigenvalue off the imaginary axis."""
    wave = wave_from_summary(wave_summary)
    context.log.info(f'Starting stability classification for {wave.wave_class.label} wave')

    with floquet_failure():
        verdict = classify_stability(wave, solver)

    context.log.info(f'Completed stability classification: {verdict.kind.value}')
    return dg.MaterializeResult(
        metadata={
            'verdict': verdict.kind.value,
            'class': wave.wave_class.label,
            'report': dg.MetadataValue.json(plain(verdict.to_dict())),  # pyright: ignore[reportArgumentType]
        }
    )


defs = dg.Definitions(
    assets=[
        spectrum_grid,
        spectrum_contour_points,
        stability_verdict,
    ],
)
