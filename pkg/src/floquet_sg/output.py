import json
import math
from collections.abc import Mapping, Sequence
from pathlib import Path

import dagster as dg
import matplotlib
import numpy as np
import patito as pt
import polars as pl
from matplotlib.figure import Figure

from .stability import ImagAxisSpectrum, SpectrumContour

log = dg.get_dagster_logger(__name__)

SVG_HASH_SALT = 'floquet-sg'


class SpectrumSample(pt.Model):
    """One grid sample of G_p; ``gp`` is NaN where integration failed."""

    re: float
    im: float
    gp: float


class HillSample(pt.Model):
    mu: float
    delta_q: float


class ContourPoint(pt.Model):
    polyline_id: int = pt.Field(ge=0)
    re: float
    im: float


class ImagAxisBand(pt.Model):
    """One interval of beta >= 0 with i beta in the spectrum."""

    beta_lo: float = pt.Field(ge=0)
    beta_hi: float = pt.Field(ge=0)


def spectrum_frame(contour: SpectrumContour) -> pl.DataFrame:
    """Grid samples in row-major order: imaginary part outer, real part inner."""
    re, im = np.meshgrid(contour.re_axis, contour.im_axis)
    frame = pl.DataFrame({
        're': re.ravel(),
        'im': im.ravel(),
        'gp': contour.gp_samples.ravel(),
    })
    SpectrumSample.validate(frame)
    return frame


def contour_frame(contour: SpectrumContour) -> pl.DataFrame:
    frames = [
        pl.DataFrame({
            'polyline_id': np.full(len(line), index, dtype=np.int64),
            're': line.real,
            'im': line.imag,
        })
        for index, line in enumerate(contour.polylines)
    ]
    frame = pl.concat(frames) if frames else pl.DataFrame(
        schema={'polyline_id': pl.Int64, 're': pl.Float64, 'im': pl.Float64}
    )
    ContourPoint.validate(frame)
    return frame


def imag_axis_frame(spectrum: ImagAxisSpectrum) -> pl.DataFrame:
    frame = pl.DataFrame(
        {
            'beta_lo': [lo for lo, _ in spectrum.beta_intervals],
            'beta_hi': [hi for _, hi in spectrum.beta_intervals],
        },
        schema={'beta_lo': pl.Float64, 'beta_hi': pl.Float64}
    )
    ImagAxisBand.validate(frame)
    return frame


def hill_frame(mu: np.ndarray, delta_q: np.ndarray) -> pl.DataFrame:
    frame = pl.DataFrame({'mu': mu, 'delta_q': delta_q})
    HillSample.validate(frame)
    return frame


def write_csv(frame: pl.DataFrame, path: Path) -> Path:
    """Write ``frame`` with every float in scientific notation to 17 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(path, float_scientific=True, float_precision=16)
    log.info(f'Wrote {frame.height} rows to {path}')
    return path


def plain(value: object) -> object:
    """Recursively convert numpy scalars, arrays and complex numbers into JSON-ready Python data."""
    if isinstance(value, Mapping):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, np.ndarray):
        return [plain(item) for item in value.tolist()]
    if isinstance(value, (str, bytes)):
        return value
    if isinstance(value, Sequence):
        return [plain(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': plain(float(value.real)), 'im': plain(float(value.imag))}
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def dump_json(document: Mapping[str, object]) -> str:
    """Serialise with sorted keys; complex numbers become ``{"re", "im"}`` and non-finite floats ``null``."""
    return json.dumps(plain(document), sort_keys=True, ensure_ascii=False, allow_nan=False, indent=2)


def render_contours_svg(
    contour: SpectrumContour,
    path: Path,
    imag_spectrum: ImagAxisSpectrum | None = None,
    title: str | None = None
) -> Path:
    """Plot the zero level curves of G_p (and the imaginary-axis bands) to an SVG file.

    The SVG id salt and the date metadata are pinned so identical inputs
    give byte-identical files.
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASH_SALT, 'svg.fonttype': 'none'}):
        figure = Figure(figsize=(6.0, 6.0))
        axes = figure.add_subplot()
        for line in contour.polylines:
            axes.plot(line.real, line.imag, color='black', linewidth=0.8)
        if imag_spectrum is not None:
            for lo, hi in imag_spectrum.beta_intervals:
                for sign in (1.0, -1.0):
                    axes.plot([0.0, 0.0], [sign * lo, sign * hi], color='tab:red', linewidth=2.0)
        axes.set_xlim(contour.box[0], contour.box[1])
        axes.set_ylim(contour.box[2], contour.box[3])
        axes.set_xlabel('Re λ')
        axes.set_ylabel('Im λ')
        if title:
            axes.set_title(title)
        figure.savefig(path, format='svg', metadata={'Date': None})
    log.info(f'Rendered {len(contour.polylines)} polylines to {path}')
    return path
