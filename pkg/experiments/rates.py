"""
Ajuste de tasas de contracción y reporte final.
"""

import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config.settings import CSV_FLOAT_FORMAT, RATE_BANDS
from core.errors import InsufficientPoints
from loaders.results_loader import read_table, write_table, write_text

logger = logging.getLogger(__name__)

TRANSFORMS = ('log_n', 'log_log_n')
ALLOWED_INVERSIONS = 1  # ruido Monte Carlo por grilla


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual_rms: float
    transform: str
    points: int


def seed_averaged(frame: pd.DataFrame, column: str = 'posterior_W2_median') -> pd.Series:
    """Promedio por n sobre réplicas."""
    return frame.groupby('n')[column].mean().sort_index()


def count_inversions(values: Sequence[float]) -> int:
    """Pares consecutivos donde el valor sube."""
    return int(sum(1 for a, b in zip(values, values[1:]) if b > a))


def fit_rate(csv: Union[str, pd.DataFrame], transform: str = 'log_n',
             column: str = 'posterior_W2_median') -> RateFit:
    """
    Mínimos cuadrados de log(mediana W₂) contra log n (tasa polinomial) o
    contra log log n (tasa logarítmica).

    Raises:
        InsufficientPoints con menos de 3 valores distintos de n.
    """
    if transform not in TRANSFORMS:
        raise ValueError(f"Transformación desconocida: {transform}")

    frame = csv if isinstance(csv, pd.DataFrame) else read_table(csv, required=['n', column])
    series = seed_averaged(frame, column)
    if len(series) < 3:
        raise InsufficientPoints(f"Se requieren ≥ 3 valores de n (hay {len(series)})")

    n = series.index.to_numpy(dtype=float)
    y = np.log(series.to_numpy(dtype=float))
    if transform == 'log_n':
        x = np.log(n)
    else:
        if np.any(n <= math.e):
            raise ValueError("log log n requiere n > e")
        x = np.log(np.log(n))

    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    rms = float(np.sqrt(np.mean(residuals ** 2)))
    return RateFit(slope=float(slope), intercept=float(intercept), residual_rms=rms,
                   transform=transform, points=len(series))


def contraction_checks(frame: pd.DataFrame, model: str, reference: Optional[pd.DataFrame] = None,
                       column: str = 'posterior_W2_median') -> Dict[str, Dict]:
    """
    Verificaciones cualitativas de forma sobre las medianas promediadas por n.

    - medians_decrease: a lo sumo ALLOWED_INVERSIONS subidas entre n consecutivos.
    - slope_in_band (finite_k): pendiente log_n dentro de RATE_BANDS['FINITE'].
    - log_log_slope_negative (dp): pendiente contra log log n < 0.
    - shallower_than_finite (dp con `reference`): la pendiente log_n de DP es
      mayor (más cercana a 0) que la de la mezcla finita sobre la misma grilla.

    Cada entrada es {'valido': bool, 'value': float}.
    """
    series = seed_averaged(frame, column)
    inversions = count_inversions(series.tolist())
    checks = {'medians_decrease': {'valido': inversions <= ALLOWED_INVERSIONS,
                                   'value': float(inversions)}}

    if model == 'finite_k':
        slope = fit_rate(frame, 'log_n', column).slope
        low, high = RATE_BANDS['FINITE']
        checks['slope_in_band'] = {'valido': low <= slope <= high, 'value': slope}
        return checks

    slope = fit_rate(frame, 'log_log_n', column).slope
    checks['log_log_slope_negative'] = {'valido': slope < 0.0, 'value': slope}

    if reference is not None:
        reference_grid = sorted(reference['n'].unique())
        if reference_grid != sorted(frame['n'].unique()):
            raise ValueError(f"La referencia usa otra grilla de n: {reference_grid}")
        dp_slope = fit_rate(frame, 'log_n', column).slope
        finite_slope = fit_rate(reference, 'log_n', column).slope
        checks['shallower_than_finite'] = {'valido': dp_slope > finite_slope,
                                           'value': dp_slope - finite_slope}
    return checks


def _fmt(value: float) -> str:
    return CSV_FLOAT_FORMAT % value


def emit_report(fits: Dict[str, RateFit], tables: Dict[str, pd.DataFrame], path: str,
                config_echo: Optional[List[str]] = None,
                seed_manifest: Optional[List[Dict]] = None,
                checks: Optional[Dict[str, Dict]] = None) -> str:
    """
    Reporte de texto determinista más un CSV por tabla (junto al reporte).

    Raises:
        InsufficientPoints si no hay ajustes; IoFailure.
    """
    if not fits:
        raise InsufficientPoints("No hay ajustes que reportar")

    directory = os.path.dirname(path) or '.'
    lines = ['# contraction report', '']

    if config_echo:
        lines.append('[config]')
        lines.extend(config_echo)
        lines.append('')

    lines.append('[fits]')
    lines.append('name,transform,slope,intercept,residual_rms,points')
    for name in sorted(fits):
        fit = fits[name]
        lines.append(f"{name},{fit.transform},{_fmt(fit.slope)},{_fmt(fit.intercept)},"
                     f"{_fmt(fit.residual_rms)},{fit.points}")
    lines.append('')

    if checks:
        lines.append('[checks]')
        lines.append('name,valido,value')
        for name in sorted(checks):
            lines.append(f"{name},{checks[name]['valido']},{_fmt(checks[name]['value'])}")
        lines.append('')

    if tables:
        lines.append('[tables]')
        for name in sorted(tables):
            table_path = os.path.join(directory, f"{name}.csv")
            write_table(tables[name], table_path)
            lines.append(f"{name} = {os.path.basename(table_path)}")
        lines.append('')

    if seed_manifest:
        lines.append('[seeds]')
        lines.append('n,replicate,data_seed,chain_seed')
        for entry in seed_manifest:
            lines.append(f"{entry['n']},{entry['replicate']},{entry['data_seed']},{entry['chain_seed']}")
        lines.append('')

    write_text(lines, path)
    logger.info(f"✅ Reporte escrito: {path}")
    return path

