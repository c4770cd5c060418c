"""
Escritura y lectura de tablas de resultados (CSV) y reportes de texto.

Los CSV son deterministas: coma como separador, cabecera, fin de línea LF y
flotantes con 17 dígitos significativos.
"""

import logging
import os
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd

from config.settings import CSV_FLOAT_FORMAT
from core.errors import IoFailure

logger = logging.getLogger(__name__)

CONTRACTION_COLUMNS = ['n', 'replicate', 'seed', 'draws', 'posterior_W2_median', 'posterior_W2_q90']


def _ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def to_frame(rows: Iterable[Dict], columns: Sequence[str],
             sort_by: Optional[Sequence[str]] = None) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=list(columns))
    if sort_by:
        frame = frame.sort_values(list(sort_by), kind='mergesort').reset_index(drop=True)
    return frame


def write_table(frame: pd.DataFrame, path: str) -> str:
    """Escribe el DataFrame como CSV determinista."""
    try:
        _ensure_parent(path)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}")
    logger.debug(f"Tabla escrita: {path} ({len(frame)} filas)")
    return path


def append_row(row: Dict, columns: Sequence[str], path: str):
    """Agrega una fila a un CSV parcial (crea la cabecera si no existe)."""
    try:
        _ensure_parent(path)
        header = not os.path.exists(path)
        pd.DataFrame([row], columns=list(columns)).to_csv(
            path, mode='a', header=header, index=False,
            float_format=CSV_FLOAT_FORMAT, lineterminator='\n',
        )
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}")


def read_table(path: str, required: Sequence[str] = ()) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IoFailure(f"No se pudo leer {path}: {e}")

    missing = [column for column in required if column not in frame.columns]
    if missing:
        raise IoFailure(f"{path}: faltan columnas {missing}")
    return frame


def write_text(lines: List[str], path: str) -> str:
    try:
        _ensure_parent(path)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write('\n'.join(lines) + '\n')
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}")
    return path
