"""
Formato de texto para medidas discretas y cadenas posteriores.

Medida: una línea por átomo, `w θ₁ … θ_d` separados por un espacio; las
líneas que empiezan con '#' se ignoran y los pesos no necesitan estar
normalizados.

Cadena: cabecera `# chain seed=… n=… model=…` seguida de una medida por
línea; los átomos de una misma medida se separan con ' | '.
"""

import logging
import os
import re
from typing import Dict, List, Optional, Tuple

from config.settings import CSV_FLOAT_FORMAT
from core.bayes import PosteriorChain
from core.errors import ContractionError, IoFailure
from core.measures import DiscreteMeasure, ParamSpace, make_measure

logger = logging.getLogger(__name__)

ATOM_SEPARATOR = ' | '
CHAIN_HEADER = re.compile(r'^#\s*chain\s+(.*)$')


def _fmt(value: float) -> str:
    return CSV_FLOAT_FORMAT % value


def format_atoms(G: DiscreteMeasure) -> List[str]:
    return [' '.join([_fmt(w)] + [_fmt(x) for x in atom]) for w, atom in zip(G.weights, G.atoms)]


def _parse_atom(text: str, dim: Optional[int]) -> Tuple[float, List[float]]:
    fields = text.split()
    if len(fields) < 2:
        raise IoFailure(f"Línea de átomo incompleta: '{text}'")
    if dim is not None and len(fields) != dim + 1:
        raise IoFailure(f"Se esperaban {dim + 1} campos: '{text}'")
    try:
        values = [float(field) for field in fields]
    except ValueError:
        raise IoFailure(f"Valor no numérico en '{text}'")
    return values[0], values[1:]


def _build(entries: List[Tuple[float, List[float]]], space: ParamSpace) -> DiscreteMeasure:
    weights = [w for w, _ in entries]
    atoms = [atom for _, atom in entries]
    try:
        return make_measure(atoms, weights, space)
    except ContractionError:
        raise
    except ValueError as e:
        raise IoFailure(f"Medida inválida: {e}")


def parse_measure(text: str, space: ParamSpace) -> DiscreteMeasure:
    entries = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith('#'):
            continue
        entries.append(_parse_atom(line, space.dim))
    return _build(entries, space)


def write_measure(G: DiscreteMeasure, path: str, comment: Optional[str] = None):
    lines = ([f"# {comment}"] if comment else []) + format_atoms(G)
    _write_lines(path, lines)


def read_measure(path: str, space: ParamSpace) -> DiscreteMeasure:
    return parse_measure(_read_text(path), space)


# =============================================
# CADENAS
# =============================================

def format_chain(chain: PosteriorChain) -> List[str]:
    header = f"# chain seed={chain.seed} n={chain.n} model={chain.model}"
    return [header] + [ATOM_SEPARATOR.join(format_atoms(G)) for G in chain.draws]


def write_chain(chain: PosteriorChain, path: str):
    _write_lines(path, format_chain(chain))
    logger.debug(f"Cadena escrita en {path} ({len(chain)} medidas)")


def parse_chain_header(line: str) -> Dict[str, str]:
    match = CHAIN_HEADER.match(line.strip())
    if not match:
        raise IoFailure(f"Cabecera de cadena inválida: '{line}'")
    fields = {}
    for token in match.group(1).split():
        key, _, value = token.partition('=')
        fields[key] = value
    missing = {'seed', 'n', 'model'} - set(fields)
    if missing:
        raise IoFailure(f"Faltan campos en la cabecera: {sorted(missing)}")
    return fields


def read_chain(path: str, space: ParamSpace) -> PosteriorChain:
    lines = [line for line in _read_text(path).splitlines() if line.strip()]
    if not lines:
        raise IoFailure(f"Archivo de cadena vacío: {path}")

    header = parse_chain_header(lines[0])
    draws = []
    for line in lines[1:]:
        if line.startswith('#'):
            continue
        entries = [_parse_atom(chunk, space.dim) for chunk in line.split('|')]
        draws.append(_build(entries, space))

    seed = None if header['seed'] == 'None' else int(header['seed'])
    return PosteriorChain(draws=draws, seed=seed, burn_in=0, thin=1,
                          iterations=len(draws), model=header['model'], n=int(header['n']))


# =============================================
# E/S
# =============================================

def _write_lines(path: str, lines: List[str]):
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as handle:
            handle.write('\n'.join(lines) + '\n')
    except OSError as e:
        raise IoFailure(f"No se pudo escribir {path}: {e}")


def _read_text(path: str) -> str:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return handle.read()
    except OSError as e:
        raise IoFailure(f"No se pudo leer {path}: {e}")

