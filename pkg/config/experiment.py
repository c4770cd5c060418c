"""
Configuración de experimentos de contracción.

Archivo plano `clave = valor` (se lee con python-dotenv, admite comentarios
con '#'). Las claves desconocidas son un error.
"""

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple, Union

from dotenv import dotenv_values

from config.settings import CHAIN_DEFAULTS, DEFAULT_SEED, OUTPUT_DIR, PRIOR_DEFAULTS
from core.bayes import DPPrior, FiniteMixturePrior
from core.errors import ConfigError
from core.measures import DiscreteMeasure, ParamSpace, make_measure
from core.mixtures import LikelihoodFamily

logger = logging.getLogger(__name__)

CONFIG_KEYS = (
    'model', 'family', 'g0_atoms', 'g0_weights', 'lower', 'upper', 'n_grid',
    'replicates', 'iterations', 'burn_in', 'thin', 'seed', 'output', 'k',
    'concentration', 'gamma', 'weight_floor', 'separation_floor', 'compare_with',
)

REQUIRED_KEYS = ('model', 'g0_atoms', 'g0_weights', 'lower', 'upper', 'n_grid')

MODEL_ALIASES = {
    'finite': 'finite_k',
    'finite_k': 'finite_k',
    'dp': 'dp',
    'dirichlet': 'dp',
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    g0_atoms: Tuple[Tuple[float, ...], ...]
    g0_weights: Tuple[float, ...]
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    n_grid: Tuple[int, ...]
    family: str = 'gaussian'
    replicates: int = 1
    iterations: int = CHAIN_DEFAULTS['ITERATIONS']
    burn_in: int = CHAIN_DEFAULTS['BURN_IN']
    thin: int = CHAIN_DEFAULTS['THIN']
    seed: int = DEFAULT_SEED
    output: str = field(default_factory=lambda: os.path.join(OUTPUT_DIR, 'contraction.csv'))
    k: Optional[int] = None
    concentration: float = PRIOR_DEFAULTS['CONCENTRATION']
    gamma: float = PRIOR_DEFAULTS['GAMMA']
    weight_floor: float = PRIOR_DEFAULTS['WEIGHT_FLOOR']
    separation_floor: Optional[float] = None
    compare_with: Optional[str] = None

    def __post_init__(self):
        if self.model not in ('finite_k', 'dp'):
            raise ConfigError(f"Modelo desconocido: {self.model}")
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError(f"n_grid debe ser estrictamente creciente: {self.n_grid}")
        if self.n_grid[0] < 0:
            raise ConfigError("n_grid no admite tamaños negativos")
        if self.replicates < 1:
            raise ConfigError("replicates debe ser ≥ 1")
        if len(self.g0_atoms) != len(self.g0_weights):
            raise ConfigError("g0_atoms y g0_weights tienen largos distintos")
        if len(self.lower) != len(self.upper):
            raise ConfigError("lower y upper tienen dimensiones distintas")
        if any(len(atom) != len(self.lower) for atom in self.g0_atoms):
            raise ConfigError("Los átomos de G₀ no coinciden con la dimensión de Θ")
        if self.iterations < 1 or self.thin < 1 or not 0 <= self.burn_in < self.iterations:
            raise ConfigError("Parámetros de cadena inválidos")

    # ---------------------------------------------------------------
    # Objetos derivados
    # ---------------------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.lower)

    def space(self) -> ParamSpace:
        try:
            return ParamSpace(list(self.lower), list(self.upper))
        except ValueError as e:
            raise ConfigError(str(e))

    def g0(self) -> DiscreteMeasure:
        return make_measure([list(a) for a in self.g0_atoms], list(self.g0_weights), self.space())

    def likelihood(self) -> LikelihoodFamily:
        try:
            return LikelihoodFamily.from_name(self.family, self.dim)
        except ValueError as e:
            raise ConfigError(str(e))

    def prior(self) -> Union[FiniteMixturePrior, DPPrior]:
        space = self.space()
        if self.model == 'dp':
            return DPPrior(space, concentration=self.concentration)
        return FiniteMixturePrior(space, k=self.k or len(self.g0_atoms), gamma=self.gamma,
                                  weight_floor=self.weight_floor,
                                  separation_floor=self.separation_floor)

    def with_overrides(self, **overrides) -> 'ExperimentConfig':
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def echo(self) -> List[str]:
        """Líneas `clave = valor` en el orden canónico (para reportes)."""
        lines = []
        for key in CONFIG_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            lines.append(f"{key} = {_render(key, value)}")
        return lines


def _render(key: str, value) -> str:
    if key == 'g0_atoms':
        return '; '.join(', '.join(repr(x) for x in atom) for atom in value)
    if isinstance(value, tuple):
        return ', '.join(repr(x) for x in value)
    return str(value)


# =============================================
# LECTURA Y NORMALIZACIÓN
# =============================================

def _floats(key: str, text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ConfigError(f"{key}: se esperaba una lista de números ('{text}')")


def _ints(key: str, text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(',') if part.strip())
    except ValueError:
        raise ConfigError(f"{key}: se esperaba una lista de enteros ('{text}')")


def _scalar(key: str, text: str, kind):
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"{key}: valor inválido '{text}'")


def _atoms(text: str) -> Tuple[Tuple[float, ...], ...]:
    """'a; b; c' (d ≥ 1, coordenadas separadas por comas) o 'a, b, c' (d = 1)."""
    if ';' in text:
        return tuple(_floats('g0_atoms', chunk) for chunk in text.split(';') if chunk.strip())
    return tuple((x,) for x in _floats('g0_atoms', text))


def normalize_config(raw: Dict[str, Optional[str]]) -> Dict:
    """Convierte los valores crudos a sus tipos; rechaza claves desconocidas."""
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Claves desconocidas: {', '.join(unknown)}")

    values = {k: (v or '').strip() for k, v in raw.items()}
    missing = [k for k in REQUIRED_KEYS if not values.get(k)]
    if missing:
        raise ConfigError(f"Faltan claves obligatorias: {', '.join(missing)}")

    model = values['model'].lower()
    if model not in MODEL_ALIASES:
        raise ConfigError(f"Modelo desconocido: {values['model']}")

    config = {
        'model': MODEL_ALIASES[model],
        'g0_atoms': _atoms(values['g0_atoms']),
        'g0_weights': _floats('g0_weights', values['g0_weights']),
        'lower': _floats('lower', values['lower']),
        'upper': _floats('upper', values['upper']),
        'n_grid': _ints('n_grid', values['n_grid']),
    }

    for key in ('replicates', 'iterations', 'burn_in', 'thin', 'seed', 'k'):
        if values.get(key):
            config[key] = _scalar(key, values[key], int)
    for key in ('concentration', 'gamma', 'weight_floor', 'separation_floor'):
        if values.get(key):
            config[key] = _scalar(key, values[key], float)
    if values.get('family'):
        config['family'] = values['family'].lower()
    for key in ('output', 'compare_with'):
        if values.get(key):
            config[key] = values[key]

    return config


def load_experiment_config(path: str) -> ExperimentConfig:
    """
    Lee un archivo de experimento.

    Raises:
        ConfigError si el archivo no existe, tiene claves desconocidas o
        valores inválidos.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Archivo de configuración no encontrado: {path}")

    raw = dotenv_values(path)
    config = ExperimentConfig(**normalize_config(raw))
    logger.info(f"📂 Configuración cargada: {path} (modelo {config.model}, n={list(config.n_grid)})")
    return config
