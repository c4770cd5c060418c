"""
Suites de verificación para `contract check`.

Cada suite es una lista de tareas independientes (joblib `delayed`) que
devuelven filas; `run_suite` las ejecuta en procesos, conserva el orden de
las tareas y devuelve {'suite', 'valido', 'rows'}. Si se indica un
directorio, escribe las filas como CSV.
"""

import logging
import os
from typing import Callable, Dict, List, Optional

from joblib import Parallel, delayed

from core.bayes import DPPrior, dp_small_ball_check
from core.measures import ParamSpace, dirac, make_measure
from core.mixtures import LikelihoodFamily, MixtureDensity
from loaders.results_loader import to_frame, write_table
from utils.validators import IDENTIFIABILITY_SCHEDULE, InequalityValidator, random_pairs

logger = logging.getLogger(__name__)

DOMINATION_TRIALS = {'gaussian': 1000, 'laplace': 500}
ENTROPY_GRID = {'k': (1, 2, 3), 'eps': (0.05, 0.1, 0.2)}
DECONV_SCHEDULE = (0.8, 0.4, 0.2, 0.1, 0.05)
SMALL_BALL_GRID = {'nu': (0.5, 1.0, 2.0), 'eps': (0.15, 0.2, 0.3)}
SMALL_BALL_DRAWS = 10**5
IDENTIFIABILITY_SAMPLES = 40


def _domination_rows(name: str, seed: int, scale: float) -> List[Dict]:
    rows = []
    space = ParamSpace.interval(-3.0, 3.0)
    family = LikelihoodFamily.from_name(name)
    count = max(1, int(DOMINATION_TRIALS[name] * scale))
    G, Gp = random_pairs(space, 1, seed)[0]
    for divergence in ('total_variation', 'hellinger_sq', 'kl'):
        report = InequalityValidator.check_domination(G, Gp, divergence, family,
                                                      trials=count - 1, seed=seed)
        rows.append({'check': 'domination', 'family': name, 'divergence': divergence,
                     'pairs': report['pairs'], 'violations': len(report['errores']),
                     'warnings': len(report['warnings']), 'valido': report['valido']})

    violations, warnings = 0, 0
    pairs = random_pairs(space, count, seed + 1)
    for A, B in pairs:
        report = InequalityValidator.divergence_ordering_check(MixtureDensity(A, family),
                                                               MixtureDensity(B, family))
        violations += len(report['errores'])
        warnings += len(report['warnings'])
    rows.append({'check': 'ordering', 'family': name, 'divergence': 'all', 'pairs': len(pairs),
                 'violations': violations, 'warnings': warnings, 'valido': violations == 0})
    return rows


def domination_suite(seed: int, scale: float = 1.0) -> List:
    return [delayed(_domination_rows)(name, seed, scale) for name in DOMINATION_TRIALS]


def _entropy_rows(k: int, eps: float, seed: int, scale: float) -> List[Dict]:
    candidates = max(20, int(300 * scale))
    report = InequalityValidator.entropy_lemma_check(k, ParamSpace.interval(0.0, 1.0), eps, r=1.0,
                                                     candidates=candidates, seed=seed)
    return [{'k': k, 'eps': eps, 'part': part['part'], 'packing': part['packing'],
             'lhs': part['lhs'], 'rhs': part['rhs'], 'valido': part['lhs'] <= part['rhs']}
            for part in report['detalles']]


def entropy_suite(seed: int, scale: float = 1.0) -> List:
    return [delayed(_entropy_rows)(k, eps, seed, scale)
            for k in ENTROPY_GRID['k'] for eps in ENTROPY_GRID['eps']]


def _deconv_rows(name: str, seed: int) -> List[Dict]:
    report = InequalityValidator.deconvolution_bound_probe(LikelihoodFamily.from_name(name),
                                                           DECONV_SCHEDULE, seed)
    return [{**row, 'exponent': report['exponent'], 'envelope_constant': report['envelope_constant'],
             'valido': report['valido']} for row in report['detalles']]


def deconv_suite(seed: int, scale: float = 1.0) -> List:
    return [delayed(_deconv_rows)(name, seed) for name in ('laplace', 'gaussian')]


def _smallball_row(nu: float, eps: float, seed: int, scale: float) -> List[Dict]:
    space = ParamSpace.interval(0.0, 1.0)
    draws = max(1000, int(SMALL_BALL_DRAWS * scale))
    report = dp_small_ball_check(DPPrior(space, concentration=nu), dirac(0.5, space), eps, 1.0,
                                 draws, seed)
    return [{key: report[key] for key in
             ('nu', 'eps', 'D', 'bound', 'estimate', 'std_error', 'regime_ok', 'valido')}]


def smallball_suite(seed: int, scale: float = 1.0) -> List:
    return [delayed(_smallball_row)(nu, eps, seed, scale)
            for nu in SMALL_BALL_GRID['nu'] for eps in SMALL_BALL_GRID['eps']]


def _identifiability_rows(k: int, seed: int, scale: float) -> List[Dict]:
    space = ParamSpace.interval(-1.0, 1.0)
    G0 = dirac(0.0, space) if k == 1 else make_measure([-0.5, 0.5], [0.5, 0.5], space)
    samples = max(10, int(IDENTIFIABILITY_SAMPLES * scale))
    report = InequalityValidator.strong_identifiability_check(
        G0, LikelihoodFamily.gaussian(), k, IDENTIFIABILITY_SCHEDULE, samples, seed)
    return [{'k': k, 'eps': row['eps'], 'samples': row['samples'], 'min_psi': row['min_psi'],
             'floor': report['floor'], 'valido': row['min_psi'] >= report['floor']}
            for row in report['detalles']]


def identifiability_suite(seed: int, scale: float = 1.0) -> List:
    return [delayed(_identifiability_rows)(k, seed, scale) for k in (1, 2)]


SUITES: Dict[str, Callable[[int, float], List]] = {
    'domination': domination_suite,
    'entropy': entropy_suite,
    'deconv': deconv_suite,
    'smallball': smallball_suite,
    'identifiability': identifiability_suite,
}


def run_suite(name: str, seed: int, out_dir: Optional[str] = None, scale: float = 1.0,
              threads: int = 1) -> Dict:
    if name not in SUITES:
        raise ValueError(f"Suite desconocida: {name}")

    tasks = SUITES[name](seed, scale)
    logger.info(f"🔍 Ejecutando suite '{name}' (semilla {seed}, {len(tasks)} tareas, "
                f"{max(1, threads)} procesos)")
    # Parallel devuelve los resultados en el orden de las tareas
    rows = [row for chunk in Parallel(n_jobs=max(1, threads))(tasks) for row in chunk]
    valido = all(row['valido'] for row in rows)

    if out_dir and rows:
        columns = list(rows[0].keys())
        write_table(to_frame(rows, columns), os.path.join(out_dir, f"check_{name}.csv"))

    if valido:
        logger.info(f"✅ Suite '{name}': {len(rows)} filas, sin violaciones")
    else:
        failed = sum(1 for row in rows if not row['valido'])
        logger.warning(f"⚠️ Suite '{name}': {failed}/{len(rows)} filas con violaciones")
    return {'suite': name, 'valido': valido, 'rows': rows}
