"""
Experimentos de contracción posterior.

Para cada tamaño muestral n y réplica: simula datos desde G₀, corre el
muestreador configurado y resume W₂(G₀, G) sobre las muestras retenidas con
la mediana y el cuantil 0.9.
"""

import logging
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from config.experiment import ExperimentConfig
from config.settings import NUM_WORKERS
from core.bayes import PosteriorChain, gibbs_dp, gibbs_finite, simulate_data
from core.transport import wasserstein
from loaders.measure_io import write_chain
from loaders.results_loader import CONTRACTION_COLUMNS, append_row, to_frame, write_table

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellSeeds:
    n: int
    replicate: int
    data_seed: int
    chain_seed: int


def cell_seeds(config: ExperimentConfig) -> List[CellSeeds]:
    """
    Semillas derivadas por celda (índice de n, réplica).

    Dependen solo de la semilla raíz y de la posición en la grilla, no del
    orden de ejecución.
    """
    cells = []
    for n_index, n in enumerate(config.n_grid):
        for replicate in range(config.replicates):
            sequence = np.random.SeedSequence(config.seed, spawn_key=(n_index, replicate))
            data_seed, chain_seed = (int(s) for s in sequence.generate_state(2))
            cells.append(CellSeeds(n=n, replicate=replicate,
                                   data_seed=data_seed, chain_seed=chain_seed))
    return cells


def posterior_w2(config: ExperimentConfig, chain: PosteriorChain) -> np.ndarray:
    G0 = config.g0()
    return np.array([wasserstein(G0, G, 2.0) for G in chain.draws])


def run_cell(config: ExperimentConfig, cell: CellSeeds,
             chain_dir: Optional[str] = None) -> Dict:
    """Una celda (n, réplica): datos → cadena → cuantiles de W₂."""
    G0 = config.g0()
    family = config.likelihood()
    prior = config.prior()

    data = simulate_data(G0, family, cell.n, cell.data_seed)
    sampler = gibbs_dp if config.model == 'dp' else gibbs_finite
    chain = sampler(data, prior, family, config.iterations, config.burn_in,
                    config.thin, cell.chain_seed)

    if chain_dir:
        write_chain(chain, os.path.join(chain_dir, f"chain_n{cell.n}_r{cell.replicate}.txt"))

    distances = posterior_w2(config, chain)
    return {
        'n': cell.n,
        'replicate': cell.replicate,
        'seed': cell.chain_seed,
        'draws': len(distances),
        'posterior_W2_median': float(np.median(distances)),
        'posterior_W2_q90': float(np.quantile(distances, 0.9)),
    }


def run_contraction(config: ExperimentConfig, threads: int = NUM_WORKERS,
                    chain_dir: Optional[str] = None, progress: bool = True) -> pd.DataFrame:
    """
    Corre todas las celdas y escribe el CSV ordenado por (n, réplica).

    Las celdas se reparten en `threads` procesos (joblib); cada cadena es
    Python puro y no libera el GIL. Cada fila se agrega a `<output>.partial`
    apenas termina su celda; el archivo parcial se elimina cuando el CSV final
    queda escrito. Las semillas salen de `cell_seeds`, así que el resultado no
    depende del número de procesos ni del orden de llegada.
    """
    cells = cell_seeds(config)
    partial = config.output + '.partial'
    if os.path.exists(partial):
        os.remove(partial)

    tasks = [delayed(run_cell)(config, cell, chain_dir) for cell in cells]
    results = Parallel(n_jobs=max(1, threads), return_as='generator_unordered')(tasks)

    rows = []
    for row in tqdm(results, total=len(tasks), desc=f"Contracción ({config.model})",
                    disable=not progress):
        append_row(row, CONTRACTION_COLUMNS, partial)
        rows.append(row)
        logger.debug(f"Celda n={row['n']} réplica={row['replicate']}: "
                     f"mediana W₂ = {row['posterior_W2_median']:.4g}")

    frame = to_frame(rows, CONTRACTION_COLUMNS, sort_by=['n', 'replicate'])
    write_table(frame, config.output)
    os.remove(partial)
    return frame


class ContractionPipeline:
    """
    Orquesta un experimento de contracción completo.

    Flujo:
    1. Derivar semillas por celda
    2. Ejecutar celdas en paralelo (simulación + muestreo + W₂)
    3. Escribir CSV ordenado
    """

    def __init__(self, config: ExperimentConfig, threads: int = NUM_WORKERS,
                 save_chains: bool = False, progress: bool = True):
        self.config = config
        self.threads = threads
        self.progress = progress
        self.chain_dir = (os.path.join(os.path.dirname(config.output) or '.', 'chains')
                          if save_chains else None)
        self.frame: Optional[pd.DataFrame] = None

        self.stats = {
            'celdas': len(config.n_grid) * config.replicates,
            'exitosos': 0,
            'fallidos': 0,
        }

    def run(self) -> bool:
        start_time = time.time()
        logger.info("=" * 60)
        logger.info(f"📊 Experimento {self.config.model}: n={list(self.config.n_grid)}, "
                    f"{self.config.replicates} réplicas, {self.threads} procesos")
        logger.info("=" * 60)

        try:
            self.frame = run_contraction(self.config, self.threads, self.chain_dir, self.progress)
            self.stats['exitosos'] = len(self.frame)
        except Exception as e:
            logger.error(f"❌ Error en el experimento: {e}", exc_info=True)
            self.stats['fallidos'] = self.stats['celdas'] - self.stats['exitosos']
            return False

        logger.info(f"✅ CSV escrito: {self.config.output}")
        logger.info(f"⏱️  Completado en {time.time() - start_time:.2f} segundos")
        self._show_summary()
        return True

    def seed_manifest(self) -> List[Dict]:
        return [
            {'n': c.n, 'replicate': c.replicate, 'data_seed': c.data_seed, 'chain_seed': c.chain_seed}
            for c in cell_seeds(self.config)
        ]

    def _show_summary(self):
        summary = self.frame.groupby('n')['posterior_W2_median'].mean()
        logger.info("📊 Mediana posterior de W₂ (promedio sobre réplicas):")
        for n, value in summary.items():
            logger.info(f"  n={n:>6}: {value:.5f}")
