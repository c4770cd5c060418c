"""
Interfaz de línea de comandos para los experimentos de contracción.

    contract run   --config <archivo>
    contract fit   --csv <archivo> --transform {log_n|log_log_n}
    contract check --suite {domination|entropy|deconv|smallball|identifiability}
"""

import logging
import os
import sys
from pathlib import Path

import click

from config.experiment import load_experiment_config
from config.settings import (
    DEFAULT_SEED,
    LOG_DATE_FORMAT,
    LOG_FILE,
    LOG_FORMAT,
    LOG_LEVEL,
    NUM_WORKERS,
    OUTPUT_DIR,
)
from experiments.contraction import ContractionPipeline
from experiments.rates import TRANSFORMS, contraction_checks, emit_report, fit_rate
from experiments.suites import SUITES, run_suite
from loaders.results_loader import read_table

# Configurar logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL),
    format=LOG_FORMAT,
    datefmt=LOG_DATE_FORMAT,
    handlers=[
        logging.FileHandler(Path(LOG_FILE)),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger(__name__)


@click.group()
def contract():
    """
    Distancias de transporte, identificabilidad y contracción posterior
    en modelos de mezcla.
    """


@contract.command()
@click.option('--config', 'config_path', required=True, type=click.Path(), help='Archivo clave = valor')
@click.option('--seed', type=int, default=None, help='Semilla raíz (sobrescribe la del archivo)')
@click.option('--out-dir', type=click.Path(), default=None, help='Directorio de salida')
@click.option('--threads', type=int, default=NUM_WORKERS, show_default=True, help='Procesos para las celdas (n, réplica)')
@click.option('--save-chains', is_flag=True, help='Guardar las cadenas posteriores')
def run(config_path, seed, out_dir, threads, save_chains):
    """Corre un experimento de contracción y ajusta su tasa."""
    try:
        config = load_experiment_config(config_path)
    except Exception as e:
        logger.error(f"❌ Configuración inválida: {e}")
        sys.exit(1)

    output = None
    if out_dir:
        output = os.path.join(out_dir, os.path.basename(config.output))
    config = config.with_overrides(seed=seed, output=output)

    pipeline = ContractionPipeline(config, threads=threads, save_chains=save_chains)
    if not pipeline.run():
        sys.exit(1)

    fits = {}
    for transform in TRANSFORMS:
        try:
            fits[transform] = fit_rate(pipeline.frame, transform)
        except Exception as e:
            logger.warning(f"⚠️ Sin ajuste {transform}: {e}")

    if not fits:
        logger.info("📊 Menos de 3 tamaños muestrales: no se ajusta tasa")
        return

    for transform, fit in fits.items():
        logger.info(f"📈 {transform}: pendiente {fit.slope:.4f} (RMS {fit.residual_rms:.3g})")

    reference = None
    if config.compare_with:
        if os.path.isfile(config.compare_with):
            reference = read_table(config.compare_with, required=['n', 'posterior_W2_median'])
        else:
            logger.warning(f"⚠️ Referencia no encontrada, sin comparación: {config.compare_with}")

    try:
        checks = contraction_checks(pipeline.frame, config.model, reference)
    except Exception as e:
        logger.warning(f"⚠️ Sin verificaciones de forma: {e}")
        checks = {}
    for name, result in checks.items():
        logger.info(f"{'✅' if result['valido'] else '⚠️'} {name}: {result['value']:.4g}")

    stem = os.path.splitext(config.output)[0]
    emit_report(fits, {}, stem + '_report.txt', config_echo=config.echo(),
                seed_manifest=pipeline.seed_manifest(), checks=checks)


@contract.command()
@click.option('--csv', 'csv_path', required=True, type=click.Path(exists=True), help='CSV de contracción')
@click.option('--transform', type=click.Choice(TRANSFORMS), default='log_n', show_default=True)
def fit(csv_path, transform):
    """Ajusta la tasa de contracción de un CSV existente."""
    try:
        result = fit_rate(csv_path, transform)
    except Exception as e:
        logger.error(f"❌ Error ajustando {csv_path}: {e}", exc_info=True)
        sys.exit(1)

    click.echo(f"transform={result.transform} slope={result.slope:.17g} "
               f"intercept={result.intercept:.17g} residual_rms={result.residual_rms:.17g} "
               f"points={result.points}")


@contract.command()
@click.option('--suite', required=True, type=click.Choice(sorted(SUITES)))
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option('--out-dir', type=click.Path(), default=OUTPUT_DIR, show_default=True)
@click.option('--threads', type=int, default=NUM_WORKERS, show_default=True,
              help='Procesos para las tareas de la suite')
@click.option('--scale', type=float, default=1.0, show_default=True,
              help='Fracción del tamaño de escritorio (pares, sorteos)')
def check(suite, seed, out_dir, threads, scale):
    """Corre una suite de verificación de desigualdades."""
    try:
        report = run_suite(suite, seed, out_dir, scale, threads)
    except Exception as e:
        logger.error(f"❌ Error en la suite {suite}: {e}", exc_info=True)
        sys.exit(1)

    sys.exit(0 if report['valido'] else 1)


if __name__ == '__main__':
    contract()
