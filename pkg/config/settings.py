"""
Configuración general del sistema de experimentos de contracción.
"""

import os
from dotenv import load_dotenv

load_dotenv()

# =============================================
# CONFIGURACIÓN DE RUTAS
# =============================================

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUTPUT_DIR = os.getenv('OUTPUT_DIR', os.path.join(BASE_DIR, 'data', 'results'))
LOG_DIR = os.getenv('LOG_DIR', os.path.join(BASE_DIR, 'logs'))
DATA_DIR = os.path.join(BASE_DIR, 'data')

# Crear directorios si no existen
for directory in [OUTPUT_DIR, LOG_DIR, DATA_DIR]:
    os.makedirs(directory, exist_ok=True)

# =============================================
# CONFIGURACIÓN DE LOGGING
# =============================================

LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.path.join(LOG_DIR, 'contraction.log')
LOG_FORMAT = '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# =============================================
# EJECUCIÓN
# =============================================

DEFAULT_SEED = int(os.getenv('CONTRACT_SEED', '20240101'))

# Número de workers para celdas (n, réplica) en paralelo
NUM_WORKERS = int(os.getenv(
    'CONTRACT_THREADS',
    str(max(1, os.cpu_count() - 1) if os.cpu_count() else 1),
))

# =============================================
# TOLERANCIAS NUMÉRICAS
# =============================================

TOLERANCES = {
    'WEIGHT_SUM': 1e-12,      # pesos en el símplex
    'MERGE': 1e-12,           # fusión de átomos coincidentes
    'RENORMALIZE': 1e-9,      # desvío aceptado antes de renormalizar (informativo)
    'MARGINAL': 1e-10,        # marginales del acoplamiento
    'CLAMP': 1e-15,           # redondeo negativo en acoplamientos
    'REDUCED_COST': 1e-12,    # optimalidad del símplex de transporte
    'QUADRATURE': 1e-8,       # tolerancia absoluta de cuadratura
    'DENSITY_FLOOR': 1e-300,  # piso del log en KL
    'MOMENT_SLACK': 1e-6,     # holgura de las desigualdades de momentos
    'ORDERING_SLACK': 1e-6,   # holgura V²/2 ≤ H² ≤ V, H² ≤ K/2
    'RATIO_FLOOR': 1e-12,     # W₂ mínimo para cocientes ψ
    'GRID_COUNT': 1e-9,       # redondeo de L/ε en conteos de grilla
}

QUADRATURE = {
    'WINDOW': 10.0,   # [min átomo − 10, max átomo + 10]
    'LIMIT': 400,     # subintervalos de scipy.integrate.quad
}

# =============================================
# INFORMACIÓN DE HELLINGER Y COCIENTES ψ
# =============================================

PSI_DEFAULTS = {
    'RESTARTS': 64,
    'PERTURBATION': 0.25,     # escala r/4
    'GRID_POINTS': 4096,      # grilla para ψ sup-norm y para h² interno
    'PENALTY': 1e4,
    'REPAIR_STEPS': 60,       # bisecciones de la reparación de factibilidad
    'MAX_ITER': 200,
}

SAMPLING = {
    'MAX_REJECTIONS': 10**6,
}

# =============================================
# PRIORS Y CADENAS
# =============================================

PRIOR_DEFAULTS = {
    'GAMMA': 1.0,               # Dirichlet simétrico
    'WEIGHT_FLOOR': 0.05,       # (A4)
    'SEPARATION_FRACTION': 0.1, # piso de separación = 0.1·Diam(Θ)
    'DP_TAIL_BUDGET': 1e-6,     # masa de cola de la truncación
    'CONCENTRATION': 1.0,
    'MAX_REJECTIONS': 10**4,    # por paso del muestreador
}

CHAIN_DEFAULTS = {
    'ITERATIONS': 600,
    'BURN_IN': 200,
    'THIN': 2,
}

# =============================================
# AJUSTE DE TASAS
# =============================================

RATE_BANDS = {
    'FINITE': (-0.45, -0.15),  # alrededor de −1/4 con factores log
}

CSV_FLOAT_FORMAT = '%.17g'
