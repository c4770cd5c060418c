"""
Familias de verosimilitud, densidades de mezcla y divergencias.

Convenciones (iguales para componentes y mezclas):
    V(p, q)  = ½ ∫ |p − q|
    H²(p, q) = ½ ∫ (√p − √q)²
    K(p, q)  = ∫ p log(p / q)
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
from scipy import integrate
from scipy.special import logsumexp
from scipy.stats import norm

from config.settings import QUADRATURE, TOLERANCES
from core.errors import (
    DimensionMismatch,
    NonOverlappingSupport,
    QuadratureFailure,
    UnsupportedDivergence,
)
from core.measures import DiscreteMeasure

logger = logging.getLogger(__name__)

# Alias aceptados por las funciones públicas
_DIVERGENCE_ALIASES = {
    'tv': 'total_variation',
    'total_variation': 'total_variation',
    'hellinger_sq': 'hellinger_sq',
    'h2': 'hellinger_sq',
    'kl': 'kl',
}


def normalize_divergence(divergence: str) -> str:
    try:
        return _DIVERGENCE_ALIASES[divergence.lower()]
    except (KeyError, AttributeError):
        raise UnsupportedDivergence(f"Divergencia desconocida: {divergence}")


@dataclass(frozen=True)
class LikelihoodFamily:
    """
    Familia de localización f(x|θ) = f(x − θ) con escala fija 1.

    Atributos de suavidad: 'supersmooth' (Gaussiana, β = 2) u 'ordinary'
    (Laplace en d = 1, β = 2). Constantes de Hölder: h(fᵢ, f′ⱼ) ≤ C₁ ρ^α y
    K(fᵢ, f′ⱼ) ≤ c_K ρ^{m₁}.
    """

    kind: str
    dim: int = 1

    def __post_init__(self):
        if self.kind not in ('gaussian_location', 'laplace_location'):
            raise ValueError(f"Familia desconocida: {self.kind}")
        if self.kind == 'laplace_location' and self.dim != 1:
            raise DimensionMismatch("La familia Laplace solo se define en d = 1")
        if self.dim < 1:
            raise ValueError("dim debe ser ≥ 1")

    @classmethod
    def gaussian(cls, dim: int = 1) -> 'LikelihoodFamily':
        return cls('gaussian_location', dim)

    @classmethod
    def laplace(cls) -> 'LikelihoodFamily':
        return cls('laplace_location', 1)

    @classmethod
    def from_name(cls, name: str, dim: int = 1) -> 'LikelihoodFamily':
        name = name.lower()
        if name in ('gaussian', 'gaussian_location', 'normal'):
            return cls.gaussian(dim)
        if name in ('laplace', 'laplace_location'):
            return cls.laplace()
        raise ValueError(f"Familia desconocida: {name}")

    # ---------------------------------------------------------------
    # Metadatos
    # ---------------------------------------------------------------

    @property
    def smoothness(self) -> str:
        return 'supersmooth' if self.kind == 'gaussian_location' else 'ordinary'

    @property
    def beta(self) -> float:
        return 2.0

    @property
    def holder(self) -> Tuple[float, float]:
        """(α, C₁) con h(fᵢ, f′ⱼ) ≤ C₁ ρ^α."""
        return 1.0, 1.0 / (2.0 * math.sqrt(2.0))

    @property
    def kl_holder(self) -> Tuple[float, float]:
        """(m₁, c) con K(fᵢ, f′ⱼ) ≤ c ρ^{m₁}."""
        return 2.0, 0.5

    @property
    def conjugate(self) -> bool:
        return self.kind == 'gaussian_location'

    def supports(self, divergence: str) -> bool:
        try:
            normalize_divergence(divergence)
        except UnsupportedDivergence:
            return False
        return True

    def __str__(self) -> str:
        return f"{self.kind}(d={self.dim})"

    # ---------------------------------------------------------------
    # Densidades y muestreo
    # ---------------------------------------------------------------

    def component_logpdf(self, x: np.ndarray, atoms: np.ndarray) -> np.ndarray:
        """log f(xₙ|θᵢ) como matriz n×k."""
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        atoms = np.asarray(atoms, dtype=float).reshape(-1, self.dim)
        diff = x[:, None, :] - atoms[None, :, :]

        if self.kind == 'gaussian_location':
            return -0.5 * np.sum(diff ** 2, axis=2) - 0.5 * self.dim * math.log(2 * math.pi)
        return -np.abs(diff[:, :, 0]) - math.log(2.0)

    def component_pdf(self, x: np.ndarray, atoms: np.ndarray) -> np.ndarray:
        return np.exp(self.component_logpdf(x, atoms))

    def sample(self, locations: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Un x ~ f(·|θ) por fila de `locations`."""
        locations = np.asarray(locations, dtype=float).reshape(-1, self.dim)
        if self.kind == 'gaussian_location':
            return locations + rng.standard_normal(locations.shape)
        return locations + rng.laplace(0.0, 1.0, size=locations.shape)

    # ---------------------------------------------------------------
    # Divergencias entre componentes (forma cerrada)
    # ---------------------------------------------------------------

    def divergence_from_distance(self, divergence: str, delta: np.ndarray) -> np.ndarray:
        """Divergencia entre f(·|θ) y f(·|θ′) como función de ‖θ − θ′‖."""
        divergence = normalize_divergence(divergence)
        delta = np.abs(np.asarray(delta, dtype=float))

        if self.kind == 'gaussian_location':
            if divergence == 'hellinger_sq':
                return -np.expm1(-delta ** 2 / 8.0)
            if divergence == 'kl':
                return 0.5 * delta ** 2
            return 2.0 * norm.cdf(delta / 2.0) - 1.0

        # Laplace, escala 1
        if divergence == 'hellinger_sq':
            return 1.0 - (1.0 + delta / 2.0) * np.exp(-delta / 2.0)
        if divergence == 'kl':
            return np.expm1(-delta) + delta
        return -np.expm1(-delta / 2.0)

    def divergence_matrix(self, divergence: str, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        A = np.asarray(A, dtype=float).reshape(-1, self.dim)
        B = np.asarray(B, dtype=float).reshape(-1, self.dim)
        delta = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
        return np.maximum(self.divergence_from_distance(divergence, delta), 0.0)


def component_divergence(family: LikelihoodFamily, divergence: str,
                         theta: np.ndarray, theta_p: np.ndarray) -> float:
    """
    Divergencia entre f(·|θ) y f(·|θ′).

    Gaussiana: H² = 1 − exp(−‖Δ‖²/8), K = ½‖Δ‖², V = 2Φ(‖Δ‖/2) − 1.
    Laplace (d = 1): H² = 1 − (1 + Δ/2)e^{−Δ/2}, K = e^{−Δ} + Δ − 1, V = 1 − e^{−Δ/2}.
    """
    if not family.supports(divergence):
        raise UnsupportedDivergence(f"{family} no soporta {divergence}")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    theta_p = np.asarray(theta_p, dtype=float).reshape(-1)
    if theta.size != family.dim or theta_p.size != family.dim:
        raise DimensionMismatch(f"Se esperaban vectores de dimensión {family.dim}")
    delta = float(np.linalg.norm(theta - theta_p))
    return float(max(family.divergence_from_distance(divergence, delta), 0.0))


@dataclass(frozen=True, eq=False)
class MixtureDensity:
    """p_G(x) = Σ pᵢ f(x|θᵢ)."""

    mixing: DiscreteMeasure
    family: LikelihoodFamily

    def __post_init__(self):
        if self.mixing.dim != self.family.dim:
            raise DimensionMismatch(
                f"Mezcla en d={self.mixing.dim} con familia en d={self.family.dim}"
            )

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        log_components = self.family.component_logpdf(x, self.mixing.atoms)
        with np.errstate(divide='ignore'):
            log_weights = np.log(self.mixing.weights)
        return logsumexp(log_components + log_weights[None, :], axis=1)

    def pdf(self, x: np.ndarray) -> np.ndarray:
        return self.family.component_pdf(x, self.mixing.atoms) @ self.mixing.weights

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        labels = rng.choice(self.mixing.k, size=n, p=self.mixing.weights)
        return self.family.sample(self.mixing.atoms[labels], rng)

    def window(self) -> Tuple[float, float]:
        """Ventana de cuadratura [min átomo − 10, max átomo + 10] (d = 1)."""
        return (float(self.mixing.atoms.min()) - QUADRATURE['WINDOW'],
                float(self.mixing.atoms.max()) + QUADRATURE['WINDOW'])


def density(p: MixtureDensity, x) -> float:
    """p_G(x) con suma compensada sobre las componentes."""
    values = p.family.component_pdf(np.atleast_1d(np.asarray(x, dtype=float)), p.mixing.atoms)[0]
    return math.fsum(float(w) * float(v) for w, v in zip(p.mixing.weights, values))


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    half_width: float
    method: str

    def __iter__(self):
        yield self.value
        yield self.half_width


def _divergence_integrand(p: MixtureDensity, q: MixtureDensity, divergence: str) -> Callable:
    floor = math.log(TOLERANCES['DENSITY_FLOOR'])

    def integrand(x: float) -> float:
        log_p = max(float(p.logpdf(np.array([x]))[0]), floor)
        log_q = max(float(q.logpdf(np.array([x]))[0]), floor)
        if divergence == 'total_variation':
            return 0.5 * abs(math.exp(log_p) - math.exp(log_q))
        if divergence == 'hellinger_sq':
            return 0.5 * (math.exp(0.5 * log_p) - math.exp(0.5 * log_q)) ** 2
        value = math.exp(log_p) * (log_p - log_q)
        if not math.isfinite(value):
            raise NonOverlappingSupport(f"Integrando KL no finito en x={x}")
        return value

    return integrand


def integrate_line(func: Callable[[float], float], breakpoints: List[float],
                   lower: float, upper: float) -> Tuple[float, float]:
    """
    ∫_ℝ func con scipy.integrate.quad: ventana [lower, upper] con puntos de
    quiebre y las dos colas infinitas por separado.

    Returns:
        (valor, error absoluto estimado)

    Raises:
        QuadratureFailure si quad no entrega un valor finito.
    """
    tol = TOLERANCES['QUADRATURE']
    points = sorted({float(b) for b in breakpoints if lower < b < upper})
    pieces = [
        integrate.quad(func, -np.inf, lower, epsabs=tol, epsrel=0.0, limit=QUADRATURE['LIMIT']),
        integrate.quad(func, lower, upper, epsabs=tol, epsrel=0.0,
                       limit=QUADRATURE['LIMIT'], points=points or None),
        integrate.quad(func, upper, np.inf, epsabs=tol, epsrel=0.0, limit=QUADRATURE['LIMIT']),
    ]
    value = sum(piece[0] for piece in pieces)
    error = sum(piece[1] for piece in pieces)
    if not math.isfinite(value):
        raise QuadratureFailure("La cuadratura no devolvió un valor finito")
    return value, error


def _quadrature_window(p: MixtureDensity, q: MixtureDensity) -> Tuple[float, float, List[float]]:
    lo_p, hi_p = p.window()
    lo_q, hi_q = q.window()
    breakpoints = list(p.mixing.atoms[:, 0]) + list(q.mixing.atoms[:, 0])
    return min(lo_p, lo_q), max(hi_p, hi_q), breakpoints


def mixture_divergence(p: MixtureDensity, q: MixtureDensity, divergence: str,
                       method: str = 'quadrature', n: int = 20000,
                       seed: int = 0) -> DivergenceEstimate:
    """
    Divergencia entre densidades de mezcla.

    method='quadrature' (d = 1): quad adaptativo, tolerancia absoluta 1e-8.
    method='monte_carlo': muestreo de importancia desde (p + q)/2; el
    semiancho es 3 errores estándar.
    """
    divergence = normalize_divergence(divergence)
    if p.family != q.family:
        raise DimensionMismatch(f"Familias distintas: {p.family} vs {q.family}")

    if method == 'quadrature':
        if p.family.dim != 1:
            raise DimensionMismatch("La cuadratura solo se implementa en d = 1")
        lower, upper, breakpoints = _quadrature_window(p, q)
        value, error = integrate_line(_divergence_integrand(p, q, divergence),
                                      breakpoints, lower, upper)
        if divergence != 'kl':
            value = max(value, 0.0)
        return DivergenceEstimate(value=value, half_width=error + TOLERANCES['QUADRATURE'],
                                  method='quadrature')

    if method == 'monte_carlo':
        return _monte_carlo_divergence(p, q, divergence, n, seed)

    raise ValueError(f"Método desconocido: {method}")


def _monte_carlo_divergence(p: MixtureDensity, q: MixtureDensity, divergence: str,
                            n: int, seed: int) -> DivergenceEstimate:
    rng = np.random.default_rng(seed)
    from_p = rng.random(n) < 0.5
    x = np.empty((n, p.family.dim))
    n_p = int(from_p.sum())
    x[from_p] = p.sample(n_p, rng)
    x[~from_p] = q.sample(n - n_p, rng)

    floor = math.log(TOLERANCES['DENSITY_FLOOR'])
    log_p = np.maximum(p.logpdf(x), floor)
    log_q = np.maximum(q.logpdf(x), floor)
    log_m = np.logaddexp(log_p, log_q) - math.log(2.0)

    if divergence == 'total_variation':
        terms = 0.5 * np.abs(np.exp(log_p - log_m) - np.exp(log_q - log_m))
    elif divergence == 'hellinger_sq':
        terms = 0.5 * (np.exp(0.5 * log_p - 0.5 * log_m) - np.exp(0.5 * log_q - 0.5 * log_m)) ** 2
    else:
        terms = np.exp(log_p - log_m) * (log_p - log_q)
        if not np.all(np.isfinite(terms)):
            raise NonOverlappingSupport("Integrando KL no finito en la muestra Monte Carlo")

    value = float(np.mean(terms))
    std_error = float(np.std(terms, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return DivergenceEstimate(value=value, half_width=3.0 * std_error, method='monte_carlo')


def moment(p: MixtureDensity, s: float) -> float:
    """E_p ‖X‖^s por cuadratura (d = 1)."""
    lower, upper = p.window()
    value, _ = integrate_line(
        lambda x: abs(x) ** s * float(p.pdf(np.array([x]))[0]),
        list(p.mixing.atoms[:, 0]) + [0.0], lower, upper,
    )
    return value


def lp_distance(p: MixtureDensity, q: MixtureDensity, power: float = 1.0,
                weight_exponent: float = 0.0) -> float:
    """∫ |p − q|^power ‖x‖^κ (d = 1)."""
    lower, upper, breakpoints = _quadrature_window(p, q)

    def integrand(x: float) -> float:
        diff = abs(float(p.pdf(np.array([x]))[0]) - float(q.pdf(np.array([x]))[0]))
        return diff ** power * abs(x) ** weight_exponent

    value, _ = integrate_line(integrand, breakpoints + [0.0], lower, upper)
    return value
