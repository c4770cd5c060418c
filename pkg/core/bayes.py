"""
Priors y muestreadores posteriores para mezclas finitas y mezclas de
procesos de Dirichlet con verosimilitud Gaussiana de localización (varianza 1).

La medida base es uniforme en la caja Θ; con verosimilitud Gaussiana la
condicional completa de cada átomo es una normal truncada a Θ, y la
verosimilitud marginal de un cluster tiene forma cerrada (producto de masas
normales por coordenada).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

import numpy as np
from scipy.special import gammaln, log_ndtr
from scipy.spatial.distance import pdist
from scipy.stats import truncnorm

from config.settings import PRIOR_DEFAULTS, TOLERANCES
from core.errors import (
    DimensionMismatch,
    NonFiniteLikelihood,
    PackingDegenerate,
    RejectionExhausted,
)
from core.identifiability import packing_number
from core.measures import DiscreteMeasure, ParamSpace, make_measure
from core.mixtures import LikelihoodFamily
from core.transport import quantile_transport_cost

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator, np.random.SeedSequence, None]


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# =============================================
# PRIORS
# =============================================

@dataclass(frozen=True)
class FiniteMixturePrior:
    """
    k átomos iid uniformes en Θ, pesos Dirichlet(γ) simétricos, con pisos de
    peso y de separación entre átomos impuestos por rechazo.
    """

    space: ParamSpace
    k: int
    gamma: float = PRIOR_DEFAULTS['GAMMA']
    weight_floor: float = PRIOR_DEFAULTS['WEIGHT_FLOOR']
    separation_floor: Optional[float] = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k debe ser ≥ 1")
        if self.gamma <= 0:
            raise ValueError("γ debe ser > 0")
        if self.separation_floor is None:
            object.__setattr__(self, 'separation_floor',
                               PRIOR_DEFAULTS['SEPARATION_FRACTION'] * self.space.diameter())
        if self.separation_floor < 0 or self.weight_floor < 0:
            raise ValueError("Los pisos deben ser ≥ 0")
        if self.weight_floor * self.k > 1:
            raise RejectionExhausted(f"Piso de peso {self.weight_floor} imposible con k={self.k}")

    def weights_ok(self, weights: np.ndarray) -> bool:
        return bool(np.min(weights) >= self.weight_floor)

    def atoms_ok(self, atoms: np.ndarray) -> bool:
        return atoms.shape[0] < 2 or bool(np.min(pdist(atoms)) >= self.separation_floor)


@dataclass(frozen=True)
class DPPrior:
    """DP(ν, P₀) con P₀ uniforme en Θ, truncado a T palos."""

    space: ParamSpace
    concentration: float = PRIOR_DEFAULTS['CONCENTRATION']
    truncation: Optional[int] = None

    def __post_init__(self):
        if self.concentration <= 0:
            raise ValueError("ν debe ser > 0")
        if self.truncation is None:
            ratio = self.concentration / (self.concentration + 1.0)
            levels = math.ceil(math.log(PRIOR_DEFAULTS['DP_TAIL_BUDGET']) / math.log(ratio))
            object.__setattr__(self, 'truncation', max(2, levels))
        if self.tail_mass_bound() > PRIOR_DEFAULTS['DP_TAIL_BUDGET']:
            raise ValueError(
                f"Truncación T={self.truncation} deja masa de cola {self.tail_mass_bound():.3g}"
            )

    def tail_mass_bound(self) -> float:
        """E[1 − Σ_{t≤T} w_t] = (ν/(ν+1))^T."""
        return (self.concentration / (self.concentration + 1.0)) ** self.truncation

    def log_base_density(self) -> float:
        return -math.log(self.space.volume())


def stick_breaking(concentration: float, truncation: int, size: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Pesos truncados (size×T); el último palo absorbe la cola."""
    sticks = rng.beta(1.0, concentration, size=(size, truncation))
    sticks[:, -1] = 1.0
    remaining = np.cumprod(1.0 - sticks[:, :-1], axis=1)
    remaining = np.hstack([np.ones((size, 1)), remaining])
    return sticks * remaining


def sample_prior(prior: Union[FiniteMixturePrior, DPPrior], seed: SeedLike = None) -> DiscreteMeasure:
    """
    Una medida del prior.

    Raises:
        RejectionExhausted si los pisos del prior finito no se satisfacen.
    """
    rng = _rng(seed)
    space = prior.space

    if isinstance(prior, DPPrior):
        weights = stick_breaking(prior.concentration, prior.truncation, 1, rng)[0]
        atoms = rng.uniform(space.lower, space.upper, size=(prior.truncation, space.dim))
        return make_measure(atoms, weights, space)

    for _ in range(PRIOR_DEFAULTS['MAX_REJECTIONS']):
        weights = rng.dirichlet(np.full(prior.k, prior.gamma))
        atoms = rng.uniform(space.lower, space.upper, size=(prior.k, space.dim))
        if prior.weights_ok(weights) and prior.atoms_ok(atoms):
            return make_measure(atoms, weights, space)

    raise RejectionExhausted(
        f"Sin muestras que cumplan los pisos tras {PRIOR_DEFAULTS['MAX_REJECTIONS']} intentos"
    )


def simulate_data(G0: DiscreteMeasure, family: LikelihoodFamily, n: int,
                  seed: SeedLike = None) -> np.ndarray:
    """n observaciones iid de p_{G₀} (matriz n×d)."""
    if G0.dim != family.dim:
        raise DimensionMismatch(f"G₀ en d={G0.dim}, familia en d={family.dim}")
    if n == 0:
        return np.empty((0, family.dim))
    rng = _rng(seed)
    labels = rng.choice(G0.k, size=n, p=G0.weights)
    return family.sample(G0.atoms[labels], rng)


# =============================================
# CADENAS
# =============================================

@dataclass(eq=False)
class PosteriorChain:
    draws: List[DiscreteMeasure]
    seed: Optional[int]
    burn_in: int
    thin: int
    iterations: int
    model: str
    n: int = 0
    diagnostics: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.draws)


def _retained(iteration: int, burn_in: int, thin: int) -> bool:
    return iteration >= burn_in and (iteration - burn_in) % thin == 0


def _check_chain_args(iterations: int, burn_in: int, thin: int):
    if iterations < 1 or burn_in < 0 or thin < 1 or burn_in >= iterations:
        raise ValueError(
            f"Parámetros de cadena inválidos: iterations={iterations}, "
            f"burn_in={burn_in}, thin={thin}"
        )


def _check_family(family: LikelihoodFamily):
    if not family.conjugate:
        raise ValueError(f"El muestreador requiere la familia Gaussiana (recibido {family})")


def _truncated_normal(mean: np.ndarray, sd: float, space: ParamSpace,
                      rng: np.random.Generator) -> np.ndarray:
    """Normal(mean, sd²·I) truncada a la caja, coordenada a coordenada."""
    mean = np.asarray(mean, dtype=float).reshape(space.dim)
    a = (space.lower - mean) / sd
    b = (space.upper - mean) / sd
    draw = truncnorm.rvs(a, b, loc=mean, scale=sd, size=space.dim, random_state=rng)
    return np.reshape(draw, space.dim)


def _draw_atom(count: int, total: np.ndarray, space: ParamSpace,
               rng: np.random.Generator) -> np.ndarray:
    """Átomo (d,) desde la condicional completa; P₀ si el cluster está vacío."""
    if count == 0:
        return rng.uniform(space.lower, space.upper, size=space.dim)
    return _truncated_normal(total / count, 1.0 / math.sqrt(count), space, rng)


def gibbs_finite(data: np.ndarray, prior: FiniteMixturePrior, family: LikelihoodFamily,
                 iterations: int, burn_in: int, thin: int, seed: int) -> PosteriorChain:
    """
    Gibbs para la mezcla finita con k conocido.

    Alterna asignaciones zᵢ ∝ p_c f(xᵢ|θ_c), pesos ~ Dirichlet(γ + conteos) y
    átomos desde la normal truncada; los pisos del prior se imponen por rechazo.
    """
    _check_family(family)
    _check_chain_args(iterations, burn_in, thin)

    data = np.asarray(data, dtype=float).reshape(-1, family.dim)
    rng = np.random.default_rng(seed)
    space = prior.space
    max_tries = PRIOR_DEFAULTS['MAX_REJECTIONS']

    state = sample_prior(prior, rng)
    atoms = np.array(state.atoms)
    weights = np.array(state.weights)

    draws: List[DiscreteMeasure] = []
    rejections = {'weights': 0, 'atoms': 0}

    for iteration in range(iterations):
        # (i) asignaciones
        counts = np.zeros(prior.k)
        totals = np.zeros((prior.k, space.dim))
        if data.shape[0]:
            logits = family.component_logpdf(data, atoms) + np.log(weights)[None, :]
            if not np.all(np.isfinite(logits)):
                raise NonFiniteLikelihood(f"Log-verosimilitud no finita en iteración {iteration}")
            gumbel = -np.log(-np.log(rng.random(logits.shape)))
            labels = np.argmax(logits + gumbel, axis=1)
            counts = np.bincount(labels, minlength=prior.k).astype(float)
            for c in range(prior.k):
                totals[c] = data[labels == c].sum(axis=0)

        # (ii) pesos
        for _ in range(max_tries):
            weights = rng.dirichlet(prior.gamma + counts)
            if prior.weights_ok(weights):
                break
            rejections['weights'] += 1
        else:
            raise RejectionExhausted("Piso de pesos inalcanzable en la condicional")

        # (iii) átomos
        for _ in range(max_tries):
            atoms = np.array([_draw_atom(int(counts[c]), totals[c], space, rng)
                              for c in range(prior.k)]).reshape(prior.k, space.dim)
            if prior.atoms_ok(atoms):
                break
            rejections['atoms'] += 1
        else:
            raise RejectionExhausted("Piso de separación inalcanzable en la condicional")

        if _retained(iteration, burn_in, thin):
            draws.append(make_measure(atoms, weights, space))

    logger.debug(f"gibbs_finite: {len(draws)} muestras, rechazos {rejections}")
    return PosteriorChain(draws=draws, seed=seed, burn_in=burn_in, thin=thin,
                          iterations=iterations, model='finite', n=int(data.shape[0]),
                          diagnostics={'rejections': rejections})


# =============================================
# DP: GIBBS MARGINAL (RESTAURANTE CHINO)
# =============================================

def _log_interval_mass(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log(Φ(b) − Φ(a)) estable para a < b."""
    flip = a > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    log_hi = log_ndtr(hi)
    log_lo = log_ndtr(lo)
    with np.errstate(divide='ignore'):
        value = log_hi + np.log1p(-np.exp(np.minimum(log_lo - log_hi, 0.0)))
    return np.maximum(value, -745.0)


class ClusterMarginal:
    """
    Verosimilitud marginal de un cluster bajo θ ~ Uniforme(Θ), x|θ ~ N(θ, I).

    log m(S) = −log|Θ| − (n d/2) log 2π − ½ Σ‖xᵢ‖² + ½‖s‖²/n + (d/2) log(2π/n)
               + Σ_j log[Φ(√n(u_j − s_j/n)) − Φ(√n(l_j − s_j/n))]
    """

    def __init__(self, space: ParamSpace):
        self.space = space
        self.dim = space.dim
        self.log_volume = math.log(space.volume())

    def log_mass(self, counts: np.ndarray, sums: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts, dtype=float)
        root = np.sqrt(counts)[:, None]
        means = sums / counts[:, None]
        a = root * (self.space.lower - means)
        b = root * (self.space.upper - means)
        return np.sum(_log_interval_mass(a, b), axis=1)

    def log_new(self, x: np.ndarray) -> float:
        """log m({x}) para un cluster nuevo."""
        return float(np.sum(_log_interval_mass(self.space.lower - x, self.space.upper - x))
                     - self.log_volume)

    def log_predictive(self, x: np.ndarray, counts: np.ndarray, sums: np.ndarray,
                       log_mass: np.ndarray) -> np.ndarray:
        """log p(x | S_c) para todos los clusters ocupados."""
        counts = np.asarray(counts, dtype=float)
        new_sums = sums + x[None, :]
        new_counts = counts + 1.0
        quadratic = (-0.5 * float(x @ x)
                     + 0.5 * np.sum(new_sums ** 2, axis=1) / new_counts
                     - 0.5 * np.sum(sums ** 2, axis=1) / counts)
        return (-0.5 * self.dim * math.log(2 * math.pi) + quadratic
                + 0.5 * self.dim * np.log(counts / new_counts)
                + self.log_mass(new_counts, new_sums) - log_mass)


def gibbs_dp(data: np.ndarray, prior: DPPrior, family: LikelihoodFamily,
             iterations: int, burn_in: int, thin: int, seed: int) -> PosteriorChain:
    """
    Gibbs marginal para la mezcla DP, con extracción posterior de átomos por
    cluster, pesos Dirichlet(n₁, …, n_K, ν) y un átomo de cola desde P₀ que
    lleva la masa residual. Sin observaciones, las muestras vienen del prior.
    """
    _check_family(family)
    _check_chain_args(iterations, burn_in, thin)

    data = np.asarray(data, dtype=float).reshape(-1, family.dim)
    rng = np.random.default_rng(seed)
    space = prior.space
    n = data.shape[0]
    nu = prior.concentration

    draws: List[DiscreteMeasure] = []

    if n == 0:
        for iteration in range(iterations):
            if _retained(iteration, burn_in, thin):
                draws.append(sample_prior(prior, rng))
        return PosteriorChain(draws=draws, seed=seed, burn_in=burn_in, thin=thin,
                              iterations=iterations, model='dp', n=0,
                              diagnostics={'mean_clusters': 0.0})

    marginal = ClusterMarginal(space)
    log_new = np.array([marginal.log_new(x) for x in data])
    if not np.all(np.isfinite(log_new)):
        raise NonFiniteLikelihood("Verosimilitud marginal no finita para alguna observación")

    # Estado inicial: un solo cluster
    labels = np.zeros(n, dtype=int)
    counts = [float(n)]
    sums = [data.sum(axis=0)]
    cluster_sizes = []

    for iteration in range(iterations):
        counts_arr = np.array(counts)
        sums_arr = np.array(sums).reshape(-1, space.dim)
        log_mass = marginal.log_mass(counts_arr, sums_arr)

        for i in range(n):
            x = data[i]
            c = labels[i]
            counts_arr[c] -= 1.0
            sums_arr[c] -= x

            if counts_arr[c] == 0:
                # Elimina el cluster vacío (intercambio con el último)
                last = counts_arr.shape[0] - 1
                if c != last:
                    counts_arr[c] = counts_arr[last]
                    sums_arr[c] = sums_arr[last]
                    log_mass[c] = log_mass[last]
                    labels[labels == last] = c
                counts_arr = counts_arr[:last]
                sums_arr = sums_arr[:last]
                log_mass = log_mass[:last]
            else:
                log_mass[c] = marginal.log_mass(counts_arr[c:c + 1], sums_arr[c:c + 1])[0]

            logits = np.empty(counts_arr.shape[0] + 1)
            if counts_arr.shape[0]:
                logits[:-1] = np.log(counts_arr) + marginal.log_predictive(
                    x, counts_arr, sums_arr, log_mass)
            logits[-1] = math.log(nu) + log_new[i]
            if not np.all(np.isfinite(logits)):
                raise NonFiniteLikelihood(f"Probabilidad no finita para x[{i}]")

            gumbel = -np.log(-np.log(rng.random(logits.shape[0])))
            choice = int(np.argmax(logits + gumbel))

            if choice == counts_arr.shape[0]:
                counts_arr = np.append(counts_arr, 1.0)
                sums_arr = np.vstack([sums_arr, x[None, :]])
                log_mass = np.append(log_mass, marginal.log_mass(counts_arr[-1:], sums_arr[-1:]))
            else:
                counts_arr[choice] += 1.0
                sums_arr[choice] += x
                log_mass[choice] = marginal.log_mass(counts_arr[choice:choice + 1],
                                                     sums_arr[choice:choice + 1])[0]
            labels[i] = choice

        counts = list(counts_arr)
        sums = list(sums_arr)
        cluster_sizes.append(len(counts))

        if _retained(iteration, burn_in, thin):
            atoms = [_draw_atom(int(cnt), total, space, rng) for cnt, total in zip(counts_arr, sums_arr)]
            atoms.append(rng.uniform(space.lower, space.upper, size=space.dim))
            weights = rng.dirichlet(np.append(counts_arr, nu))
            draws.append(make_measure(np.array(atoms).reshape(-1, space.dim), weights, space))

    logger.debug(f"gibbs_dp: {len(draws)} muestras, clusters medios {np.mean(cluster_sizes):.2f}")
    return PosteriorChain(draws=draws, seed=seed, burn_in=burn_in, thin=thin,
                          iterations=iterations, model='dp', n=n,
                          diagnostics={'mean_clusters': float(np.mean(cluster_sizes))})


# =============================================
# BOLA PEQUEÑA BAJO EL DP
# =============================================

def centered_packing(space: ParamSpace, eps: float) -> np.ndarray:
    """Empaquetamiento ε maximal de un intervalo, centrado (d = 1)."""
    length = float(space.widths[0])
    count = packing_number(space, eps)
    offset = 0.5 * (length - (count - 1) * eps)
    return space.lower[0] + offset + eps * np.arange(count)


def small_ball_bound(prior: DPPrior, eps: float, r: float) -> Dict:
    """
    Cota inferior de Π(W_r^r(G₀, G) ≤ (2^r + 1) ε^r) bajo DP(ν, P₀):

        Γ(ν) ν^D / (2D)^{D−1} · (ε / Diam Θ)^{r(D−1)} · Π_i P₀(S_i)

    con S_i las bolas de radio ε/2 del empaquetamiento centrado.

    Raises:
        PackingDegenerate si D < 2.
    """
    space = prior.space
    if space.dim != 1:
        raise DimensionMismatch("La cota de bola pequeña se calcula en d = 1")

    centers = centered_packing(space, eps)
    D = centers.size
    if D < 2:
        raise PackingDegenerate(f"D(ε={eps:g}) = {D} < 2")

    low = np.maximum(centers - eps / 2.0, space.lower[0])
    high = np.minimum(centers + eps / 2.0, space.upper[0])
    masses = (high - low) / float(space.widths[0])
    nu = prior.concentration
    diameter = space.diameter()

    log_bound = (gammaln(nu) + D * math.log(nu) - (D - 1) * math.log(2 * D)
                 + r * (D - 1) * math.log(eps / diameter) + float(np.sum(np.log(masses))))

    return {
        'D': int(D),
        'log_bound': log_bound,
        'bound': math.exp(log_bound),
        'threshold': (2.0 ** r + 1.0) * eps ** r,
        'regime_ok': bool(np.all(nu * masses <= 1.0)),
    }


def dp_small_ball_check(prior: DPPrior, G0: DiscreteMeasure, eps: float, r: float,
                        mc_draws: int, seed: int) -> Dict:
    """
    Compara la cota de bola pequeña con una estimación Monte Carlo sobre
    draws del prior truncado. Es válida si p̂ ≥ cota − 3 errores estándar.
    """
    bound = small_ball_bound(prior, eps, r)
    rng = np.random.default_rng(seed)
    space = prior.space

    weights = stick_breaking(prior.concentration, prior.truncation, mc_draws, rng)
    atoms = rng.uniform(space.lower[0], space.upper[0], size=(mc_draws, prior.truncation))

    if G0.k == 1:
        costs = np.sum(weights * np.abs(atoms - G0.atoms[0, 0]) ** r, axis=1)
    else:
        x0, w0 = G0.atoms[:, 0], G0.weights
        costs = np.array([quantile_transport_cost(atoms[t], weights[t], x0, w0, r)
                          for t in range(mc_draws)])

    hits = costs <= bound['threshold']
    estimate = float(hits.mean())
    std_error = math.sqrt(max(estimate * (1.0 - estimate), 0.0) / mc_draws)
    valido = estimate >= bound['bound'] - 3.0 * std_error - TOLERANCES['WEIGHT_SUM']

    return {
        **bound,
        'nu': prior.concentration,
        'eps': eps,
        'r': r,
        'estimate': estimate,
        'std_error': std_error,
        'draws': mc_draws,
        'valido': bool(valido),
    }
