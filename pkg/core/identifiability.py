"""
Funcionales empíricos de identificabilidad.

Incluye los cocientes ψ y ψ₁, la sonda de identificabilidad fuerte, la
información de Hellinger Ψ_𝒢(r), números de cubrimiento/empaquetamiento y las
construcciones voraces sobre conjuntos finitos de medidas.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import optimize
from scipy.integrate import trapezoid
from scipy.special import softmax

from config.settings import PSI_DEFAULTS, QUADRATURE, SAMPLING, TOLERANCES
from core.errors import DegenerateRatio, DimensionMismatch, SamplingExhausted
from core.measures import DiscreteMeasure, ParamSpace, make_measure
from core.mixtures import LikelihoodFamily, MixtureDensity, integrate_line, mixture_divergence
from core.transport import wasserstein, wasserstein_1d_oracle

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasureClass:
    """
    𝒢_k(Θ) (kind='at_most_k_atoms') o la truncación finita de 𝒢̄(Θ)
    (kind='all_discrete_truncated').
    """

    kind: str
    space: ParamSpace
    k: int = 1
    max_atoms: int = 1

    def __post_init__(self):
        if self.kind not in ('at_most_k_atoms', 'all_discrete_truncated'):
            raise ValueError(f"Clase desconocida: {self.kind}")
        if self.k < 1 or self.max_atoms < 1:
            raise ValueError("k y max_atoms deben ser ≥ 1")

    @classmethod
    def at_most(cls, k: int, space: ParamSpace) -> 'MeasureClass':
        return cls('at_most_k_atoms', space, k=k, max_atoms=k)

    @classmethod
    def truncated(cls, max_atoms: int, space: ParamSpace) -> 'MeasureClass':
        return cls('all_discrete_truncated', space, k=max_atoms, max_atoms=max_atoms)

    @property
    def atom_budget(self) -> int:
        return self.k if self.kind == 'at_most_k_atoms' else self.max_atoms

    @property
    def convex(self) -> bool:
        return self.kind == 'all_discrete_truncated'

    def wasserstein_diameter(self, G0: DiscreteMeasure) -> float:
        """sup_{G ∈ 𝒢} W₂(G₀, G), alcanzado en un Dirac sobre un vértice de Θ."""
        vertices = self.space.vertices()
        sq = np.sum((G0.atoms[None, :, :] - vertices[:, None, :]) ** 2, axis=2) @ G0.weights
        return float(math.sqrt(sq.max()))

    def random_measure(self, rng: np.random.Generator) -> DiscreteMeasure:
        budget = self.atom_budget
        k = budget if self.kind == 'at_most_k_atoms' else int(rng.integers(1, budget + 1))
        atoms = rng.uniform(self.space.lower, self.space.upper, size=(k, self.space.dim))
        weights = rng.dirichlet(np.ones(k))
        return make_measure(atoms, weights, self.space)


@dataclass(frozen=True, eq=False)
class PsiEstimate:
    r: float
    value: float
    minimizer: DiscreteMeasure
    restarts: int
    feasible: bool
    converged: int = 0
    witness_distance: float = 0.0


def distance_function(r: float = 2.0, dim: int = 1) -> Callable[[DiscreteMeasure, DiscreteMeasure], float]:
    """W_r exacto; en d = 1 usa el acoplamiento de cuantiles."""
    if dim == 1:
        return lambda G, Gp: wasserstein_1d_oracle(G, Gp, r)
    return lambda G, Gp: wasserstein(G, Gp, r)


def default_grid(measures: Sequence[DiscreteMeasure], points: int = PSI_DEFAULTS['GRID_POINTS']) -> np.ndarray:
    """Grilla de evaluación sobre [min átomo − 10, max átomo + 10] (d = 1)."""
    lower = min(float(G.atoms.min()) for G in measures) - QUADRATURE['WINDOW']
    upper = max(float(G.atoms.max()) for G in measures) + QUADRATURE['WINDOW']
    return np.linspace(lower, upper, points)


# =============================================
# COCIENTES ψ
# =============================================

def psi_ratio(G: DiscreteMeasure, Gp: DiscreteMeasure, family: LikelihoodFamily,
              variant: str = 'tv', grid: Optional[np.ndarray] = None) -> float:
    """
    ψ(G, G′) = sup_x |p_G − p_G′| / W₂² (variant='sup_norm') o
    ψ₁(G, G′) = V(p_G, p_G′) / W₂² (variant='tv').

    El supremo se toma sobre la grilla, por lo que es una cota inferior del
    supremo esencial. Devuelve +∞ si G = G′.

    Raises:
        DegenerateRatio si 0 < W₂ < 1e-12.
    """
    w2 = distance_function(2.0, G.dim)(G, Gp)
    if w2 == 0.0:
        return math.inf
    if w2 < TOLERANCES['RATIO_FLOOR']:
        raise DegenerateRatio(f"W₂ = {w2:.3g} demasiado pequeño para el cociente")

    p = MixtureDensity(G, family)
    q = MixtureDensity(Gp, family)

    if variant == 'sup_norm':
        if grid is None:
            if family.dim != 1:
                raise DimensionMismatch("Se requiere una grilla explícita para d > 1")
            grid = default_grid([G, Gp])
        numerator = float(np.max(np.abs(p.pdf(grid) - q.pdf(grid))))
    elif variant == 'tv':
        numerator = mixture_divergence(p, q, 'tv').value
    else:
        raise ValueError(f"Variante desconocida: {variant}")

    return numerator / w2 ** 2


def _perturb(G0: DiscreteMeasure, k: int, scale: float, rng: np.random.Generator) -> DiscreteMeasure:
    """Medida con k átomos cerca de G₀ (átomos y pesos perturbados a escala `scale`)."""
    space = G0.space
    base_atoms = G0.atoms
    base_weights = G0.weights
    if k > G0.k:
        extra = rng.choice(G0.k, size=k - G0.k)
        base_atoms = np.vstack([base_atoms, base_atoms[extra]])
        base_weights = np.concatenate([base_weights, np.zeros(k - G0.k)])
    elif k < G0.k:
        keep = np.argsort(-base_weights, kind='stable')[:k]
        base_atoms = base_atoms[keep]
        base_weights = base_weights[keep]

    atoms = base_atoms + rng.uniform(-scale, scale, size=base_atoms.shape)
    atoms = np.clip(atoms, space.lower, space.upper)
    mix = min(1.0, scale * rng.random())
    weights = (1.0 - mix) * base_weights / base_weights.sum() + mix * rng.dirichlet(np.ones(k))
    return make_measure(atoms, weights, space)


def sample_ball(center: DiscreteMeasure, radius: float, k: int, n: int,
                rng: np.random.Generator, r: float = 2.0,
                max_rejections: int = SAMPLING['MAX_REJECTIONS']) -> List[DiscreteMeasure]:
    """
    n medidas de 𝒢_k con W_r(center, G) ≤ radius, por perturbación y rechazo.

    Raises:
        SamplingExhausted si se superan `max_rejections` rechazos.
    """
    distance = distance_function(r, center.dim)
    accepted: List[DiscreteMeasure] = []
    rejections = 0

    while len(accepted) < n:
        scale = radius * rng.random() ** 0.5
        candidate = _perturb(center, k, scale, rng)
        if distance(center, candidate) <= radius:
            accepted.append(candidate)
            continue
        rejections += 1
        if rejections >= max_rejections:
            raise SamplingExhausted(
                f"Rechazo agotado tras {rejections} intentos (radio {radius:g})"
            )

    return accepted


def strong_identifiability_probe(G0: DiscreteMeasure, family: LikelihoodFamily, k: int,
                                 eps_schedule: Sequence[float], samples_per_eps: int,
                                 seed: int) -> List[Dict]:
    """
    Mínimo observado de ψ₁ sobre pares (G, G′) ⊂ 𝒢_k con
    W₂(G₀, G) ∨ W₂(G₀, G′) ≤ ε, para cada ε del programa.

    Raises:
        DegenerateRatio si algún ε ≤ 0; SamplingExhausted.
    """
    if any(eps <= 0 for eps in eps_schedule):
        raise DegenerateRatio("Se requiere ε > 0 en todo el programa")

    seeds = np.random.SeedSequence(seed).spawn(len(eps_schedule))
    distance = distance_function(2.0, G0.dim)
    table = []

    for eps, child in zip(eps_schedule, seeds):
        rng = np.random.default_rng(child)
        minimum = math.inf
        witness = None
        evaluated = 0

        while evaluated < samples_per_eps:
            G, Gp = sample_ball(G0, eps, k, 2, rng)
            if distance(G, Gp) < TOLERANCES['RATIO_FLOOR']:
                continue
            value = psi_ratio(G, Gp, family, 'tv')
            evaluated += 1
            if value < minimum:
                minimum, witness = value, (G, Gp)

        logger.debug(f"ε={eps:g}: inf ψ₁ ≈ {minimum:.4g}")
        table.append({'eps': float(eps), 'min_psi': minimum, 'samples': evaluated,
                      'witness': witness})

    return table


# =============================================
# INFORMACIÓN DE HELLINGER
# =============================================

class HellingerInformation:
    """
    Ψ_𝒢(r) = inf { h²(p_{G₀}, p_G) : G ∈ 𝒢, W₂(G₀, G) ≥ r/2 }.

    Búsqueda local multi-inicio (L-BFGS-B) con penalización cuadrática de la
    restricción y reparación de factibilidad por bisección hacia un Dirac en un
    vértice factible. El resultado es una cota superior del ínfimo.
    """

    def __init__(self, G0: DiscreteMeasure, cls: MeasureClass, family: LikelihoodFamily):
        if G0.dim != 1 or family.dim != 1:
            raise DimensionMismatch("La información de Hellinger se estima en d = 1")
        self.G0 = G0
        self.cls = cls
        self.family = family
        self.space = cls.space
        self.m = cls.atom_budget
        self.distance = distance_function(2.0, 1)

        lower = min(float(self.space.lower[0]), float(G0.atoms.min())) - QUADRATURE['WINDOW']
        upper = max(float(self.space.upper[0]), float(G0.atoms.max())) + QUADRATURE['WINDOW']
        self.grid = np.linspace(lower, upper, PSI_DEFAULTS['GRID_POINTS'])
        self.sqrt_p0 = np.sqrt(MixtureDensity(G0, family).pdf(self.grid))

    def hellinger_sq(self, G: DiscreteMeasure) -> float:
        sqrt_p = np.sqrt(MixtureDensity(G, self.family).pdf(self.grid))
        return float(0.5 * trapezoid((self.sqrt_p0 - sqrt_p) ** 2, self.grid))

    def _unpack(self, z: np.ndarray) -> DiscreteMeasure:
        atoms = np.clip(z[:self.m], self.space.lower[0], self.space.upper[0]).reshape(-1, 1)
        weights = softmax(z[self.m:])
        return make_measure(atoms, weights, self.space)

    def _pack(self, G: DiscreteMeasure) -> np.ndarray:
        atoms = np.resize(G.atoms[:, 0], self.m)
        weights = np.resize(G.weights, self.m) + 1e-9
        return np.concatenate([atoms, np.log(weights)])

    def _start(self, r: float, rng: np.random.Generator, index: int) -> np.ndarray:
        if index % 4 == 3:
            return self._pack(self.cls.random_measure(rng))
        direction = 1.0 if rng.random() < 0.5 else -1.0
        shift = direction * (r / 2.0) * (1.0 + PSI_DEFAULTS['PERTURBATION'] * abs(rng.standard_normal()))
        base = np.resize(self.G0.atoms[:, 0], self.m)
        atoms = base + shift + rng.normal(0.0, PSI_DEFAULTS['PERTURBATION'] * r, size=self.m)
        atoms = np.clip(atoms, self.space.lower[0], self.space.upper[0])
        logits = np.log(np.resize(self.G0.weights, self.m) + 0.05) + rng.normal(0.0, 0.25, size=self.m)
        return np.concatenate([atoms, logits])

    def _anchor(self, G: DiscreteMeasure, target: float) -> Optional[DiscreteMeasure]:
        """Dirac factible en un vértice de Θ, el más cercano a G."""
        best, best_distance = None, math.inf
        for vertex in self.space.vertices():
            anchor = make_measure(vertex.reshape(1, -1), [1.0], self.space)
            if self.distance(self.G0, anchor) < target:
                continue
            d = self.distance(G, anchor)
            if d < best_distance:
                best, best_distance = anchor, d
        return best

    def _repair(self, G: DiscreteMeasure, target: float) -> DiscreteMeasure:
        if self.distance(self.G0, G) >= target:
            return G
        anchor = self._anchor(G, target)
        if anchor is None:
            return G

        atoms = G.atoms[:, 0]
        weights = G.weights
        anchor_atom = float(anchor.atoms[0, 0])

        def blend(lam: float) -> DiscreteMeasure:
            return make_measure(((1 - lam) * atoms + lam * anchor_atom).reshape(-1, 1),
                                weights, self.space)

        low, high = 0.0, 1.0
        for _ in range(PSI_DEFAULTS['REPAIR_STEPS']):
            mid = 0.5 * (low + high)
            if self.distance(self.G0, blend(mid)) >= target:
                high = mid
            else:
                low = mid
        return blend(high)

    def estimate(self, r: float, restarts: int = PSI_DEFAULTS['RESTARTS'],
                 seed: int = 0) -> PsiEstimate:
        if r < 0:
            raise ValueError("r debe ser ≥ 0")
        if r == 0:
            return PsiEstimate(r=0.0, value=0.0, minimizer=self.G0, restarts=0, feasible=True)

        target = r / 2.0
        if target > self.cls.wasserstein_diameter(self.G0) + TOLERANCES['RATIO_FLOOR']:
            logger.debug(f"r={r:g}: conjunto factible vacío")
            return PsiEstimate(r=float(r), value=math.inf, minimizer=self.G0,
                               restarts=0, feasible=False)

        bounds = [(float(self.space.lower[0]), float(self.space.upper[0]))] * self.m
        bounds += [(-20.0, 20.0)] * self.m

        def objective(z: np.ndarray) -> float:
            G = self._unpack(z)
            violation = max(0.0, target - self.distance(self.G0, G))
            return self.hellinger_sq(G) + PSI_DEFAULTS['PENALTY'] * violation ** 2

        best: Optional[DiscreteMeasure] = None
        best_value = math.inf
        converged = 0

        for index, child in enumerate(np.random.SeedSequence(seed).spawn(restarts)):
            rng = np.random.default_rng(child)
            result = optimize.minimize(objective, self._start(r, rng, index), method='L-BFGS-B',
                                       bounds=bounds, options={'maxiter': PSI_DEFAULTS['MAX_ITER']})
            converged += int(result.success)
            candidate = self._repair(self._unpack(result.x), target)
            if self.distance(self.G0, candidate) < target:
                continue
            value = self.hellinger_sq(candidate)
            if value < best_value:
                best, best_value = candidate, value

        if best is None:
            return PsiEstimate(r=float(r), value=math.inf, minimizer=self.G0, restarts=restarts,
                               feasible=False, converged=converged)

        return PsiEstimate(r=float(r), value=best_value, minimizer=best, restarts=restarts,
                           feasible=True, converged=converged,
                           witness_distance=self.distance(self.G0, best))

    def grid_search(self, r: float, resolution: Optional[int] = None) -> float:
        """Ψ(r) por búsqueda en grilla (k ≤ 2); validación cruzada del optimizador."""
        target = r / 2.0
        if resolution is None:
            resolution = 201 if self.m == 1 else 41
        thetas = np.linspace(self.space.lower[0], self.space.upper[0], resolution)
        best = math.inf

        if self.m == 1:
            for theta in thetas:
                G = make_measure([[theta]], [1.0], self.space)
                if self.distance(self.G0, G) >= target:
                    best = min(best, self.hellinger_sq(G))
            return best

        weights = np.linspace(0.0, 1.0, 21)
        for i, a in enumerate(thetas):
            for b in thetas[i:]:
                for w in weights:
                    G = make_measure([[a], [b]], [w, 1.0 - w], self.space)
                    if self.distance(self.G0, G) >= target:
                        best = min(best, self.hellinger_sq(G))
        return best


def hellinger_information(G0: DiscreteMeasure, cls: MeasureClass, family: LikelihoodFamily,
                          r: float, restarts: int = PSI_DEFAULTS['RESTARTS'],
                          seed: int = 0) -> PsiEstimate:
    """Estimación (cota superior) de Ψ_𝒢(r); r = 0 devuelve 0 con minimizador G₀."""
    return HellingerInformation(G0, cls, family).estimate(r, restarts, seed)


def hellinger_information_profile(G0: DiscreteMeasure, cls: MeasureClass, family: LikelihoodFamily,
                                  radii: Sequence[float], restarts: int = PSI_DEFAULTS['RESTARTS'],
                                  seed: int = 0) -> Dict:
    """
    Ψ̂ sobre radios crecientes, con la salida cruda y la versión monótona.

    monotone[i] = min_{j ≥ i} raw[j]. Un competidor factible en r_j ≥ r_i
    (W₂ ≥ r_j/2) también lo es en r_i, así que cada valor monótono es el de un
    testigo factible y sigue siendo cota superior de Ψ(r_i), que es no
    decreciente en r. Nunca supera al crudo del mismo radio.

    Raises:
        ValueError si los radios no son estrictamente crecientes.
    """
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"Los radios deben ser estrictamente crecientes: {list(radii)}")

    solver = HellingerInformation(G0, cls, family)
    seeds = np.random.SeedSequence(seed).generate_state(len(radii))
    estimates = [solver.estimate(r, restarts, int(s)) for r, s in zip(radii, seeds)]

    raw = np.array([e.value for e in estimates], dtype=float)
    monotone = np.minimum.accumulate(raw[::-1])[::-1]
    return {'radii': [float(r) for r in radii], 'raw': raw.tolist(),
            'monotone': monotone.tolist(), 'estimates': estimates}


# =============================================
# CUBRIMIENTO Y EMPAQUETAMIENTO
# =============================================

def covering_number(target: Union[ParamSpace, Sequence[DiscreteMeasure]], eps: float,
                    metric: str = 'euclidean', r: float = 2.0) -> int:
    """
    N(ε, ·, ·).

    Para una caja Θ (métrica euclídea) usa la fórmula de grilla: exacta en
    d = 1 (bolas cerradas), cota superior para d ≥ 2. Para un conjunto finito
    de medidas (metric='wasserstein') construye un cubrimiento voraz por punto
    más lejano y devuelve su tamaño.
    """
    if eps <= 0:
        raise ValueError("ε debe ser > 0")

    if isinstance(target, ParamSpace):
        if metric != 'euclidean':
            raise ValueError("Una caja Θ solo admite la métrica euclídea")
        slack = TOLERANCES['GRID_COUNT']
        if target.dim == 1:
            return max(1, math.ceil(float(target.widths[0]) / (2.0 * eps) - slack))
        side = 2.0 * eps / math.sqrt(target.dim)
        return int(np.prod([max(1, math.ceil(w / side - slack)) for w in target.widths]))

    return len(greedy_cover(list(target), eps, distance_function(r, target[0].dim)))


def packing_number(target: Union[ParamSpace, Sequence[DiscreteMeasure]], eps: float,
                   metric: str = 'euclidean', r: float = 2.0) -> int:
    """
    D(ε, ·, ·): puntos separados al menos por ε.

    Exacto en d = 1 para cajas; la grilla producto es cota inferior en d ≥ 2.
    Para conjuntos finitos de medidas, empaquetamiento voraz.

    En d = 1, con separación ≥ ε (no estricta) y bolas cerradas,
    N(ε) ≤ D(ε) ≤ N(ε/2) + 1 siempre, y D(ε) = N(ε/2) + 1 exactamente cuando
    L/ε es entero: en esos puntos la cota D(ε) ≤ N(ε/2) falla por una unidad.
    """
    if eps <= 0:
        raise ValueError("ε debe ser > 0")

    if isinstance(target, ParamSpace):
        if metric != 'euclidean':
            raise ValueError("Una caja Θ solo admite la métrica euclídea")
        slack = TOLERANCES['GRID_COUNT']
        return int(np.prod([math.floor(w / eps + slack) + 1 for w in target.widths]))

    return len(greedy_packing(list(target), eps, distance_function(r, target[0].dim)))


def greedy_packing(candidates: List[DiscreteMeasure], separation: float,
                   distance: Callable, strict: bool = False) -> List[DiscreteMeasure]:
    """Recorre los candidatos y conserva los separados (≥, o > si strict) de los ya elegidos."""
    kept: List[DiscreteMeasure] = []
    for candidate in candidates:
        ok = True
        for chosen in kept:
            d = distance(candidate, chosen)
            if d < separation or (strict and d <= separation):
                ok = False
                break
        if ok:
            kept.append(candidate)
    return kept


def greedy_cover(candidates: List[DiscreteMeasure], eps: float,
                 distance: Callable) -> List[DiscreteMeasure]:
    """Cubrimiento por punto más lejano: agrega centros hasta que todo quede a ≤ ε."""
    if not candidates:
        return []
    centers = [candidates[0]]
    nearest = np.array([distance(c, candidates[0]) for c in candidates])

    while nearest.max() > eps:
        index = int(np.argmax(nearest))
        centers.append(candidates[index])
        nearest = np.minimum(nearest, [distance(c, candidates[index]) for c in candidates])

    return centers


def local_entropy(G0: DiscreteMeasure, G1: DiscreteMeasure, cls: MeasureClass,
                  family: LikelihoodFamily, r: float, candidates: int = 400,
                  restarts: int = 16, seed: int = 0) -> Dict:
    """
    M(𝒢, G₁, r): 1 para clases convexas; si no, empaquetamiento voraz en W₂ a
    radio Ψ(r)^{1/2} / (2 Diam(Θ)^{α−1} √C₁) dentro de 𝒢 ∩ B_W(G₁, r/2).
    """
    if cls.convex:
        return {'value': 1, 'radius': None, 'psi': None}

    psi = hellinger_information(G0, cls, family, r, restarts, seed)
    if not psi.feasible:
        return {'value': 1, 'radius': None, 'psi': psi.value}

    alpha, c1 = family.holder
    radius = math.sqrt(psi.value) / (2.0 * cls.space.diameter() ** (alpha - 1) * math.sqrt(c1))

    rng = np.random.default_rng(seed)
    ball = sample_ball(G1, r / 2.0, cls.atom_budget, candidates, rng)
    packing = greedy_packing(ball, radius, distance_function(2.0, G1.dim))
    return {'value': len(packing), 'radius': radius, 'psi': psi.value}


# =============================================
# VECINDAD KULLBACK-LEIBLER
# =============================================

def kl_neighborhood(G0: DiscreteMeasure, G: DiscreteMeasure, family: LikelihoodFamily,
                    eps: float) -> Dict:
    """
    Pertenencia a B_K(ε) = {G : K(p_{G₀}, p_G) ≤ ε², P_{G₀}(log p_{G₀}/p_G)² ≤ ε²} (d = 1).
    """
    p0 = MixtureDensity(G0, family)
    p = MixtureDensity(G, family)
    kl = mixture_divergence(p0, p, 'kl').value

    lower = min(p0.window()[0], p.window()[0])
    upper = max(p0.window()[1], p.window()[1])

    def integrand(x: float) -> float:
        point = np.array([x])
        log_ratio = float(p0.logpdf(point)[0] - p.logpdf(point)[0])
        return math.exp(float(p0.logpdf(point)[0])) * log_ratio ** 2

    second, _ = integrate_line(integrand, list(G0.atoms[:, 0]) + list(G.atoms[:, 0]), lower, upper)
    threshold = eps ** 2
    return {
        'kl': kl,
        'second_moment': second,
        'threshold': threshold,
        'member': bool(kl <= threshold and second <= threshold),
    }
