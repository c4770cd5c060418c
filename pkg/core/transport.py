"""
Distancias de transporte exactas entre medidas discretas.

El solver es el método símplex de transporte sobre la matriz de costos densa:
solución inicial por esquina noroeste, potenciales (u, v) sobre el árbol de la
base y pivoteo sobre el ciclo que cierra la celda entrante. La celda entrante
es la de costo reducido más negativo; los empates se rompen por el menor índice
(orden fila-mayor), lo que hace la salida determinista.
"""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from config.settings import TOLERANCES
from core.errors import DegenerateInput, DimensionMismatch, SolverStall, UnsupportedDivergence
from core.measures import DiscreteMeasure, support_distance_matrix
from core.mixtures import normalize_divergence

logger = logging.getLogger(__name__)

DIVERGENCES = ('hellinger_sq', 'kl', 'total_variation')


@dataclass(frozen=True)
class GroundCost:
    """
    Costo sobre pares de átomos.

    kind='euclidean_pow' usa ρ^r (r ≥ 1); kind='component_divergence' usa la
    divergencia entre componentes f(·|θᵢ), f(·|θ′ⱼ) de una familia.
    """

    kind: str
    exponent: float = 1.0
    divergence: Optional[str] = None
    family: Optional[object] = None

    @classmethod
    def euclidean(cls, r: float = 1.0) -> 'GroundCost':
        if r < 1:
            raise ValueError(f"Se requiere r ≥ 1 (r={r})")
        return cls(kind='euclidean_pow', exponent=float(r))

    @classmethod
    def component(cls, divergence: str, family) -> 'GroundCost':
        if divergence not in DIVERGENCES:
            raise UnsupportedDivergence(f"Divergencia desconocida: {divergence}")
        return cls(kind='component_divergence', divergence=divergence, family=family)

    @property
    def symmetric(self) -> bool:
        return self.kind == 'euclidean_pow' or self.divergence != 'kl'

    def pairwise(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        if self.kind == 'euclidean_pow':
            distances = cdist(A, B)
            return distances if self.exponent == 1 else distances ** self.exponent
        if self.kind == 'component_divergence':
            return self.family.divergence_matrix(self.divergence, A, B)
        raise ValueError(f"Tipo de costo desconocido: {self.kind}")

    def __str__(self) -> str:
        if self.kind == 'euclidean_pow':
            return f"ρ^{self.exponent:g}"
        return f"ρ_{self.divergence}[{self.family}]"


@dataclass(frozen=True, eq=False)
class Coupling:
    """q ∈ Q(p, p′)."""

    matrix: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def support(self) -> List[Tuple[int, int]]:
        rows, cols = np.nonzero(self.matrix > 0)
        return list(zip(rows.tolist(), cols.tolist()))

    def marginal_error(self) -> float:
        return float(max(
            np.max(np.abs(self.matrix.sum(axis=1) - self.row_marginal)),
            np.max(np.abs(self.matrix.sum(axis=0) - self.col_marginal)),
        ))


@dataclass(frozen=True, eq=False)
class TransportResult:
    value: float
    coupling: Coupling
    iterations: int


class TransportationSimplex:
    """Símplex de transporte sobre una matriz de costos k×k′."""

    def __init__(self, supply: np.ndarray, demand: np.ndarray, cost: np.ndarray):
        self.supply = np.asarray(supply, dtype=float)
        self.demand = np.asarray(demand, dtype=float)
        self.cost = np.asarray(cost, dtype=float)
        self.k, self.kp = self.cost.shape
        self.max_iterations = 10 * (self.k + self.kp) ** 2
        scale = float(np.max(np.abs(self.cost))) if self.cost.size else 0.0
        self.tolerance = TOLERANCES['REDUCED_COST'] * max(1.0, scale)

        self.flow = np.zeros_like(self.cost)
        self.basis: List[Tuple[int, int]] = []
        self.iterations = 0

    def solve(self) -> np.ndarray:
        self._northwest_corner()
        degenerate = False

        while True:
            u, v = self._potentials()
            reduced = self.cost - u[:, None] - v[None, :]
            for i, j in self.basis:
                reduced[i, j] = 0.0

            entering = self._entering_cell(reduced, bland=degenerate)
            if entering is None:
                break

            self.iterations += 1
            if self.iterations > self.max_iterations:
                raise SolverStall(
                    f"Símplex sin converger tras {self.max_iterations} iteraciones "
                    f"({self.k}×{self.kp})"
                )
            degenerate = self._pivot(entering)

        return self.flow

    def _northwest_corner(self):
        remaining_supply = self.supply.copy()
        remaining_demand = self.demand.copy()
        i = j = 0

        while i < self.k and j < self.kp:
            amount = min(remaining_supply[i], remaining_demand[j])
            self.flow[i, j] = amount
            self.basis.append((i, j))
            remaining_supply[i] -= amount
            remaining_demand[j] -= amount

            if i == self.k - 1:
                j += 1
            elif j == self.kp - 1:
                i += 1
            elif remaining_supply[i] <= remaining_demand[j]:
                # Fila agotada (o ambas: la celda siguiente entra con flujo 0)
                i += 1
            else:
                j += 1

    def _tree(self) -> Dict[Tuple[str, int], List[Tuple[Tuple[str, int], Tuple[int, int]]]]:
        adjacency: Dict = {}
        for i, j in self.basis:
            adjacency.setdefault(('r', i), []).append((('c', j), (i, j)))
            adjacency.setdefault(('c', j), []).append((('r', i), (i, j)))
        return adjacency

    def _potentials(self) -> Tuple[np.ndarray, np.ndarray]:
        u = np.zeros(self.k)
        v = np.zeros(self.kp)
        adjacency = self._tree()
        visited = {('r', 0)}
        queue = deque([('r', 0)])

        while queue:
            node = queue.popleft()
            for neighbour, (i, j) in adjacency.get(node, []):
                if neighbour in visited:
                    continue
                if neighbour[0] == 'c':
                    v[j] = self.cost[i, j] - u[i]
                else:
                    u[i] = self.cost[i, j] - v[j]
                visited.add(neighbour)
                queue.append(neighbour)

        return u, v

    def _entering_cell(self, reduced: np.ndarray, bland: bool) -> Optional[Tuple[int, int]]:
        if bland:
            # Tras un pivote degenerado: primera celda con costo reducido negativo
            candidates = np.flatnonzero(reduced.ravel() < -self.tolerance)
            if candidates.size == 0:
                return None
            flat = int(candidates[0])
        else:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -self.tolerance:
                return None
        return divmod(flat, self.kp)

    def _cycle(self, entering: Tuple[int, int]) -> List[Tuple[int, int]]:
        """Camino en el árbol desde la fila entrante hasta la columna entrante."""
        i_e, j_e = entering
        adjacency = self._tree()
        start, goal = ('r', i_e), ('c', j_e)
        parent = {start: None}
        queue = deque([start])

        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for neighbour, cell in adjacency.get(node, []):
                if neighbour not in parent:
                    parent[neighbour] = (node, cell)
                    queue.append(neighbour)

        path = []
        node = goal
        while parent[node] is not None:
            previous, cell = parent[node]
            path.append(cell)
            node = previous
        path.reverse()
        return path

    def _pivot(self, entering: Tuple[int, int]) -> bool:
        path = self._cycle(entering)
        # Celdas en posiciones pares del camino pierden flujo
        losing = path[0::2]
        gaining = path[1::2]

        theta = min(self.flow[c] for c in losing)
        leaving = min(c for c in losing if self.flow[c] == theta)

        for cell in losing:
            self.flow[cell] -= theta
        for cell in gaining:
            self.flow[cell] += theta
        self.flow[entering] += theta
        self.flow[leaving] = 0.0

        self.basis.remove(leaving)
        self.basis.append(entering)
        return theta == 0.0


def _check_inputs(G: DiscreteMeasure, Gp: DiscreteMeasure):
    if G.k == 0 or Gp.k == 0:
        raise DegenerateInput("Medida vacía")
    if G.dim != Gp.dim:
        raise DimensionMismatch(f"d={G.dim} vs d={Gp.dim}")


def solve_transport(supply: np.ndarray, demand: np.ndarray, cost: np.ndarray) -> TransportResult:
    """Programa de transporte sobre marginales y costos dados."""
    supply = np.asarray(supply, dtype=float)
    demand = np.asarray(demand, dtype=float)
    # Iguala las masas totales al último ulp
    demand = demand * (supply.sum() / demand.sum())

    solver = TransportationSimplex(supply, demand, cost)
    flow = solver.solve()
    flow[flow < TOLERANCES['CLAMP']] = 0.0

    coupling = Coupling(matrix=flow, row_marginal=supply, col_marginal=demand)
    value = float(np.sum(flow * solver.cost))
    return TransportResult(value=max(value, 0.0), coupling=coupling, iterations=solver.iterations)


def transport(G: DiscreteMeasure, Gp: DiscreteMeasure, cost: GroundCost) -> TransportResult:
    """
    inf_q Σ q_{ij} cost(θᵢ, θ′ⱼ) con un acoplamiento óptimo de vértice.

    Raises:
        DegenerateInput, DimensionMismatch, CostOverflow, SolverStall
    """
    _check_inputs(G, Gp)
    matrix = support_distance_matrix(G, Gp, cost)
    result = solve_transport(G.weights, Gp.weights, matrix)
    logger.debug(f"transport {G.k}×{Gp.k} [{cost}] = {result.value:.6g} "
                 f"({result.iterations} pivotes)")
    return result


def wasserstein(G: DiscreteMeasure, Gp: DiscreteMeasure, r: float = 2.0) -> float:
    """W_r(G, G′) = [inf Σ q_{ij} ρ^r]^{1/r}."""
    value = transport(G, Gp, GroundCost.euclidean(r)).value
    return float(value ** (1.0 / r))


def composite_distance(G: DiscreteMeasure, Gp: DiscreteMeasure, divergence: str, family) -> float:
    """
    d_{ρ_φ}(G, G′) con ρ_φ la divergencia entre componentes.

    Para KL el costo es asimétrico y la distancia es dirigida G → G′.
    """
    if not family.supports(divergence):
        raise UnsupportedDivergence(f"{family} no soporta {divergence}")
    divergence = normalize_divergence(divergence)
    return transport(G, Gp, GroundCost.component(divergence, family)).value


def wasserstein_1d_oracle(G: DiscreteMeasure, Gp: DiscreteMeasure, r: float = 1.0) -> float:
    """
    W_r por el acoplamiento monótono de cuantiles (solo d = 1).

    Se ordenan los átomos, se recorren los segmentos de las CDF acumuladas y se
    integra |F⁻¹(t) − F′⁻¹(t)|^r por tramos.
    """
    if G.dim != 1 or Gp.dim != 1:
        raise DimensionMismatch("El oráculo de cuantiles requiere d = 1")
    if r < 1:
        raise ValueError(f"Se requiere r ≥ 1 (r={r})")

    value = quantile_transport_cost(G.atoms[:, 0], G.weights, Gp.atoms[:, 0], Gp.weights, r)
    return value ** (1.0 / r)


def quantile_transport_cost(x: np.ndarray, w: np.ndarray, y: np.ndarray, wp: np.ndarray,
                            r: float) -> float:
    """∫₀¹ |F⁻¹(t) − F′⁻¹(t)|^r dt sobre átomos y pesos crudos (d = 1)."""
    order = np.argsort(x, kind='stable')
    order_p = np.argsort(y, kind='stable')
    x, w = x[order], w[order]
    y, wp = y[order_p], wp[order_p]

    cw = np.cumsum(w)
    cwp = np.cumsum(wp)
    cw[-1] = cwp[-1] = 1.0

    breaks = np.unique(np.concatenate(([0.0], cw, cwp)))
    lengths = np.diff(breaks)
    mids = 0.5 * (breaks[:-1] + breaks[1:])

    qx = x[np.minimum(np.searchsorted(cw, mids), x.size - 1)]
    qy = y[np.minimum(np.searchsorted(cwp, mids), y.size - 1)]

    return float(np.sum(lengths * np.abs(qx - qy) ** r))
