"""
Medidas de probabilidad discretas sobre una caja acotada de ℝ^d.

Una medida G = Σ pᵢ δ_{θᵢ} se guarda como una matriz de átomos (k×d) y un
vector de pesos (k). Todos los valores son inmutables tras la construcción.
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from config.settings import TOLERANCES
from core.errors import (
    AtomOutOfDomain,
    CostOverflow,
    DimensionMismatch,
    EmptyMeasure,
    NegativeWeight,
    ZeroMass,
)

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], Sequence[Sequence[float]], np.ndarray]


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ParamSpace:
    """Caja Θ = [lower, upper] ⊂ ℝ^d con la métrica euclídea."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))

        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatch(
                f"Límites incompatibles: {lower.shape} vs {upper.shape}"
            )
        if not np.all(np.isfinite(lower)) or not np.all(np.isfinite(upper)):
            raise ValueError("Los límites de Θ deben ser finitos")
        if not np.all(lower < upper):
            raise ValueError(f"Se requiere lower < upper en cada coordenada: {lower}, {upper}")

        object.__setattr__(self, 'lower', _frozen(lower))
        object.__setattr__(self, 'upper', _frozen(upper))

    @classmethod
    def interval(cls, lower: float, upper: float) -> 'ParamSpace':
        return cls(np.array([lower]), np.array([upper]))

    @property
    def dim(self) -> int:
        return int(self.lower.shape[0])

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def diameter(self) -> float:
        return float(np.linalg.norm(self.widths))

    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        return np.all((points >= self.lower) & (points <= self.upper), axis=1)

    def vertices(self) -> np.ndarray:
        """Vértices de la caja (2^d filas)."""
        grids = np.meshgrid(*[[lo, hi] for lo, hi in zip(self.lower, self.upper)],
                            indexing='ij')
        return np.stack([g.ravel() for g in grids], axis=1)

    def same_as(self, other: 'ParamSpace') -> bool:
        return (
            self.dim == other.dim
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    def __repr__(self) -> str:
        return f"ParamSpace(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """G = Σ pᵢ δ_{θᵢ}; los átomos no necesitan ser distintos."""

    atoms: np.ndarray
    weights: np.ndarray
    space: ParamSpace

    @property
    def k(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return self.space.dim

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def __repr__(self) -> str:
        pares = ", ".join(
            f"{w:.4g}·δ{a.tolist()}" for w, a in zip(self.weights, self.atoms)
        )
        return f"DiscreteMeasure({pares})"


def _as_atom_matrix(atoms: ArrayLike, dim: int) -> np.ndarray:
    matrix = np.asarray(atoms, dtype=float)
    if matrix.ndim == 1:
        # Lista de escalares en d=1, o un único átomo d-dimensional
        matrix = matrix.reshape(-1, 1) if dim == 1 else matrix.reshape(1, -1)
    if matrix.ndim != 2 or matrix.shape[1] != dim:
        raise DimensionMismatch(
            f"Átomos con forma {matrix.shape} no corresponden a d={dim}"
        )
    return matrix


def make_measure(atoms: ArrayLike, weights: ArrayLike, space: ParamSpace) -> DiscreteMeasure:
    """
    Construye una medida discreta validada y normalizada.

    Conserva el orden de los átomos. Los pesos se renormalizan siempre que su
    suma sea positiva.

    Raises:
        EmptyMeasure, NegativeWeight, AtomOutOfDomain, ZeroMass
    """
    weights = np.atleast_1d(np.asarray(weights, dtype=float))
    if weights.size == 0 or np.asarray(atoms, dtype=float).size == 0:
        raise EmptyMeasure("La medida no tiene átomos")

    matrix = _as_atom_matrix(atoms, space.dim)
    if matrix.shape[0] != weights.shape[0]:
        raise DimensionMismatch(
            f"{matrix.shape[0]} átomos pero {weights.shape[0]} pesos"
        )
    if not np.all(np.isfinite(weights)):
        raise NegativeWeight(f"Pesos no finitos: {weights}")
    if np.any(weights < 0):
        raise NegativeWeight(f"Pesos negativos: {weights[weights < 0]}")

    total = float(np.sum(weights))
    if total <= 0:
        raise ZeroMass("La suma de pesos es cero")

    if not np.all(np.isfinite(matrix)) or not np.all(space.contains(matrix)):
        fuera = matrix[~space.contains(matrix)]
        raise AtomOutOfDomain(f"Átomos fuera de {space}: {fuera.tolist()}")

    if abs(total - 1.0) > TOLERANCES['RENORMALIZE']:
        logger.debug(f"Renormalizando pesos (suma = {total:.6g})")

    normalized = weights / total
    # Corrige el último ulp para que la suma quede en el símplex
    normalized = normalized / np.sum(normalized)

    return DiscreteMeasure(_frozen(matrix), _frozen(normalized), space)


def dirac(atom: ArrayLike, space: ParamSpace) -> DiscreteMeasure:
    """δ_θ."""
    return make_measure(np.atleast_1d(np.asarray(atom, dtype=float)).reshape(1, -1),
                        [1.0], space)


def canonicalize(G: DiscreteMeasure, merge_tol: float = TOLERANCES['MERGE']) -> DiscreteMeasure:
    """
    Fusiona átomos a distancia euclídea ≤ merge_tol.

    Los grupos se forman por componentes conexas del grafo de cercanía; cada
    grupo se reemplaza por un átomo en la media ponderada, con la suma de pesos.
    Los átomos de peso nulo se descartan si queda alguno con peso positivo.
    """
    if merge_tol < 0:
        raise ValueError("merge_tol debe ser ≥ 0")

    keep = G.weights > 0
    atoms = G.atoms[keep]
    weights = G.weights[keep]

    k = atoms.shape[0]
    labels = np.arange(k)
    if k > 1:
        close = cdist(atoms, atoms) <= merge_tol
        # Propagación de etiquetas mínimas hasta estabilizar
        for _ in range(k):
            nuevas = np.array([labels[close[i]].min() for i in range(k)])
            if np.array_equal(nuevas, labels):
                break
            labels = nuevas

    groups = []
    for label in labels:
        if label not in groups:
            groups.append(label)

    if len(groups) == k and k == G.k:
        return G

    merged_atoms = []
    merged_weights = []
    for label in groups:
        members = labels == label
        mass = weights[members].sum()
        merged_atoms.append(weights[members] @ atoms[members] / mass)
        merged_weights.append(mass)

    merged_atoms = np.clip(np.array(merged_atoms), G.space.lower, G.space.upper)
    return make_measure(merged_atoms, merged_weights, G.space)


def support_distance_matrix(G: DiscreteMeasure, Gp: DiscreteMeasure, cost) -> np.ndarray:
    """
    Matriz k×k′ con cost(θᵢ, θ′ⱼ).

    Args:
        cost: objeto con método pairwise(A, B) -> matriz (ver core.transport.GroundCost)

    Raises:
        DimensionMismatch si las medidas no comparten Θ; CostOverflow si algún
        valor no es finito.
    """
    if not G.space.same_as(Gp.space):
        raise DimensionMismatch(f"Espacios distintos: {G.space} vs {Gp.space}")

    matrix = np.asarray(cost.pairwise(G.atoms, Gp.atoms), dtype=float)

    if not np.all(np.isfinite(matrix)):
        raise CostOverflow(f"Costo no finito en {cost}")

    return np.maximum(matrix, 0.0)
