"""
Excepciones del sistema.

Los núcleos numéricos lanzan estas excepciones; los orquestadores las
capturan, las registran y devuelven un indicador de fallo.
"""


class ContractionError(Exception):
    """Base de todos los errores del proyecto."""


# Medidas
class EmptyMeasure(ContractionError):
    pass


class NegativeWeight(ContractionError):
    pass


class AtomOutOfDomain(ContractionError):
    pass


class ZeroMass(ContractionError):
    pass


class DimensionMismatch(ContractionError):
    pass


# Transporte
class CostOverflow(ContractionError):
    pass


class DegenerateInput(ContractionError):
    pass


class SolverStall(ContractionError):
    """El símplex superó su tope de iteraciones (indica un bug interno)."""


# Mezclas y divergencias
class UnsupportedDivergence(ContractionError):
    pass


class NonOverlappingSupport(ContractionError):
    pass


class QuadratureFailure(ContractionError):
    pass


# Identificabilidad
class DegenerateRatio(ContractionError):
    pass


class SamplingExhausted(ContractionError):
    pass


class PackingDegenerate(ContractionError):
    pass


# Bayes
class RejectionExhausted(ContractionError):
    pass


class NonFiniteLikelihood(ContractionError):
    pass


# Experimentos
class InsufficientPoints(ContractionError):
    pass


class IoFailure(ContractionError):
    pass


class ConfigError(ContractionError):
    pass
