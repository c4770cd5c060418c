"""
Validadores de las desigualdades entre distancias de transporte, divergencias
de mezclas, entropía métrica y funcionales de identificabilidad.

Cada verificación devuelve un reporte
    {'valido': bool, 'errores': [...], 'warnings': [...], 'detalles': [...], ...}
y no lanza excepciones ante una desigualdad que falla. Una desigualdad que
solo se cumple dentro de la holgura numérica queda como warning.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from config.settings import TOLERANCES
from core.identifiability import (
    MeasureClass,
    covering_number,
    distance_function,
    greedy_packing,
    hellinger_information_profile,
    sample_ball,
    strong_identifiability_probe,
)
from core.measures import DiscreteMeasure, ParamSpace, make_measure
from core.mixtures import (
    LikelihoodFamily,
    MixtureDensity,
    lp_distance,
    mixture_divergence,
    moment,
    normalize_divergence,
)
from core.transport import composite_distance

logger = logging.getLogger(__name__)

DECONVOLUTION_EXPONENT = 0.44
IDENTIFIABILITY_SCHEDULE = (0.2, 0.1, 0.05, 0.025)


def _report(errores: List[Dict], warnings: List[Dict], detalles: List[Dict], **extra) -> Dict:
    return {
        'valido': len(errores) == 0,
        'errores': errores,
        'warnings': warnings,
        'detalles': detalles,
        **extra,
    }


def random_pairs(space: ParamSpace, trials: int, seed: int,
                 max_atoms: int = 3) -> List[Tuple[DiscreteMeasure, DiscreteMeasure]]:
    """Pares (G, G′) con 1..max_atoms átomos uniformes en Θ y pesos Dirichlet(1)."""
    rng = np.random.default_rng(seed)
    cls = MeasureClass.truncated(max_atoms, space)
    return [(cls.random_measure(rng), cls.random_measure(rng)) for _ in range(trials)]


def unit_ball_volume(d: int) -> float:
    """V_d = π^{d/2} / Γ(d/2 + 1)."""
    return math.exp(0.5 * d * math.log(math.pi) - gammaln(0.5 * d + 1.0))


def separated_measure(k: int, space: ParamSpace) -> DiscreteMeasure:
    """k átomos equiespaciados en la diagonal de Θ, pesos iguales."""
    fractions = (np.arange(k) + 0.5) / k
    atoms = space.lower[None, :] + fractions[:, None] * space.widths[None, :]
    return make_measure(atoms, np.full(k, 1.0 / k), space)


def _schedule_pairs(scale: float, space: ParamSpace,
                    direction: np.ndarray) -> List[Tuple[str, DiscreteMeasure, DiscreteMeasure]]:
    half = 0.5 * scale
    pairs = [
        ('shift', make_measure([0.0], [1.0], space), make_measure([scale], [1.0], space)),
        ('split', make_measure([0.0], [1.0], space),
         make_measure([-half, half], [0.5, 0.5], space)),
    ]
    # Dos átomos movidos a escala `scale` en una dirección fija de (átomos, peso)
    base = make_measure([-1.0, 1.0], [0.5, 0.5], space)
    weight = 0.5 + 0.25 * scale * direction[2]
    moved = make_measure(base.atoms[:, 0] + scale * direction[:2], [weight, 1.0 - weight], space)
    pairs.append(('perturbed', base, moved))
    return pairs


class InequalityValidator:
    """Valida desigualdades numéricas entre medidas de mezcla y sus densidades."""

    @staticmethod
    def check_bound(lhs: float, rhs: float, slack: float, label: str) -> Tuple[bool, str]:
        """lhs ≤ rhs + slack; dentro de la holgura devuelve un warning."""
        if not lhs <= rhs + slack:
            return False, f"{label}: {lhs:.6g} > {rhs:.6g} (holgura {slack:.2g})"
        if lhs > rhs:
            return True, f"⚠️ {label}: {lhs:.6g} > {rhs:.6g} solo dentro de la holgura"
        return True, ""

    @classmethod
    def _collect(cls, rows: List[Dict], label: str) -> Tuple[List[Dict], List[Dict]]:
        """Aplica check_bound a filas con 'lhs', 'rhs' y 'slack'."""
        errores, warnings = [], []
        for row in rows:
            valido, mensaje = cls.check_bound(row['lhs'], row['rhs'], row.get('slack', 0.0), label)
            if not valido:
                errores.append({**row, 'mensaje': mensaje})
            elif mensaje:
                warnings.append({**row, 'mensaje': mensaje})
        return errores, warnings

    # =============================================
    # DOMINACIÓN POR DISTANCIAS COMPUESTAS
    # =============================================

    @classmethod
    def check_domination(cls, G: DiscreteMeasure, Gp: DiscreteMeasure, divergence: str,
                         family: LikelihoodFamily, trials: int = 0, seed: int = 0,
                         max_atoms: int = 3) -> Dict:
        """
        d_φ(p_G, p_G′) ≤ d_{ρ_φ}(G, G′) sobre el par dado y `trials` pares
        aleatorios del mismo Θ.

        Para la familia Gaussiana también verifica las formas cerradas
        H² ≤ W₂²/8 y K ≤ W₂²/2.
        """
        divergence = normalize_divergence(divergence)
        pairs = [(G, Gp)] + random_pairs(G.space, trials, seed, max_atoms)
        method = 'quadrature' if family.dim == 1 else 'monte_carlo'
        w2 = distance_function(2.0, G.dim)

        envelope = None
        if family.kind == 'gaussian_location':
            envelope = {'hellinger_sq': 1.0 / 8.0, 'kl': 0.5}.get(divergence)

        errores, warnings, detalles = [], [], []
        for index, (A, B) in enumerate(pairs):
            estimate = mixture_divergence(MixtureDensity(A, family), MixtureDensity(B, family),
                                          divergence, method=method, seed=seed + index)
            row = {'pair': index, 'lhs': estimate.value,
                   'rhs': composite_distance(A, B, divergence, family),
                   'slack': estimate.half_width + TOLERANCES['QUADRATURE']}
            bounds = [(row['rhs'], f'{divergence} ≤ d_ρ')]
            if envelope is not None:
                row['w2_bound'] = envelope * w2(A, B) ** 2
                bounds.append((row['w2_bound'], f'{divergence} ≤ c·W₂²'))
            detalles.append(row)

            for rhs, label in bounds:
                valido, mensaje = cls.check_bound(row['lhs'], rhs, row['slack'], label)
                if not valido:
                    errores.append({**row, 'mensaje': mensaje})
                    break
                if mensaje:
                    warnings.append({**row, 'mensaje': mensaje})

        if errores:
            logger.warning(f"⚠️ Dominación {divergence}: {len(errores)}/{len(pairs)} violaciones")
        return _report(errores, warnings, detalles, divergence=divergence, family=str(family),
                       pairs=len(pairs))

    @classmethod
    def divergence_ordering_check(cls, p: MixtureDensity, q: MixtureDensity,
                                  slack: float = TOLERANCES['ORDERING_SLACK']) -> Dict:
        """V²/2 ≤ H² ≤ V y H² ≤ K/2, por cuadratura (d = 1)."""
        tv = mixture_divergence(p, q, 'tv').value
        h2 = mixture_divergence(p, q, 'hellinger_sq').value
        kl = mixture_divergence(p, q, 'kl').value

        values = {'tv': tv, 'hellinger_sq': h2, 'kl': kl}
        rows = [
            {'check': 'tv_sq_half_le_h2', 'lhs': tv ** 2 / 2.0, 'rhs': h2, 'slack': slack},
            {'check': 'h2_le_tv', 'lhs': h2, 'rhs': tv, 'slack': slack},
            {'check': 'h2_le_kl_half', 'lhs': h2, 'rhs': kl / 2.0, 'slack': slack},
        ]
        errores, warnings = [], []
        for row in rows:
            valido, mensaje = cls.check_bound(row['lhs'], row['rhs'], slack, row['check'])
            if not valido:
                errores.append({**row, **values, 'mensaje': mensaje})
            elif mensaje:
                warnings.append({**row, 'mensaje': mensaje})
        return _report(errores, warnings, [values])

    # =============================================
    # MOMENTOS
    # =============================================

    @classmethod
    def moment_inequality_check(cls, p: MixtureDensity, q: MixtureDensity, s: float, kappa: float,
                                slack: float = TOLERANCES['MOMENT_SLACK']) -> Dict:
        """
        (a) ∫|p − p′| |x|^κ ≤ 2 ‖p − p′‖₁^{(s−κ)/s} (E_p|X|^s + E_p′|X|^s)^{κ/s}
        (b) ‖p − p′‖₁ ≤ 2 V_d^{s/(d+2s)} (E_p|X|^s + E_p′|X|^s)^{d/(d+2s)} ‖p − p′‖₂^{2s/(d+2s)}

        Raises:
            ValueError si no se cumple 0 < κ < s; QuadratureFailure.
        """
        if not 0 < kappa < s:
            raise ValueError(f"Se requiere 0 < κ < s (κ={kappa}, s={s})")

        d = p.family.dim
        l1 = lp_distance(p, q, 1.0)
        l2 = math.sqrt(lp_distance(p, q, 2.0))
        moments = moment(p, s) + moment(q, s)

        lhs_a = lp_distance(p, q, 1.0, kappa)
        rhs_a = 2.0 * l1 ** ((s - kappa) / s) * moments ** (kappa / s)

        rhs_b = (2.0 * unit_ball_volume(d) ** (s / (d + 2 * s))
                 * moments ** (d / (d + 2 * s)) * l2 ** (2 * s / (d + 2 * s)))

        detalles = [
            {'part': 'a', 'lhs': lhs_a, 'rhs': rhs_a, 'slack': slack},
            {'part': 'b', 'lhs': l1, 'rhs': rhs_b, 'slack': slack},
        ]
        errores, warnings = cls._collect(detalles, 'momentos')
        return _report(errores, warnings, detalles, s=s, kappa=kappa)

    # =============================================
    # ENTROPÍA MÉTRICA
    # =============================================

    @classmethod
    def entropy_lemma_check(cls, k: int, space: ParamSpace, eps: float, r: float = 1.0,
                            candidates: int = 300, seed: int = 0,
                            G0: Optional[DiscreteMeasure] = None) -> Dict:
        """
        Empaquetamientos voraces contra las tres cotas de entropía:

        (a) log N(2ε, 𝒢_k, W_r) ≤ k (log N(ε, Θ) + log(e + e Diam^r / ε^r))
        (b) log N(2ε, 𝒢̄, W_r) ≤ N(ε, Θ) log(e + e Diam^r / ε^r)
        (c) log N(ε/2, {W_r(G₀, G) ≤ 2ε}, W_r) ≤ k (sup log N(ε/4, Θ′) + log(2^{2+3r} k Diam / m))

        Un conjunto estrictamente 4ε-separado (resp. ε-separado) tiene a lo sumo
        N(2ε) (resp. N(ε/2)) elementos, así que su log es cota inferior del lado
        izquierdo.
        """
        if eps <= 0:
            raise ValueError("ε debe ser > 0")

        rng = np.random.default_rng(seed)
        distance = distance_function(r, space.dim)
        diameter = space.diameter()
        n_theta = covering_number(space, eps)
        log_ratio = math.log(math.e + math.e * diameter ** r / eps ** r)

        detalles = []

        # (a)
        cls_k = MeasureClass.at_most(k, space)
        pool = [cls_k.random_measure(rng) for _ in range(candidates)]
        packing = greedy_packing(pool, 4.0 * eps, distance, strict=True)
        detalles.append({'part': 'a', 'packing': len(packing), 'lhs': math.log(len(packing)),
                         'rhs': k * (math.log(n_theta) + log_ratio)})

        # (b)
        cls_bar = MeasureClass.truncated(max(k, min(n_theta, 8)), space)
        pool = [cls_bar.random_measure(rng) for _ in range(candidates)]
        packing = greedy_packing(pool, 4.0 * eps, distance, strict=True)
        detalles.append({'part': 'b', 'packing': len(packing), 'lhs': math.log(len(packing)),
                         'rhs': n_theta * log_ratio})

        # (c)
        G0 = G0 if G0 is not None else separated_measure(k, space)
        big_m = float(np.max(1.0 / G0.weights))
        if G0.k > 1:
            gaps = np.linalg.norm(G0.atoms[:, None, :] - G0.atoms[None, :, :], axis=2)
            separation = float(gaps[~np.eye(G0.k, dtype=bool)].min())
        else:
            separation = diameter
        side = np.minimum(4.0 * big_m ** (1.0 / r) * eps, space.widths)
        local_space = ParamSpace(space.lower, space.lower + side)
        rhs_c = k * (math.log(covering_number(local_space, eps / 4.0))
                     + math.log(2.0 ** (2 + 3 * r) * k * diameter / separation))

        ball = sample_ball(G0, 2.0 * eps, k, candidates, rng, r=r)
        packing = greedy_packing(ball, eps, distance, strict=True)
        detalles.append({'part': 'c', 'packing': len(packing), 'lhs': math.log(len(packing)),
                         'rhs': rhs_c})

        errores, warnings = cls._collect(detalles, 'entropía')
        return _report(errores, warnings, detalles, k=k, eps=eps, r=r)

    # =============================================
    # DECONVOLUCIÓN
    # =============================================

    @classmethod
    def deconvolution_bound_probe(cls, family: LikelihoodFamily, pair_schedule: Sequence[float],
                                  seed: int = 0) -> Dict:
        """
        Pares con W₂ → 0 a lo largo de `pair_schedule` (escalas positivas).

        Suavidad ordinaria: envolvente W₂² ≤ ĉ V^{0.44} y ajuste de log W₂² contra
        log V. Supersuave: envolvente W₂² ≤ ĉ (−log V)^{−2/β} y ajuste contra
        log(−log V). ĉ es el máximo observado, así que la envolvente es una cota
        unilateral válida sobre todos los pares generados. Pares con V fuera de
        (0, 1) se descartan y quedan como warning.
        """
        if family.dim != 1:
            raise ValueError("La sonda de deconvolución trabaja en d = 1")
        if any(t <= 0 for t in pair_schedule):
            raise ValueError("Las escalas del programa deben ser > 0")

        direction = np.random.default_rng(seed).choice([-1.0, 1.0], size=3)
        space = ParamSpace.interval(-3.0, 3.0)
        distance = distance_function(2.0, 1)
        ordinary = family.smoothness == 'ordinary'

        rows, warnings = [], []
        for scale in pair_schedule:
            for schedule_id, G, Gp in _schedule_pairs(float(scale), space, direction):
                w2sq = distance(G, Gp) ** 2
                tv = mixture_divergence(MixtureDensity(G, family), MixtureDensity(Gp, family), 'tv').value
                if w2sq <= 0.0 or not 0.0 < tv < 1.0:
                    warnings.append({'schedule_id': schedule_id, 'scale': float(scale), 'V': tv,
                                     'mensaje': '⚠️ par descartado: V fuera de (0, 1)'})
                    continue
                rows.append({'schedule_id': schedule_id, 'scale': float(scale), 'V': tv,
                             'W2sq': w2sq, 'family': family.kind})

        if len(rows) < 2:
            raise ValueError("El programa no produjo pares suficientes")

        tv = np.array([row['V'] for row in rows])
        w2sq = np.array([row['W2sq'] for row in rows])

        if ordinary:
            regressor = np.log(tv)
            envelope_shape = tv ** DECONVOLUTION_EXPONENT
        else:
            regressor = np.log(-np.log(tv))
            envelope_shape = (-np.log(tv)) ** (-2.0 / family.beta)

        constant = float(np.max(w2sq / envelope_shape))

        # Pendiente por tipo de par; se reporta la menos favorable
        kinds = np.array([row['schedule_id'] for row in rows])
        slopes = {}
        for kind in dict.fromkeys(kinds):
            mask = kinds == kind
            if mask.sum() >= 2 and np.ptp(regressor[mask]) > 0:
                slopes[kind] = float(np.polyfit(regressor[mask], np.log(w2sq[mask]), 1)[0])
        if not slopes:
            raise ValueError("El programa no permite ajustar pendientes")

        errores = []
        for row, bound in zip(rows, constant * envelope_shape):
            row['envelope'] = float(bound)
            valido, mensaje = cls.check_bound(row['W2sq'], float(bound),
                                              float(bound) * TOLERANCES['RATIO_FLOOR'], 'envolvente')
            if not valido:
                errores.append({**row, 'mensaje': mensaje})

        # Ordinaria: W₂² decae al menos como V^{0.44}. Supersuave: pendiente ≤ −2/β.
        if ordinary:
            slope = min(slopes.values())
            if slope < DECONVOLUTION_EXPONENT:
                errores.append({'reason': 'exponente', 'slope': slope,
                                'mensaje': f"pendiente {slope:.3f} < {DECONVOLUTION_EXPONENT}"})
        else:
            slope = max(slopes.values())
            if slope > -2.0 / family.beta:
                errores.append({'reason': 'exponente', 'slope': slope,
                                'mensaje': f"pendiente {slope:.3f} > {-2.0 / family.beta:.3f}"})

        return _report(errores, warnings, rows, family=family.kind, smoothness=family.smoothness,
                       exponent=slope, slopes=slopes, envelope_constant=constant)

    # =============================================
    # IDENTIFICABILIDAD FUERTE
    # =============================================

    @classmethod
    def strong_identifiability_check(cls, G0: DiscreteMeasure, family: LikelihoodFamily, k: int,
                                     eps_schedule: Sequence[float] = IDENTIFIABILITY_SCHEDULE,
                                     samples_per_eps: int = 40, seed: int = 0,
                                     fraction: float = 0.5) -> Dict:
        """
        min ψ₁ sobre bolas W₂ de radio decreciente no colapsa: cada mínimo debe
        quedar por encima de `fraction` veces el mínimo del primer radio.
        """
        if not 0 < fraction <= 1:
            raise ValueError("fraction debe estar en (0, 1]")

        table = strong_identifiability_probe(G0, family, k, eps_schedule, samples_per_eps, seed)
        floor = fraction * table[0]['min_psi']
        detalles = [{**row, 'lhs': floor, 'rhs': row['min_psi']} for row in table]

        errores, warnings = [], []
        for row in detalles:
            valido, mensaje = cls.check_bound(floor, row['min_psi'], 0.0, f"min ψ₁ (ε={row['eps']})")
            if not valido:
                errores.append({**row, 'mensaje': mensaje})
            elif row['min_psi'] < table[0]['min_psi']:
                mensaje = f"⚠️ min ψ₁ bajó respecto de ε={table[0]['eps']}"
                warnings.append({**row, 'mensaje': mensaje})

        if errores:
            logger.warning(f"⚠️ Identificabilidad k={k}: {len(errores)} radios bajo el piso {floor:.4g}")
        return _report(errores, warnings, detalles, k=k, floor=floor, fraction=fraction)

    # =============================================
    # ENVOLVENTES DE Ψ
    # =============================================

    @classmethod
    def psi_lower_envelope_check(cls, G0: DiscreteMeasure, measure_class: MeasureClass,
                                 family: LikelihoodFamily, exponent: float = 4.0,
                                 radii: Sequence[float] = (0.1, 0.2, 0.4, 0.8),
                                 restarts: int = 16, seed: int = 0,
                                 variant: str = 'polynomial') -> Dict:
        """
        Ajusta la constante de la cota inferior de Ψ̂.

        variant='polynomial': ĉ = min_r Ψ̂(r) / r^exponent (pasa si ĉ > 0).
        variant='exponential': Ψ̂(r) ≥ exp(−ĉ r^{−β}); ĉ = max_r −log Ψ̂(r)·r^β
        (pasa si ĉ es finito). Radios sin competidor factible quedan como warning.
        """
        if any(r <= 0 for r in radii):
            raise ValueError("Los radios deben ser > 0")
        if variant not in ('polynomial', 'exponential'):
            raise ValueError(f"Variante desconocida: {variant}")

        profile = hellinger_information_profile(G0, measure_class, family, radii, restarts, seed)
        detalles, warnings = [], []
        for r, raw, value in zip(profile['radii'], profile['raw'], profile['monotone']):
            row = {'r': r, 'psi_raw': raw, 'psi_hat': value, 'feasible': math.isfinite(value)}
            detalles.append(row)
            if not row['feasible']:
                warnings.append({**row, 'mensaje': f"⚠️ sin competidor factible en r={r}"})

        finite = [row for row in detalles if row['feasible']]
        if not finite:
            return _report([{'mensaje': 'sin radios factibles'}], warnings, detalles,
                           constant=None, variant=variant)

        if variant == 'polynomial':
            constant = min(row['psi_hat'] / row['r'] ** exponent for row in finite)
            ok = constant > TOLERANCES['RATIO_FLOOR']
        else:
            beta = family.beta
            constant = max(-math.log(max(row['psi_hat'], TOLERANCES['DENSITY_FLOOR'])) * row['r'] ** beta
                           for row in finite)
            ok = math.isfinite(constant)

        errores = [] if ok else [{'mensaje': f'constante ajustada no válida: {constant}'}]
        return _report(errores, warnings, detalles, constant=float(constant), variant=variant,
                       exponent=exponent)
