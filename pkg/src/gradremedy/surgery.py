"""Gradient-combination strategies for one layer's (auxiliary, dominant) pair.

Four strategies over a flattened per-layer gradient pair:

- naive sum: add the two task gradients as-is
- pcgrad: when the pair conflicts (negative inner product), drop the
  auxiliary gradient's component along the dominant one
- fixed-angle projection: instead of the normal plane, land the conflicting
  auxiliary gradient at a configured acute angle to the dominant gradient
- gradient remedy: fixed-angle projection with the target angle chosen
  dynamically as arctan(norm ratio), followed by an adaptive magnitude
  rescale when the auxiliary gradient dwarfs the dominant one

Detection flags (conflict, wrong dominance) are computed for every strategy
so baseline runs emit the same interference statistics as remedied runs.

All functions are pure; inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from . import _kernels
from .gradvec import DEFAULT_TOL_NORM, GradientVector

_HALF_PI = 0.5 * math.pi


class Strategy(Enum):
    NAIVE_SUM = "naive"
    PCGRAD = "pcgrad"
    FIXED_THETA = "fixed-theta"
    GRADIENT_REMEDY = "gradient-remedy"


class RatioRule(Enum):
    COS_THETA_PRIME = "cos-theta-prime"
    INV_SQRT_K = "inv-sqrt-k"
    CONSTANT = "constant"


@dataclass(frozen=True)
class RemedyConfig:
    """Strategy selection plus the knobs shared by all strategies.

    fixed_theta is only read by FIXED_THETA; ratio_constant only by the
    CONSTANT ratio rule. r_min bounds how hard the rescale may stretch the
    dominant gradient (1/r_min at most).
    """

    strategy: Strategy = Strategy.GRADIENT_REMEDY
    fixed_theta: float = math.radians(36.0)
    dominance_k: float = 5.0
    ratio_rule: RatioRule = RatioRule.COS_THETA_PRIME
    ratio_constant: float = 0.5
    rescale_enabled: bool = True
    r_min: float = 1e-3
    tol_norm: float = DEFAULT_TOL_NORM

    def __post_init__(self):
        if not self.dominance_k > 1.0:
            raise ValueError(f"dominance_k must exceed 1, got {self.dominance_k}")
        if not 0.0 < self.fixed_theta <= _HALF_PI:
            raise ValueError(
                f"fixed_theta must lie in (0, pi/2], got {self.fixed_theta}"
            )
        if not 0.0 < self.r_min < 1.0:
            raise ValueError(f"r_min must lie in (0, 1), got {self.r_min}")
        if not 0.0 < self.ratio_constant < 1.0:
            raise ValueError(
                f"ratio_constant must lie in (0, 1), got {self.ratio_constant}"
            )
        if not self.tol_norm > 0.0:
            raise ValueError(f"tol_norm must be positive, got {self.tol_norm}")


@dataclass(frozen=True)
class TaskGradients:
    """Auxiliary- and dominant-task gradients of one layer, equal shape.

    Both gradients arrive pre-scaled by their loss weights; the surgery is a
    pure function of the two vectors and never sees the weighting.
    """

    g_aux: GradientVector
    g_dom: GradientVector
    layer_id: str = ""

    def __post_init__(self):
        if self.g_aux.shape != self.g_dom.shape:
            raise ValueError(
                f"layer {self.layer_id!r}: task gradients disagree on shape "
                f"({self.g_aux.shape} vs {self.g_dom.shape})"
            )


@dataclass(frozen=True)
class RemedyOutcome:
    """Result of remedying one layer.

    was_wrongly_dominant applies the dominance predicate to the auxiliary
    gradient after projection but before any rescale; phi is the pre-remedy
    angle (None when either input is degenerate); theta_prime is the angle
    between the post-projection auxiliary gradient and the dominant gradient
    (None when degenerate or when projection collapsed the auxiliary
    gradient to zero). r_applied/r_clamped record the rescale event.
    """

    g_aux_out: GradientVector
    g_dom_out: GradientVector
    g_total: GradientVector
    was_conflicting: bool
    was_wrongly_dominant: bool
    theta_prime: float | None
    phi: float | None
    r_applied: float | None = None
    r_clamped: bool = False


class RescaleResult(NamedTuple):
    g_aux: GradientVector
    g_dom: GradientVector
    triggered: bool
    r: float | None
    clamped: bool


def dynamic_theta(
    g_aux: GradientVector,
    g_dom: GradientVector,
    tol_norm: float = DEFAULT_TOL_NORM,
) -> float:
    """Projection target angle arctan(||g_aux|| / ||g_dom||).

    Shrinks toward 0 when the auxiliary gradient is relatively small, so the
    projection pushes it more toward the dominant direction; grows toward
    pi/2 when it is relatively large.
    """
    norm_dom = _kernels.norm(g_dom.values)
    if norm_dom < tol_norm:
        raise ValueError(
            f"dominant gradient is degenerate (norm {norm_dom:.3e}); "
            "the norm-ratio angle is undefined"
        )
    return math.atan(_kernels.norm(g_aux.values) / norm_dom)


def _clamped_cos(dot: float, norm_a: float, norm_b: float) -> float:
    return min(1.0, max(-1.0, dot / (norm_a * norm_b)))


def _project_values(g_aux, g_dom, theta, dot, norm_aux, norm_dom):
    """Conflict branch of the projection: land g_aux at angle theta to g_dom.

    Caller guarantees dot < 0 and both norms non-degenerate. theta == pi/2
    uses an exact zero along-direction term so it reduces to the plain
    normal-plane projection.
    """
    cos_phi = _clamped_cos(dot, norm_aux, norm_dom)
    sin_phi = math.sqrt(max(0.0, 1.0 - cos_phi * cos_phi))
    inv_tan_theta = 0.0 if theta == _HALF_PI else math.cos(theta) / math.sin(theta)
    coef = norm_aux * (sin_phi * inv_tan_theta - cos_phi) / norm_dom
    return _kernels.add_scaled(g_aux.values, coef, g_dom.values)


def project(
    g_aux: GradientVector,
    g_dom: GradientVector,
    theta: float,
    tol_norm: float = DEFAULT_TOL_NORM,
) -> GradientVector:
    """Project a conflicting auxiliary gradient to angle theta from g_dom.

    Triggers only when the pair conflicts (negative inner product, i.e. the
    angle between them exceeds pi/2); otherwise g_aux is returned unchanged
    (the same object, bit-identical). Degenerate inputs pass through
    untouched. The component of g_aux perpendicular to g_dom is preserved
    exactly; only the along-g_dom component moves.
    """
    if len(g_aux) != len(g_dom):
        raise ValueError(f"length mismatch: {len(g_aux)} vs {len(g_dom)}")
    if not 0.0 < theta <= _HALF_PI:
        raise ValueError(f"theta must lie in (0, pi/2], got {theta}")
    dot, norm_aux, norm_dom = _kernels.dot_and_norms(g_aux.values, g_dom.values)
    if norm_aux < tol_norm or norm_dom < tol_norm:
        return g_aux
    if dot >= 0.0:
        return g_aux
    return g_aux.with_values(
        _project_values(g_aux, g_dom, theta, dot, norm_aux, norm_dom)
    )


def theta_prime(
    g_aux_projected: GradientVector,
    g_dom: GradientVector,
    phi_pre: float,
    theta: float,
    was_conflicting: bool,
    tol_norm: float = DEFAULT_TOL_NORM,
) -> float | None:
    """Angle between the post-projection auxiliary gradient and g_dom.

    Equals theta when the projection fired, the original angle otherwise.
    None when either vector is degenerate (e.g. an exactly anti-parallel
    pair projects to the zero vector).
    """
    if _kernels.norm(g_aux_projected.values) < tol_norm:
        return None
    if _kernels.norm(g_dom.values) < tol_norm:
        return None
    return theta if was_conflicting else phi_pre


def _ratio(rule: RatioRule, theta_prime_val: float | None, config: RemedyConfig) -> float:
    if rule is RatioRule.COS_THETA_PRIME:
        if theta_prime_val is None:
            raise ValueError("cos-theta-prime ratio rule needs theta_prime")
        return math.cos(theta_prime_val)
    if rule is RatioRule.INV_SQRT_K:
        return 1.0 / math.sqrt(config.dominance_k)
    return config.ratio_constant


def rescale(
    g_aux_projected: GradientVector,
    g_dom: GradientVector,
    theta_prime_val: float | None,
    config: RemedyConfig,
) -> RescaleResult:
    """Compress the auxiliary gradient by r and stretch the dominant by 1/r.

    Fires only when ||g_aux_projected|| exceeds dominance_k times ||g_dom||.
    r comes from the configured ratio rule and is clamped below by r_min
    (recorded, not an error). Directions are unchanged and the product of
    the two norms is invariant under the rescale.
    """
    norm_dom = _kernels.norm(g_dom.values)
    if norm_dom < config.tol_norm:
        raise ValueError(
            f"dominant gradient is degenerate (norm {norm_dom:.3e}); "
            "rescale is undefined"
        )
    norm_aux = _kernels.norm(g_aux_projected.values)
    if not norm_aux > config.dominance_k * norm_dom:
        return RescaleResult(g_aux_projected, g_dom, False, None, False)
    if theta_prime_val is None:
        # Zero projected gradient cannot trip the norm threshold, so this is
        # only reachable through inconsistent caller input.
        return RescaleResult(g_aux_projected, g_dom, False, None, False)
    r_raw = _ratio(config.ratio_rule, theta_prime_val, config)
    clamped = r_raw < config.r_min
    r = max(r_raw, config.r_min)
    aux_out = g_aux_projected.with_values(
        _kernels.scale(g_aux_projected.values, r)
    )
    dom_out = g_dom.with_values(_kernels.scale(g_dom.values, 1.0 / r))
    return RescaleResult(aux_out, dom_out, True, r, clamped)


def remedy_layer(grads: TaskGradients, config: RemedyConfig) -> RemedyOutcome:
    """Apply the configured strategy to one layer's task-gradient pair.

    Degenerate inputs (either norm ~zero) pass both gradients through with
    flags false and angles absent, for every strategy.
    """
    g_aux, g_dom = grads.g_aux, grads.g_dom
    if g_aux.shape != g_dom.shape:
        raise ValueError(
            f"layer {grads.layer_id!r}: task gradients disagree on shape"
        )
    tol = config.tol_norm
    dot, norm_aux, norm_dom = _kernels.dot_and_norms(g_aux.values, g_dom.values)

    aux_out, dom_out = g_aux, g_dom
    r_applied: float | None = None
    r_clamped = False

    if norm_aux < tol or norm_dom < tol:
        phi = None
        was_conflicting = False
        wrongly_dominant = False
        theta_p: float | None = None
    else:
        cos_phi = _clamped_cos(dot, norm_aux, norm_dom)
        phi = math.acos(cos_phi)
        # dot < 0 is exactly cos(phi) < 0 and avoids arccos at the boundary
        was_conflicting = dot < 0.0

        if config.strategy is Strategy.NAIVE_SUM:
            theta_p = phi
            wrongly_dominant = norm_aux > config.dominance_k * norm_dom
        else:
            if config.strategy is Strategy.PCGRAD:
                theta = _HALF_PI
            elif config.strategy is Strategy.FIXED_THETA:
                theta = config.fixed_theta
            else:
                theta = math.atan(norm_aux / norm_dom)

            norm_aux_post = norm_aux
            if was_conflicting:
                aux_out = g_aux.with_values(
                    _project_values(g_aux, g_dom, theta, dot, norm_aux, norm_dom)
                )
                norm_aux_post = _kernels.norm(aux_out.values)

            if norm_aux_post < tol:
                theta_p = None
            else:
                theta_p = theta if was_conflicting else phi
            wrongly_dominant = norm_aux_post > config.dominance_k * norm_dom

            if (
                config.strategy is Strategy.GRADIENT_REMEDY
                and config.rescale_enabled
                and wrongly_dominant
            ):
                rescaled = rescale(aux_out, g_dom, theta_p, config)
                aux_out, dom_out = rescaled.g_aux, rescaled.g_dom
                r_applied = rescaled.r
                r_clamped = rescaled.clamped

    g_total = aux_out.with_values(
        _kernels.vec_add(aux_out.values, dom_out.values)
    )
    return RemedyOutcome(
        g_aux_out=aux_out,
        g_dom_out=dom_out,
        g_total=g_total,
        was_conflicting=was_conflicting,
        was_wrongly_dominant=wrongly_dominant,
        theta_prime=theta_p,
        phi=phi,
        r_applied=r_applied,
        r_clamped=r_clamped,
    )
