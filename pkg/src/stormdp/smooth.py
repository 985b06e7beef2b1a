"""Differentiable approximations of the plant's case-based flow laws.

A smooth square root replaces the kinked square roots, and logistic
gates replace the hard on/off conditions. As the smoothing scale eps
shrinks, the smooth vector field converges pointwise to the exact one
away from the switching surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .plant import PlantParams

__all__ = [
    "SmoothParams",
    "smooth_sqrt",
    "smooth_sqrt_deriv",
    "sigmoid_gate",
    "sigmoid_gate_deriv",
    "q_out_eps",
    "q_pump_eps",
    "q_drain_eps",
    "f_eps_rhs",
]

EXP_CLAMP = 500.0  # gates are saturated long before the exponent gets here


@dataclass(frozen=True)
class SmoothParams:
    """Smoothing scale and the plant it applies to."""

    plant: PlantParams = field(default_factory=PlantParams)
    eps: float = 0.5

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("smoothing scale eps must be positive")


def smooth_sqrt(y, eps: float):
    """C1 approximation of sqrt(max(y, 0)).

    Constant (2/3)sqrt(eps) for y <= 0, a cubic-power blend on (0, eps],
    and exactly sqrt(y) for y > eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    y = np.asarray(y, dtype=float)
    yc = np.clip(y, 0.0, None)
    low = (2.0 / 3.0) * np.sqrt(eps)
    mid = yc ** 1.5 / (3.0 * eps) + low
    high = np.sqrt(np.maximum(yc, eps))
    return np.where(y <= 0.0, low, np.where(y <= eps, mid, high))


def smooth_sqrt_deriv(y, eps: float):
    """Derivative of :func:`smooth_sqrt` with respect to y."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    y = np.asarray(y, dtype=float)
    yc = np.clip(y, 0.0, None)
    mid = np.sqrt(yc) / (2.0 * eps)
    high = 0.5 / np.sqrt(np.maximum(yc, eps))
    return np.where(y <= 0.0, 0.0, np.where(y <= eps, mid, high))


def sigmoid_gate(z, threshold: float, sense: str, eps: float):
    """Logistic gate in (0, 1) switching at ``threshold``.

    ``sense='activate-above'`` rises towards 1 as z exceeds the threshold;
    ``sense='activate-below'`` falls towards 0. The exponent is clamped so
    a fully saturated gate never overflows.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    z = np.asarray(z, dtype=float)
    if sense == "activate-above":
        e = (threshold - z) / eps
    elif sense == "activate-below":
        e = (z - threshold) / eps
    else:
        raise ValueError(f"unknown gate sense {sense!r}")
    return 1.0 / (1.0 + np.exp(np.clip(e, -EXP_CLAMP, EXP_CLAMP)))


def sigmoid_gate_deriv(z, threshold: float, sense: str, eps: float):
    """Derivative of :func:`sigmoid_gate` with respect to z."""
    s = sigmoid_gate(z, threshold, sense, eps)
    sign = 1.0 if sense == "activate-above" else -1.0
    return sign * s * (1.0 - s) / eps


def q_out_eps(x1, sp: SmoothParams):
    """Smooth outlet flow: the kink at x1/a1 = z_o is blended over eps."""
    p = sp.plant
    return p.c_out * smooth_sqrt(np.asarray(x1, dtype=float) / p.a1 - p.z_o, sp.eps)


def _pump_gates(x1, x2, sp: SmoothParams):
    p = sp.plant
    g1 = sigmoid_gate(x1, p.pump_gate_volume, "activate-above", sp.eps)
    g2 = sigmoid_gate(x2, p.x2_target, "activate-below", sp.eps)
    return g1, g2


def q_pump_eps(x1, x2, u, sp: SmoothParams):
    """Smooth pump flow: smooth pump curve times two logistic gates."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u > 1.0)):
        raise ValueError("control fraction u must lie in [0, 1]")
    p = sp.plant
    eta = u * p.b * smooth_sqrt(np.asarray(x1, dtype=float) / p.a1 + p.c_hat - p.d, sp.eps)
    g1, g2 = _pump_gates(x1, x2, sp)
    return eta * g1 * g2


def q_drain_eps(x2, sp: SmoothParams):
    """Smooth drainage: the Darcy rate gated above the soil capacity."""
    p = sp.plant
    x2 = np.asarray(x2, dtype=float)
    rate = p.K * p.a2 * (x2 / p.a2 + p.z_soil) / p.z_soil
    return rate * sigmoid_gate(x2, p.z_cap, "activate-above", sp.eps)


def f_eps_rhs(x1, x2, u, w_r, w_e, sp: SmoothParams):
    """Smooth vector field: same mass balance as the exact plant."""
    p = sp.plant
    qp = q_pump_eps(x1, x2, u, sp)
    f1 = np.asarray(w_r, dtype=float) * p.a_in - q_out_eps(x1, sp) - qp
    f2 = np.asarray(w_r, dtype=float) * p.a2 + qp - np.asarray(w_e, dtype=float) - q_drain_eps(x2, sp)
    return f1, f2
