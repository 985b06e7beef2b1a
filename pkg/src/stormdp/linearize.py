"""Operating-point linearization of the smooth plant and the condensed
single-shot quadratic program behind the receding-horizon controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import PlantParams
from .smooth import (
    SmoothParams,
    f_eps_rhs,
    sigmoid_gate,
    sigmoid_gate_deriv,
    smooth_sqrt,
    smooth_sqrt_deriv,
)

__all__ = [
    "OperatingPoint",
    "LinearModel",
    "CondensedHorizon",
    "MpcSolution",
    "NearSingularSystem",
    "linearize_at",
    "condense",
    "solve_mpc_qp",
    "condensed_cost",
    "predict",
]

MAX_HORIZON = 64


class NearSingularSystem(RuntimeError):
    """The condensed normal equations could not be solved reliably."""


@dataclass(frozen=True)
class OperatingPoint:
    """Point (state, control, disturbance) the smooth model is expanded at."""

    x1: float
    x2: float
    u: float
    w_r: float
    w_e: float


@dataclass(frozen=True)
class LinearModel:
    """Affine one-step model in deviation coordinates about ``op``.

    x~_{k+1} = A x~_k + B u~_k + C w~_k + b, where x~ = x - x_op etc.
    C carries both disturbance channels (w_r, w_e) as columns.
    """

    A: np.ndarray  # (2, 2)
    B: np.ndarray  # (2, 1)
    C: np.ndarray  # (2, 2)
    b: np.ndarray  # (2,)
    op: OperatingPoint
    tau: float


def linearize_at(op: OperatingPoint, sp: SmoothParams) -> LinearModel:
    """Discrete-time affine model from hand-derived Jacobians of the
    smooth vector field at ``op``."""
    p = sp.plant
    eps = sp.eps

    dqo = p.c_out * smooth_sqrt_deriv(op.x1 / p.a1 - p.z_o, eps) / p.a1

    rho = op.x1 / p.a1 + p.c_hat - p.d
    psi = smooth_sqrt(rho, eps)
    dpsi = smooth_sqrt_deriv(rho, eps) / p.a1
    g1 = sigmoid_gate(op.x1, p.pump_gate_volume, "activate-above", eps)
    g2 = sigmoid_gate(op.x2, p.x2_target, "activate-below", eps)
    dg1 = sigmoid_gate_deriv(op.x1, p.pump_gate_volume, "activate-above", eps)
    dg2 = sigmoid_gate_deriv(op.x2, p.x2_target, "activate-below", eps)
    qp_x1 = op.u * p.b * (dpsi * g1 + psi * dg1) * g2
    qp_x2 = op.u * p.b * psi * g1 * dg2
    qp_u = p.b * psi * g1 * g2

    g3 = sigmoid_gate(op.x2, p.z_cap, "activate-above", eps)
    dg3 = sigmoid_gate_deriv(op.x2, p.z_cap, "activate-above", eps)
    core = (op.x2 / p.a2 + p.z_soil) / p.z_soil
    dqd = p.K * p.a2 * (g3 / (p.a2 * p.z_soil) + core * dg3)

    jx = np.array([[-dqo - qp_x1, -qp_x2],
                   [qp_x1, qp_x2 - dqd]])
    ju = np.array([[-qp_u], [qp_u]])
    jw = np.array([[p.a_in, 0.0], [p.a2, -1.0]])

    f1, f2 = f_eps_rhs(op.x1, op.x2, op.u, op.w_r, op.w_e, sp)
    return LinearModel(
        A=np.eye(2) + p.tau * jx,
        B=p.tau * ju,
        C=p.tau * jw,
        b=p.tau * np.array([float(f1), float(f2)]),
        op=op,
        tau=p.tau,
    )


@dataclass(frozen=True)
class CondensedHorizon:
    """M steps of the affine model stacked into one affine map U -> Y.

    Y is the stacked state deviation prediction; U is the absolute control
    sequence (the operating-point control is folded into the affine term),
    so the R block penalizes the physical pump fraction directly.
    """

    M: int
    A_stack: np.ndarray   # (2M, 2)
    B_stack: np.ndarray   # (2M, M)
    C_stack: np.ndarray   # (2M, 2M)
    d_stack: np.ndarray   # (2M,)
    Q: np.ndarray         # (2M, 2M), block diag, terminal weight = stage weight
    R: np.ndarray         # (M, M) = lam * I
    target: np.ndarray    # (2M,) per-stage deviation hitting x2 = a2 * z_veg
    y0: np.ndarray        # (2,) current state deviation
    w_dev: np.ndarray     # (2M,) stacked disturbance deviations


def condense(lm: LinearModel, M: int, y0, w_dev, lam: float,
             plant: PlantParams) -> CondensedHorizon:
    """Stack M steps of ``lm`` into prediction matrices and cost blocks.

    The per-stage state weight selects the tank-2 channel scaled by
    1/a2^2, so the quadratic cost equals sum (x2/a2 - z_veg)^2 + lam u^2.
    """
    if M < 1:
        raise ValueError("horizon M must be at least 1")
    if M > MAX_HORIZON:
        raise ValueError(f"horizon M must not exceed {MAX_HORIZON}")
    if lam <= 0:
        raise ValueError("control weight lam must be positive")
    y0 = np.asarray(y0, dtype=float).reshape(2)
    w_dev = np.asarray(w_dev, dtype=float).reshape(M, 2)

    A, B, C = lm.A, lm.B, lm.C
    d = lm.b - (B[:, 0] * lm.op.u)  # affine term with absolute control folded in

    A_stack = np.zeros((2 * M, 2))
    B_stack = np.zeros((2 * M, M))
    C_stack = np.zeros((2 * M, 2 * M))
    d_stack = np.zeros(2 * M)
    Ak = np.eye(2)
    cum = np.zeros(2)
    powers = [Ak]
    for k in range(M):
        cum = A @ cum + d
        Ak = A @ Ak
        powers.append(Ak)
        A_stack[2 * k:2 * k + 2, :] = Ak
        d_stack[2 * k:2 * k + 2] = cum
        for j in range(k + 1):
            blk = powers[k - j]
            B_stack[2 * k:2 * k + 2, j] = (blk @ B)[:, 0]
            C_stack[2 * k:2 * k + 2, 2 * j:2 * j + 2] = blk @ C

    q_stage = np.array([[0.0, 0.0], [0.0, 1.0 / plant.a2 ** 2]])
    Q = np.kron(np.eye(M), q_stage)
    R = lam * np.eye(M)
    target = np.tile([0.0, plant.x2_target - lm.op.x2], M)
    return CondensedHorizon(M=M, A_stack=A_stack, B_stack=B_stack,
                            C_stack=C_stack, d_stack=d_stack, Q=Q, R=R,
                            target=target, y0=y0, w_dev=w_dev.reshape(-1))


def predict(ch: CondensedHorizon, U) -> np.ndarray:
    """Stacked state-deviation prediction Y for a control sequence U."""
    U = np.asarray(U, dtype=float).reshape(ch.M)
    return ch.A_stack @ ch.y0 + ch.B_stack @ U + ch.C_stack @ ch.w_dev + ch.d_stack


def condensed_cost(ch: CondensedHorizon, U) -> float:
    """Quadratic horizon cost J(U) = (Y - s)' Q (Y - s) + U' R U."""
    U = np.asarray(U, dtype=float).reshape(ch.M)
    e = predict(ch, U) - ch.target
    return float(e @ ch.Q @ e + U @ ch.R @ U)


@dataclass(frozen=True)
class MpcSolution:
    u: np.ndarray        # clamped to [0, 1]
    u_free: np.ndarray   # unconstrained stationary point
    clamped: bool


def solve_mpc_qp(ch: CondensedHorizon) -> MpcSolution:
    """Solve the unconstrained condensed QP, then clamp to [0, 1].

    The unclamped solution zeroes the cost gradient; a residual check
    guards against a near-singular normal matrix.
    """
    H = ch.B_stack.T @ ch.Q @ ch.B_stack + ch.R
    resid = ch.A_stack @ ch.y0 + ch.C_stack @ ch.w_dev + ch.d_stack - ch.target
    g = ch.B_stack.T @ ch.Q @ resid
    try:
        u_free = np.linalg.solve(H, -g)
    except np.linalg.LinAlgError as exc:
        raise NearSingularSystem("condensed QP normal matrix is singular") from exc
    scale = np.linalg.norm(H, ord="fro") * (1.0 + np.linalg.norm(u_free)) + np.linalg.norm(g)
    if np.linalg.norm(H @ u_free + g) > 1e-8 * scale:
        raise NearSingularSystem("condensed QP solve residual exceeds tolerance")
    u = np.clip(u_free, 0.0, 1.0)
    return MpcSolution(u=u, u_free=u_free, clamped=bool(np.any(u != u_free)))
