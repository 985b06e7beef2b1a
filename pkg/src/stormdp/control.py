"""The three pump controllers as step functions (time, state, forecast) -> u."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linearize import OperatingPoint, condense, linearize_at, solve_mpc_qp
from .plant import PlantParams
from .riskdp import Grid, PolicyTable
from .smooth import SmoothParams

__all__ = [
    "MpcConfig",
    "ControllerState",
    "initial_controller_state",
    "mpc_step",
    "onoff_step",
    "dp_step",
]


@dataclass(frozen=True)
class MpcConfig:
    plant: PlantParams
    horizon: int = 10
    lam: float = 1e-3
    eps: float = 0.5

    @property
    def smooth(self) -> SmoothParams:
        return SmoothParams(plant=self.plant, eps=self.eps)


@dataclass(frozen=True)
class ControllerState:
    """Receding-horizon bookkeeping: last control, disturbance history
    (trailing window of length <= horizon), current operating point."""

    u_bar: float
    w_bar: tuple[float, float]
    history: tuple[tuple[float, float], ...]
    x_bar: tuple[float, float]


def initial_controller_state(x0) -> ControllerState:
    """Starting operating point: no pumping, no weather."""
    return ControllerState(u_bar=0.0, w_bar=(0.0, 0.0), history=(),
                           x_bar=(float(x0[0]), float(x0[1])))


def mpc_step(t: int, x1: float, x2: float, forecast, cs: ControllerState,
             cfg: MpcConfig) -> tuple[float, ControllerState]:
    """One receding-horizon step.

    Linearizes at the measured state with the previous control and the
    trailing-mean disturbance, condenses the horizon, solves the QP, and
    applies the first (clamped) control. The returned state has the
    operating point updated for the next call.
    """
    forecast = np.asarray(forecast, dtype=float).reshape(-1, 2)
    if forecast.shape[0] != cfg.horizon:
        raise ValueError("forecast length must equal the MPC horizon")
    op = OperatingPoint(x1=float(x1), x2=float(x2), u=cs.u_bar,
                        w_r=cs.w_bar[0], w_e=cs.w_bar[1])
    lm = linearize_at(op, cfg.smooth)
    y0 = np.zeros(2)  # linearized at the measured state
    w_dev = forecast - np.asarray(cs.w_bar)
    ch = condense(lm, cfg.horizon, y0, w_dev, cfg.lam, cfg.plant)
    sol = solve_mpc_qp(ch)
    u = float(sol.u[0])

    history = (cs.history + (tuple(forecast[0]),))[-cfg.horizon:]
    w_bar = tuple(np.mean(history, axis=0))
    new_cs = ControllerState(u_bar=u, w_bar=w_bar, history=history,
                             x_bar=(float(x1), float(x2)))
    return u, new_cs


def onoff_step(x1: float, x2: float, v: float, p: PlantParams) -> float:
    """Reactive on/off rule: pump at rate v when the soil is dry and the
    cistern holds enough water, else stay off; clamped to [0, 1]."""
    if v <= 0:
        raise ValueError("on/off rate v must be positive")
    if x2 < p.a2 * p.z_veg and x1 >= (p.z_pump + p.z_H) * p.a1:
        return float(min(v, 1.0))
    return 0.0


def dp_step(t: int, x1: float, x2: float, policy: PolicyTable, grid: Grid) -> float:
    """Tabulated risk-averse policy looked up at the nearest grid node."""
    if t >= policy.horizon:
        raise ValueError("time index beyond the policy horizon")
    idx = int(grid.nearest(x1, x2))
    return float(policy.actions[policy.mu[t, idx]])
