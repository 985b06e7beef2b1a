"""Weather ingestion, synthetic storms, closed-loop simulation, metrics,
the scenario catalog, and the controller comparison grid."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import control as ctl
from . import plant as plant_mod
from . import riskdp
from .plant import PlantParams

__all__ = [
    "WeatherSeries",
    "Scenario",
    "ControllerSpec",
    "ComparisonRow",
    "Trace",
    "write_trace_csv",
    "read_trace_csv",
    "load_weather_csv",
    "synth_storm",
    "wet_12h",
    "standard_initial_states",
    "make_controller",
    "run_scenario",
    "cumulative_deviation",
    "compare",
    "write_comparison_csv",
]

WEATHER_HEADER = ["t_s", "w_r_mps", "w_e_m3ps"]


@dataclass(frozen=True)
class WeatherSeries:
    """Uniformly sampled precipitation (m/s) and evapotranspiration (m^3/s)."""

    t: np.ndarray
    w_r: np.ndarray
    w_e: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        w_r = np.asarray(self.w_r, dtype=float)
        w_e = np.asarray(self.w_e, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "w_r", w_r)
        object.__setattr__(self, "w_e", w_e)
        if not (t.size == w_r.size == w_e.size):
            raise ValueError("weather columns must have equal lengths")
        if t.size == 0:
            raise ValueError("no samples")
        if np.any(w_r < 0) or np.any(w_e < 0):
            raise ValueError("weather rates must be nonnegative")
        if t.size > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if np.max(np.abs(dt - dt[0])) > 1e-6:
                raise ValueError("timestamps must be uniformly sampled")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 1.0

    def __len__(self) -> int:
        return self.t.size

    def resample(self, dt: float) -> "WeatherSeries":
        """Piecewise-linear resampling to step dt, endpoint-exact."""
        if dt <= 0:
            raise ValueError("sample period must be positive")
        n = int(round((self.t[-1] - self.t[0]) / dt)) + 1
        tq = self.t[0] + dt * np.arange(n)
        return WeatherSeries(t=tq,
                             w_r=np.interp(tq, self.t, self.w_r),
                             w_e=np.interp(tq, self.t, self.w_e))


def load_weather_csv(path, tau: float | None = None) -> WeatherSeries:
    """Read a weather CSV with header ``t_s,w_r_mps,w_e_m3ps``.

    Malformed rows report their line number. If ``tau`` is given the
    series is linearly resampled to that period.
    """
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("no samples") from None
        if [h.strip() for h in header] != WEATHER_HEADER:
            raise ValueError(f"expected header {','.join(WEATHER_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric value") from None
    if not rows:
        raise ValueError("no samples")
    data = np.asarray(rows)
    series = WeatherSeries(t=data[:, 0], w_r=data[:, 1], w_e=data[:, 2])
    return series.resample(tau) if tau is not None else series


def synth_storm(pulses, duration: float, dt: float,
                w_e_base: float = 4.0e-5) -> WeatherSeries:
    """Piecewise-constant rain pulses over a flat evapotranspiration baseline.

    ``pulses`` is a list of (t0, t1, rate) with non-overlapping [t0, t1).
    """
    pulses = sorted(pulses)
    for (a0, a1, _), (b0, b1, _) in zip(pulses, pulses[1:]):
        if b0 < a1:
            raise ValueError("storm pulses must not overlap")
    t = dt * np.arange(int(round(duration / dt)) + 1)
    w_r = np.zeros_like(t)
    for t0, t1, rate in pulses:
        if rate < 0:
            raise ValueError("pulse rate must be nonnegative")
        w_r[(t >= t0) & (t < t1)] = rate
    return WeatherSeries(t=t, w_r=w_r, w_e=np.full_like(t, w_e_base))


def wet_12h(dt: float = 60.0, pad_steps: int = 16) -> WeatherSeries:
    """Default synthetic wet-weather preset.

    Three pulses whose total depth equals a 5 mm/h x 4 h event (20 mm):
    8 mm + 6 mm + 6 mm spread over 12 hours. ``pad_steps`` extends the
    series past 12 h so forecasts at the final steps stay in range.
    """
    mmph = 1e-3 / 3600.0
    pulses = [
        (0.0, 2 * 3600.0, 4.0 * mmph),       # 8 mm
        (4 * 3600.0, 6 * 3600.0, 3.0 * mmph),  # 6 mm
        (8 * 3600.0, 10 * 3600.0, 3.0 * mmph),  # 6 mm
    ]
    return synth_storm(pulses, duration=12 * 3600.0 + pad_steps * dt, dt=dt)


def standard_initial_states(p: PlantParams) -> dict[str, tuple[float, float]]:
    """The three catalog starts: each tank high or low relative to its
    outlet elevation / desired moisture level."""
    return {
        "low-low": (p.a1 * p.z_o / 1.3, p.a2 * p.z_veg / 1.3),
        "high-low": (p.a1 * p.z_o * 1.3, p.a2 * p.z_veg / 1.3),
        "high-high": (p.a1 * p.z_o * 1.3, p.a2 * p.z_veg * 1.3),
    }


@dataclass(frozen=True)
class Scenario:
    """One closed-loop run: a named start, horizon, controller, weather."""

    name: str
    x0: tuple[float, float]
    N: int
    controller: "ControllerSpec"
    weather: WeatherSeries
    plant: PlantParams = field(default_factory=PlantParams)

    def __post_init__(self):
        p = self.plant
        if not (0 <= self.x0[0] <= p.cap1 and 0 <= self.x0[1] <= p.cap2):
            raise ValueError("initial state outside the clamped state box")
        if len(self.weather) < self.N + 1:
            raise ValueError("weather series shorter than the simulation horizon")


@dataclass(frozen=True)
class ControllerSpec:
    """Controller selection plus its parameters, as used in comparisons."""

    kind: str                 # "mpc" | "onoff" | "dp"
    lam: float = 1e-3         # mpc
    horizon: int = 10         # mpc
    eps: float = 0.5          # mpc
    v: float = 0.5            # onoff
    theta: float = -0.1       # dp
    grid_shape: tuple[int, int] = (41, 41)   # dp
    n_actions: int = 11       # dp
    n_atoms: int = 3          # dp

    @property
    def label(self) -> str:
        if self.kind == "mpc":
            return f"mpc(lam={self.lam:g},M={self.horizon})"
        if self.kind == "onoff":
            return f"onoff(v={self.v:g})"
        return f"dp(theta={self.theta:g})"


def make_controller(spec: ControllerSpec, p: PlantParams, weather: WeatherSeries,
                    N: int) -> Callable[[int, float, float], float]:
    """Build a stateful step callable (t, x1, x2) -> u for one run."""
    if spec.kind == "onoff":
        return lambda t, x1, x2: ctl.onoff_step(x1, x2, spec.v, p)

    if spec.kind == "mpc":
        cfg = ctl.MpcConfig(plant=p, horizon=spec.horizon, lam=spec.lam, eps=spec.eps)
        if len(weather) < N + spec.horizon:
            raise ValueError("weather series too short for the MPC forecast window")
        state_box = {"cs": None}

        def mpc(t, x1, x2):
            if state_box["cs"] is None:
                state_box["cs"] = ctl.initial_controller_state((x1, x2))
            fc = np.column_stack([weather.w_r[t:t + spec.horizon],
                                  weather.w_e[t:t + spec.horizon]])
            u, state_box["cs"] = ctl.mpc_step(t, x1, x2, fc, state_box["cs"], cfg)
            return u

        return mpc

    if spec.kind == "dp":
        grid = riskdp.Grid.uniform(*spec.grid_shape, p)
        actions = np.linspace(0.0, 1.0, spec.n_actions)
        dm = riskdp.DisturbanceModel.from_series(weather.w_r[:N], weather.w_e[:N],
                                                 n_atoms=spec.n_atoms)
        costs = riskdp.tracking_cost(p, lam=spec.lam)
        _, policy = riskdp.solve(N, grid, actions, dm, costs, p,
                                 riskdp.RiskParams(spec.theta))
        return lambda t, x1, x2: ctl.dp_step(t, x1, x2, policy, grid)

    raise ValueError(f"unknown controller kind {spec.kind!r}")


@dataclass(frozen=True)
class Trace:
    """Closed-loop record: N+1 states, N controls/disturbances/costs.

    ``clamp1``/``clamp2`` log the volume removed (or added) by the state
    clamp at each step so a mass-balance audit can account for it.
    """

    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u: np.ndarray
    w_r: np.ndarray
    w_e: np.ndarray
    cost: np.ndarray
    clamp1: np.ndarray
    clamp2: np.ndarray

    def __len__(self) -> int:
        return self.t.size


def run_scenario(sc: Scenario) -> Trace:
    """Closed loop: controller -> clamp -> exact non-smooth plant step.

    Deterministic given its inputs; controller and model errors are
    re-raised with the failing step index.
    """
    p = sc.plant
    step_fn = make_controller(sc.controller, p, sc.weather, sc.N)
    n = sc.N
    x1 = np.empty(n + 1)
    x2 = np.empty(n + 1)
    u = np.empty(n)
    cost = np.empty(n)
    clamp1 = np.empty(n)
    clamp2 = np.empty(n)
    x1[0], x2[0] = sc.x0
    target = p.x2_target
    for t in range(n):
        try:
            u[t] = np.clip(step_fn(t, x1[t], x2[t]), 0.0, 1.0)
            f1, f2 = plant_mod.f_rhs(x1[t], x2[t], u[t], sc.weather.w_r[t],
                                     sc.weather.w_e[t], p)
            x1[t + 1] = np.clip(x1[t] + p.tau * f1, 0.0, p.cap1)
            x2[t + 1] = np.clip(x2[t] + p.tau * f2, 0.0, p.cap2)
        except Exception as exc:
            raise RuntimeError(f"simulation failed at step {t}: {exc}") from exc
        clamp1[t] = x1[t + 1] - (x1[t] + p.tau * f1)
        clamp2[t] = x2[t + 1] - (x2[t] + p.tau * f2)
        cost[t] = (x2[t] / p.a2 - p.z_veg) ** 2
    return Trace(t=p.tau * np.arange(n + 1), x1=x1, x2=x2, u=u,
                 w_r=sc.weather.w_r[:n].copy(), w_e=sc.weather.w_e[:n].copy(),
                 cost=cost, clamp1=clamp1, clamp2=clamp2)


def cumulative_deviation(trace: Trace, p: PlantParams) -> float:
    """Sum over all recorded states of |x2 - a2 * z_veg| (m^3 * steps)."""
    return float(np.abs(trace.x2 - p.x2_target).sum())


_TRACE_COLUMNS = ["t", "x1", "x2", "u", "w_r", "w_e", "cost", "clamp1", "clamp2"]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(trace: Trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_TRACE_COLUMNS)
        n = trace.u.size
        for i in range(n + 1):
            row = [_fmt(trace.t[i]), _fmt(trace.x1[i]), _fmt(trace.x2[i])]
            if i < n:
                row += [_fmt(trace.u[i]), _fmt(trace.w_r[i]), _fmt(trace.w_e[i]),
                        _fmt(trace.cost[i]), _fmt(trace.clamp1[i]), _fmt(trace.clamp2[i])]
            else:
                row += [""] * 6
            w.writerow(row)


def read_trace_csv(path) -> Trace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != _TRACE_COLUMNS:
            raise ValueError("unexpected trace header")
        rows = [row for row in reader if row]
    n = len(rows) - 1
    cols = {name: [] for name in _TRACE_COLUMNS}
    for i, row in enumerate(rows):
        for j, name in enumerate(_TRACE_COLUMNS):
            if j >= 3 and i == n:
                continue
            cols[name].append(float(row[j]))
    return Trace(**{k: np.asarray(v) for k, v in cols.items()})


@dataclass(frozen=True)
class ComparisonRow:
    scenario: str
    controller: str
    params: str
    cumulative_deviation: float
    sum_u_sq: float
    status: str
    runtime_s: float


def compare(initial_states: dict[str, tuple[float, float]],
            controllers: list[ControllerSpec], weather: WeatherSeries,
            N: int, p: PlantParams) -> list[ComparisonRow]:
    """Run every (start, controller) cell over the shared weather/horizon.

    Failing cells are marked and the rest of the grid still runs.
    """
    rows = []
    for name, x0 in initial_states.items():
        for spec in controllers:
            start = time.perf_counter()
            try:
                sc = Scenario(name=name, x0=x0, N=N, controller=spec,
                              weather=weather, plant=p)
                trace = run_scenario(sc)
                rows.append(ComparisonRow(
                    scenario=name, controller=spec.kind, params=spec.label,
                    cumulative_deviation=cumulative_deviation(trace, p),
                    sum_u_sq=float((trace.u ** 2).sum()), status="ok",
                    runtime_s=time.perf_counter() - start))
            except Exception as exc:
                rows.append(ComparisonRow(
                    scenario=name, controller=spec.kind, params=spec.label,
                    cumulative_deviation=math.nan, sum_u_sq=math.nan,
                    status=f"failed: {exc}",
                    runtime_s=time.perf_counter() - start))
    return rows


def write_comparison_csv(rows: list[ComparisonRow], path,
                         timing_path=None) -> None:
    """Write the comparison table.

    The main CSV holds only deterministic columns so identical seeds give
    byte-identical files; wall-clock timings go to ``timing_path``.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "controller", "params",
                    "cumulative_deviation_m3_steps", "sum_u_sq", "status"])
        for r in rows:
            w.writerow([r.scenario, r.controller, r.params,
                        _fmt(r.cumulative_deviation), _fmt(r.sum_u_sq), r.status])
    if timing_path is not None:
        with open(timing_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "controller", "params", "runtime_s"])
            for r in rows:
                w.writerow([r.scenario, r.controller, r.params, f"{r.runtime_s:.6f}"])
