"""Command-line interface: simulate, dp solve, compare, lint."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import riskdp, sim
from .plant import PlantParams
from .sim import ControllerSpec

FAST_TAU = 60.0
FAST_N = 720
DEFAULT_N = 43200  # 12 h at tau = 1 s


def _parse_grid(text: str) -> tuple[int, int]:
    try:
        n1, n2 = (int(part) for part in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 41x41") from None
    if n1 < 1 or n2 < 1:
        raise argparse.ArgumentTypeError("grid sizes must be positive")
    return n1, n2


def _load_plant(args) -> PlantParams:
    overrides = {}
    if args.config is not None:
        with open(args.config) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
        overrides = dict(data.get("plant", data))
    if getattr(args, "fast", False):
        overrides["tau"] = FAST_TAU
    return PlantParams.from_dict(overrides)


def _default_n(args) -> int:
    if args.N is not None:
        return args.N
    return FAST_N if getattr(args, "fast", False) else DEFAULT_N


def _load_weather(args, p: PlantParams) -> sim.WeatherSeries:
    if args.weather is not None:
        return sim.load_weather_csv(args.weather, tau=p.tau)
    return sim.wet_12h(dt=p.tau)


def _controller_spec(args) -> ControllerSpec:
    return ControllerSpec(kind=args.controller, lam=args.lam, horizon=args.horizon,
                          eps=args.epsilon, v=args.v, theta=args.theta,
                          grid_shape=args.grid, n_actions=args.actions)


def _add_common(parser):
    parser.add_argument("--config", help="JSON plant/config file")
    parser.add_argument("--weather", help="weather CSV (t_s,w_r_mps,w_e_m3ps)")
    parser.add_argument("--out", default="-", help="output path ('-' = stdout)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed recorded in outputs (pipeline is deterministic)")
    parser.add_argument("--fast", action="store_true",
                        help="coarse preset: tau = 60 s, N = 720")
    parser.add_argument("-N", "--steps", dest="N", type=int, default=None,
                        help="simulation horizon in steps")


def _add_controller_flags(parser):
    parser.add_argument("--controller", choices=["mpc", "onoff", "dp"], default="mpc")
    parser.add_argument("--lambda", dest="lam", type=float, default=1e-3,
                        help="MPC control weight")
    parser.add_argument("--horizon", type=int, default=10, help="MPC look-ahead M")
    parser.add_argument("--epsilon", type=float, default=0.5, help="smoothing scale")
    parser.add_argument("--v", type=float, default=0.5, help="on/off pump rate")
    parser.add_argument("--theta", type=float, default=-0.1, help="risk aversion (< 0)")
    parser.add_argument("--grid", type=_parse_grid, default=(41, 41),
                        help="DP grid, e.g. 41x41")
    parser.add_argument("--actions", type=int, default=11, help="DP action count")


def _open_out(path):
    return sys.stdout if path == "-" else open(path, "w", newline="")


def cmd_simulate(args) -> int:
    p = _load_plant(args)
    weather = _load_weather(args, p)
    n = _default_n(args)
    starts = sim.standard_initial_states(p)
    if args.start not in starts:
        raise ValueError(f"unknown start {args.start!r}; choose from {sorted(starts)}")
    sc = sim.Scenario(name=args.start, x0=starts[args.start], N=n,
                      controller=_controller_spec(args), weather=weather, plant=p)
    trace = sim.run_scenario(sc)
    if args.out == "-":
        dev = sim.cumulative_deviation(trace, p)
        print(f"scenario={args.start} controller={sc.controller.label} "
              f"N={n} seed={args.seed} cumulative_deviation={dev!r}")
    else:
        sim.write_trace_csv(trace, args.out)
        print(f"trace written to {args.out} (seed={args.seed})")
    return 0


def cmd_dp_solve(args) -> int:
    p = _load_plant(args)
    weather = _load_weather(args, p)
    n = _default_n(args)
    grid = riskdp.Grid.uniform(*args.grid, p)
    actions = np.linspace(0.0, 1.0, args.actions)
    dm = riskdp.DisturbanceModel.from_series(weather.w_r[:n], weather.w_e[:n],
                                             n_atoms=args.atoms, seed=args.seed)
    costs = riskdp.tracking_cost(p, lam=args.lam)
    values, policy = riskdp.solve(n, grid, actions, dm, costs, p,
                                  riskdp.RiskParams(args.theta))
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "V0", "mu0"])
        for i in range(grid.nnodes):
            w.writerow([repr(float(grid.node_x1[i])), repr(float(grid.node_x2[i])),
                        repr(float(values.V[0, i])),
                        repr(float(actions[policy.mu[0, i]]))])
    finally:
        if fh is not sys.stdout:
            fh.close()
            print(f"value/policy table written to {args.out} (seed={args.seed})")
    return 0


def cmd_compare(args) -> int:
    p = _load_plant(args)
    weather = _load_weather(args, p)
    n = _default_n(args)
    controllers = [ControllerSpec(kind="mpc", lam=args.lam, horizon=args.horizon,
                                  eps=args.epsilon)]
    controllers += [ControllerSpec(kind="onoff", v=v) for v in args.onoff_v]
    if args.with_dp:
        controllers.append(ControllerSpec(kind="dp", theta=args.theta,
                                          grid_shape=args.grid,
                                          n_actions=args.actions))
    rows = sim.compare(sim.standard_initial_states(p), controllers, weather, n, p)
    if args.out == "-":
        for r in rows:
            print(f"{r.scenario},{r.controller},{r.params},"
                  f"{r.cumulative_deviation!r},{r.sum_u_sq!r},{r.status}")
    else:
        timing = args.timing_out or (args.out + ".timing")
        sim.write_comparison_csv(rows, args.out, timing_path=timing)
        print(f"comparison written to {args.out} (timings: {timing}, seed={args.seed})")
    return 1 if any(r.status != "ok" for r in rows) else 0


def cmd_lint(args) -> int:
    """Validate config and/or weather files; report all problems found."""
    problems = []
    if args.config is None and args.weather is None:
        problems.append("nothing to lint: pass --config and/or --weather")
    p = PlantParams()
    if args.config is not None:
        try:
            p = _load_plant(args)
            print(f"config ok: {args.config}")
        except Exception as exc:
            problems.append(f"config: {exc}")
    if args.weather is not None:
        try:
            series = sim.load_weather_csv(args.weather)
            print(f"weather ok: {args.weather} ({len(series)} samples, "
                  f"dt={series.dt:g} s)")
            if len(series) < _default_n(args) + 1:
                problems.append("weather: series shorter than the simulation horizon")
        except Exception as exc:
            problems.append(f"weather: {exc}")
    for msg in problems:
        print(f"error: {msg}", file=sys.stderr)
    del p
    return 1 if problems else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stormdp",
        description="Risk-averse DP, MPC, and on/off control of a two-tank "
                    "stormwater irrigation system.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one closed-loop scenario")
    _add_common(p_sim)
    _add_controller_flags(p_sim)
    p_sim.add_argument("--start", default="low-low",
                       choices=["low-low", "high-low", "high-high"])
    p_sim.set_defaults(func=cmd_simulate)

    p_dp = sub.add_parser("dp", help="dynamic-programming tools")
    dp_sub = p_dp.add_subparsers(dest="dp_command", required=True)
    p_solve = dp_sub.add_parser("solve", help="solve the risk-averse DP")
    _add_common(p_solve)
    p_solve.add_argument("--theta", type=float, default=-0.1)
    p_solve.add_argument("--grid", type=_parse_grid, default=(41, 41))
    p_solve.add_argument("--actions", type=int, default=11)
    p_solve.add_argument("--atoms", type=int, default=3)
    p_solve.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p_solve.set_defaults(func=cmd_dp_solve)

    p_cmp = sub.add_parser("compare", help="controller comparison grid")
    _add_common(p_cmp)
    p_cmp.add_argument("--lambda", dest="lam", type=float, default=1e-3)
    p_cmp.add_argument("--horizon", type=int, default=10)
    p_cmp.add_argument("--epsilon", type=float, default=0.5)
    p_cmp.add_argument("--onoff-v", type=float, nargs="+",
                       default=[0.2, 0.5, 1.0, 1.5, 2.0])
    p_cmp.add_argument("--with-dp", action="store_true",
                       help="include the tabulated DP controller")
    p_cmp.add_argument("--theta", type=float, default=-0.1)
    p_cmp.add_argument("--grid", type=_parse_grid, default=(41, 41))
    p_cmp.add_argument("--actions", type=int, default=11)
    p_cmp.add_argument("--timing-out", default=None,
                       help="wall-clock timings CSV (kept out of the main CSV "
                            "so repeated runs are byte-identical)")
    p_cmp.set_defaults(func=cmd_compare)

    p_lint = sub.add_parser("lint", help="validate config and weather files")
    _add_common(p_lint)
    p_lint.set_defaults(func=cmd_lint)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
