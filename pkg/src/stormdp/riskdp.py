"""Finite-horizon entropic-risk dynamic programming on a discretized
state/action/disturbance space.

The backward recursion replaces the expectation backup with the entropic
one, psi = (-2/theta) log E[exp((-theta/2) V_next)], computed with a
max-shifted log-sum-exp. Nearest-node projection turns the deterministic
plant plus finite disturbance atoms into an exactly finite MDP, which the
brute-force policy enumeration verifies end to end.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import plant as plant_mod
from .plant import PlantParams

__all__ = [
    "RiskParams",
    "Grid",
    "DisturbanceModel",
    "CostSpec",
    "tracking_cost",
    "ValueTable",
    "PolicyTable",
    "project",
    "entropic_backup",
    "solve",
    "evaluate_policy_W",
    "BruteForceResult",
    "brute_force_optimal",
    "risk_functional",
    "lipschitz_regularize",
]

MAX_ENUMERATION = 10 ** 6


@dataclass(frozen=True)
class RiskParams:
    """Risk-aversion parameter theta < 0 (units of 1/cost)."""

    theta: float

    def __post_init__(self):
        if not self.theta < 0:
            raise ValueError("theta must be strictly negative")

    @property
    def gamma(self) -> float:
        """Positive exponential-utility coefficient -theta/2."""
        return -self.theta / 2.0


class Grid:
    """Rectangular state grid: sorted breakpoints per tank volume."""

    def __init__(self, x1_nodes, x2_nodes):
        self.x1_nodes = np.asarray(x1_nodes, dtype=float)
        self.x2_nodes = np.asarray(x2_nodes, dtype=float)
        for nodes in (self.x1_nodes, self.x2_nodes):
            if nodes.ndim != 1 or nodes.size < 1:
                raise ValueError("each dimension needs at least one breakpoint")
            if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
                raise ValueError("breakpoints must be strictly increasing")
        self.n1 = self.x1_nodes.size
        self.n2 = self.x2_nodes.size
        self.nnodes = self.n1 * self.n2
        i1, i2 = np.meshgrid(np.arange(self.n1), np.arange(self.n2), indexing="ij")
        self.node_x1 = self.x1_nodes[i1].reshape(-1)
        self.node_x2 = self.x2_nodes[i2].reshape(-1)

    @classmethod
    def uniform(cls, n1: int, n2: int, p: PlantParams) -> "Grid":
        """Uniform grid covering the clamped state box [0,cap1]x[0,cap2]."""
        x1 = np.linspace(0.0, p.cap1, n1) if n1 > 1 else np.array([p.cap1])
        x2 = np.linspace(0.0, p.cap2, n2) if n2 > 1 else np.array([p.cap2])
        return cls(x1, x2)

    def _check_in_box(self, x1, x2):
        tol = 1e-9
        lo1, hi1 = self.x1_nodes[0], self.x1_nodes[-1]
        lo2, hi2 = self.x2_nodes[0], self.x2_nodes[-1]
        bad = ((np.asarray(x1) < lo1 - tol) | (np.asarray(x1) > hi1 + tol)
               | (np.asarray(x2) < lo2 - tol) | (np.asarray(x2) > hi2 + tol))
        if np.any(bad):
            raise ValueError("state outside the grid's state box")

    def nearest(self, x1, x2):
        """Flat index of the closest node; distance ties go to the lower index."""
        self._check_in_box(x1, x2)
        return (_nearest_1d(self.x1_nodes, x1) * self.n2
                + _nearest_1d(self.x2_nodes, x2))

    def multilinear(self, x1, x2):
        """Up-to-4 cell corners with convex weights; exactness on nodes."""
        self._check_in_box(x1, x2)
        j1, t1 = _cell_coord(self.x1_nodes, x1)
        j2, t2 = _cell_coord(self.x2_nodes, x2)
        j1 = np.asarray(j1)
        idx = np.stack([
            j1 * self.n2 + j2,
            j1 * self.n2 + np.minimum(j2 + 1, self.n2 - 1),
            np.minimum(j1 + 1, self.n1 - 1) * self.n2 + j2,
            np.minimum(j1 + 1, self.n1 - 1) * self.n2 + np.minimum(j2 + 1, self.n2 - 1),
        ], axis=-1)
        w = np.stack([
            (1 - t1) * (1 - t2),
            (1 - t1) * t2,
            t1 * (1 - t2),
            t1 * t2,
        ], axis=-1)
        return idx, w


def _nearest_1d(nodes: np.ndarray, x):
    x = np.asarray(x, dtype=float)
    if nodes.size == 1:
        return np.zeros(x.shape, dtype=int) if x.shape else 0
    j = np.clip(np.searchsorted(nodes, x), 1, nodes.size - 1)
    lower = x - nodes[j - 1]
    upper = nodes[j] - x
    return np.where(lower <= upper, j - 1, j)


def _cell_coord(nodes: np.ndarray, x):
    x = np.asarray(x, dtype=float)
    if nodes.size == 1:
        zero = np.zeros(x.shape) if x.shape else 0.0
        return (np.zeros(x.shape, dtype=int) if x.shape else 0), zero
    j = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, nodes.size - 2)
    t = (x - nodes[j]) / (nodes[j + 1] - nodes[j])
    return j, np.clip(t, 0.0, 1.0)


def project(x1: float, x2: float, grid: Grid, mode: str = "nearest"):
    """Project a state onto the grid.

    Returns a flat node index for ``nearest`` and a list of
    (index, weight) pairs with positive weights for ``multilinear``.
    """
    if mode == "nearest":
        return int(grid.nearest(x1, x2))
    if mode == "multilinear":
        idx, w = grid.multilinear(x1, x2)
        idx = np.atleast_1d(np.asarray(idx).reshape(-1))
        w = np.atleast_1d(np.asarray(w).reshape(-1))
        merged: dict[int, float] = {}
        for i, wi in zip(idx, w):
            if wi > 0.0:
                merged[int(i)] = merged.get(int(i), 0.0) + float(wi)
        return sorted(merged.items())
    raise ValueError(f"unknown projection mode {mode!r}")


@dataclass(frozen=True)
class DisturbanceModel:
    """Finite-support disturbance distribution, independent of (x, u)."""

    w_r: np.ndarray
    w_e: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w_r", np.asarray(self.w_r, dtype=float))
        object.__setattr__(self, "w_e", np.asarray(self.w_e, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if not (self.w_r.shape == self.w_e.shape == self.p.shape):
            raise ValueError("atom arrays must have matching shapes")
        if np.any(self.p <= 0):
            raise ValueError("atom probabilities must be positive")
        if abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("atom probabilities must sum to 1")

    @property
    def natoms(self) -> int:
        return self.p.size

    @classmethod
    def from_series(cls, w_r_series, w_e_series, n_atoms: int = 3,
                    seed: int | None = None) -> "DisturbanceModel":
        """Empirical quantile binning of a precipitation series.

        Sorts the rain samples into ``n_atoms`` equal-mass chunks; each
        atom is the chunk mean of (w_r, w_e) with the chunk's mass.
        Deterministic; ``seed`` is accepted only so callers can record it.
        """
        del seed
        w_r_series = np.asarray(w_r_series, dtype=float)
        w_e_series = np.asarray(w_e_series, dtype=float)
        if w_r_series.size == 0:
            raise ValueError("empty disturbance series")
        order = np.argsort(w_r_series, kind="stable")
        chunks = np.array_split(order, min(n_atoms, w_r_series.size))
        atoms: dict[tuple[float, float], float] = {}
        n = w_r_series.size
        for chunk in chunks:
            if chunk.size == 0:
                continue
            key = (float(w_r_series[chunk].mean()), float(w_e_series[chunk].mean()))
            atoms[key] = atoms.get(key, 0.0) + chunk.size / n
        w_r = np.array([k[0] for k in atoms])
        w_e = np.array([k[1] for k in atoms])
        p = np.array(list(atoms.values()))
        return cls(w_r=w_r, w_e=w_e, p=p / p.sum())


@dataclass(frozen=True)
class CostSpec:
    """Stage and terminal cost callables, vectorized over node arrays.

    ``stage(t, x1, x2, u)`` and ``terminal(x1, x2)``. Set
    ``time_varying`` when the stage cost actually depends on t so the
    solver re-evaluates it per stage.
    """

    stage: Callable
    terminal: Callable
    time_varying: bool = False

    def bounds(self, grid: Grid, actions) -> tuple[float, float]:
        """(min, max) of the stage cost over grid nodes x actions at t=0."""
        acts = np.asarray(actions, dtype=float)
        c = self.stage(0, grid.node_x1[:, None], grid.node_x2[:, None], acts[None, :])
        c = np.broadcast_to(np.asarray(c, dtype=float), (grid.nnodes, acts.size))
        return float(c.min()), float(c.max())


def tracking_cost(p: PlantParams, lam: float = 1e-3) -> CostSpec:
    """Soil-moisture tracking cost shared with the receding-horizon
    controller: (x2/a2 - z_veg)^2 + lam * u^2, terminal without the
    control term."""
    def stage(t, x1, x2, u):
        del t
        return (np.asarray(x2) / p.a2 - p.z_veg) ** 2 + lam * np.asarray(u) ** 2

    def terminal(x1, x2):
        return (np.asarray(x2) / p.a2 - p.z_veg) ** 2

    return CostSpec(stage=stage, terminal=terminal)


@dataclass(frozen=True)
class ValueTable:
    """Per-stage values V[t] on grid nodes, t in {0..N}."""

    V: np.ndarray  # (N+1, nnodes)
    grid: Grid

    @property
    def horizon(self) -> int:
        return self.V.shape[0] - 1


@dataclass(frozen=True)
class PolicyTable:
    """Per-stage argmin action indices mu[t] on grid nodes, t in {0..N-1}."""

    mu: np.ndarray  # (N, nnodes) int
    actions: np.ndarray
    grid: Grid

    @property
    def horizon(self) -> int:
        return self.mu.shape[0]


class _Tables:
    """Projection of every (node, action, atom) successor, built once."""

    def __init__(self, grid: Grid, actions, dm: DisturbanceModel,
                 p: PlantParams, mode: str):
        self.grid = grid
        self.actions = np.asarray(actions, dtype=float)
        self.dm = dm
        self.mode = mode
        x1 = grid.node_x1[:, None, None]
        x2 = grid.node_x2[:, None, None]
        u = self.actions[None, :, None]
        wr = dm.w_r[None, None, :]
        we = dm.w_e[None, None, :]
        x1n, x2n = plant_mod.step(x1, x2, u, wr, we, p)
        x1n = np.clip(x1n, grid.x1_nodes[0], grid.x1_nodes[-1])
        x2n = np.clip(x2n, grid.x2_nodes[0], grid.x2_nodes[-1])
        if mode == "nearest":
            self.succ = grid.nearest(x1n, x2n)
            self.weights = None
        elif mode == "multilinear":
            self.succ, self.weights = grid.multilinear(x1n, x2n)
        else:
            raise ValueError(f"unknown projection mode {mode!r}")
        self.log_p = np.log(dm.p)

    def next_values(self, V_next: np.ndarray) -> np.ndarray:
        """V_next at projected successors, shape (nnodes, nA, natoms)."""
        if self.weights is None:
            return V_next[self.succ]
        return (V_next[self.succ] * self.weights).sum(axis=-1)

    def stage_cost(self, costs: CostSpec, t: int) -> np.ndarray:
        c = costs.stage(t, self.grid.node_x1[:, None], self.grid.node_x2[:, None],
                        self.actions[None, :])
        return np.broadcast_to(np.asarray(c, dtype=float),
                               (self.grid.nnodes, self.actions.size))


def _psi(V_succ: np.ndarray, log_p: np.ndarray, theta: float) -> np.ndarray:
    """Entropic backup of successor values over the last (atom) axis."""
    gamma = -theta / 2.0
    return logsumexp(gamma * V_succ + log_p, axis=-1) / gamma


def entropic_backup(V_next, t: int, rm: RiskParams, grid: Grid, dm: DisturbanceModel,
                    actions, costs: CostSpec, p: PlantParams,
                    mode: str = "nearest"):
    """One backward step: V_t(x) = min_u [c_t(x,u) + psi_t(x,u)].

    Argmin ties resolve to the smallest action index, a fixed measurable
    selector. Raises if any value fails to be finite.
    """
    tables = _Tables(grid, actions, dm, p, mode)
    return _backup(np.asarray(V_next, dtype=float), t, rm.theta, tables, costs)


def _backup(V_next, t, theta, tables: _Tables, costs: CostSpec, cost_arr=None):
    if theta is None:
        psi = (tables.next_values(V_next) * tables.dm.p).sum(axis=-1)
    else:
        psi = _psi(tables.next_values(V_next), tables.log_p, theta)
    if cost_arr is None:
        cost_arr = tables.stage_cost(costs, t)
    v = cost_arr + psi
    if not np.all(np.isfinite(v)):
        raise ArithmeticError("non-finite value in entropic backup")
    mu = np.argmin(v, axis=1)
    return v[np.arange(v.shape[0]), mu], mu.astype(np.int64)


def solve(N: int, grid: Grid, actions, dm: DisturbanceModel, costs: CostSpec,
          p: PlantParams, rm: RiskParams | None, mode: str = "nearest"):
    """Backward induction over N stages.

    ``rm=None`` runs the risk-neutral solver (plain expectation backup),
    used as the theta -> 0 limit reference. Returns (ValueTable,
    PolicyTable).
    """
    if N < 1:
        raise ValueError("horizon N must be at least 1")
    tables = _Tables(grid, actions, dm, p, mode)
    theta = None if rm is None else rm.theta
    V = np.empty((N + 1, grid.nnodes))
    mu = np.empty((N, grid.nnodes), dtype=np.int64)
    V[N] = np.asarray(costs.terminal(grid.node_x1, grid.node_x2), dtype=float)
    cost_arr = None if costs.time_varying else tables.stage_cost(costs, 0)
    for t in range(N - 1, -1, -1):
        V[t], mu[t] = _backup(V[t + 1], t, theta, tables, costs, cost_arr)
    return ValueTable(V=V, grid=grid), PolicyTable(mu=mu, actions=tables.actions, grid=grid)


def _policy_log_W(policy_mu: np.ndarray, theta: float, tables: _Tables,
                  costs: CostSpec, N: int) -> np.ndarray:
    gamma = -theta / 2.0
    grid = tables.grid
    log_W = np.empty((N + 1, grid.nnodes))
    log_W[N] = gamma * np.asarray(costs.terminal(grid.node_x1, grid.node_x2), dtype=float)
    rows = np.arange(grid.nnodes)
    for t in range(N - 1, -1, -1):
        c = tables.stage_cost(costs, t)[rows, policy_mu[t]]
        if tables.weights is None:
            succ_logW = log_W[t + 1][tables.succ[rows, policy_mu[t]]]
        else:
            succ_logW = (log_W[t + 1][tables.succ[rows, policy_mu[t]]]
                         * tables.weights[rows, policy_mu[t]]).sum(axis=-1)
        log_W[t] = gamma * c + logsumexp(tables.log_p[None, :] + succ_logW, axis=-1)
    return log_W


def evaluate_policy_W(policy: PolicyTable, dm: DisturbanceModel, costs: CostSpec,
                      p: PlantParams, rm: RiskParams,
                      mode: str = "nearest") -> np.ndarray:
    """Multiplicative policy evaluation W_t(x) = E[exp(gamma Z_t) | x].

    Computed in log-space; every returned value is strictly positive.
    """
    tables = _Tables(policy.grid, policy.actions, dm, p, mode)
    log_W = _policy_log_W(policy.mu, rm.theta, tables, costs, policy.horizon)
    W = np.exp(log_W)
    if not np.all(np.isfinite(W)) or np.any(W <= 0.0):
        raise ArithmeticError("policy evaluation left the positive finite range")
    return W


@dataclass(frozen=True)
class BruteForceResult:
    optimal_values: np.ndarray   # (nnodes,) min over all Markov policies
    best_policy: np.ndarray      # (N, nnodes) action indices
    policy_values: np.ndarray    # (npolicies, nnodes) entropic value of each policy


def brute_force_optimal(N: int, grid: Grid, actions, dm: DisturbanceModel,
                        costs: CostSpec, p: PlantParams, rm: RiskParams,
                        mode: str = "nearest") -> BruteForceResult:
    """Enumerate every Markov policy on the projected finite MDP and
    minimize the entropic risk (-2/theta) log W_0 per start node."""
    tables = _Tables(grid, actions, dm, p, mode)
    n_actions = tables.actions.size
    n_entries = grid.nnodes * N
    if n_actions ** n_entries > MAX_ENUMERATION:
        raise ValueError("policy enumeration too large for brute force")
    scale = -2.0 / rm.theta
    values = []
    best_total = np.inf
    best_policy = None
    for flat in itertools.product(range(n_actions), repeat=n_entries):
        policy_mu = np.asarray(flat, dtype=np.int64).reshape(N, grid.nnodes)
        v0 = scale * _policy_log_W(policy_mu, rm.theta, tables, costs, N)[0]
        values.append(v0)
        total = v0.sum()
        if total < best_total:
            best_total = total
            best_policy = policy_mu
    policy_values = np.asarray(values)
    return BruteForceResult(optimal_values=policy_values.min(axis=0),
                            best_policy=best_policy,
                            policy_values=policy_values)


def risk_functional(Z, probs, theta: float) -> float:
    """Entropic risk (-2/theta) log sum p exp((-theta/2) Z), stabilized."""
    if not theta < 0:
        raise ValueError("theta must be strictly negative")
    Z = np.asarray(Z, dtype=float)
    probs = np.asarray(probs, dtype=float)
    gamma = -theta / 2.0
    return float(logsumexp(gamma * Z, b=probs) / gamma)


def lipschitz_regularize(h, dist, m: float) -> np.ndarray:
    """Inf-convolution h_m(x) = min_y [h(y) + m * dist(x, y)] on nodes.

    Produces an m-Lipschitz minorant of h that increases pointwise in m
    and recovers h once m clears the finite-grid slope threshold.
    """
    if m < 0:
        raise ValueError("regularization slope m must be nonnegative")
    h = np.asarray(h, dtype=float)
    dist = np.asarray(dist, dtype=float)
    n = h.size
    if dist.shape != (n, n):
        raise ValueError("distance matrix shape must match the node count")
    if np.any(np.abs(np.diagonal(dist)) > 0) or not np.allclose(dist, dist.T):
        raise ValueError("distance matrix must be symmetric with zero diagonal")
    rng = np.random.default_rng(0)
    for _ in range(min(50, n * n)):
        i, j, k = rng.integers(0, n, size=3)
        if dist[i, j] > dist[i, k] + dist[k, j] + 1e-12:
            raise ValueError("distance matrix violates the triangle inequality")
    return (h[None, :] + m * dist).min(axis=1)
