"""Tests for the linearization and the condensed receding-horizon QP."""

import numpy as np
import pytest

from stormdp.linearize import (
    LinearModel,
    OperatingPoint,
    condense,
    condensed_cost,
    linearize_at,
    predict,
    solve_mpc_qp,
)
from stormdp.plant import PlantParams
from stormdp.smooth import SmoothParams, f_eps_rhs

P = PlantParams()
SP = SmoothParams(plant=P, eps=0.5)


def random_operating_point(rng, avoid_sqrt_kinks=True):
    """Valid random operating point; optionally steer clear of the two
    points where the smooth sqrt's curvature blows up (central
    differences are ill-conditioned there, the derivative still exists)."""
    while True:
        x1 = rng.uniform(0.0, P.cap1)
        if not avoid_sqrt_kinks:
            break
        y = x1 / P.a1 - P.z_o
        if abs(y) > 2e-2 and abs(y - SP.eps) > 2e-2:
            break
    return OperatingPoint(x1=x1, x2=rng.uniform(0.0, P.cap2),
                          u=rng.uniform(0.01, 0.99),
                          w_r=rng.uniform(0.0, 1e-4), w_e=rng.uniform(0.0, 1e-4))


def fd_jacobians(op, sp, hx=1e-3, hu=1e-6, hw=1e-9):
    """Central-difference Jacobians of the smooth vector field at op."""
    def f(x1, x2, u, wr, we):
        f1, f2 = f_eps_rhs(x1, x2, u, wr, we, sp)
        return np.array([float(f1), float(f2)])

    base = (op.x1, op.x2, op.u, op.w_r, op.w_e)
    jx = np.empty((2, 2))
    for j, h in ((0, hx), (1, hx)):
        hi = list(base)
        lo = list(base)
        hi[j] += h
        lo[j] -= h
        jx[:, j] = (f(*hi) - f(*lo)) / (2 * h)
    hi = list(base)
    lo = list(base)
    hi[2] = min(op.u + hu, 1.0)
    lo[2] = max(op.u - hu, 0.0)
    ju = ((f(*hi) - f(*lo)) / (hi[2] - lo[2])).reshape(2, 1)
    jw = np.empty((2, 2))
    for k, j in enumerate((3, 4)):
        hi = list(base)
        lo = list(base)
        hi[j] += hw
        lo[j] = max(lo[j] - hw, 0.0)
        jw[:, k] = (f(*hi) - f(*lo)) / (hi[j] - lo[j])
    return jx, ju, jw


class TestLinearize:
    def test_structure(self):
        lm = linearize_at(OperatingPoint(100.0, 1.0, 0.5, 1e-5, 1e-5), SP)
        assert lm.A.shape == (2, 2) and lm.B.shape == (2, 1)
        assert lm.C.shape == (2, 2) and lm.b.shape == (2,)
        # the pump enters tank 1 negatively and tank 2 positively
        assert lm.B[0, 0] == pytest.approx(-lm.B[1, 0], rel=1e-12)
        # disturbances enter linearly
        assert np.allclose(lm.C, P.tau * np.array([[P.a_in, 0.0], [P.a2, -1.0]]))
        f = np.array(f_eps_rhs(100.0, 1.0, 0.5, 1e-5, 1e-5, SP), dtype=float)
        assert np.allclose(lm.b, P.tau * f.reshape(-1))

    def test_jacobians_match_finite_differences(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            op = random_operating_point(rng)
            lm = linearize_at(op, SP)
            jx, ju, jw = fd_jacobians(op, SP)
            A_fd = np.eye(2) + P.tau * jx
            assert np.all(np.abs(lm.A - A_fd) <= 1e-5 * (1.0 + np.abs(lm.A)))
            assert np.all(np.abs(lm.B - P.tau * ju) <= 1e-5 * (1.0 + np.abs(lm.B)))
            assert np.all(np.abs(lm.C - P.tau * jw) <= 1e-5 * (1.0 + np.abs(lm.C)))

    def test_A_close_to_identity_at_unit_step(self):
        # |A - I| <= tau * (Lipschitz bound of the smooth field): at
        # tau = 1 s the off-identity entries are tiny for this plant
        rng = np.random.default_rng(12)
        for _ in range(20):
            lm = linearize_at(random_operating_point(rng), SP)
            assert np.all(np.abs(lm.A - np.eye(2)) <= P.tau * 1.0)
            assert np.all(np.isfinite(lm.A))


def random_linear_model(rng):
    op = random_operating_point(rng)
    return linearize_at(op, SP)


def synthetic_model(A, B, C, b, u_bar=0.0):
    op = OperatingPoint(x1=0.0, x2=0.0, u=u_bar, w_r=0.0, w_e=0.0)
    return LinearModel(A=np.asarray(A, float), B=np.asarray(B, float),
                       C=np.asarray(C, float), b=np.asarray(b, float),
                       op=op, tau=1.0)


class TestCondense:
    def test_m1_blocks(self):
        lm = synthetic_model([[0.9, 0.1], [0.0, 0.8]], [[0.2], [0.3]],
                             [[1.0, 0.0], [0.0, -1.0]], [0.5, -0.5])
        ch = condense(lm, 1, [0.0, 0.0], [[0.0, 0.0]], 1e-3, P)
        assert np.allclose(ch.A_stack, lm.A)
        assert np.allclose(ch.B_stack, lm.B)
        assert np.allclose(ch.d_stack, lm.b)

    def test_identity_dynamics_blocks(self):
        lm = synthetic_model(np.eye(2), [[0.2], [0.3]], np.zeros((2, 2)),
                             [0.0, 0.0])
        ch = condense(lm, 3, [0.0, 0.0], np.zeros((3, 2)), 1e-3, P)
        for k in range(3):
            assert np.allclose(ch.A_stack[2 * k:2 * k + 2], np.eye(2))
            for j in range(k + 1):
                assert np.allclose(ch.B_stack[2 * k:2 * k + 2, j], lm.B[:, 0])

    def test_block_triangular(self):
        rng = np.random.default_rng(13)
        lm = random_linear_model(rng)
        M = 5
        ch = condense(lm, M, rng.normal(size=2), rng.normal(size=(M, 2)),
                      1e-3, P)
        for k in range(M):
            assert np.allclose(ch.B_stack[2 * k:2 * k + 2, k + 1:], 0.0)
        assert np.allclose(ch.R, 1e-3 * np.eye(M))

    def test_prediction_matches_forward_recursion(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            lm = random_linear_model(rng)
            M = int(rng.integers(1, 8))
            y0 = rng.normal(size=2)
            w_dev = rng.normal(size=(M, 2)) * 1e-4
            U = rng.uniform(0.0, 1.0, size=M)
            ch = condense(lm, M, y0, w_dev, 1e-3, P)
            Y = predict(ch, U)
            d = lm.b - lm.B[:, 0] * lm.op.u
            x = y0.copy()
            for k in range(M):
                x = lm.A @ x + lm.B[:, 0] * U[k] + lm.C @ w_dev[k] + d
                assert np.all(np.abs(Y[2 * k:2 * k + 2] - x) <= 1e-12
                              * (1.0 + np.abs(x)))

    def test_rejects_bad_horizon_and_weight(self):
        lm = synthetic_model(np.eye(2), [[0.1], [0.1]], np.zeros((2, 2)),
                             [0.0, 0.0])
        with pytest.raises(ValueError):
            condense(lm, 0, [0, 0], np.zeros((0, 2)), 1e-3, P)
        with pytest.raises(ValueError):
            condense(lm, 65, [0, 0], np.zeros((65, 2)), 1e-3, P)
        with pytest.raises(ValueError):
            condense(lm, 2, [0, 0], np.zeros((2, 2)), 0.0, P)


class TestSolveQp:
    def _random_condensed(self, rng, M):
        lm = random_linear_model(rng)
        return condense(lm, M, rng.normal(size=2), rng.normal(size=(M, 2)) * 1e-4,
                        float(rng.uniform(1e-4, 1.0)), P)

    def test_gradient_zero_at_unclamped_solution(self):
        rng = np.random.default_rng(15)
        for M in (1, 4, 10):
            for _ in range(10):
                ch = self._random_condensed(rng, M)
                sol = solve_mpc_qp(ch)
                h = 1e-6
                grad = np.empty(M)
                for j in range(M):
                    e = np.zeros(M)
                    e[j] = h
                    grad[j] = (condensed_cost(ch, sol.u_free + e)
                               - condensed_cost(ch, sol.u_free - e)) / (2 * h)
                scale = 1.0 + abs(condensed_cost(ch, sol.u_free)) \
                    + float(np.linalg.norm(sol.u_free))
                assert np.linalg.norm(grad) <= 1e-7 * scale

    def test_local_minimality(self):
        rng = np.random.default_rng(16)
        ch = self._random_condensed(rng, 4)
        sol = solve_mpc_qp(ch)
        j_star = condensed_cost(ch, sol.u_free)
        for _ in range(100):
            delta = rng.normal(size=4)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert j_star <= condensed_cost(ch, sol.u_free + delta) + 1e-15

    def test_huge_control_weight_zeroes_control(self):
        rng = np.random.default_rng(17)
        lm = random_linear_model(rng)
        ch = condense(lm, 4, rng.normal(size=2), np.zeros((4, 2)), 1e9, P)
        sol = solve_mpc_qp(ch)
        assert np.max(np.abs(sol.u_free)) <= 1e-6

    def test_on_target_zero_everything_gives_zero_control(self):
        lm = synthetic_model(np.eye(2), [[0.2], [0.3]], np.zeros((2, 2)),
                             [0.0, 0.0])
        lm2 = LinearModel(A=lm.A, B=lm.B, C=lm.C, b=lm.b,
                          op=OperatingPoint(0.0, P.x2_target, 0.0, 0.0, 0.0),
                          tau=1.0)
        ch = condense(lm2, 4, [0.0, 0.0], np.zeros((4, 2)), 1e-3, P)
        sol = solve_mpc_qp(ch)
        assert np.allclose(sol.u, 0.0, atol=1e-12)
        assert not sol.clamped

    def test_clamping(self):
        rng = np.random.default_rng(18)
        for _ in range(50):
            ch = self._random_condensed(rng, 3)
            sol = solve_mpc_qp(ch)
            assert np.all(sol.u >= 0.0) and np.all(sol.u <= 1.0)
            assert sol.clamped == bool(np.any(sol.u != sol.u_free))
