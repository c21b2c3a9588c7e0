import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdsynth.sdp import (Affine, SdpProblem, SolverOptions, VarSpace, block, evaluate,
                          feasibility, solve, strict_margin)


def scalar_space(*names, **bounds):
    s = VarSpace()
    for n in names:
        lo, hi = bounds.get(n, (None, None))
        s.scalar(n, lo, hi)
    return s


class TestVarSpace:
    def test_sizes_and_roundtrip(self, rng):
        s = VarSpace()
        s.sym("P", 3)
        s.diag("S", 2)
        s.rect("K", 1, 3)
        s.scalar("c")
        assert s.size == 6 + 2 + 3 + 1
        value = {"P": (lambda a: a + a.T)(rng.standard_normal((3, 3))),
                 "S": np.diag(rng.standard_normal(2)),
                 "K": rng.standard_normal((1, 3)), "c": 0.7}
        back = s.unpack(s.pack(value))
        for k, v in value.items():
            np.testing.assert_allclose(np.asarray(back[k]).reshape(np.shape(v)), v)

    def test_duplicate_name(self):
        s = VarSpace()
        s.scalar("x")
        with pytest.raises(ValueError):
            s.scalar("x")

    def test_symmetric_variable_is_symmetric(self):
        s = VarSpace()
        s.sym("P", 4)
        assert s.var("P").is_symmetric()


class TestEvaluate:
    def test_constant_only(self):
        s = scalar_space("x")
        e = Affine(s, [[1.0, 2.0], [2.0, 3.0]])
        np.testing.assert_array_equal(evaluate(e, {"x": 5.0}), [[1.0, 2.0], [2.0, 3.0]])

    def test_scaled_identity(self):
        s = scalar_space("x")
        e = s.var("x") * np.eye(2)
        np.testing.assert_array_equal(evaluate(e, {"x": 3.0}), 3.0 * np.eye(2))

    def test_against_naive_summation(self, rng):
        s = VarSpace()
        s.sym("P", 3)
        s.rect("K", 2, 3)
        s.scalar("r")
        P, K, r = s.var("P"), s.var("K"), s.var("r")
        m = rng.standard_normal((3, 3))
        expr = m.T @ P @ m + r * np.eye(3) + (m @ K.T @ np.ones((2, 3))).he()
        x = rng.standard_normal(s.size)
        naive = expr.const.copy()
        for i in range(s.size):
            naive = naive + x[i] * expr.coef[i]
        np.testing.assert_allclose(expr(x), naive, rtol=0, atol=1e-13)
        val = evaluate(expr, x)
        assert np.array_equal(val, val.T)

    def test_block_assembly(self):
        s = scalar_space("x")
        x = s.var("x")
        b = block([[x, None], [np.ones((1, 1)), -x]])
        np.testing.assert_array_equal(b({"x": 2.0}), [[2.0, 0.0], [1.0, -2.0]])

    def test_block_shape_errors(self):
        s = scalar_space("x")
        with pytest.raises(ValueError):
            block([[s.var("x"), np.zeros((2, 2))], [None, None]])

    def test_strict_margin_scaling(self):
        s = scalar_space("x")
        e = Affine(s, 10.0 * np.eye(2))
        assert strict_margin(e) == pytest.approx(1e-7 * 11.0)


class TestSolve:
    def test_min_t_two_by_two(self):
        s = scalar_space("t")
        t = s.var("t")
        prob = SdpProblem(s, t, "min")
        prob.add(block([[t, np.ones((1, 1))], [np.ones((1, 1)), t]]), ">=")
        sol = solve(prob)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-7)
        assert sol.gap <= 1e-7

    def test_max_c_diagonal(self):
        s = scalar_space("c")
        c = s.var("c")
        prob = SdpProblem(s, c, "max")
        prob.add(np.diag([2.0, 5.0]) - c * np.eye(2), ">=")
        sol = solve(prob)
        assert sol.status == "optimal"
        assert sol["c"] == pytest.approx(2.0, abs=1e-7)

    def test_infeasible_constant(self):
        s = scalar_space("x")
        prob = SdpProblem(s)
        prob.add(Affine(s, -np.eye(2)) + 0.0 * s.var("x") * np.eye(2), ">=")
        assert solve(prob).status == "infeasible"

    def test_unbounded(self):
        s = scalar_space("x")
        x = s.var("x")
        prob = SdpProblem(s, x, "max")
        prob.add(x * np.eye(2), ">=")
        assert solve(prob).status == "unbounded"

    def test_bounds_from_blocks(self):
        s = scalar_space("x", x=(-1.0, 2.5))
        prob = SdpProblem(s, s.var("x"), "max")
        prob.add(s.var("x") * np.eye(2) + 10.0 * np.eye(2), ">=")
        sol = solve(prob)
        assert sol.status == "optimal" and sol["x"] == pytest.approx(2.5, abs=1e-7)

    def test_margins_confirm_optimum(self, rng):
        # random feasible LMI: max trace-weighted objective over a bounded set
        s = VarSpace()
        s.sym("X", 3)
        X = s.var("X")
        w = rng.standard_normal((3, 3))
        w = w @ w.T + np.eye(3)
        obj = np.ones((1, 3)) @ (X @ w) @ np.ones((3, 1)) * (1.0 / 9.0)
        prob = SdpProblem(s, obj, "max")
        prob.add(X, ">=", 0.0)
        prob.add(X - 2.0 * np.eye(3), "<=", 0.0)
        sol = solve(prob)
        assert sol.status == "optimal"
        for con in prob.all_constraints():
            assert con.slack(sol.x) >= -1e-7

    def test_objective_scaling_invariance(self):
        s = VarSpace()
        s.scalar("a")
        s.scalar("b")
        a, b = s.var("a"), s.var("b")
        lmi = block([[np.eye(1) * 2.0 - a, b], [b, np.eye(1) * 1.0 - a]])
        xs = []
        for scale in (1.0, 37.0):
            prob = SdpProblem(s, (a + 0.3 * b) * scale, "max")
            prob.add(lmi, ">=")
            sol = solve(prob)
            assert sol.status == "optimal"
            xs.append(sol.x)
        # a gap of 1e-8 on a curved boundary pins the maximizer to about sqrt(1e-8)
        np.testing.assert_allclose(xs[0], xs[1], atol=1e-4)

    def test_weak_duality_gap_nonnegative(self):
        s = scalar_space("t")
        t = s.var("t")
        prob = SdpProblem(s, t, "min")
        prob.add(block([[t, 0.5 * np.ones((1, 1))], [0.5 * np.ones((1, 1)), t - 1.0]]), ">=")
        sol = solve(prob)
        assert sol.status == "optimal"
        assert sol.info["pobj"] - sol.info["dobj"] >= -1e-8

    def test_max_iterations_reported(self):
        s = scalar_space("t")
        t = s.var("t")
        prob = SdpProblem(s, t, "min")
        prob.add(block([[t, np.ones((1, 1))], [np.ones((1, 1)), t]]), ">=")
        sol = solve(prob, SolverOptions(max_iter=2))
        assert sol.status == "max-iterations"

    def test_deterministic(self):
        s = scalar_space("c")
        prob = SdpProblem(s, s.var("c"), "max")
        prob.add(np.diag([2.0, 5.0]) - s.var("c") * np.eye(2), ">=")
        assert np.array_equal(solve(prob).x, solve(prob).x)

    def test_rejects_empty_problem(self):
        with pytest.raises(ValueError):
            solve(SdpProblem(scalar_space("x")))


class TestFeasibility:
    def test_free_scalar(self):
        s = scalar_space("x")
        x = s.var("x")
        prob = SdpProblem(s)
        prob.add(x * np.eye(1), "<=", strict_margin(x * np.eye(1)))
        sol = feasibility(prob)
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(1.0, abs=1e-6)
        assert sol["x"] < 0

    def test_empty_region(self):
        s = scalar_space("x")
        x = s.var("x") * np.eye(1)
        prob = SdpProblem(s)
        prob.add(x - 1.0, ">=")
        prob.add(x, "<=")
        sol = feasibility(prob)
        assert sol.status == "infeasible"
        assert sol.objective < 0

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
    def test_interval_feasibility(self, lo, width):
        s = scalar_space("x")
        x = s.var("x") * np.eye(1)
        prob = SdpProblem(s)
        prob.add(x - lo, ">=")
        prob.add(x - (lo + width), "<=")
        sol = feasibility(prob)
        assert sol.status == "optimal"
        assert lo - 1e-7 <= sol["x"] <= lo + width + 1e-7
