import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import REFERENCE_K, rotation_plant
from qsdsynth.hybrid import (HybridState, LyapunovDesign, attractor_membership,
                             attractor_outer_radius, certify_arc, jump_map, lyapunov_value,
                             simulate, upsilon_bound, varpi)
from qsdsynth.linalg import DimensionError, expm, lambda_min
from qsdsynth.plant import PlantSpec, build_closed_loop, quantize, sector_check
from qsdsynth.synthesis import assemble_M, certified_jump_rate


def grid_varpi(a_cl, period, points=10_000):
    taus = np.linspace(0.0, period, points)
    return min(np.linalg.eigvalsh(expm(a_cl * t).T @ expm(a_cl * t))[0] for t in taus)


@pytest.fixture(scope="module")
def design(plant, synthesized):
    return LyapunovDesign.from_plant(plant, synthesized.vars.P, synthesized.sigma)


@pytest.fixture(scope="module")
def arc(plant, synthesized):
    return simulate(plant, synthesized.vars.K, HybridState([10.0, -10.0, -5.0], 0.0), 30.0)


class TestJumpMap:
    def test_origin_fixed(self, plant):
        post = jump_map(plant, REFERENCE_K, HybridState(np.zeros(3), plant.period))
        assert not np.any(post.xi) and post.tau == 0.0

    def test_reference_gain_sample(self, plant):
        post = jump_map(plant, REFERENCE_K, HybridState([10.0, -10.0, -5.0], plant.period))
        np.testing.assert_array_equal(post.xi, [10.0, -10.0, 27.0])

    def test_lattice_value_passes_through(self, plant):
        K = np.array([[1.0, 0.0, 0.0]])
        post = jump_map(plant, K, HybridState([3.0, 1.0, 0.4], plant.period))
        assert post.xi[2] == 3.0

    def test_off_jump_set(self, plant):
        with pytest.raises(ValueError):
            jump_map(plant, REFERENCE_K, HybridState([1.0, 1.0, 1.0], 0.25))


class TestSimulate:
    def test_immediate_first_jump(self, plant):
        arc = simulate(plant, REFERENCE_K, HybridState([1.0, 2.0, 0.0], plant.period), 1.0)
        rows = arc.rows()
        assert rows[0][0] == 0.0 and rows[0][1] == 0
        assert rows[1][0] == 0.0 and rows[1][1] == 1
        assert arc.jumps[0].t == 0.0

    def test_equilibrium(self, plant):
        arc = simulate(plant, REFERENCE_K, HybridState(np.zeros(3), 0.0), 5.0)
        assert all(not np.any(seg.states) for seg in arc.segments)

    @pytest.mark.parametrize("t_max", [0.5, 3.0, 3.2, 30.0])
    def test_jump_times(self, plant, t_max):
        arc = simulate(plant, REFERENCE_K, HybridState([1.0, -1.0, 0.0], 0.0), t_max)
        assert arc.n_jumps == math.floor(t_max / plant.period + 1e-12)
        for rec in arc.jumps:
            assert rec.t == rec.j * plant.period
            assert rec.post.tau == 0.0
            assert rec.post.xi[2] == quantize(rec.post.xi[2:], plant.delta)[0]

    def test_jump_limit(self, plant):
        arc = simulate(plant, REFERENCE_K, HybridState([1.0, -1.0, 0.0], 0.0), 100.0, j_max=3)
        assert arc.n_jumps == 3

    def test_flow_exactness(self, plant, arc):
        a_cl = build_closed_loop(plant).A_cl
        for seg in arc.segments:
            for t, x in zip(seg.times, seg.states):
                np.testing.assert_allclose(x, expm(a_cl * (t - seg.t_start)) @ seg.states[0],
                                           atol=1e-9 * (1 + np.abs(x).max()))

    def test_intermediate_clock(self, plant):
        arc = simulate(plant, REFERENCE_K, HybridState([1.0, 0.0, 0.0], 0.2), 1.0)
        assert arc.jumps[0].t == pytest.approx(0.3)
        assert arc.segments[0].duration == pytest.approx(0.3)

    def test_invalid_start(self, plant):
        with pytest.raises(ValueError):
            simulate(plant, REFERENCE_K, HybridState([1.0, 0.0, 0.0], 0.7), 1.0)
        with pytest.raises(DimensionError):
            simulate(plant, REFERENCE_K, HybridState([1.0, 0.0], 0.0), 1.0)

    def test_against_rk45(self, rng):
        for _ in range(5):
            plant = PlantSpec(rng.uniform(-1.5, 1.5, (2, 2)), rng.uniform(-1, 1, (2, 1)), [0.3], 0.4)
            K = rng.uniform(-1, 1, (1, 3))
            arc = simulate(plant, K, HybridState(rng.uniform(-3, 3, 3), 0.0), 2.0)
            a_cl = build_closed_loop(plant).A_cl
            for seg in arc.segments:
                if seg.duration == 0.0:
                    continue
                sol = solve_ivp(lambda t, x: a_cl @ x, (seg.times[0], seg.times[-1]), seg.states[0],
                                method="RK45", t_eval=seg.times, rtol=1e-11, atol=1e-12)
                np.testing.assert_allclose(sol.y.T, seg.states, atol=1e-6)

    def test_sector_conditions_at_jumps(self, plant, synthesized, arc):
        v = synthesized.vars
        for rec in arc.jumps:
            u = v.K @ rec.pre.xi
            psi_val = rec.post.xi[2:] - u
            h1, h2, _ = sector_check(u, psi_val, np.diag(v.S1), np.diag(v.S2), plant.delta)
            assert h1 and h2


class TestLyapunov:
    def test_origin(self, design):
        assert lyapunov_value(design, HybridState(np.zeros(3), 0.1)) == 0.0

    def test_at_sampling_instant(self, design, rng):
        xi = rng.standard_normal(3)
        value = lyapunov_value(design, HybridState(xi, design.period))
        assert value == pytest.approx(xi @ design.P @ xi * math.exp(-design.sigma * design.period))

    def test_direct_recomputation(self, design, rng):
        xi, tau = rng.standard_normal(3), 0.17
        s = expm(design.A_cl * (design.period - tau))
        ref = math.exp(-design.sigma * tau) * xi @ s.T @ design.P @ s @ xi
        assert lyapunov_value(design, HybridState(xi, tau)) == pytest.approx(ref, rel=1e-12)

    def test_clock_range(self, design):
        with pytest.raises(ValueError):
            lyapunov_value(design, HybridState(np.ones(3), -0.1))


class TestCertifyArc:
    def test_equilibrium(self, plant, synthesized, design):
        arc = simulate(plant, synthesized.vars.K, HybridState(np.zeros(3), 0.0), 3.0)
        assert certify_arc(arc, design, 0.1).passed

    def test_certified_design(self, plant, synthesized, design, arc):
        v = synthesized.vars
        rate = certified_jump_rate(v.P, assemble_M(v, plant), synthesized.sigma, plant.period)
        rep = certify_arc(arc, design, rate)
        assert rep.passed, rep
        assert rep.worst_flow_error <= 1e-7

    def test_corrupted_weight_fails_flow_check(self, plant, synthesized, arc):
        P = synthesized.vars.P.copy()
        P[0, 0] = -P[0, 0]
        bad = LyapunovDesign.from_plant(plant, P, synthesized.sigma)
        rep = certify_arc(arc, bad, 0.0)
        assert not rep.flow_ok

    def test_overclaimed_rate_fails(self, design, arc):
        assert not certify_arc(arc, design, 5.0).jump_decrease_ok

    def test_dimension_mismatch(self, arc):
        other = LyapunovDesign(np.eye(2), 0.1, 0.5, np.zeros((2, 2)))
        with pytest.raises(DimensionError):
            certify_arc(arc, other, 0.1)

    def test_attractor_invariance(self, design, arc):
        inside = False
        for t, j, tau, xi in arc.samples():
            v = lyapunov_value(design, HybridState(xi, tau))
            if inside:
                assert v <= 1.0 + 1e-6
            inside = inside or v <= 1.0
        assert inside


class TestUpsilon:
    def test_inside(self):
        assert upsilon_bound(0.5, 1.0, 2.0) == 0.0

    def test_unit(self):
        assert upsilon_bound(math.e, 1.0, 1.0) == pytest.approx(1.0)

    def test_value(self):
        assert upsilon_bound(100.0, 1.0, 0.5) == pytest.approx(9.2103403719761836)

    @pytest.mark.parametrize("mu, gamma", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_bad_arguments(self, mu, gamma):
        with pytest.raises(ValueError):
            upsilon_bound(2.0, mu, gamma)


class TestVarpi:
    def test_zero_flow(self):
        assert varpi(np.zeros((3, 3)), 0.5) == pytest.approx(1.0)

    def test_rotation_embedding(self):
        a = np.zeros((3, 3))
        a[:2, :2] = [[0.0, 2.0], [-2.0, 0.0]]
        a[1, 2] = 1.0
        assert varpi(a, 1.0) == pytest.approx(grid_varpi(a, 1.0), abs=1e-6)

    def test_rotation_plant(self, plant):
        a_cl = build_closed_loop(plant).A_cl
        w = varpi(a_cl, plant.period)
        assert 0.0 < w <= 1.0
        assert w == pytest.approx(grid_varpi(a_cl, plant.period), abs=1e-6)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            varpi(np.zeros((2, 2)), 1.0, grid_points=1)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_refinement_beats_grid(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.uniform(-2, 2, (3, 3))
        coarse = varpi(a, 0.8, grid_points=20)
        assert coarse <= grid_varpi(a, 0.8, 2000) + 1e-9


class TestAttractor:
    def test_origin_member(self, design):
        for conv in ("sublevel", "printed"):
            assert attractor_membership(design, HybridState(np.zeros(3), 0.3), conv)

    def test_far_state(self, design):
        xi = np.array([1e6, 0.0, 0.0])
        for conv in ("sublevel", "printed"):
            assert not attractor_membership(design, HybridState(xi, 0.0), conv)

    def test_conventions_follow_formulas(self, design, rng):
        xi, tau = rng.standard_normal(3) * 0.5, design.period
        printed = math.exp(-design.sigma * tau) * xi @ expm(design.A_cl * tau).T @ design.P \
            @ expm(design.A_cl * tau) @ xi
        state = HybridState(xi, tau)
        assert attractor_membership(design, state, "printed") == (printed <= 1.0)
        assert attractor_membership(design, state, "sublevel") == (lyapunov_value(design, state) <= 1.0)

    def test_unknown_convention(self, design):
        with pytest.raises(ValueError):
            attractor_membership(design, HybridState(np.zeros(3), 0.0), "other")

    def test_unit_ball(self):
        d = LyapunovDesign(np.eye(2), 0.0, 1.0, np.zeros((2, 2)))
        geo = attractor_outer_radius(d, 1.0)
        assert geo.radius == 1.0
        np.testing.assert_allclose(geo.radii, 1.0)

    def test_scaled_weight(self):
        d = LyapunovDesign(4.0 * np.eye(2), 0.0, 1.0, np.zeros((2, 2)))
        assert attractor_outer_radius(d, 1.0).radius == pytest.approx(0.5)

    def test_rotation_design(self, plant, design):
        w = varpi(design.A_cl, plant.period)
        geo = attractor_outer_radius(design, w)
        assert geo.radius == pytest.approx(1.0 / math.sqrt(w * lambda_min(design.P)))
        assert np.all(geo.radii <= geo.radius + 1e-9)

    def test_boundary_encloses_late_trajectory(self, plant, design, arc):
        geo = attractor_outer_radius(design, varpi(design.A_cl, plant.period), n_angles=720)
        for t, j, tau, xi in arc.samples():
            if t < 20.0:
                continue
            ang = math.atan2(xi[1], xi[0]) % (2 * math.pi)
            k = int(round(ang / (2 * math.pi) * 720)) % 720
            assert math.hypot(xi[0], xi[1]) <= geo.radii[k] * 1.01
