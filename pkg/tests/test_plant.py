import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdsynth.linalg import DimensionError, discretize
from qsdsynth.plant import (PlantSpec, build_closed_loop, check_stabilizable, kras_selections,
                            on_lattice, psi, psi_kras, quantize, sector_check)


class TestQuantizer:
    @pytest.mark.parametrize("u, q", [(1.7, 1.0), (-1.7, -1.0), (0.999, 0.0), (1.0, 1.0), (0.0, 0.0)])
    def test_unit_step(self, u, q):
        assert quantize(u, 1.0) == q

    @pytest.mark.parametrize("u, e", [(1.7, -0.7), (-1.7, 0.7), (1.0, 0.0)])
    def test_psi(self, u, e):
        assert psi(u, 1.0) == pytest.approx(e, abs=1e-15)

    def test_per_channel_steps(self):
        np.testing.assert_allclose(quantize([1.7, 1.7], [1.0, 0.5]), [1.0, 1.5])

    def test_nonpositive_step_rejected(self):
        with pytest.raises(ValueError):
            quantize(1.0, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-1e3, 1e3), st.floats(0.01, 10.0))
    def test_lattice_and_error_range(self, u, d):
        q = float(quantize(u, d))
        assert q - u == float(psi(u, d))
        k = q / d
        assert abs(k - round(k)) <= 1e-9 * max(1.0, abs(k))
        e = float(psi(u, d))
        if u >= 0:
            assert -d < e <= 0.0 or on_lattice(u, d)
        else:
            assert 0.0 <= e < d or on_lattice(u, d)


class TestKrasovskii:
    def test_continuity_point(self):
        assert psi_kras(0.5, 1.0) == [(-0.5,)]

    def test_positive_jump(self):
        assert psi_kras(1.0, 1.0) == [(-1.0, 0.0)]

    def test_negative_jump(self):
        assert psi_kras(-1.0, 1.0) == [(0.0, 1.0)]

    def test_zero_is_continuity(self):
        assert psi_kras(0.0, 1.0) == [(0.0,)]

    def test_one_sided_limits_oracle(self):
        # the two limits of psi at u = k delta from either side
        for u in (3.0, -2.0, 0.5 * 7):
            d = 0.5
            eps = 1e-9
            limits = sorted({round(float(psi(u - eps, d)), 6), round(float(psi(u + eps, d)), 6)})
            got = sorted(round(v, 6) for v in psi_kras(u, d)[0])
            assert got == limits

    def test_selections(self):
        sel = list(kras_selections([1.0, 0.3], [1.0, 1.0]))
        assert len(sel) == 2
        np.testing.assert_allclose(sorted(s[0] for s in sel), [-1.0, 0.0])


class TestSector:
    def test_interior(self):
        h1, h2, (r1, r2) = sector_check(1.7, -0.7, 1.0, 1.0, 1.0)
        assert h1 and h2
        assert r1 == pytest.approx(-0.51)
        assert r2 == pytest.approx(-0.7)

    def test_boundary(self):
        h1, h2, (r1, r2) = sector_check(1.0, -1.0, 1.0, 1.0, 1.0)
        assert h1 and h2 and r1 == 0.0 and r2 == 0.0

    def test_origin(self):
        h1, h2, (r1, r2) = sector_check(0.0, 0.0, 2.0, 1.0, 1.5)
        assert h1 and h2 and r1 == pytest.approx(-4.5) and r2 == 0.0

    @pytest.mark.parametrize("s1", [[[1.0, 0.5], [0.5, 1.0]], [-1.0, 1.0], [0.0, 1.0]])
    def test_bad_multiplier(self, s1):
        with pytest.raises(ValueError):
            sector_check([0.0, 0.0], [0.0, 0.0], s1, [1.0, 1.0], [1.0, 1.0])


class TestClosedLoop:
    def test_rotation_plant(self):
        cl = build_closed_loop(PlantSpec([[0, 1], [-1, 0]], [[0], [1]], [1.0], 0.5))
        np.testing.assert_array_equal(cl.A_cl, [[0, 1, 0], [-1, 0, 1], [0, 0, 0]])
        np.testing.assert_array_equal(cl.G_cl, np.diag([1.0, 1.0, 0.0]))
        np.testing.assert_array_equal(cl.J_cl, [[0], [0], [1]])

    def test_scalar(self):
        cl = build_closed_loop(PlantSpec([[-2.0]], [[3.0]], [0.1], 1.0))
        np.testing.assert_array_equal(cl.A_cl, [[-2.0, 3.0], [0.0, 0.0]])

    @pytest.mark.parametrize("n_p, n_u", [(1, 1), (2, 3), (4, 2)])
    def test_selector_orthogonality(self, n_p, n_u):
        cl = build_closed_loop(PlantSpec(np.zeros((n_p, n_p)), np.ones((n_p, n_u)), np.ones(n_u), 1.0))
        assert not np.any(cl.G_cl @ cl.J_cl)

    def test_validation(self):
        with pytest.raises(DimensionError):
            PlantSpec(np.eye(2), np.ones((3, 1)), [1.0], 1.0)
        with pytest.raises(DimensionError):
            PlantSpec(np.eye(2), np.ones((2, 1)), [1.0, 1.0], 1.0)
        with pytest.raises(ValueError):
            PlantSpec(np.eye(2), np.ones((2, 1)), [0.0], 1.0)
        with pytest.raises(ValueError):
            PlantSpec(np.eye(2), np.ones((2, 1)), [1.0], 0.0)


class TestStabilizable:
    def test_rotation_pair(self):
        a_d, b_d = discretize([[0, 1], [-1, 0]], [[0], [1]], 0.5)
        ctrb = np.hstack([b_d, a_d @ b_d])
        assert np.linalg.matrix_rank(ctrb) == 2
        assert check_stabilizable(a_d, b_d)

    def test_uncontrollable_marginal(self):
        assert not check_stabilizable(np.eye(2), np.zeros((2, 1)))

    def test_schur_stable_open_loop(self):
        assert check_stabilizable(np.diag([0.5, 0.5]), np.zeros((2, 1)))

    def test_complex_unstable_mode(self):
        a = 1.2 * np.array([[np.cos(1.0), -np.sin(1.0)], [np.sin(1.0), np.cos(1.0)]])
        assert not check_stabilizable(np.block([[a, np.zeros((2, 1))], [np.zeros((1, 2)), 0.3]]),
                                      np.array([[0.0], [0.0], [1.0]]))
        assert check_stabilizable(a, np.array([[1.0], [0.0]]))
