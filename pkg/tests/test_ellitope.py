import json

import numpy as np
import pytest

from ellest.ellitope import (Ellitope, LqBall, UnitBox, make_block_weighted,
                             make_euclidean_ball, make_lp_ball)


class TestSupport:
    def test_box_positive(self):
        assert UnitBox(2).support(np.array([1.0, 2.0])) == 3.0

    def test_box_negative_coordinate_ignored(self):
        assert UnitBox(2).support(np.array([-1.0, 2.0])) == 2.0

    def test_lq_ball_dual_norm_vs_grid(self):
        # maximize g.t over the quarter disc by grid search
        g = np.array([3.0, 4.0])
        val = LqBall(2, 2.0).support(g)
        assert val == pytest.approx(5.0, abs=1e-12)
        ts = np.linspace(0, 1, 801)
        T1, T2 = np.meshgrid(ts, ts)
        mask = T1 ** 2 + T2 ** 2 <= 1.0
        brute = (g[0] * T1 + g[1] * T2)[mask].max()
        assert brute <= val + 1e-9
        assert brute >= val - 1e-2

    def test_lq_ball_q1_is_max(self):
        assert LqBall(3, 1.0).support(np.array([-1.0, 0.5, 0.2])) == 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            UnitBox(2).support(np.ones(3))

    def test_positive_homogeneity(self, rng):
        for params in (UnitBox(4), LqBall(4, 2.0), LqBall(4, 1.5)):
            for _ in range(50):
                g = rng.standard_normal(4)
                assert params.support(2.0 * g) == pytest.approx(
                    2.0 * params.support(g), rel=1e-12)

    def test_monotone_on_nonnegative(self, rng):
        for params in (UnitBox(4), LqBall(4, 2.0)):
            for _ in range(50):
                g = np.abs(rng.standard_normal(4))
                h = g + np.abs(rng.standard_normal(4))
                assert params.support(h) >= params.support(g) - 1e-12


class TestMember:
    def test_unit_ball(self, rng):
        e = Ellitope(forms=[np.eye(3)], params=UnitBox(1))
        x = rng.standard_normal(3)
        assert e.member(0.9 * x / np.linalg.norm(x))
        assert not e.member(1.1 * x / np.linalg.norm(x))

    def test_block_instance_unit_vector(self):
        e = make_block_weighted(4, 2, 1.0)
        x = np.zeros(4)
        x[0] = 1.0
        assert e.quad_values(x) == pytest.approx([1.0, 0.0])
        assert e.member(x)

    def test_symmetry(self, rng):
        e = make_block_weighted(8, 2, 1.0)
        for _ in range(100):
            x = rng.standard_normal(8) * 0.5
            assert e.member(x) == e.member(-x)

    def test_l2_ball_equivalence(self, rng):
        e = make_lp_ball(5, 2.0)
        for _ in range(1000):
            x = rng.standard_normal(5) * rng.uniform(0, 0.4)
            assert e.member(x) == (np.linalg.norm(x) <= 1.0 + 1e-9)


class TestConstructors:
    def test_block_weighted_small(self):
        e = make_block_weighted(4, 2, 1.0)
        np.testing.assert_allclose(e.form(0), np.diag([1.0, 2.0, 0.0, 0.0]))
        np.testing.assert_allclose(e.form(1), np.diag([0.0, 0.0, 3.0, 4.0]))

    def test_block_weighted_unit_ball(self):
        e = make_block_weighted(2, 1, 0.0)
        np.testing.assert_allclose(e.form(0), np.eye(2))

    def test_block_weighted_experiment_shape(self):
        e = make_block_weighted(64, 8, 1.0)
        total = e.weighted_sum(np.ones(8))
        np.testing.assert_allclose(np.diag(total), np.arange(1.0, 65.0))
        assert np.linalg.eigvalsh(total)[0] > 0

    def test_block_weighted_bad_K(self):
        with pytest.raises(ValueError):
            make_block_weighted(5, 2, 1.0)

    def test_lp_ball_p2(self):
        e = make_lp_ball(2, 2.0)
        assert e.member(np.array([0.6, 0.8]))
        assert not e.member(np.array([0.7, 0.8]))

    def test_lp_ball_inf(self):
        e = make_lp_ball(2, np.inf)
        assert isinstance(e.params, UnitBox)
        assert e.member(np.array([1.0, 1.0]))

    def test_lp_ball_p4_boundary(self):
        e = make_lp_ball(3, 4.0)
        assert isinstance(e.params, LqBall) and e.params.q == 2.0
        assert e.member(np.array([1.0, 0.0, 0.0]))

    def test_lp_ball_rejects_small_p(self):
        with pytest.raises(ValueError):
            make_lp_ball(3, 1.5)

    def test_euclidean_ball_single_form(self):
        e = make_euclidean_ball(4)
        assert e.nforms == 1
        assert e.member(np.full(4, 0.49))


class TestValidation:
    def test_rejects_indefinite_form(self):
        with pytest.raises(ValueError):
            Ellitope(forms=[np.diag([1.0, -0.5])], params=UnitBox(1))

    def test_rejects_degenerate_sum(self):
        with pytest.raises(ValueError):
            Ellitope(diag_forms=np.array([[1.0, 0.0]]), params=UnitBox(1))

    def test_param_count_mismatch(self):
        with pytest.raises(ValueError):
            Ellitope(forms=[np.eye(2)], params=UnitBox(2))


class TestSerialization:
    def test_roundtrip_diag(self):
        e = make_block_weighted(6, 3, 1.0)
        d = json.loads(json.dumps(e.to_dict()))
        e2 = Ellitope.from_dict(d)
        assert e2.is_diagonal
        np.testing.assert_allclose(e2._diag, e._diag)
        assert e2.params.kind == "unit_box"

    def test_roundtrip_dense(self, rng):
        G = rng.standard_normal((3, 3))
        e = Ellitope(forms=[G @ G.T + np.eye(3)], params=LqBall(1, 2.0))
        e2 = Ellitope.from_dict(json.loads(json.dumps(e.to_dict())))
        np.testing.assert_allclose(e2.form(0), e.form(0))
        assert e2.params.q == 2.0


def test_norm_bound(rng):
    e = make_block_weighted(8, 2, 1.0)
    bound = e.norm_bound()
    for _ in range(200):
        u = rng.standard_normal(8)
        x = u / np.sqrt(e.quad_values(u).max())
        assert np.linalg.norm(x) <= bound + 1e-9
