import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socialpec.diffcore import Tensor
from socialpec.pec import (
    LOG_EPS, MotionPatternBank, export_bank_csv, init_bank, pec, pec_forward, pec_oracle, read_bank_csv,
)

from helpers import elementwise_check

PHI = np.array([[10.0, 1.0], [20.0, 1.0]])
P0 = np.array([[10.0, 0.0], [20.0, 0.0]])
P1 = np.array([[50.0, 0.0], [60.0, 0.0]])


def unit_bank(*patterns):
    n = len(patterns)
    return MotionPatternBank(np.stack(patterns), np.ones(n), np.zeros(n))


def dot_conv(traj, pattern):
    """Conventional convolution response: sum of elementwise products."""
    return float(np.sum(traj * pattern))


class TestExamples:
    def test_similar_pattern_distance(self):
        psi = pec_forward(PHI, unit_bank(P0)).data
        assert psi.shape == (1, 1)
        assert psi[0, 0] == pytest.approx(math.log(2.0), abs=1e-8)
        assert psi[0, 0] == pytest.approx(0.6931, abs=1e-4)

    def test_far_pattern_distance(self):
        psi = pec_forward(PHI, unit_bank(P1)).data
        assert psi[0, 0] == pytest.approx(math.log(2 * math.sqrt(1601) + LOG_EPS), abs=1e-12)
        assert psi[0, 0] == pytest.approx(4.3824, abs=1e-4)

    def test_conv_ranks_the_wrong_pattern(self):
        assert dot_conv(PHI, P0) == 500.0
        assert dot_conv(PHI, P1) == 1700.0
        psi = pec_forward(PHI, unit_bank(P0, P1)).data[0]
        # with unit scale psi is the log distance: p0 closer
        assert psi[0] < psi[1]

    def test_exact_match_is_finite(self):
        psi = pec_forward(P0, unit_bank(P0)).data
        assert psi[0, 0] == pytest.approx(math.log(LOG_EPS))
        assert np.isfinite(psi).all()

    def test_paper_shape(self, rng):
        bank = init_bank(100, 2, rng)
        assert pec_forward(rng.standard_normal((8, 2)), bank).shape == (7, 100)

    def test_too_short(self, rng):
        with pytest.raises(ValueError, match="trajectory shorter than pattern length"):
            pec_forward(np.zeros((2, 2)), init_bank(3, 3, rng))


class TestOracle:
    def test_random_pairs_agree(self, rng):
        for _ in range(20):
            bank = MotionPatternBank(rng.uniform(-5, 5, (100, 2, 2)), rng.normal(size=100), rng.normal(size=100))
            traj = rng.uniform(-5, 5, (8, 2))
            assert np.max(np.abs(pec_forward(traj, bank).data - pec_oracle(traj, bank))) < 1e-10

    def test_longer_patterns_agree(self, rng):
        bank = MotionPatternBank(rng.normal(size=(7, 4, 2)), rng.normal(size=7), rng.normal(size=7))
        traj = rng.normal(size=(9, 2))
        np.testing.assert_allclose(pec_forward(traj, bank).data, pec_oracle(traj, bank), atol=1e-10)

    def test_batched_equals_per_trajectory(self, rng):
        bank = init_bank(10, 2, rng)
        trajs = rng.normal(size=(3, 4, 8, 2))
        batched = pec_forward(trajs, bank).data
        for idx in np.ndindex(3, 4):
            np.testing.assert_array_equal(batched[idx], pec_forward(trajs[idx], bank).data)

    def test_zero_scale_returns_bias(self, rng):
        b = rng.normal(size=6)
        bank = MotionPatternBank(rng.normal(size=(6, 2, 2)), np.zeros(6), b)
        psi = pec_forward(rng.normal(size=(8, 2)), bank).data
        np.testing.assert_array_equal(psi, np.broadcast_to(b, psi.shape))

    def test_translation_invariance(self, rng):
        bank = init_bank(20, 2, rng)
        traj = rng.normal(size=(8, 2))
        shift = np.array([3.5, -7.25])
        moved = MotionPatternBank(bank.patterns + shift, bank.scale, bank.bias)
        np.testing.assert_allclose(pec_forward(traj + shift, moved).data, pec_forward(traj, bank).data, atol=1e-12)


class TestGradients:
    def test_all_inputs_match_finite_difference(self, rng):
        for _ in range(10):
            traj = rng.uniform(-3, 3, (6, 2))
            P = rng.uniform(-3, 3, (4, 2, 2))
            err = elementwise_check(lambda x, p, s, b: pec(x, p, s, b),
                                    [traj, P, rng.normal(size=4), rng.normal(size=4)], rng)
            assert err < 1e-4

    def test_zero_distance_gradient_is_finite(self):
        P = Tensor(P0[None].copy(), requires_grad=True)
        x = Tensor(P0.copy(), requires_grad=True)
        pec(x, P, Tensor(np.ones(1)), Tensor(np.zeros(1))).backward(np.ones((1, 1)))
        assert np.isfinite(P.grad).all() and np.isfinite(x.grad).all()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 0.95))
def test_closer_segment_scores_higher_with_negative_scale(seed, frac):
    rng = np.random.default_rng(seed)
    bank = MotionPatternBank(rng.uniform(-3, 3, (1, 2, 2)), -rng.uniform(0.1, 2.0, 1), rng.normal(size=1))
    seg = rng.uniform(-3, 3, (2, 2))
    if np.linalg.norm(seg - bank.patterns[0], axis=-1).sum() < 1e-3:
        return
    closer = bank.patterns[0] + frac * (seg - bank.patterns[0])
    assert pec_forward(closer, bank).data[0, 0] > pec_forward(seg, bank).data[0, 0]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 12), st.integers(1, 6))
def test_shape_contract(l, extra, n):
    rng = np.random.default_rng(l * 100 + extra)
    t_h = l + extra - 1
    assert pec_forward(rng.normal(size=(t_h, 2)), init_bank(n, l, rng)).shape == (t_h - l + 1, n)


class TestInitBank:
    def test_radial_bound(self):
        bank = init_bank(100, 2, np.random.default_rng(0), "radial")
        assert bank.patterns.shape == (100, 2, 2)
        assert np.linalg.norm(bank.patterns, axis=-1).max() <= 5.2
        np.testing.assert_array_equal(bank.scale, -1.0)
        np.testing.assert_array_equal(bank.bias, 0.0)

    def test_radial_steps_are_human_sized(self):
        bank = init_bank(200, 3, np.random.default_rng(1))
        steps = np.linalg.norm(np.diff(bank.patterns, axis=1), axis=-1)
        assert steps.min() >= 0.1 and steps.max() <= 0.6

    @pytest.mark.parametrize("scheme", ["radial", "uniform-box"])
    def test_seeded(self, scheme):
        a = init_bank(100, 2, np.random.default_rng(0), scheme)
        b = init_bank(100, 2, np.random.default_rng(0), scheme)
        c = init_bank(100, 2, np.random.default_rng(1), scheme)
        assert a.patterns.tobytes() == b.patterns.tobytes()
        assert not np.array_equal(a.patterns, c.patterns)

    def test_uniform_box_bounds(self):
        bank = init_bank(100, 2, np.random.default_rng(0), "uniform-box")
        assert np.abs(bank.patterns).max() <= 4.0

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="unknown init scheme"):
            init_bank(3, 2, np.random.default_rng(0), "spiral")


def test_csv_round_trip(tmp_path, rng):
    bank = MotionPatternBank(rng.normal(size=(5, 2, 2)), rng.normal(size=5), rng.normal(size=5))
    path = tmp_path / "patterns.csv"
    export_bank_csv(bank, path)
    header = path.read_text().splitlines()[0]
    assert header == "pattern_id,step_index,x,y,lambda,bias"
    back = read_bank_csv(path)
    np.testing.assert_array_equal(back.patterns, bank.patterns)
    np.testing.assert_array_equal(back.scale, bank.scale)
