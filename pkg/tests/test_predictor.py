import numpy as np
import pytest

from socialpec.diffcore import ParamStore, Tensor
from socialpec.evalkit import linear_baseline
from socialpec.head import build_gmm
from socialpec.predictor import (
    EMPTY_POOL, LocPredictor, ModelConfig, check_params, context_pool, ego_inputs, init_params, loc_predict,
    traj_predict,
)
from socialpec.trajkit import Scene, convert, convert_back

from helpers import LastStepStub, collapse_covariance

CFG = ModelConfig()


@pytest.fixture(scope="module")
def predictor():
    return LocPredictor(CFG, init_params(CFG, np.random.default_rng(7)))


def walkers(rng, M, T=8):
    start = rng.uniform(-3, 3, (M, 2))
    vel = rng.uniform(-0.6, 0.6, (M, 2))
    return start[:, None] + np.arange(T)[None, :, None] * vel[:, None] + rng.normal(0, 0.02, (M, T, 2))


class TestContextPool:
    def test_elementwise_max(self):
        a = np.array([[0.1, -0.5], [0.3, 0.2]])
        b = np.array([[0.4, -0.9], [-0.3, 0.25]])
        np.testing.assert_array_equal(context_pool([a, b]).data, [[0.4, -0.5], [0.3, 0.25]])

    def test_empty_context_uses_lower_bound(self):
        np.testing.assert_array_equal(context_pool([], shape=(160, 3)).data, np.full((160, 3), EMPTY_POOL))

    def test_empty_needs_shape(self):
        with pytest.raises(ValueError):
            context_pool([])

    def test_mixed_shapes_rejected(self):
        with pytest.raises(ValueError, match="context_pool"):
            context_pool([np.zeros((2, 3)), np.zeros((3, 2))])


class TestInvariance:
    def test_context_permutation_is_bit_exact(self, predictor, rng):
        hist = walkers(rng, 5)
        tgt, ctx, mask, _, _ = ego_inputs(hist, [0])
        base = predictor.raw(tgt, ctx, mask).data
        for _ in range(5):
            perm = rng.permutation(4)
            assert predictor.raw(tgt, ctx[:, perm], mask).data.tobytes() == base.tobytes()

    def test_duplicate_context_is_idempotent(self, predictor, rng):
        hist = walkers(rng, 3)
        tgt, ctx, mask, _, _ = ego_inputs(hist, [0])
        dup = np.concatenate([ctx, ctx[:, :1]], axis=1)
        out = predictor.raw(tgt, dup, np.ones((1, 3), dtype=bool)).data
        assert out.tobytes() == predictor.raw(tgt, ctx, mask).data.tobytes()

    def test_masked_slots_are_ignored(self, predictor, rng):
        hist = walkers(rng, 3)
        tgt, ctx, mask, _, _ = ego_inputs(hist, [1])
        padded = np.concatenate([ctx, rng.normal(size=ctx.shape)], axis=1)
        pmask = np.concatenate([mask, np.zeros_like(mask)], axis=1)
        assert predictor.raw(tgt, padded, pmask).data.tobytes() == predictor.raw(tgt, ctx, mask).data.tobytes()


class TestLocPredict:
    def test_single_pedestrian(self, predictor, rng):
        scene, _ = convert(Scene(walkers(rng, 1)), 0)
        d = loc_predict(scene, 0, predictor)
        assert len(d.components) == 1
        np.linalg.cholesky(d.components[0].cov)

    def test_matches_batched_raw(self, predictor, rng):
        hist = walkers(rng, 4)
        tgt, ctx, mask, _, _ = ego_inputs(hist)
        raw = predictor.raw(tgt, ctx, mask).data
        for m in range(4):
            d = loc_predict(convert(Scene(hist), m)[0], m, predictor)
            ref = build_gmm(raw[m], 1)
            np.testing.assert_allclose(d.means, ref.means, atol=1e-12)
            np.testing.assert_allclose(d.covs, ref.covs, rtol=1e-10)

    def test_wrong_history_length(self, predictor, rng):
        with pytest.raises(ValueError, match="history length"):
            loc_predict(Scene(walkers(rng, 2, T=6)), 0, predictor)


class TestRollout:
    def test_shapes_and_raw(self, predictor, rng):
        out = traj_predict(Scene(walkers(rng, 3)), predictor, rng, n_samples=4, keep_raw=True)
        assert len(out) == 4
        assert out[0].predicted.shape == (3, 12, 2)
        assert out[0].raw.shape == (12, 3, 5)

    def test_single_pedestrian_scene(self, predictor, rng):
        out = traj_predict(Scene(walkers(rng, 1)), predictor, rng, n_samples=2, t_pred=3)
        assert out[0].predicted.shape == (1, 3, 2)
        assert np.isfinite(out[0].predicted).all()

    def test_seed_determinism(self, predictor, rng):
        scene = Scene(walkers(rng, 3))
        a = traj_predict(scene, predictor, np.random.default_rng(11), n_samples=3)
        b = traj_predict(scene, predictor, np.random.default_rng(11), n_samples=3)
        for x, y in zip(a, b):
            assert x.predicted.tobytes() == y.predicted.tobytes()

    def test_history_too_short(self, predictor, rng):
        with pytest.raises(ValueError, match="t_h"):
            traj_predict(Scene(walkers(rng, 2, T=5)), predictor, rng)

    def test_snapshot_rollout_matches_per_pedestrian_loop(self, rng):
        store = init_params(CFG, np.random.default_rng(3))
        collapse_covariance(store)
        pred = LocPredictor(CFG, store)
        hist = walkers(rng, 3)
        t_pred = 4
        got = traj_predict(Scene(hist), pred, rng, t_pred=t_pred)[0].predicted
        states = hist.copy()
        for _ in range(t_pred):
            window = Scene(states[:, -8:])
            nxt = []
            for m in range(3):
                ego, frame = convert(window, m)
                mean = loc_predict(ego, m, pred).components[0].mean
                nxt.append(convert_back(mean, frame).as_array())
            states = np.concatenate([states, np.array(nxt)[:, None]], axis=1)
        np.testing.assert_allclose(got, states[:, 8:], atol=1e-6)

    def test_zero_covariance_stub_is_constant_velocity(self, rng):
        hist = walkers(rng, 3)
        out = traj_predict(Scene(hist), LastStepStub(CFG), rng)[0].predicted
        step = hist[:, -1] - hist[:, -2]
        oracle = hist[:, -1:] + np.arange(1, 13)[None, :, None] * step[:, None]
        # log-std clamps at -20, so residual noise is ~2e-9 per step, accumulating over 12
        np.testing.assert_allclose(out, oracle, atol=1e-6)

    def test_stub_equals_linear_baseline_on_exact_lines(self, rng):
        start, vel = rng.normal(size=(2, 1, 2)), rng.normal(size=(2, 1, 2))
        exact = start + np.arange(20)[None, :, None] * vel
        out = traj_predict(Scene(exact[:, :8]), LastStepStub(CFG), rng)[0].predicted
        np.testing.assert_allclose(out, linear_baseline(exact, 8), atol=1e-6)

    def test_non_finite_output_raises(self, rng):
        store = init_params(CFG, np.random.default_rng(0))
        store["mlp.3.b"][0] = np.nan
        with pytest.raises(FloatingPointError):
            traj_predict(Scene(walkers(rng, 2)), LocPredictor(CFG, store), rng)


class TestParams:
    def test_names_and_order(self):
        names = init_params(CFG, np.random.default_rng(0)).names()
        assert names[:5] == ["tgt.pec.P", "tgt.pec.scale", "tgt.pec.bias", "tgt.conv.w", "tgt.conv.b"]
        assert names[5] == "ctx.pec.P"
        assert names[-1] == "mlp.3.b"

    def test_mlp_input_width(self):
        assert CFG.mlp_input == 80 * 3 + 160 * 3 == 720

    def test_shape_mismatch_names_tensor(self):
        store = init_params(ModelConfig(k=2), np.random.default_rng(0))
        with pytest.raises(ValueError, match="mlp.3.w"):
            check_params(CFG, store)

    def test_missing_tensor_named(self):
        store = init_params(CFG, np.random.default_rng(0))
        partial = ParamStore()
        for k in store.names()[1:]:
            partial.add(k, store[k])
        with pytest.raises(KeyError, match="tgt.pec.P"):
            check_params(CFG, partial)

    def test_config_round_trip(self):
        cfg = ModelConfig(k=3, hidden=(20, 10))
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_seeded_init(self):
        a = init_params(CFG, np.random.default_rng(5)).flat()
        b = init_params(CFG, np.random.default_rng(5)).flat()
        assert a.tobytes() == b.tobytes()


def test_raw_accepts_tensor_inputs(predictor, rng):
    tgt, ctx, mask, _, _ = ego_inputs(walkers(rng, 2))
    a = predictor.raw(Tensor(tgt), Tensor(ctx), mask).data
    np.testing.assert_array_equal(a, predictor.raw(tgt, ctx, mask).data)
