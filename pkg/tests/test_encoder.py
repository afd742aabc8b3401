import numpy as np
import pytest

from socialpec import diffcore as dc
from socialpec.diffcore import ParamStore, Tensor
from socialpec.encoder import (
    CONTEXT_ENCODER, TARGET_ENCODER, EncoderConfig, encode, encode_batch, init_encoder, shape_plan,
)

from helpers import directional_check, elementwise_check

SMALL = EncoderConfig(n_patterns=4, pattern_len=2, n_conv_kernels=3, conv_len=2, pool_stride=2)


def make_store(cfg, rng, prefix="ctx"):
    store = ParamStore()
    init_encoder(store, prefix, cfg, rng)
    return store


class TestShapes:
    def test_context_plan(self):
        assert shape_plan(CONTEXT_ENCODER, 8) == [(100, 7), (100, 4), (160, 3), (160, 3)]

    def test_context_output(self, rng):
        omega = encode(rng.normal(size=(2, 8)), make_store(CONTEXT_ENCODER, rng), CONTEXT_ENCODER)
        assert omega.shape == (160, 3)

    def test_target_output(self, rng):
        store = make_store(TARGET_ENCODER, rng, "tgt")
        assert encode(rng.normal(size=(2, 8)), store, TARGET_ENCODER, "tgt").shape == (80, 3)

    def test_history_too_short_for_conv(self):
        with pytest.raises(ValueError, match="conv length"):
            shape_plan(CONTEXT_ENCODER, 3)

    def test_channel_first_input_required(self, rng):
        with pytest.raises(ValueError, match=r"\(2, T_h\)"):
            encode(rng.normal(size=(8, 2)), make_store(CONTEXT_ENCODER, rng), CONTEXT_ENCODER)

    def test_mismatched_config_rejected(self, rng):
        with pytest.raises(ValueError, match="do not match"):
            encode(rng.normal(size=(2, 8)), make_store(SMALL, rng), CONTEXT_ENCODER)

    def test_batched_matches_single(self, rng):
        store = make_store(CONTEXT_ENCODER, rng)
        trajs = rng.normal(size=(3, 8, 2))
        batch = encode_batch(trajs, store.leaves(), "ctx", CONTEXT_ENCODER).data
        for i in range(3):
            np.testing.assert_allclose(batch[i].T, encode(trajs[i].T, store, CONTEXT_ENCODER).data, atol=1e-14)


class TestValues:
    def test_zero_parameters_give_zero(self, rng):
        store = make_store(CONTEXT_ENCODER, rng)
        for k in store:
            store[k][...] = 0.0
        omega = encode(rng.normal(size=(2, 8)), store, CONTEXT_ENCODER)
        np.testing.assert_array_equal(omega.data, 0.0)

    def test_range_is_open_unit_interval(self, rng):
        store = make_store(CONTEXT_ENCODER, rng)
        omega = encode_batch(rng.normal(0, 3, (50, 8, 2)), store.leaves(), "ctx", CONTEXT_ENCODER).data
        assert np.all(np.abs(omega) < 1.0)

    def test_pattern_relabeling_invariance(self, rng):
        store = make_store(CONTEXT_ENCODER, rng)
        store["ctx.pec.scale"][...] = rng.normal(size=100)
        store["ctx.pec.bias"][...] = rng.normal(size=100)
        traj = rng.normal(size=(2, 8))
        perm = rng.permutation(100)
        moved = ParamStore()
        moved.add("ctx.pec.P", store["ctx.pec.P"][perm])
        moved.add("ctx.pec.scale", store["ctx.pec.scale"][perm])
        moved.add("ctx.pec.bias", store["ctx.pec.bias"][perm])
        moved.add("ctx.conv.w", store["ctx.conv.w"][:, perm])
        moved.add("ctx.conv.b", store["ctx.conv.b"])
        np.testing.assert_allclose(encode(traj, moved, CONTEXT_ENCODER).data,
                                   encode(traj, store, CONTEXT_ENCODER).data, atol=1e-12)


class TestGradients:
    def test_small_encoder_all_inputs(self, rng):
        for _ in range(5):
            store = make_store(SMALL, rng)
            store["ctx.pec.scale"][...] = rng.normal(size=4)
            names = store.names()

            def fn(traj, *params):
                return encode_batch(traj, dict(zip(names, params)), "ctx", SMALL)

            err = elementwise_check(fn, [rng.normal(size=(2, 8, 2))] + [store[k] for k in names], rng)
            assert err < 1e-4

    @pytest.mark.parametrize("cfg,prefix", [(CONTEXT_ENCODER, "ctx"), (TARGET_ENCODER, "tgt")])
    def test_full_size_directional(self, cfg, prefix, rng):
        store = make_store(cfg, rng, prefix)
        trajs = rng.normal(size=(2, 8, 2))
        w = rng.standard_normal((2, 3, cfg.n_conv_kernels))

        def loss():
            out = encode_batch(trajs, store.leaves(), prefix, cfg)
            return dc.reduce_sum(out * Tensor(w))

        for _ in range(5):
            assert directional_check(loss, store, rng) < 1e-4
