import numpy as np
import pytest

from tscondense.networks import (ArchSpec, NetworkCollection, build_model, catalog, fan_in_bound,
                                 mean_pool_spec, param_layout, resolve_spec, sample_parameters)
from tscondense.tensor import ShapeError, Tensor, grad_check

F = 5


def batch(rng, n=3, t=9, f=F, dtype=np.float64):
    return Tensor(rng.standard_normal((n, t, f)).astype(dtype))


class TestCatalog:
    def test_exactly_eleven_entries(self):
        assert len(catalog(F)) == 11

    def test_catalog_hyperparameters(self):
        c = catalog(F)
        assert c["tcn-alpha"].kernel_sizes == (3, 5, 7)
        assert c["tcn-alpha"].branch_width == 64 and c["tcn-alpha"].conv_layers == 2
        assert c["tcn-beta"].kernel_sizes == (3,)
        assert c["tcn-gamma"].kernel_sizes == (3, 5)
        assert (c["trsf-alpha"].msa_layers, c["trsf-alpha"].heads,
                c["trsf-alpha"].head_channels, c["trsf-alpha"].mlp_hidden) == (2, 16, 64, 64)
        assert (c["trsf-beta"].heads, c["trsf-beta"].head_channels,
                c["trsf-beta"].mlp_hidden) == (4, 256, 128)
        assert (c["vit-alpha"].msa_layers, c["vit-alpha"].heads, c["vit-alpha"].head_channels) == (4, 16, 64)
        assert (c["vit-beta"].heads, c["vit-beta"].head_channels) == (4, 128)
        assert c["lstm-alpha"].hidden_units == 256
        assert c["lstm-beta"].hidden_units == 128
        assert c["rnn-alpha"].hidden_units == 256
        assert c["rnn-beta"].hidden_units == 128

    def test_embedding_widths(self):
        c = catalog(F)
        assert c["tcn-alpha"].embedding_width == 192  # 3 branches x 64
        assert c["tcn-beta"].embedding_width == 64
        assert c["tcn-gamma"].embedding_width == 128
        assert c["trsf-alpha"].embedding_width == F
        assert c["vit-beta"].embedding_width == F
        assert c["lstm-alpha"].embedding_width == 256

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="family"):
            ArchSpec("bogus", "mlp", F)

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="unknown architecture"):
            resolve_spec("tcn-delta", F)

    def test_mean_pool_not_in_catalog(self):
        assert "mean-pool" not in catalog(F)
        assert mean_pool_spec(F).embedding_width == F

    def test_collection_default_and_empty(self):
        coll = NetworkCollection.from_names(("tcn-alpha", "vit-alpha", "lstm-alpha"), F)
        assert coll.names == ("tcn-alpha", "vit-alpha", "lstm-alpha")
        assert coll.max_kernel_size == 7
        with pytest.raises(ValueError):
            NetworkCollection(())


class TestParameterSampling:
    def test_same_seed_bitwise_identical(self):
        a = sample_parameters(catalog(F)["tcn-beta"], 123)
        b = sample_parameters(catalog(F)["tcn-beta"], 123)
        assert a.names() == b.names()
        for name in a.names():
            np.testing.assert_array_equal(a[name].data, b[name].data)

    def test_distinct_seeds_differ(self):
        a = sample_parameters(catalog(F)["rnn-beta"], 1)
        b = sample_parameters(catalog(F)["rnn-beta"], 2)
        assert any(not np.array_equal(a[n].data, b[n].data) for n in a.names())

    def test_lstm_alpha_parameter_count_closed_form(self):
        # recurrent layer: 4 gates x (inputs + hidden + bias) x hidden units
        spec = resolve_spec("lstm-alpha", 47)
        model = build_model(spec, 0)
        assert model.embedding_params.total_parameters == 4 * (47 + 256 + 1) * 256
        assert model.head_params.total_parameters == 256 + 1

    def test_biases_start_at_zero(self):
        params = sample_parameters(catalog(F)["trsf-alpha"], 5)
        for name in params.names():
            if name.endswith("bias"):
                assert not params[name].data.any()

    def test_weight_statistics_match_fan_in_target(self):
        # Monte Carlo over seeds; relu-fed conv weight targets variance 2/fan_in
        spec = resolve_spec("tcn-beta", 4)
        name = "embed.layer0.k3.weight"
        fan_in = 3 * 4
        draws = np.stack([sample_parameters(spec, s, np.float64)[name].data for s in range(1000)])
        se_mean = np.sqrt(2.0 / fan_in) / np.sqrt(draws.size)
        assert abs(draws.mean()) < 3 * se_mean
        target_var = 2.0 / fan_in
        assert abs(draws.var() - target_var) / target_var < 0.10
        assert fan_in_bound(fan_in, 2.0) == pytest.approx(np.sqrt(6.0 / fan_in))

    def test_attention_weight_variance_target(self):
        spec = resolve_spec("trsf-alpha", 4)
        name = "embed.layer0.qkv_weight"
        draws = np.stack([sample_parameters(spec, s, np.float64)[name].data for s in range(300)])
        target_var = 1.0 / 4  # linear gain, fan_in = feature count
        assert abs(draws.var() - target_var) / target_var < 0.10

    def test_layout_covers_all_parameters(self):
        for name, spec in catalog(F).items():
            params = sample_parameters(spec, 0)
            layout_names = [entry[0] for entry in param_layout(spec)]
            assert layout_names == params.names(), name


class TestForwardContracts:
    @pytest.mark.parametrize("name", sorted(catalog(F)))
    def test_embedding_width_independent_of_temporal_length(self, name, rng):
        model = build_model(resolve_spec(name, F), 3, np.float64)
        e_long = model.embed(batch(rng, t=16))
        e_short = model.embed(batch(rng, t=8))
        assert e_long.shape[1] == e_short.shape[1] == model.spec.embedding_width
        assert np.isfinite(e_long.data).all() and np.isfinite(e_short.data).all()

    def test_identical_samples_identical_rows(self, rng):
        model = build_model(resolve_spec("tcn-gamma", F), 1, np.float64)
        row = rng.standard_normal((1, 9, F))
        e = model.embed(Tensor(np.repeat(row, 4, axis=0)))
        for i in range(1, 4):
            np.testing.assert_array_equal(e.data[i], e.data[0])

    def test_feature_mismatch_rejected(self, rng):
        model = build_model(resolve_spec("lstm-beta", F), 1)
        with pytest.raises(ShapeError, match="lstm-beta"):
            model.embed(Tensor(rng.standard_normal((2, 9, F + 1))))

    @pytest.mark.parametrize("name", sorted(catalog(F)))
    def test_predict_strictly_inside_unit_interval(self, name, rng):
        model = build_model(resolve_spec(name, F), 5, np.float64)
        p = model.predict(batch(rng, n=6)).data
        assert ((p > 0.0) & (p < 1.0)).all()

    def test_zero_head_gives_half(self, rng):
        model = build_model(resolve_spec("vit-alpha", F), 2, np.float64)
        for name, tensor in model.head_params.items():
            tensor.data[...] = 0.0
        np.testing.assert_array_equal(model.predict(batch(rng)).data, np.full(3, 0.5))

    def test_prediction_invariant_to_batch_order(self, rng):
        model = build_model(resolve_spec("trsf-beta", F), 4, np.float64)
        x = rng.standard_normal((6, 9, F))
        perm = np.array([5, 2, 0, 4, 1, 3])
        p = model.predict(Tensor(x)).data
        p_perm = model.predict(Tensor(x[perm])).data
        np.testing.assert_allclose(p_perm, p[perm], rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("name", sorted(catalog(F)))
    def test_embed_gradient_matches_finite_differences(self, name, rng):
        model = build_model(resolve_spec(name, F), 11, np.float64)
        err = grad_check(lambda x: model.embed(x).mean(), batch(rng, n=2, t=7))
        assert err < 1e-4, f"{name}: {err}"

    def test_build_rejects_wrong_dtype_consistency(self):
        model32 = build_model(resolve_spec("rnn-alpha", F), 0, np.float32)
        assert model32.params["embed.input_weight"].dtype == np.float32
