"""Smoke tests for the pybind11 surface of the C++ core."""

import numpy as np
import pytest

import himnet


def test_synthetic_generation_is_deterministic():
    a, oracle_a = himnet.generate_synthetic(n_nodes=6, n_days=2, seed=7)
    b, oracle_b = himnet.generate_synthetic(n_nodes=6, n_days=2, seed=7)
    assert a.shape == (2 * 288, 6)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(oracle_a, oracle_b)
    c, _ = himnet.generate_synthetic(n_nodes=6, n_days=2, seed=8)
    assert not np.array_equal(a, c)


def test_zero_noise_matches_oracle():
    values, oracle = himnet.generate_synthetic(n_nodes=4, n_days=1, noise_std=0.0, seed=5)
    np.testing.assert_array_equal(values, oracle)


def test_zscore_round_trip():
    rng = np.random.default_rng(0)
    x = rng.normal(50.0, 10.0, size=(20, 4))
    mean, std = himnet.zscore_fit(x)
    assert mean == pytest.approx(x.mean())
    assert std == pytest.approx(x.std())
    z = himnet.zscore_apply(x, mean, std)
    back = himnet.zscore_invert(z, mean, std)
    np.testing.assert_allclose(back, x, rtol=0, atol=1e-9 * np.abs(x).max())


def test_generate_one_hot_recovers_pool_row():
    rng = np.random.default_rng(1)
    pool = rng.normal(size=(5, 7))
    onehot = np.zeros((1, 5))
    onehot[0, 3] = 1.0
    out = himnet.generate(pool, onehot)
    np.testing.assert_array_equal(out[0], pool[3])
    # linearity
    q1, q2 = rng.normal(size=(2, 1, 5))
    lhs = himnet.generate(pool, 2.0 * q1 - 0.5 * q2)
    rhs = 2.0 * himnet.generate(pool, q1) - 0.5 * himnet.generate(pool, q2)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)


def test_adaptive_graph_rows_are_stochastic():
    rng = np.random.default_rng(2)
    adj = himnet.adaptive_graph_static(rng.normal(size=(6, 3)))
    assert adj.shape == (6, 6)
    np.testing.assert_allclose(adj.sum(axis=1), np.ones(6), atol=1e-9)
    assert (adj > 0).all()

    dyn = himnet.adaptive_graph_dynamic(rng.normal(size=(2, 4, 3)))
    np.testing.assert_allclose(dyn.sum(axis=2), np.ones((2, 4)), atol=1e-9)


def test_graph_conv_zeroth_order():
    rng = np.random.default_rng(3)
    u = rng.normal(size=(2, 3, 4))
    kernels = rng.normal(size=(1, 4, 2))  # single tap: no propagation
    bias = rng.normal(size=2)
    adj = np.full((3, 3), 1.0 / 3)
    out = himnet.graph_conv(u, adj, kernels, bias)
    np.testing.assert_allclose(out, u @ kernels[0] + bias, rtol=1e-9, atol=1e-12)


def test_gcru_step_zero_params_halves_state():
    taps, c, h = 2, 1 + 3, 3
    s = 3 * (taps * c * h + h)
    params = np.zeros(s)
    x = np.random.default_rng(4).normal(size=(2, 4, 1))
    h_prev = np.random.default_rng(5).normal(size=(2, 4, h))
    adj = np.full((4, 4), 0.25)
    out = himnet.gcru_step(x, h_prev, params, adj, order=1, hidden=h)
    np.testing.assert_allclose(out, 0.5 * h_prev, rtol=1e-12, atol=1e-12)


def test_metrics_match_hand_computation():
    pred = np.full((1, 2, 2), 3.0)
    target = np.full((1, 2, 2), 2.0)
    report = himnet.metrics(pred, target, mask_zeros=False)
    assert report["mae"] == pytest.approx(1.0)
    assert report["rmse"] == pytest.approx(1.0)
    assert report["mape"] == pytest.approx(50.0)
    assert len(report["per_horizon"]) == 2

    target_masked = target.copy()
    target_masked[0, 0, 0] = 0.0
    masked = himnet.metrics(pred, target_masked, mask_zeros=True)
    assert masked["mae"] == pytest.approx(1.0)


def test_model_forward_shapes_and_determinism():
    cfg = {
        "n_nodes": 5,
        "t_in": 4,
        "t_out": 6,
        "hidden": 8,
        "dim_tod": 2,
        "dim_dow": 2,
        "dim_s": 3,
        "dim_st": 3,
        "steps_per_day": 24,
    }
    model = himnet.HimNet(cfg, seed=3)
    x = np.random.default_rng(6).normal(size=(2, 4, 5))
    out1 = model.forward(x, [0, 10], [0, 6], mean=50.0, std=10.0)
    out2 = model.forward(x, [0, 10], [0, 6], mean=50.0, std=10.0)
    assert out1.shape == (2, 6, 5)
    np.testing.assert_array_equal(out1, out2)
    assert np.isfinite(out1).all()

    same_seed = himnet.HimNet(cfg, seed=3)
    np.testing.assert_array_equal(
        same_seed.forward(x, [0, 10], [0, 6], mean=50.0, std=10.0), out1
    )
    assert model.param_count() == sum(model.param_sizes().values())


def test_ablation_flags_change_the_leaf_set():
    cfg = {
        "n_nodes": 4,
        "t_in": 2,
        "t_out": 2,
        "hidden": 4,
        "dim_tod": 2,
        "dim_dow": 2,
        "dim_s": 2,
        "dim_st": 2,
        "steps_per_day": 8,
    }
    full = himnet.HimNet(cfg, seed=1)
    ablated = himnet.HimNet({**cfg, "ablation": "no_TMP,no_SMP,no_STMP"}, seed=1)
    assert "pool.temporal" in full.param_sizes()
    assert "shared.temporal" in ablated.param_sizes()
    assert ablated.param_count() < full.param_count()


def test_errors_surface_as_value_errors():
    with pytest.raises(ValueError):
        himnet.generate(np.zeros((3, 2)), np.zeros((1, 4)))  # query width mismatch
    with pytest.raises(ValueError):
        himnet.generate_synthetic(n_nodes=1)  # fewer nodes than clusters
