import numpy as np

from stimkit.nn.gradcheck import (
    analytic_grads,
    finite_difference_grads,
    grad_check,
    max_relative_error,
    micro_config,
)
from stimkit.nn.model import init_params


def test_micro_config_passes_below_1e4():
    clip = np.random.default_rng(7).random((2, 8, 8))
    err, per_param = grad_check(micro_config(seed=3), clip, 1)
    assert err < 1e-4
    assert set(per_param) == {
        "conv0_w", "conv0_b", "embed_w", "embed_b",
        "lstm_wx", "lstm_wh", "lstm_b", "out_w", "out_b",
    }


def test_corrupted_gradient_detected():
    cfg = micro_config(seed=3)
    params = init_params(cfg, np.float64)
    clip = np.random.default_rng(7).random((2, 8, 8))
    x = clip[None, :, :, :, None]
    y = np.array([1.0])
    ga = analytic_grads(params, cfg, x, y)
    gn = finite_difference_grads(params, cfg, x, y)
    ga["conv0_w"] = ga["conv0_w"] * 2.0  # inject a doubled gradient
    err, per_param = max_relative_error(ga, gn)
    assert err > 0.3
    assert per_param["conv0_w"] > 0.3


def test_zero_parameter_model_is_finite():
    cfg = micro_config(seed=0)
    params = {k: np.zeros_like(v) for k, v in init_params(cfg, np.float64).items()}
    clip = np.random.default_rng(1).random((2, 8, 8))
    x = clip[None, :, :, :, None]
    y = np.array([0.0])
    ga = analytic_grads(params, cfg, x, y)
    gn = finite_difference_grads(params, cfg, x, y)
    err, _ = max_relative_error(ga, gn)
    assert np.isfinite(err)
    for g in ga.values():
        assert np.all(np.isfinite(g))
