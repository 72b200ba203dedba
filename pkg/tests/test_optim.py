import numpy as np
import pytest

from esglm.errors import NumericError
from esglm.model import ModelConfig, ParameterSet, TrainConfig, init_params
from esglm.optim import OptimizerState, adam_step

CFG = ModelConfig(vocab_size=12, hidden_dim=4, num_layers=1, num_heads=2,
                  ffn_dim=8, max_seq_len=8, dropout_rate=0.0)


def scalar_setup(theta=1.0):
    params = ParameterSet({"tok_emb": np.array([[theta]], dtype=np.float64)})
    state = OptimizerState.for_params(params)
    return params, state


def test_zero_gradient_leaves_params_unchanged():
    params = init_params(CFG, seed=0, dtype=np.float64)
    before = params.copy()
    state = OptimizerState.for_params(params)
    adam_step(params, params.zeros_like(), state, TrainConfig())
    for name in params.names():
        np.testing.assert_array_equal(params[name], before[name])
    assert state.t == 1


def test_hand_computed_first_step():
    # theta=1, g=1, lr=0.1: m=0.1, v=0.001, m_hat=1, v_hat=1,
    # theta -> 1 - 0.1/(1 + 1e-8)
    params, state = scalar_setup(theta=1.0)
    tc = TrainConfig(learning_rate=0.1)
    adam_step(params, {"tok_emb": np.array([[1.0]])}, state, tc)
    assert state.t == 1
    np.testing.assert_allclose(state.m["tok_emb"], [[0.1]], atol=1e-15)
    np.testing.assert_allclose(state.v["tok_emb"], [[0.001]], rtol=1e-12)
    np.testing.assert_allclose(
        params["tok_emb"], [[1.0 - 0.1 / (1.0 + 1e-8)]], atol=1e-12
    )


def test_bias_correction_changes_second_step():
    params, state = scalar_setup(theta=1.0)
    tc = TrainConfig(learning_rate=0.1)
    g = {"tok_emb": np.array([[1.0]])}
    adam_step(params, g, state, tc)
    after_first = float(params["tok_emb"][0, 0])
    step1 = 1.0 - after_first
    adam_step(params, g, state, tc)
    step2 = after_first - float(params["tok_emb"][0, 0])

    # oracle: run the recurrence by hand
    m = v = 0.0
    theta = 1.0
    expected_steps = []
    for t in (1, 2):
        m = 0.9 * m + 0.1 * 1.0
        v = 0.999 * v + 0.001 * 1.0
        mh = m / (1 - 0.9**t)
        vh = v / (1 - 0.999**t)
        upd = 0.1 * mh / (np.sqrt(vh) + 1e-8)
        expected_steps.append(upd)
        theta -= upd
    assert step1 == pytest.approx(expected_steps[0], rel=1e-12)
    assert step2 == pytest.approx(expected_steps[1], rel=1e-12)
    assert step1 != step2


def test_moments_stay_nonnegative_and_shapes_mirror():
    params = init_params(CFG, seed=1, dtype=np.float64)
    state = OptimizerState.for_params(params)
    rng = np.random.default_rng(0)
    for _ in range(5):
        grads = {k: rng.normal(size=v.shape) for k, v in params.tensors.items()}
        adam_step(params, grads, state, TrainConfig(learning_rate=1e-3))
    for name in params.names():
        assert state.v[name].shape == params[name].shape
        assert np.all(state.v[name] >= 0.0)
    assert state.t == 5


def test_nonfinite_update_raises():
    params, state = scalar_setup()
    with pytest.raises(NumericError):
        adam_step(params, {"tok_emb": np.array([[np.inf]])}, state,
                  TrainConfig(learning_rate=0.1))
