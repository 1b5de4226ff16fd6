import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seairl import checkpoint
from seairl.approximator import (LOG_STD_MAX, LOG_STD_MIN, Adam, AdamState, MlpSpec, Net,
                                 adam_step, backward, categorical_head_sample,
                                 categorical_log_prob, forward, gaussian_head_sample, grad_check,
                                 gaussian_log_prob, init_params, mlp, softmax, unpack)
from seairl.errors import ConfigError, FormatError, NumericError, UsageError

# Adam on x^2 from x = 1 with lr = 0.1, stepped in plain floats (scripts/frozen_references.py)
ADAM_TRACE = (0.9000000005, 0.8004122286917928, 0.7015862729460303, 0.603939060573746,
              0.507963659264342, 0.4142364559936619, 0.3234207049391021, 0.23626372452104188,
              0.1535845600703636, 0.07624915560691221)


def straight_line(spec, params, x):
    """Second forward implementation: explicit loops over units."""
    h = list(x)
    widths = spec.layer_widths
    pos = 0
    for layer in range(len(widths) - 1):
        fan_in, fan_out = widths[layer], widths[layer + 1]
        w = params[pos:pos + fan_in * fan_out]
        b = params[pos + fan_in * fan_out:pos + fan_in * fan_out + fan_out]
        pos += (fan_in + 1) * fan_out
        z = []
        for j in range(fan_out):
            acc = b[j]
            for i in range(fan_in):
                acc += h[i] * w[i * fan_out + j]
            z.append(acc)
        last = layer == len(widths) - 2
        h = z if last else [math.tanh(v) for v in z]
    return np.array(h)


def test_spec_validation():
    with pytest.raises(ConfigError):
        MlpSpec((3,))
    with pytest.raises(ConfigError):
        MlpSpec((3, 0, 2))
    with pytest.raises(ConfigError):
        MlpSpec((3, 3), output_head="gaussian_mean_logstd")
    with pytest.raises(ConfigError):
        MlpSpec((3, 2), hidden_activation="sigmoid")


@given(st.lists(st.integers(1, 7), min_size=2, max_size=5))
def test_parameter_count_is_weights_plus_biases(widths):
    spec = MlpSpec(tuple(widths))
    assert spec.n_params == sum((a + 1) * b for a, b in zip(widths[:-1], widths[1:]))


def test_init_is_glorot_uniform_with_zero_bias(rng):
    spec = mlp(10, 4, (30,))
    p = init_params(spec, rng)
    for (w, b), (_, fi, fo) in zip(unpack(spec, p), spec.layout):
        assert np.all(np.abs(w) <= math.sqrt(6.0 / (fi + fo)))
        assert np.all(b == 0)


def test_zero_weights_output_bias():
    spec = mlp(3, 2, (4,))
    p = np.zeros(spec.n_params)
    w2, b2 = unpack(spec, p)[1]
    b2[:] = [0.5, -2.0]
    out, _ = forward(spec, p, np.array([9.0, -1.0, 3.0]))
    np.testing.assert_array_equal(out, [0.5, -2.0])


def test_identity_layer():
    spec = MlpSpec((3, 3))
    p = np.zeros(spec.n_params)
    unpack(spec, p)[0][0][:] = np.eye(3)
    x = np.array([1.5, -2.0, 0.25])
    np.testing.assert_array_equal(forward(spec, p, x)[0], x)


def test_forward_matches_straight_line_oracle(rng):
    spec = mlp(4, 3, (5, 6))
    p = init_params(spec, rng) + rng.normal(0, 0.1, spec.n_params)
    x = rng.normal(size=4)
    np.testing.assert_allclose(forward(spec, p, x)[0], straight_line(spec, p, x), rtol=1e-13)


def test_forward_errors(rng):
    spec = mlp(3, 2, (4,))
    p = init_params(spec, rng)
    with pytest.raises(ConfigError):
        forward(spec, p, np.zeros(4))
    with pytest.raises(ConfigError):
        forward(spec, p[:-1], np.zeros(3))
    with pytest.raises(NumericError):
        forward(spec, p, np.array([0.0, np.nan, 1.0]))


def test_backward_zero_upstream_and_single_tape(rng):
    spec = mlp(3, 2, (4,))
    _, tape = forward(spec, init_params(spec, rng), rng.normal(size=(5, 3)))
    g, gin = backward(tape, np.zeros((5, 2)))
    assert not g.any() and not gin.any()
    with pytest.raises(UsageError):
        backward(tape, np.zeros((5, 2)))


def test_linear_layer_gradient_is_outer_product(rng):
    spec = MlpSpec((3, 2))
    p = rng.normal(size=spec.n_params)
    x, up = rng.normal(size=3), rng.normal(size=2)
    g, gin = backward(forward(spec, p, x)[1], up)
    (gw, gb), = unpack(spec, g)
    np.testing.assert_allclose(gw, np.outer(x, up))
    np.testing.assert_allclose(gb, up)
    np.testing.assert_allclose(gin, unpack(spec, p)[0][0] @ up)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["tanh", "relu"]))
def test_backward_matches_finite_differences(seed, act):
    rng = np.random.default_rng(seed)
    spec = mlp(3, 2, (5, 4), activation=act)
    p = init_params(spec, rng) + rng.normal(0, 0.1, spec.n_params)
    x, up = rng.normal(size=(4, 3)), rng.normal(size=(4, 2))

    def loss(q):
        out, tape = forward(spec, q, x)
        return float((out * up).sum()), backward(tape, up)[0]
    # relu kinks are measure-zero; the step is small enough to miss them
    assert grad_check(loss, p, eps=1e-6) < 1e-4


def test_grad_check_on_quadratic_and_sensitivity(rng):
    spec = MlpSpec((3, 2))
    p = rng.normal(size=spec.n_params)
    x = rng.normal(size=3)

    def loss(q):
        out, tape = forward(spec, q, x)
        return 0.5 * float(out @ out), backward(tape, out)[0]
    assert grad_check(loss, p) < 1e-6

    def corrupted(q):
        val, g = loss(q)
        g = g.copy()
        g[0] *= 2.0
        return val, g
    p[0] = 1.0
    x[0] = 2.0
    assert grad_check(corrupted, p) > 0.1
    with pytest.raises(ConfigError):
        grad_check(loss, p, eps=0.0)


def test_adam_zero_gradient_keeps_params_and_decays_moments():
    st_ = AdamState(np.ones(2), np.ones(2), 3)
    p, s2 = adam_step(np.array([1.0, 2.0]), np.zeros(2), st_, lr=0.1)
    assert np.all(s2.m < st_.m) and np.all(s2.v < st_.v)
    p0, _ = adam_step(np.array([1.0, 2.0]), np.zeros(2), AdamState.zeros(2))
    np.testing.assert_array_equal(p0, [1.0, 2.0])


def test_adam_constant_gradient_step_tends_to_lr():
    opt = Adam(1, lr=0.01)
    x = np.zeros(1)
    for _ in range(2000):
        prev = x.copy()
        x = opt.step(x, np.array([-3.0]))
    assert abs((x - prev)[0] - 0.01) < 1e-6


def test_adam_matches_hand_stepped_trace():
    opt = Adam(1, lr=0.1)
    x = np.array([1.0])
    for expected in ADAM_TRACE:
        x = opt.step(x, 2 * x)
        assert x[0] == pytest.approx(expected, abs=1e-15)


def test_adam_rejects_non_finite_gradient_with_index():
    with pytest.raises(NumericError, match="index 1"):
        adam_step(np.zeros(3), np.array([0.0, np.inf, 0.0]), AdamState.zeros(3))


def test_categorical_sampling_dominant_logit(rng):
    logits = np.array([0.0, 20.0, 0.0])
    idx, logp = categorical_head_sample(np.tile(logits, (10_000, 1)), rng)
    assert (idx == 1).mean() > 0.999
    np.testing.assert_allclose(logp, categorical_log_prob(np.tile(logits, (10_000, 1)), idx))


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8))
def test_softmax_is_a_strictly_positive_simplex(logits):
    p = softmax(np.array(logits))
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) < 1e-12
    assert abs(np.exp(categorical_log_prob(np.array(logits), np.arange(len(logits)))).sum()
               - 1.0) < 1e-12


def test_gaussian_log_prob_at_mean_and_moments(rng):
    mu, log_sigma = np.array([0.3, -1.0]), np.array([-0.5, 0.2])
    _, lp, _ = gaussian_head_sample(np.tile(mu, (1, 1)), np.tile(log_sigma, (1, 1)), rng)
    at_mean = gaussian_log_prob(mu, mu, log_sigma)
    assert at_mean == pytest.approx(-0.5 * np.sum(np.log(2 * np.pi * np.exp(2 * log_sigma))))
    n = 100_000
    a, _, _ = gaussian_head_sample(np.tile(mu, (n, 1)), np.tile(log_sigma, (n, 1)), rng)
    sigma = np.exp(log_sigma)
    assert np.all(np.abs(a.mean(0) - mu) < 4 * sigma / np.sqrt(n))
    assert np.all(np.abs(a.std(0) - sigma) < 4 * sigma / np.sqrt(2 * n))


def test_gaussian_log_std_is_clamped(rng):
    a, lp, eps = gaussian_head_sample(np.zeros((1, 1)), np.array([[40.0]]), rng)
    assert a[0, 0] == pytest.approx(np.exp(LOG_STD_MAX) * eps[0, 0])
    a, _, eps = gaussian_head_sample(np.zeros((1, 1)), np.array([[-40.0]]), rng)
    assert a[0, 0] == pytest.approx(np.exp(LOG_STD_MIN) * eps[0, 0])


def test_determinism(rng):
    spec = mlp(3, 2)
    p = init_params(spec, rng)
    x = rng.normal(size=(6, 3))
    a, ta = forward(spec, p, x)
    b, tb = forward(spec, p, x)
    assert np.array_equal(a, b)
    assert np.array_equal(backward(ta, a)[0], backward(tb, b)[0])


@given(st.integers(0, 2**32 - 1))
def test_checkpoint_round_trip_is_value_exact(seed):
    rng = np.random.default_rng(seed)
    nets = {"a": Net.create(mlp(3, 2, (4,)), rng),
            "b": Net.create(mlp(2, 4, (3,), "relu", "gaussian_mean_logstd"), rng)}
    nets["a"].params[0] = 1e-300
    nets["b"].params[1] = -123456.789e10
    text = checkpoint.dumps({k: (v.spec, v.params) for k, v in nets.items()}, {"seed": seed})
    back, meta = checkpoint.loads(text)
    assert meta == {"seed": str(seed)}
    for k, net in nets.items():
        assert back[k][0] == net.spec
        assert np.array_equal(back[k][1], net.params)


def test_checkpoint_rejects_corruption(rng):
    net = Net.create(mlp(2, 1, (2,)), rng)
    text = checkpoint.dumps({"n": (net.spec, net.params)})
    with pytest.raises(FormatError, match="line 1"):
        checkpoint.loads("nonsense\n" + text)
    with pytest.raises(FormatError):
        checkpoint.loads(text.replace("end\n", ""))
    lines = text.splitlines()
    lines[2] = lines[2].replace(lines[2].split()[0], "abc", 1)
    with pytest.raises(FormatError, match="line 3"):
        checkpoint.loads("\n".join(lines))
