import numpy as np
import pytest
from hypothesis import given, strategies as st

from seairl.adversarial import (DiscriminatorBatch, alternative_reward, bce_from_logits,
                                discriminator, discriminator_loss, flat_input,
                                gail_discriminator_loss, gail_reward, greedy_actions,
                                shape_reward, shaped_f, value_iteration)
from seairl.approximator import Adam, Net, mlp
from seairl.errors import ConfigError

seeds = st.integers(0, 2**32 - 1)


def _nets(rng, s_dim=2, a_dim=3, k=2, zero=False):
    r = Net.create(mlp(s_dim + a_dim + k, 1, (6,)), rng)
    phi = Net.create(mlp(s_dim + k, 1, (6,)), rng)
    if zero:
        r.params[:] = 0.0
        phi.params[:] = 0.0
    return r, phi, phi.copy()


def _batch(rng, n=5, s_dim=2, a_dim=3, k=2, terminal=None):
    return DiscriminatorBatch(
        rng.normal(size=(n, s_dim)), np.eye(a_dim)[rng.integers(a_dim, size=n)],
        np.eye(k)[rng.integers(k, size=n)], rng.normal(size=(n, s_dim)),
        np.eye(k)[rng.integers(k, size=n)],
        np.zeros(n, bool) if terminal is None else terminal, rng.normal(size=n))


def test_shaped_f_with_constant_heads():
    rng = np.random.default_rng(0)
    r, phi, target = _nets(rng, zero=True)
    # output biases are the last parameter of each net
    r.params[-1], phi.params[-1], target.params[-1] = 1.0, 2.0, 3.0
    b = _batch(rng, terminal=np.array([False, True, False, False, True]))
    v = shaped_f(r, phi, target, b, 0.9)
    np.testing.assert_allclose(v.f, np.where(b.terminal, 1.0 - 2.0, 1.0 + 0.9 * 3.0 - 2.0))
    np.testing.assert_array_equal(v.recompute(), v.f)


def test_discriminator_examples():
    assert discriminator(0.0, 0.0) == 0.5
    assert discriminator(np.log(3.0), np.log(1.0)) == pytest.approx(0.75)
    # extreme values stay finite
    assert discriminator(1e4, -1e4) == 1.0 and discriminator(-1e4, 1e4) == 0.0


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_discriminator_is_the_exp_ratio(f, log_pi):
    expect = np.exp(f) / (np.exp(f) + np.exp(log_pi))
    assert discriminator(f, log_pi) == pytest.approx(expect, rel=1e-12, abs=1e-300)


def test_bce_examples():
    loss, ge, gg = bce_from_logits(np.zeros(4), np.zeros(2))
    assert loss == pytest.approx(np.log(2))
    np.testing.assert_allclose(ge, -0.25 / 4)
    np.testing.assert_allclose(gg, 0.25 / 2)
    with pytest.raises(ConfigError):
        bce_from_logits(np.zeros(0), np.zeros(2))
    big, _, _ = bce_from_logits(np.array([-800.0]), np.array([800.0]))
    assert big == pytest.approx(800.0)


def test_zero_networks_give_log2_loss_and_no_reward_signal():
    rng = np.random.default_rng(1)
    r, phi, target = _nets(rng, zero=True)
    e, g = _batch(rng), _batch(rng)
    e.log_pi[:] = 0.0
    g.log_pi[:] = 0.0
    loss, gr, gphi = discriminator_loss(r, phi, target, e, g, 0.9)
    assert loss == pytest.approx(np.log(2))
    # zero weights block every path except the output biases, whose pulls cancel
    np.testing.assert_allclose(gr, 0.0, atol=1e-15)
    np.testing.assert_allclose(gphi, 0.0, atol=1e-15)


def test_discriminator_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    r, phi, target = _nets(rng)
    e, g = _batch(rng, terminal=np.array([0, 0, 1, 0, 0], bool)), _batch(rng)
    _, gr, gphi = discriminator_loss(r, phi, target, e, g, 0.95)
    for net, grad in ((r, gr), (phi, gphi)):
        for i in range(0, net.params.size, 5):
            old = net.params[i]
            net.params[i] = old + 1e-6
            up = discriminator_loss(r, phi, target, e, g, 0.95)[0]
            net.params[i] = old - 1e-6
            down = discriminator_loss(r, phi, target, e, g, 0.95)[0]
            net.params[i] = old
            assert grad[i] == pytest.approx((up - down) / 2e-6, abs=1e-8, rel=1e-5)


def test_alternative_reward():
    np.testing.assert_allclose(alternative_reward([1.0, 2.0], [-0.5, -1.0], 0.1), [0.95, 1.9])
    np.testing.assert_array_equal(alternative_reward([1.0], [-7.0], 0.0), [1.0])


def test_flat_discriminator_on_identical_distributions_stays_near_half():
    rng = np.random.default_rng(3)
    disc = Net.create(mlp(5, 1, (16,)), rng)
    opt = Adam(disc.params.size, 1e-3)
    for _ in range(300):
        xe = flat_input(rng.normal(size=(64, 2)), np.eye(3)[rng.integers(3, size=64)])
        xg = flat_input(rng.normal(size=(64, 2)), np.eye(3)[rng.integers(3, size=64)])
        _, grad = gail_discriminator_loss(disc, xe, xg)
        disc.params = opt.step(disc.params, grad)
    x = flat_input(rng.normal(size=(2000, 2)), np.eye(3)[rng.integers(3, size=2000)])
    d = 1 - np.exp(-gail_reward(disc, x))
    assert 0.45 <= d.mean() <= 0.55


def test_gail_reward_is_minus_log_one_minus_d():
    rng = np.random.default_rng(4)
    disc = Net.create(mlp(3, 1, (4,)), rng)
    x = rng.normal(size=(6, 3))
    d = 1 / (1 + np.exp(-disc(x)[:, 0]))
    np.testing.assert_allclose(gail_reward(disc, x), -np.log(1 - d), rtol=1e-12)
    assert np.all(gail_reward(disc, x) > 0)
    np.testing.assert_array_equal(flat_input(x[:, :2], x[:, 2:], None), x)


def test_value_iteration_on_a_two_state_chain():
    # action 0 stays, action 1 moves to the other state; reward 1 for staying in state 1
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = P[0, 1, 1] = P[1, 1, 0] = 1.0
    R = np.zeros((2, 2, 2))
    R[1, 0, 1] = 1.0
    V, Q = value_iteration(P, R, 0.5)
    np.testing.assert_allclose(V, [1.0, 2.0], atol=1e-10)
    assert greedy_actions(Q).tolist() == [[False, True], [True, False]]


@given(seeds, st.floats(0.5, 0.95))
def test_potential_shaping_preserves_greedy_actions(seed, gamma):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(5), size=(5, 3))
    R = rng.normal(size=(5, 3, 5))
    phi = rng.normal(scale=3.0, size=5)
    V, Q = value_iteration(P, R, gamma)
    V2, Q2 = value_iteration(P, shape_reward(R, phi, gamma), gamma)
    np.testing.assert_allclose(Q2, Q - phi[:, None], atol=1e-8)
    assert np.array_equal(greedy_actions(Q, 1e-7), greedy_actions(Q2, 1e-7))
