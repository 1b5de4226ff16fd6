import numpy as np
import pytest
from hypothesis import given, strategies as st

from seairl.approximator import Net, backward, forward, mlp
from seairl.policy import log_prob_head
from seairl.ppo import PpoBatch, PpoLearner, gae_advantages, normalize_advantages, surrogate_loss

seeds = st.integers(0, 2**32 - 1)


def _gae_double_loop(r, v, gamma, lam, terminated):
    """Advantages as explicit discounted sums of TD errors."""
    v = list(v)
    if terminated:
        v[-1] = 0.0
    T = len(r)
    delta = [r[t] + gamma * v[t + 1] - v[t] for t in range(T)]
    return [sum((gamma * lam) ** (j - t) * delta[j] for j in range(t, T)) for t in range(T)]


def test_gae_examples():
    adv = gae_advantages([1.0], [0.5, 10.0], 0.9, 0.95, terminated=True)
    assert adv.tolist() == [0.5]
    adv = gae_advantages([1.0], [0.5, 10.0], 0.9, 0.95, terminated=False)
    assert adv[0] == pytest.approx(1.0 + 9.0 - 0.5)
    # lam = 1 with zero values gives discounted returns
    adv = gae_advantages([1.0, 1.0, 1.0], [0, 0, 0, 0], 0.5, 1.0, True)
    np.testing.assert_allclose(adv, [1.75, 1.5, 1.0])
    with pytest.raises(ValueError):
        gae_advantages([1.0], [0.0], 0.9, 0.9, True)


@given(seeds, st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.booleans(), st.integers(1, 30))
def test_gae_matches_double_loop(seed, gamma, lam, term, T):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=T), rng.normal(size=T + 1)
    np.testing.assert_allclose(gae_advantages(r, v, gamma, lam, term),
                               _gae_double_loop(r, v, gamma, lam, term), atol=1e-10)


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
def test_normalised_advantages_are_standardised(adv):
    out = normalize_advantages(adv)
    scale = max(np.std(adv), 1e-8)
    np.testing.assert_allclose(out * scale + np.mean(adv), adv, atol=1e-9)
    if np.std(adv) > 1e-6:
        assert abs(out.mean()) < 1e-9 and abs(out.std() - 1) < 1e-9


def _batch(rng, policy, n=16, adv=None):
    x = rng.normal(size=(n, policy.spec.in_dim))
    actions = rng.integers(policy.spec.out_dim, size=n)
    logp, _ = log_prob_head(policy.spec, policy(x), actions)
    return PpoBatch(x, actions, logp, rng.normal(size=n) if adv is None else adv,
                    rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))


def test_on_policy_clipped_gradient_equals_vanilla_policy_gradient(rng):
    pol = Net.create(mlp(4, 3, (8,), head="softmax_logits"), rng)
    b = _batch(rng, pol)
    _, g, _ = surrogate_loss(pol, b, 0.2, 0.0, 0.0)
    # vanilla: -mean(A * grad log pi)
    raw, tape = forward(pol.spec, pol.params, b.x)
    _, draw = log_prob_head(pol.spec, raw, b.actions)
    vanilla = backward(tape, draw(-b.advantages / len(b.x)))[0]
    np.testing.assert_allclose(g, vanilla, rtol=1e-12, atol=1e-15)


def test_zero_advantages_give_zero_gradient(rng):
    pol = Net.create(mlp(4, 3, (8,), head="softmax_logits"), rng)
    b = _batch(rng, pol, adv=np.zeros(16))
    loss, g, parts = surrogate_loss(pol, b, 0.2, 0.0, 0.0)
    assert loss == 0.0 and not g.any()


def test_clipped_ratio_stops_the_gradient(rng):
    pol = Net.create(mlp(4, 3, (8,), head="softmax_logits"), rng)
    b = _batch(rng, pol, adv=np.ones(16))
    b.logp_old = b.logp_old - 1.0    # ratio e > 1 + clip with positive advantage
    _, g, _ = surrogate_loss(pol, b, 0.2, 0.0, 0.0)
    assert not g.any()


def test_surrogate_gradient_matches_finite_differences(rng):
    pol = Net.create(mlp(4, 3, (6,), head="softmax_logits"), rng)
    b = _batch(rng, pol)
    b.logp_old = b.logp_old + rng.normal(0, 0.05, 16)
    f = lambda: surrogate_loss(pol, b, 0.2, 0.01, 0.5)[0]
    _, g, _ = surrogate_loss(pol, b, 0.2, 0.01, 0.5)
    for i in range(0, pol.params.size, 4):
        old = pol.params[i]
        pol.params[i] = old + 1e-6
        up = f()
        pol.params[i] = old - 1e-6
        down = f()
        pol.params[i] = old
        assert g[i] == pytest.approx((up - down) / 2e-6, abs=1e-7, rel=1e-4)


def test_learner_increases_likelihood_of_advantaged_actions(rng):
    pol = Net.create(mlp(2, 3, (8,), head="softmax_logits"), rng)
    val = Net.create(mlp(2, 1, (8,)), rng)
    x = np.ones((64, 2))
    actions = np.zeros(64, dtype=np.int64)
    actions[32:] = 1
    adv = np.where(actions == 0, 1.0, -1.0)
    logp, _ = log_prob_head(pol.spec, pol(x), actions)
    b = PpoBatch(x, actions, logp, adv, np.ones(64), np.zeros(64), np.zeros(64))
    before = np.exp(log_prob_head(pol.spec, pol(x[:1]), np.array([0]))[0][0])
    stats = PpoLearner(pol, val, 1e-2, 1e-2).update(b, rng, epochs=4, minibatch=16, clip=0.2,
                                                    lambda_h=0.0, lambda_i=0.0)
    after = np.exp(log_prob_head(pol.spec, pol(x[:1]), np.array([0]))[0][0])
    assert after > before
    assert set(stats) == {"surrogate", "entropy", "l_I_policy", "value_loss", "kl"}
