import numpy as np
import pytest
from hypothesis import given, strategies as st

from seairl.approximator import Net, mlp, softmax
from seairl.envs import grid_spec, make_env, record_demos
from seairl.errors import ConfigError, NumericError
from seairl.latent import (CodeProcess, VaeBatch, directed_information_exact, gumbel_softmax,
                           gumbel_softmax_sample, gumbel_softmax_vjp, kl_to_prior, lq_exact,
                           lq_monte_carlo, make_vae_batch, one_hot, posterior_bonus,
                           posterior_forward, pretrain_posterior_vae, pseudo_label,
                           pseudo_label_batch, segmentation_accuracy, sticky_prior,
                           temperature_schedule, vae_loss)

seeds = st.integers(0, 2**32 - 1)
logit_rows = st.lists(st.floats(-8, 8), min_size=2, max_size=5)


def _posterior(rng, k=3, obs=11, act=6, zero=False):
    net = Net.create(mlp(k + obs + act, k, (16,)), rng)
    if zero:
        net.params[:] = 0.0
    return net


def _q_table(rng):
    return rng.dirichlet(np.ones(2), size=(2, 2, 2, 2))


def test_gumbel_rejects_bad_input(rng):
    with pytest.raises(ConfigError):
        gumbel_softmax_sample(np.zeros(3), 0.0, False, rng)
    with pytest.raises(NumericError):
        gumbel_softmax_sample(np.array([0.0, np.nan]), 1.0, False, rng)


@given(seeds, logit_rows, st.floats(0.05, 5.0))
def test_gumbel_samples_live_on_the_simplex(seed, logits, tau):
    rng = np.random.default_rng(seed)
    y = gumbel_softmax_sample(np.array(logits), tau, False, rng)
    assert np.all(y >= 0) and abs(y.sum() - 1) < 1e-12
    h = gumbel_softmax_sample(np.array(logits), tau, True, rng)
    assert sorted(h.tolist()) == [0.0] * (len(logits) - 1) + [1.0]


def test_hard_gumbel_frequencies_match_softmax(rng):
    logits = np.array([1.0, 0.0, -1.0, 0.5])
    n = 200_000
    h = gumbel_softmax_sample(np.tile(logits, (n, 1)), 0.5, True, rng)
    p = softmax(logits)
    np.testing.assert_array_less(np.abs(h.mean(0) - p), 4 * np.sqrt(p * (1 - p) / n))


def test_uniform_logits_give_uniform_marginal(rng):
    n = 100_000
    y = gumbel_softmax_sample(np.zeros((n, 3)), 1.0, False, rng)
    np.testing.assert_array_less(np.abs(y.mean(0) - 1 / 3), 0.005)


def test_gumbel_vjp_matches_finite_differences(rng):
    logits, noise, up = rng.normal(size=4), rng.normal(size=4), rng.normal(size=4)
    tau = 0.7
    g = gumbel_softmax_vjp(gumbel_softmax(logits, noise, tau), up, tau)
    eps = 1e-6
    num = [(up @ gumbel_softmax(logits + eps * e, noise, tau)
            - up @ gumbel_softmax(logits - eps * e, noise, tau)) / (2 * eps) for e in np.eye(4)]
    np.testing.assert_allclose(g, num, atol=1e-8)


@given(logit_rows)
def test_kl_to_uniform_is_log_k_minus_entropy(logits):
    logits = np.array(logits)
    kl, grad = kl_to_prior(logits[None])
    q = softmax(logits)
    assert kl[0] >= -1e-12
    assert kl[0] == pytest.approx(np.log(len(q)) + (q * np.log(q)).sum(), abs=1e-10)
    assert abs(grad.sum()) < 1e-10


def test_kl_zero_at_the_prior_and_sticky_prior_shape():
    prior = sticky_prior(one_hot([1], 3), 0.95)
    np.testing.assert_allclose(prior, [[0.05 / 3, 0.95 + 0.05 / 3, 0.05 / 3]])
    kl, grad = kl_to_prior(np.log(prior), prior)
    assert abs(kl[0]) < 1e-14 and np.abs(grad).max() < 1e-14
    np.testing.assert_allclose(sticky_prior(one_hot([2], 4), 0.0), 0.25)


def test_temperature_schedule_endpoints():
    assert temperature_schedule(0, 10) == 1.0
    assert temperature_schedule(9, 10) == pytest.approx(0.3)
    assert temperature_schedule(0, 1) == 1.0


def test_zero_posterior_is_uniform_and_bonus_is_minus_log_k(rng):
    q = _posterior(rng, zero=True)
    s = rng.normal(size=(5, 11))
    np.testing.assert_array_equal(posterior_forward(q, np.zeros(5, int), s, np.zeros((5, 6))), 0.0)
    b = posterior_bonus(q, np.array([0, 1, 2, 1, 0]), np.zeros(5, int), s, np.zeros((5, 6)))
    np.testing.assert_allclose(b, -np.log(3))


def test_posterior_input_order_matches_manual_concatenation(rng):
    q = _posterior(rng)
    s, a = rng.normal(size=11), one_hot(4, 6)
    manual = q(np.concatenate([one_hot(2, 3), s, a]))
    np.testing.assert_array_equal(posterior_forward(q, 2, s, a), manual)


def _demos(n=2, seed=0):
    env = make_env(grid_spec())
    return env, record_demos(env, n, seed)


def test_pseudo_labels_follow_a_manual_rollout(rng):
    env, demos = _demos()
    q = _posterior(rng)
    tr = demos.trajectories[1]
    expected, c, a_prev = [], 0, np.zeros(6)
    for t in range(len(tr)):
        c = int(posterior_forward(q, c, tr.states[t], a_prev).argmax())
        expected.append(c)
        a_prev = env.encode_action(tr.actions[t:t + 1])[0]
    assert pseudo_label(q, tr, env.encode_action).tolist() == expected
    batch = pseudo_label_batch(q, demos.trajectories, env.encode_action, include_next=True)
    assert batch[1][:-1].tolist() == expected
    assert [len(x) for x in batch] == [len(t) + 1 for t in demos.trajectories]


def test_pseudo_label_ties_break_to_lowest_code(rng):
    env, demos = _demos(1)
    q = _posterior(rng, zero=True)
    for tr in demos.trajectories:
        assert not pseudo_label(q, tr, env.encode_action).any()
    with pytest.raises(ConfigError):
        pseudo_label(q, demos.trajectories[0], env.encode_action, mode="mode")


def test_sampled_pseudo_labels_are_seeded(rng):
    env, demos = _demos(1)
    q = _posterior(rng)
    a = pseudo_label(q, demos.trajectories[0], env.encode_action, "sample",
                     np.random.default_rng(4))
    b = pseudo_label(q, demos.trajectories[0], env.encode_action, "sample",
                     np.random.default_rng(4))
    assert np.array_equal(a, b)


def test_segmentation_accuracy_examples():
    assert segmentation_accuracy([0, 0, 1, 1], [1, 1, 0, 0]) == 1.0
    assert segmentation_accuracy([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5
    assert segmentation_accuracy([2, 0, 0, 1], [0, 1, 1, 2]) == 1.0
    assert segmentation_accuracy([0, 1, 0], [0, 0, 0]) == pytest.approx(2 / 3)
    assert segmentation_accuracy([], []) == 1.0
    with pytest.raises(ConfigError):
        segmentation_accuracy([0], [0, 1])
    with pytest.raises(ConfigError):
        segmentation_accuracy([7], [0])


@given(st.lists(st.integers(0, 2), min_size=1, max_size=40), st.permutations([0, 1, 2]))
def test_segmentation_is_relabel_invariant(truth, perm):
    relabelled = [perm[t] for t in truth]
    assert segmentation_accuracy(relabelled, truth) == 1.0


def test_random_codes_score_low_on_three_subtasks():
    rng = np.random.default_rng(8)
    truth = np.repeat([0, 1, 2], 400)
    assert segmentation_accuracy(rng.integers(0, 3, truth.size), truth) < 0.45


def test_one_transition_vae_loss_matches_direct_formula(rng):
    k = 3
    pol = Net.create(mlp(11 + k, 6, (8,), head="softmax_logits"), rng)
    q = _posterior(rng, k)
    s = rng.normal(size=(1, 2, 11))
    a = np.array([[4]])
    batch = VaeBatch(s, one_hot(a, 6), a, np.ones((1, 1)))
    noise = rng.normal(size=(1, 1, k))
    tau, lam = 0.6, 0.1
    loss, _, _, recon = vae_loss(pol, q, batch, noise, tau, lam, stickiness=0.95)
    logits = q(np.concatenate([one_hot(0, k), s[0, 0], np.zeros(6)]))
    y = softmax((logits + noise[0, 0]) / tau)
    logits_pi = pol(np.concatenate([s[0, 0], y]))
    logp = logits_pi[4] - np.log(np.exp(logits_pi).sum())
    qd = softmax(logits)
    kl = (qd * np.log(qd * k)).sum()   # t = 0 uses the uniform prior
    assert recon == pytest.approx(-logp, rel=1e-12)
    assert loss == pytest.approx(-logp + lam * kl, rel=1e-12)


def test_vae_gradients_match_finite_differences(rng):
    k = 2
    env, demos = _demos(1)
    pol = Net.create(mlp(11 + k, 6, (6,), head="softmax_logits"), rng)
    q = _posterior(rng, k)
    batch = make_vae_batch(demos.trajectories, env.encode_action)
    noise = rng.gumbel(size=batch.mask.shape + (k,))
    _, gp, gq, _ = vae_loss(pol, q, batch, noise, 0.5, 0.1, 0.9)
    for net, grad in ((pol, gp), (q, gq)):
        for i in rng.choice(net.params.size, 6, replace=False):
            old = net.params[i]
            net.params[i] = old + 1e-6
            up = vae_loss(pol, q, batch, noise, 0.5, 0.1, 0.9)[0]
            net.params[i] = old - 1e-6
            down = vae_loss(pol, q, batch, noise, 0.5, 0.1, 0.9)[0]
            net.params[i] = old
            assert grad[i] == pytest.approx((up - down) / 2e-6, abs=1e-7, rel=1e-4)


def test_pretraining_reduces_loss_and_leaves_inputs_alone(rng):
    env, demos = _demos(4)
    pol = Net.create(mlp(11 + 2, 6, (16,), head="softmax_logits"), rng)
    q = _posterior(rng, 2)
    before = (pol.params.copy(), q.params.copy())
    q2, pol2, trace = pretrain_posterior_vae(demos, env.encode_action, pol, q, 30,
                                             np.random.default_rng(0), lr=3e-3)
    assert np.array_equal(pol.params, before[0]) and np.array_equal(q.params, before[1])
    assert trace.loss[-1] < trace.loss[0]
    assert len(trace.temperature) == 30
    with pytest.raises(ConfigError):
        pretrain_posterior_vae([], env.encode_action, pol, q, 1, rng)


@given(seeds)
def test_lq_never_exceeds_directed_information(seed):
    rng = np.random.default_rng(seed)
    proc = CodeProcess.random(rng)
    di, h_codes = directed_information_exact(proc)
    assert -1e-12 <= di <= h_codes + 1e-12
    assert lq_exact(proc, _q_table(rng)) <= di + 1e-12


def test_lq_monte_carlo_agrees_with_enumeration():
    rng = np.random.default_rng(2)
    proc = CodeProcess.random(rng)
    table = _q_table(rng)
    est, se = lq_monte_carlo(proc, table, 20_000, rng)
    assert abs(est - lq_exact(proc, table)) < 4 * se
    assert est <= directed_information_exact(proc)[0] + 4 * se


def test_codes_independent_of_trajectory_carry_no_information():
    proc = CodeProcess.random(np.random.default_rng(5))
    proc.p_code[:] = proc.p_code[:, :1]   # code ignores the state
    proc.dynamics[:] = 0.5
    proc.policy[:] = 0.5
    assert abs(directed_information_exact(proc)[0]) < 1e-12
