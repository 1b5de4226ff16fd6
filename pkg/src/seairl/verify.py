"""Acceptance checks: exact oracles, gradient checks and the desk-scale
learning study.

Each ``check_*`` function returns a :class:`Check`. Oracle checks also carry
per-case records (``Check.records``) for the verification report. The fast
checks (criteria 1 to 7) back ``seairl verify``; the learning study
(criteria 8 to 11) is expensive and runs on request.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_expit, log_softmax

from .adversarial import (DiscriminatorBatch, discriminator_loss, gail_discriminator_loss,
                          greedy_actions, shape_reward, value_iteration)
from .approximator import Net, mlp
from .config import TrainConfig, parse_config, preset
from .empowerment import (TabularMdp, analytic_w_star, em_optimize,
                          empowerment_reg_loss_lI, exact_situational_mi, inverse_loss_lq,
                          variational_bound_estimate)
from .envs import GRID_TRANSFER, make_env, record_demos, scenario_id
from .envs.grid import navigation_mdp
from .latent import (VaeBatch, pseudo_label_batch, sample_gumbel, segmentation_accuracy,
                     vae_loss)
from .policy import log_prob_head
from .ppo import PpoBatch, surrogate_loss
from .trainer import pretrain, train_seairl, transfer_finetune

REPORT_SCHEMA = "seairl-verify/1"
TOL_BOUND = 1e-10
TOL_GRAD = 1e-4


@dataclass
class Check:
    criterion: int
    name: str
    passed: bool
    measured: str
    seconds: float
    records: list = field(default_factory=list)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.criterion:>2} {status} {self.name}: {self.measured} ({self.seconds:.1f} s)"


class _Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.t0


# ----------------------------------------------------------------------------
# 1-3: empowerment oracles

def _random_shape(rng):
    return int(rng.integers(1, 5)), int(rng.integers(2, 5)), int(rng.integers(1, 4))


def check_variational_bound(cases: int = 200, seed: int = 0, limit_s: float = 10.0) -> Check:
    """Exact-mode bound never exceeds the exact mutual information."""
    rng = np.random.default_rng(seed)
    records, worst = [], -np.inf
    with _Timer() as tm:
        for case in range(cases):
            S, A, K = _random_shape(rng)
            mdp = TabularMdp.random(rng, S, A, K, sparsity=float(rng.choice([0.0, 0.5])))
            for s in range(S):
                for c in range(K):
                    w = rng.dirichlet(np.ones(A))
                    omega = rng.dirichlet(np.ones(A), size=S).T     # columns: p(a | s')
                    bound = variational_bound_estimate(w, omega, mdp, s, c)
                    mi = exact_situational_mi(mdp, w, s, c)
                    worst = max(worst, bound - mi)
                    records.append({"case": case, "s": s, "c": c, "bound": bound, "mi": mi,
                                    "gap": mi - bound})
    ok = worst <= TOL_BOUND and tm.seconds < limit_s
    return Check(1, "variational bound below exact MI", ok,
                 f"{len(records)} (s,c) cells over {cases} MDPs, max(bound - MI) = {worst:.3e}",
                 tm.seconds, records)


def check_em_convergence(cases: int = 50, seed: int = 1, iters: int = 50,
                         limit_s: float = 30.0) -> Check:
    """EM reaches the exact MI of its own ``w`` and never lowers the bound."""
    rng = np.random.default_rng(seed)
    records, worst_gap, worst_drop = [], 0.0, 0.0
    with _Timer() as tm:
        for case in range(cases):
            mdp_seed = int(rng.integers(2**31))
            mrng = np.random.default_rng(mdp_seed)
            A, K = int(mrng.integers(2, 5)), int(mrng.integers(1, 4))
            mdp = TabularMdp.random(mrng, 4, A, K)
            for c in range(K):
                res = em_optimize(mdp, c, beta=1.0, iters=iters)
                drop = float(np.max(res.trace[:-1] - res.trace[1:], initial=0.0))
                worst_drop = max(worst_drop, drop)
                for s in range(mdp.n_states):
                    mi = exact_situational_mi(mdp, res.w[s], s, c)
                    bound = float(res.trace[-1, s])
                    worst_gap = max(worst_gap, mi - bound)
                    records.append({"case": case, "mdp_seed": mdp_seed, "s": s, "c": c,
                                    "bound": bound, "mi": mi, "gap": mi - bound})
    ok = worst_gap < 0.05 and worst_drop <= TOL_BOUND and tm.seconds < limit_s
    return Check(2, "EM convergence", ok,
                 f"max gap {worst_gap:.2e} nats, max trace drop {worst_drop:.1e}", tm.seconds,
                 records)


def simplex_bound(w, u) -> np.ndarray:
    """``H(w) + <w, u>`` row-wise; the objective ``analytic_w_star`` maximizes at beta = 1."""
    w = np.atleast_2d(w)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(w > 0, w * np.log(w), 0.0).sum(axis=1)
    return ent + w @ np.asarray(u)


def check_analytic_solution(cases: int = 100, points: int = 10_000, seed: int = 2,
                            limit_s: float = 5.0) -> Check:
    rng = np.random.default_rng(seed)
    margin, shift_ok = np.inf, True
    with _Timer() as tm:
        for _ in range(cases):
            u = rng.normal(0.0, 2.0, size=int(rng.integers(2, 7)))
            w, _ = analytic_w_star(u, 1.0)
            rivals = rng.dirichlet(np.ones(len(u)), size=points)
            margin = min(margin, float(simplex_bound(w, u)[0] - simplex_bound(rivals, u).max()))
            # dyadic u and integer shifts keep the shifted logits exact, so w is bitwise
            # equal; logZ differs only by the rounding of one final addition
            ud = rng.integers(-64, 64, size=len(u)) / 8.0
            kappa = float(rng.integers(-20, 21))
            w0, z0 = analytic_w_star(ud, 1.0)
            w1, z1 = analytic_w_star(ud + kappa, 1.0)
            shift_ok &= bool(np.array_equal(w0, w1) and abs(z1 - (z0 + kappa)) <= 1e-12)
    ok = margin >= 0 and shift_ok and tm.seconds < limit_s
    return Check(3, "closed-form action distribution", ok,
                 f"min margin over random simplex points {margin:.3e}, shift identity "
                 f"{'exact' if shift_ok else 'broken'}", tm.seconds)


# ----------------------------------------------------------------------------
# 4: discriminator optimality

def check_discriminator_optimality(seed: int = 3, n_states: int = 20, n_actions: int = 4,
                                   n_codes: int = 2, limit_s: float = 60.0) -> Check:
    """Fit one free logit per (s, c, a) cell by exact-expectation cross-entropy.

    The expert policy is ``softmax(f)`` so ``f`` is its log-density; the
    optimum is ``p_E / (p_E + pi) = sigmoid(f - log pi)``.
    """
    rng = np.random.default_rng(seed)
    with _Timer() as tm:
        shape = (n_states, n_codes, n_actions)
        rho = rng.dirichlet(np.ones(n_states * n_codes)).reshape(n_states, n_codes, 1)
        f = log_softmax(rng.normal(0.0, 1.0, shape), axis=-1)
        pi = rng.dirichlet(np.ones(n_actions), size=(n_states, n_codes))
        w_e, w_g = rho * np.exp(f), rho * pi

        def loss(z):
            z = z.reshape(shape)
            val = -(w_e * log_expit(z) + w_g * log_expit(-z)).sum()
            grad = -(w_e * expit(-z) - w_g * expit(z))
            return val, grad.ravel()

        res = minimize(loss, np.zeros(np.prod(shape)), jac=True, method="L-BFGS-B",
                       options={"gtol": 1e-14, "ftol": 1e-16, "maxiter": 10_000})
        trained = expit(res.x.reshape(shape))
        err = float(np.abs(trained - expit(f - np.log(pi))).max())
    ok = err <= 0.02 and tm.seconds < limit_s
    return Check(4, "discriminator optimum", ok,
                 f"max |D - sigmoid(f - log pi)| = {err:.2e} over {np.prod(shape)} cells", tm.seconds)


# ----------------------------------------------------------------------------
# 5: gradient suite

def relative_gradient_error(loss_fn, params, indices, eps: float = 1e-6) -> float:
    """``|g - g_fd| / max(|g|, |g_fd|)`` on the chosen coordinates (vector norms)."""
    params = np.array(params, dtype=np.float64)
    analytic = loss_fn(params)[1][indices]
    numeric = np.empty(len(indices))
    for j, i in enumerate(indices):
        hi, lo = params.copy(), params.copy()
        hi[i] += eps
        lo[i] -= eps
        numeric[j] = (loss_fn(hi)[0] - loss_fn(lo)[0]) / (2.0 * eps)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def _with(net: Net, p) -> Net:
    return Net(net.spec, p)


def _gradient_instance(kind: str, rng: np.random.Generator):
    """Returns a list of ``(label, loss_fn, params)`` for one random instance."""
    d, k, A, n = 5, 3, 4, 16
    hidden = (16, 16)
    s, s2 = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    c = np.eye(k)[rng.integers(k, size=n)]
    continuous = bool(rng.integers(2))
    if continuous:
        a = rng.uniform(-1, 1, size=(n, 2))
        a_enc, da = a, 2
    else:
        a = rng.integers(A, size=n)
        a_enc, da = np.eye(A)[a], A

    def pol_net():
        if continuous:
            return Net.create(mlp(d + k, 4, hidden, head="gaussian_mean_logstd"), rng)
        return Net.create(mlp(d + k, A, hidden, head="softmax_logits"), rng)

    if kind == "l_q":
        inv = Net.create(mlp(2 * d + k, da, hidden,
                             head="linear" if continuous else "softmax_logits"), rng)
        return [("l_q", lambda p: inverse_loss_lq(_with(inv, p), s, c, s2, a), inv.params)]
    if kind == "l_I":
        pol, pot = pol_net(), Net.create(mlp(d + k, 1, hidden), rng)
        log_omega = rng.normal(-1.0, 0.5, size=n)

        def by_pi(p):
            loss, g, _ = empowerment_reg_loss_lI(_with(pol, p), pot, log_omega, s, c, a)
            return loss, g

        def by_phi(p):
            loss, _, g = empowerment_reg_loss_lI(pol, _with(pot, p), log_omega, s, c, a)
            return loss, g
        return [("l_I/policy", by_pi, pol.params), ("l_I/potential", by_phi, pot.params)]
    if kind == "disc":
        rew = Net.create(mlp(d + da + k, 1, hidden), rng)
        pot = Net.create(mlp(d + k, 1, hidden), rng)
        tgt = Net.create(mlp(d + k, 1, hidden), rng)
        flat = Net.create(mlp(d + da, 1, hidden), rng)

        def side():
            return DiscriminatorBatch(rng.normal(size=(n, d)), a_enc, c, rng.normal(size=(n, d)),
                                      np.eye(k)[rng.integers(k, size=n)], rng.random(n) < 0.2,
                                      rng.normal(-1.2, 0.3, size=n))
        e, g = side(), side()
        x_e, x_g = np.c_[e.s, e.a_enc], np.c_[g.s, g.a_enc]

        def by_xi(p):
            loss, gr, _ = discriminator_loss(_with(rew, p), pot, tgt, e, g, 0.99)
            return loss, gr

        def by_phi(p):
            loss, _, gp = discriminator_loss(rew, _with(pot, p), tgt, e, g, 0.99)
            return loss, gp
        return [("disc/reward", by_xi, rew.params), ("disc/potential", by_phi, pot.params),
                ("disc/flat", lambda p: gail_discriminator_loss(_with(flat, p), x_e, x_g),
                 flat.params)]
    if kind == "ppo":
        pol = pol_net()
        x = np.c_[s, c]
        logp_now = log_prob_head(pol.spec, pol(x), a)[0]
        batch = PpoBatch(x, a, logp_now + rng.normal(0.0, 0.3, size=n), rng.normal(size=n),
                         rng.normal(size=n), rng.normal(-1.0, 0.5, size=n), rng.normal(size=n))

        def fn(p):
            loss, g, _ = surrogate_loss(_with(pol, p), batch, 0.2, 1e-2, 0.1)
            return loss, g
        return [("ppo", fn, pol.params)]
    if kind == "vae":
        N, L = 3, 5
        states = rng.normal(size=(N, L + 1, d))
        lengths = rng.integers(2, L + 1, size=N)
        mask = (np.arange(L)[None] < lengths[:, None]).astype(float)
        if continuous:
            actions = rng.uniform(-1, 1, size=(N, L, 2))
            enc = actions
        else:
            actions = rng.integers(A, size=(N, L))
            enc = np.eye(A)[actions]
        batch = VaeBatch(states, enc, actions, mask)
        pol = pol_net()
        post = Net.create(mlp(k + d + da, k, hidden, head="softmax_logits"), rng)
        noise = sample_gumbel((N, L, k), rng)

        def by_pol(p):
            out = vae_loss(_with(pol, p), post, batch, noise, 0.7, 0.1, 0.9)
            return out[0], out[1]

        def by_post(p):
            out = vae_loss(pol, _with(post, p), batch, noise, 0.7, 0.1, 0.9)
            return out[0], out[2]
        return [("vae/policy", by_pol, pol.params), ("vae/posterior", by_post, post.params)]
    raise ValueError(kind)


GRADIENT_LOSSES = ("l_q", "l_I", "disc", "ppo", "vae")


def check_gradients(instances: int = 20, coords: int = 24, seed: int = 4,
                    limit_s: float = 60.0) -> Check:
    rng = np.random.default_rng(seed)
    worst: dict = {}
    records = []
    with _Timer() as tm:
        for kind in GRADIENT_LOSSES:
            for i in range(instances):
                for label, fn, params in _gradient_instance(kind, rng):
                    idx = rng.choice(params.size, size=min(coords, params.size), replace=False)
                    err = relative_gradient_error(fn, params, idx)
                    worst[label] = max(worst.get(label, 0.0), err)
                    records.append({"loss": label, "instance": i, "rel_error": err})
    ok = max(worst.values()) < TOL_GRAD and tm.seconds < limit_s
    summary = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return Check(5, "finite-difference gradients", ok, f"worst relative error: {summary}",
                 tm.seconds, records)


# ----------------------------------------------------------------------------
# 6: shaping keeps the optimal policy

def check_shaping_invariance(tables: int = 20, seed: int = 5, gamma: float = 0.9,
                             limit_s: float = 10.0) -> Check:
    rng = np.random.default_rng(seed)
    P = navigation_mdp()
    S, A, _ = P.shape
    R = rng.normal(size=(S, A, S))
    same = 0
    with _Timer() as tm:
        _, Q = value_iteration(P, R, gamma)
        base = greedy_actions(Q)
        for _ in range(tables):
            phi = rng.normal(0.0, 3.0, size=S)
            _, Qs = value_iteration(P, shape_reward(R, phi, gamma), gamma)
            same += bool(np.array_equal(greedy_actions(Qs), base))
    ok = same == tables and tm.seconds < limit_s
    return Check(6, "shaping argmax invariance", ok,
                 f"{same}/{tables} potential tables keep the greedy action sets", tm.seconds)


# ----------------------------------------------------------------------------
# 7: ablation identities

SMALL_RUN = """\
iterations = 3
ppo.steps = 256
ppo.n_envs = 8
ppo.minibatch = 128
pretrain.epochs = 5
env.demos_per_scenario = 4
eval.episodes = 8
eval.every = 2
"""


def _metrics(cfg: TrainConfig) -> str:
    env = make_env(cfg.env.spec())
    demos = record_demos(env, cfg.env.demos_per_scenario, cfg.seed)
    nets, _ = pretrain(cfg, env, demos)
    return train_seairl(cfg, env, demos, networks=nets).metrics_csv(include_wall_clock=False)


def check_reduction_identities(seed: int = 7, limit_s: float = 120.0) -> Check:
    base = parse_config(SMALL_RUN + f"seed = {seed}\n")
    with _Timer() as tm:
        degenerate = replace(preset("seairl", base), latent=replace(base.latent, k=1),
                             lam=replace(base.lam, q=0.0))
        eairl = preset("eairl", base)
        flags_off = replace(preset("seairl", base), flags=preset("gail", base).flags,
                            lam=replace(base.lam, q=0.0))
        gail = preset("gail", base)
        m_deg, m_eairl = _metrics(degenerate), _metrics(eairl)
        m_off, m_gail = _metrics(flags_off), _metrics(gail)
    ok = m_deg == m_eairl and m_off == m_gail and tm.seconds < limit_s
    return Check(7, "ablation identities", ok,
                 f"K=1/lambda_q=0 vs eairl {'identical' if m_deg == m_eairl else 'differ'}; "
                 f"flags off vs gail {'identical' if m_off == m_gail else 'differ'}", tm.seconds)


FAST_CHECKS = (check_variational_bound, check_em_convergence, check_analytic_solution,
               check_discriminator_optimality, check_gradients, check_shaping_invariance,
               check_reduction_identities)


def run_fast() -> list[Check]:
    return [fn() for fn in FAST_CHECKS]


# ----------------------------------------------------------------------------
# 8-11: the learning study

TRANSFER = ",".join(scenario_id(s) for s in GRID_TRANSFER)
TRANSFER_SETTINGS = f"""\
env.scenarios = {TRANSFER}
pretrain.epochs = 200
eval.stop_at_threshold = true
"""


@dataclass
class SeedRun:
    seed: int
    segmentation: float
    source: object          # RunArtifacts of the training-scenario run
    seconds: float


def _demo_seed(seed: int, role: str) -> int:
    return int(np.random.SeedSequence([seed, sum(map(ord, role))]).generate_state(1)[0])


def training_run(seed: int, base: TrainConfig | None = None, preset_name: str = "seairl") -> SeedRun:
    """Pretrain and train on the two training scenarios; also scores the
    pretrained posterior's segmentation on held-out expert demos."""
    t0 = time.perf_counter()
    cfg = replace(preset(preset_name, base or TrainConfig()), seed=seed)
    env = make_env(cfg.env.spec())
    demos = record_demos(env, cfg.env.demos_per_scenario, _demo_seed(seed, "train"))
    nets, _ = pretrain(cfg, env, demos)
    seg = float("nan")
    if cfg.n_codes > 1:
        held_out = record_demos(env, cfg.env.demos_per_scenario, _demo_seed(seed, "held-out"))
        codes = pseudo_label_batch(nets["posterior"], held_out.trajectories, env.encode_action)
        truth = [t.eval_only.subtasks for t in held_out.trajectories]
        seg = segmentation_accuracy(np.concatenate(codes), np.concatenate(truth))
    art = train_seairl(cfg, env, demos, networks=nets)
    return SeedRun(seed, seg, art, time.perf_counter() - t0)


@dataclass
class TransferRun:
    seed: int
    finetune: object
    scratch: object
    gail: object


def censored_iterations(art, budget: int) -> int:
    """Iterations to threshold, or ``budget + 1`` for a run that never got there."""
    return budget + 1 if art.iterations_to_threshold is None else art.iterations_to_threshold


def transfer_run(seairl_source: SeedRun, gail_source: SeedRun, base: TrainConfig | None = None) -> TransferRun:
    """Same adaptation budget for every arm: ``pretrain.epochs`` VAE epochs on
    the transfer demos, then up to ``iterations`` adversarial iterations."""
    seed = seairl_source.seed
    cfg = parse_config(TRANSFER_SETTINGS, replace(base or TrainConfig(), seed=seed))
    env = make_env(cfg.env.spec())
    demos = record_demos(env, cfg.env.demos_per_scenario, _demo_seed(seed, "transfer"))
    finetune = transfer_finetune(seairl_source.source, cfg, env, demos)
    nets, _ = pretrain(cfg, env, demos)
    scratch = train_seairl(cfg, env, demos, networks=nets)
    gail = transfer_finetune(gail_source.source, preset("gail", cfg), env, demos)
    return TransferRun(seed, finetune, scratch, gail)


def check_learning(runs: list[SeedRun], limit_s: float = 900.0) -> Check:
    reached = [r.source.iterations_to_threshold is not None for r in runs]
    seconds = sum(r.seconds for r in runs)
    detail = ", ".join(f"seed {r.seed}: thr {r.source.iterations_to_threshold} final "
                       f"{r.source.evaluation['success_rate']:.2f}" for r in runs)
    ok = sum(reached) >= 4 and seconds < limit_s
    return Check(8, "desk-scale learning", ok, f"{sum(reached)}/{len(runs)} seeds reach 0.8 ({detail})",
                 seconds)


def check_transfer(runs: list[TransferRun], budget: int) -> Check:
    it = {t.seed: (censored_iterations(t.finetune, budget), censored_iterations(t.scratch, budget))
          for t in runs}
    faster = sum(ft < sc for ft, sc in it.values())
    beats = sum(t.finetune.evaluation["success_rate"] > t.gail.evaluation["success_rate"]
                for t in runs)
    detail = "; ".join(
        f"seed {t.seed}: {it[t.seed][0]} vs {it[t.seed][1]} it, "
        f"final {t.finetune.evaluation['success_rate']:.2f} vs gail "
        f"{t.gail.evaluation['success_rate']:.2f}" for t in runs)
    ok = faster >= 4 and beats >= 4
    return Check(9, "transfer", ok, f"fine-tune faster on {faster}/{len(runs)}, beats gail on "
                 f"{beats}/{len(runs)} ({detail})", 0.0)


def check_segmentation(runs: list[SeedRun]) -> Check:
    accs = [r.segmentation for r in runs]
    med = statistics.median(accs)
    return Check(10, "posterior segmentation", med >= 0.7,
                 f"median {med:.3f} over seeds ({', '.join(f'{a:.2f}' for a in accs)})", 0.0)


SKEWED = "press-reach-carry"


def reward_spread(art, window: int = 10) -> tuple[float, float]:
    """Max/min ratio across sub-tasks of the std of r-hat and of raw r,
    each averaged over the last ``window`` iterations."""
    rows = art.metrics[-window:]
    names = [c[len("rhat_std_"):] for c in art.columns if c.startswith("rhat_std_")
             and not c.startswith("rhat_std_c")]

    def ratio(prefix):
        vals = [np.nanmean([r[f"{prefix}{n}"] for r in rows]) for n in names]
        vals = [v for v in vals if np.isfinite(v)]
        return max(vals) / min(vals)
    return ratio("rhat_std_"), ratio("raw_std_")


def check_reward_normalisation(seed: int = 0, base: TrainConfig | None = None) -> Check:
    t0 = time.perf_counter()
    cfg = parse_config(f"env.slow = {SKEWED}\n", replace(base or TrainConfig(), seed=seed))
    env = make_env(cfg.env.spec())
    demos = record_demos(env, cfg.env.demos_per_scenario, _demo_seed(seed, "skewed"))
    nets, _ = pretrain(cfg, env, demos)
    art = train_seairl(cfg, env, demos, networks=nets)
    shaped, raw = reward_spread(art)
    ok = 1.0 / 3.0 <= shaped <= 3.0
    return Check(11, "reward normalisation", ok,
                 f"r-hat std ratio {shaped:.2f} (raw r {raw:.2f})", time.perf_counter() - t0)


def run_learning_study(seeds=range(5), base: TrainConfig | None = None, log=print) -> list[Check]:
    base = base or TrainConfig()
    runs, gail_runs, transfers = [], [], []
    for s in seeds:
        runs.append(training_run(s, base))
        log(f"seed {s}: training run done in {runs[-1].seconds:.0f} s")
    checks = [check_learning(runs), None, check_segmentation(runs)]
    for r in runs:
        gail_runs.append(training_run(r.seed, base, "gail"))
        transfers.append(transfer_run(r, gail_runs[-1], base))
        log(f"seed {r.seed}: transfer arms done")
    checks[1] = check_transfer(transfers, base.iterations)
    checks.append(check_reward_normalisation(0, base))
    return checks


def report_lines(checks: list[Check]) -> list[str]:
    """Line-delimited report: a header, one summary line per check, then the
    per-case oracle records."""
    out = [json.dumps({"schema": REPORT_SCHEMA})]
    for c in checks:
        out.append(json.dumps({"criterion": c.criterion, "name": c.name, "passed": c.passed,
                               "measured": c.measured, "seconds": round(c.seconds, 3)}))
    for c in checks:
        for rec in c.records:
            out.append(json.dumps({"criterion": c.criterion, **rec}))
    return out
