"""The training loop: rollouts, the four model updates in order
(inverse model, potential, reward, policy), target syncing, metrics,
evaluation and transfer fine-tuning."""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .adversarial import (DiscriminatorBatch, alternative_reward, discriminator_loss, flat_input,
                          gail_discriminator_loss, gail_reward, shaped_f)
from .approximator import Adam, Net, mlp
from .config import TrainConfig, dump_config
from .empowerment import empowerment_reg_loss_lI, inverse_log_prob, inverse_loss_lq
from .envs import DemoSet, make_env
from .errors import ConfigError, NumericError
from .latent import kl_to_prior, posterior_input, pretrain_posterior_vae, pseudo_label_batch
from .policy import log_prob_head
from .ppo import PpoBatch, PpoLearner, gae_advantages, normalize_advantages
from .rollout import LearnedAgent, collect_rollouts, evaluate

log = logging.getLogger(__name__)

METRICS_SCHEMA = "seairl-metrics/1"
NETWORKS = ("policy", "value", "posterior", "inverse", "potential", "potential_target", "reward",
            "flat_disc")
_STREAMS = ("init", "pretrain", "rollout", "update", "eval")


def _streams(seed: int) -> dict:
    children = np.random.SeedSequence(seed).spawn(len(_STREAMS))
    return {name: np.random.default_rng(ss) for name, ss in zip(_STREAMS, children)}


def eval_rng(seed: int) -> np.random.Generator:
    """A fresh copy of the evaluation stream: every evaluation of a run sees
    the same episode layouts, so successive scores differ only by the policy."""
    return _streams(seed)["eval"]


def _action_width(env) -> int:
    return env.n_actions if env.discrete else env.action_dim


def build_networks(cfg: TrainConfig, env, rng: np.random.Generator) -> dict:
    """Fresh networks for every role. All are created regardless of flags so
    that the random stream does not depend on the method."""
    k, d, a = cfg.n_codes, env.obs_dim, _action_width(env)
    if env.discrete:
        pi_out, pi_head, inv_out, inv_head = a, "softmax_logits", a, "softmax_logits"
    else:
        pi_out, pi_head, inv_out, inv_head = 2 * a, "gaussian_mean_logstd", a, "linear"
    nets = {
        "policy": Net.create(mlp(d + k, pi_out, head=pi_head), rng),
        "value": Net.create(mlp(d + k, 1), rng),
        "posterior": Net.create(mlp(k + d + a, k, head="softmax_logits"), rng),
        "inverse": Net.create(mlp(d + k + d, inv_out, head=inv_head), rng),
        "potential": Net.create(mlp(d + k, 1), rng),
        "reward": Net.create(mlp(d + a + k, 1), rng),
        "flat_disc": Net.create(mlp(d + a + k, 1), rng),
    }
    nets["potential_target"] = nets["potential"].copy()
    return {name: nets[name] for name in NETWORKS}


def pretrain(cfg: TrainConfig, env, demos: DemoSet, nets: dict | None = None, rng=None):
    """VAE pretraining of the posterior with the policy as decoder.

    Returns ``(networks, trace)``; only ``posterior`` and ``policy`` change.
    """
    streams = _streams(cfg.seed)
    nets = dict(nets) if nets is not None else build_networks(cfg, env, streams["init"])
    rng = rng if rng is not None else streams["pretrain"]
    p = cfg.pretrain
    post, pol, trace = pretrain_posterior_vae(
        demos, env.encode_action, nets["policy"], nets["posterior"], p.epochs, rng, lr=p.lr,
        lambda_kl=p.lambda_kl, temp_start=p.temp_start, temp_end=p.temp_end,
        stickiness=p.stickiness)
    nets["posterior"], nets["policy"] = post, pol
    return nets, trace


@dataclass
class Flat:
    """Transitions of a list of trajectories laid end to end."""

    s: np.ndarray
    a: np.ndarray
    a_enc: np.ndarray
    c: np.ndarray
    c_next: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray
    c_prev: np.ndarray
    a_prev_enc: np.ndarray
    log_pi: np.ndarray
    log_q: np.ndarray
    traj: np.ndarray
    subtask: np.ndarray      # evaluation-only: diagnostics, never a loss input

    def __len__(self):
        return len(self.s)


def flatten(trajs, codes, encode_action) -> Flat:
    """``codes[i]`` has T_i + 1 entries for trajectory ``i``."""
    parts: dict = {f: [] for f in Flat.__dataclass_fields__}
    for i, (tr, c) in enumerate(zip(trajs, codes)):
        T = len(tr)
        enc = encode_action(tr.actions)
        term = np.zeros(T, dtype=bool)
        term[-1] = tr.terminated
        parts["s"].append(tr.states[:-1])
        parts["s_next"].append(tr.states[1:])
        parts["a"].append(tr.actions)
        parts["a_enc"].append(enc)
        parts["c"].append(c[:-1])
        parts["c_next"].append(c[1:])
        parts["c_prev"].append(np.r_[0, c[:-2]] if T > 1 else np.zeros(1, dtype=np.int64))
        parts["a_prev_enc"].append(np.vstack([np.zeros((1, enc.shape[1])), enc[:-1]]))
        parts["terminal"].append(term)
        parts["log_pi"].append(tr.log_pi if tr.log_pi is not None else np.zeros(T))
        parts["log_q"].append(tr.log_q if tr.log_q is not None else np.zeros(T))
        parts["traj"].append(np.full(T, i))
        parts["subtask"].append(tr.eval_only.subtasks)
    return Flat(**{k: np.concatenate(v) for k, v in parts.items()})


def _one_hot(c, k):
    return np.eye(k)[np.asarray(c, dtype=np.int64)]


def _disc_batch(flat: Flat, k: int, log_pi: np.ndarray) -> DiscriminatorBatch:
    return DiscriminatorBatch(flat.s, flat.a_enc, _one_hot(flat.c, k), flat.s_next,
                              _one_hot(flat.c_next, k), flat.terminal, log_pi)


def hindsight_objective_estimate(rhat, log_pi, traj, f, codes, kl_terms, k: int) -> dict:
    """Relabelling-objective diagnostic on one batch.

    ``hs_return``: mean over trajectories of sum_t (rhat - log pi).
    ``hs_kl``: mean per-step KL of the posterior against the uniform prior.
    ``hs_logz_c<j>``: mean f over steps carrying code j, standing in for the
    per-code normaliser.
    """
    rhat, log_pi, traj = map(np.asarray, (rhat, log_pi, traj))
    per_traj = np.bincount(traj, weights=rhat - log_pi)
    present = np.bincount(traj) > 0
    rec = {"hs_return": float(per_traj[present].mean()), "hs_kl": float(np.mean(kl_terms))}
    f, codes = np.asarray(f), np.asarray(codes)
    for j in range(k):
        sel = codes == j
        rec[f"hs_logz_c{j}"] = float(f[sel].mean()) if sel.any() else float("nan")
    return rec


@dataclass
class RunArtifacts:
    config: TrainConfig
    config_text: str
    networks: dict
    metrics: list = field(default_factory=list)
    columns: list = field(default_factory=list)
    evaluation: dict = field(default_factory=dict)
    initial_evaluation: dict = field(default_factory=dict)
    iterations_to_threshold: int | None = None
    env_fingerprint: str = ""
    verification: list = field(default_factory=list)

    def metrics_csv(self, include_wall_clock: bool = True) -> str:
        cols = [c for c in self.columns if include_wall_clock or c != "wall_ms"]
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in self.metrics:
            w.writerow({c: _fmt(row.get(c)) for c in cols})
        return buf.getvalue()

    def save(self, run_dir) -> None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "config.txt").write_text(self.config_text)
        (run_dir / "metrics.csv").write_text(self.metrics_csv())
        checkpoint.save(run_dir / "checkpoint.txt",
                        {n: (net.spec, net.params) for n, net in self.networks.items()},
                        {"seed": self.config.seed, "n_codes": self.config.n_codes,
                         "env_fingerprint": self.env_fingerprint})
        summary = {"schema": METRICS_SCHEMA, "seed": self.config.seed,
                   "checkpoint_schema": f"{checkpoint.MAGIC} {checkpoint.VERSION}",
                   "evaluation": self.evaluation, "initial_evaluation": self.initial_evaluation,
                   "iterations_to_threshold": self.iterations_to_threshold,
                   "env_fingerprint": self.env_fingerprint}
        (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return v


def _finite(name, value, iteration):
    if not np.isfinite(value):
        raise NumericError(f"iteration {iteration}: non-finite {name}")
    return value


def _columns(k: int, subtasks) -> list:
    cols = ["iteration", "wall_ms", "loss_lq", "loss_lI", "loss_disc", "mean_f", "mean_rhat",
            "mean_entropy", "kl_old_new", "kl_warning", "value_loss", "eval_success"]
    for j in range(k):
        cols += [f"rhat_mean_c{j}", f"rhat_std_c{j}"]
    for name in subtasks:
        cols += [f"rhat_std_{name}", f"raw_std_{name}"]
    cols += ["hs_return", "hs_kl"] + [f"hs_logz_c{j}" for j in range(k)]
    return cols


def train_seairl(cfg: TrainConfig, env, demos: DemoSet, networks: dict | None = None,
                 config_text: str | None = None, on_iteration=None) -> RunArtifacts:
    """Run the adversarial loop for ``cfg.iterations`` iterations.

    ``networks`` (e.g. from :func:`pretrain` or a source run) are used as the
    starting point; without them fresh networks are built and pretrained.
    The posterior is never updated here.
    """
    if demos.env_fingerprint != env.spec.fingerprint:
        raise ConfigError("demonstrations were recorded for a different environment "
                          f"({demos.env_fingerprint} vs {env.spec.fingerprint})")
    streams = _streams(cfg.seed)
    if networks is None:
        networks, _ = pretrain(cfg, env, demos, build_networks(cfg, env, streams["init"]),
                               streams["pretrain"])
    nets = {n: networks[n].copy() for n in NETWORKS}
    k = cfg.n_codes
    if nets["policy"].spec.in_dim != env.obs_dim + k:
        raise ConfigError("network shapes do not match the environment and code count")
    flags, lam, ppo = cfg.flags, cfg.lam, cfg.ppo
    rng_roll, rng_upd = streams["rollout"], streams["update"]
    agent = LearnedAgent(nets["policy"], nets["posterior"] if k > 1 else None, k, env.encode_action)
    learner = PpoLearner(nets["policy"], nets["value"], ppo.lr, ppo.value_lr)
    opt_inv = Adam(nets["inverse"].params.size, cfg.adv.inverse_lr)
    opt_pot = Adam(nets["potential"].params.size, cfg.adv.potential_lr)
    opt_rew = Adam(nets["reward"].params.size, cfg.adv.lr)
    opt_flat = Adam(nets["flat_disc"].params.size, cfg.adv.lr)

    # expert pseudo-labels: the posterior is frozen, so one pass serves every iteration
    expert_codes = pseudo_label_batch(nets["posterior"], demos.trajectories, env.encode_action,
                                      include_next=True) if k > 1 else \
        [np.zeros(len(t) + 1, dtype=np.int64) for t in demos.trajectories]
    expert = flatten(demos.trajectories, expert_codes, env.encode_action)
    x_exp_pi = np.concatenate([expert.s, _one_hot(expert.c, k)], axis=1)

    art = RunArtifacts(cfg, config_text if config_text is not None else dump_config(cfg), nets,
                       columns=_columns(k, env.subtasks), env_fingerprint=env.spec.fingerprint)
    art.initial_evaluation = evaluate(agent, env, cfg.eval.episodes, eval_rng(cfg.seed))
    if art.initial_evaluation["success_rate"] >= cfg.eval.threshold:
        art.iterations_to_threshold = 0
    mb = ppo.minibatch

    for it in range(1, cfg.iterations + 1):
        if cfg.eval.stop_at_threshold and art.iterations_to_threshold is not None:
            break
        t0 = time.perf_counter()
        trajs = collect_rollouts(agent, env, ppo.steps, rng_roll, ppo.n_envs)
        gen = flatten(trajs, [t.codes for t in trajs], env.encode_action)
        n = len(gen)
        c_gen = _one_hot(gen.c, k)
        x_gen_pi = np.concatenate([gen.s, c_gen], axis=1)
        row = {"iteration": it}

        # 1) inverse model on l_q, 2) potential on l_I
        if flags.use_empowerment_reg:
            lq = []
            for _ in range(cfg.adv.epochs):
                for idx in np.array_split(rng_upd.permutation(n), max(1, n // mb)):
                    loss, g = inverse_loss_lq(nets["inverse"], gen.s[idx], c_gen[idx],
                                              gen.s_next[idx], gen.a[idx])
                    nets["inverse"].params = opt_inv.step(nets["inverse"].params, g)
                    lq.append(loss)
            row["loss_lq"] = _finite("loss_lq", float(np.mean(lq)), it)
            log_omega = inverse_log_prob(nets["inverse"], gen.s, c_gen, gen.s_next, gen.a)
            li = []
            for _ in range(cfg.adv.epochs):
                for idx in np.array_split(rng_upd.permutation(n), max(1, n // mb)):
                    loss, _, g_phi = empowerment_reg_loss_lI(
                        nets["policy"], nets["potential"], log_omega[idx], gen.s[idx],
                        c_gen[idx], gen.a[idx])
                    nets["potential"].params = opt_pot.step(nets["potential"].params, g_phi)
                    li.append(loss)
            row["loss_lI"] = _finite("loss_lI", float(np.mean(li)), it)
        else:
            log_omega = np.zeros(n)

        # 3) reward / discriminator
        exp_logpi = log_prob_head(nets["policy"].spec, nets["policy"](x_exp_pi), expert.a)[0]
        gen_logpi = log_prob_head(nets["policy"].spec, nets["policy"](x_gen_pi), gen.a)[0]
        exp_batch = _disc_batch(expert, k, exp_logpi)
        gen_batch = _disc_batch(gen, k, gen_logpi)
        x_exp_flat = flat_input(expert.s, expert.a_enc, _one_hot(expert.c, k))
        x_gen_flat = flat_input(gen.s, gen.a_enc, c_gen)
        dl = []
        for _ in range(cfg.adv.epochs):
            for idx in np.array_split(rng_upd.permutation(n), max(1, n // mb)):
                e_idx = rng_upd.integers(len(expert), size=len(idx))
                if flags.use_shaping:
                    loss, g_r, _ = discriminator_loss(
                        nets["reward"], nets["potential"], nets["potential_target"],
                        exp_batch.take(e_idx), gen_batch.take(idx), ppo.gamma)
                    nets["reward"].params = opt_rew.step(nets["reward"].params, g_r)
                else:
                    loss, g = gail_discriminator_loss(nets["flat_disc"], x_exp_flat[e_idx],
                                                      x_gen_flat[idx])
                    nets["flat_disc"].params = opt_flat.step(nets["flat_disc"].params, g)
                dl.append(loss)
        row["loss_disc"] = _finite("loss_disc", float(np.mean(dl)), it)

        # 4) policy on the alternative reward
        if flags.use_shaping:
            sv = shaped_f(nets["reward"], nets["potential"], nets["potential_target"], gen_batch,
                          ppo.gamma)
            f, raw_r = sv.f, sv.r
        else:
            f = raw_r = gail_reward(nets["flat_disc"], x_gen_flat)
        rhat = alternative_reward(f, gen.log_q, lam.q)
        row["mean_f"] = _finite("mean_f", float(f.mean()), it)
        row["mean_rhat"] = _finite("mean_rhat", float(rhat.mean()), it)
        adv, ret = _advantages(trajs, gen, rhat, nets["value"], k, ppo)
        phi = nets["potential"](x_gen_pi)[:, 0] if flags.use_empowerment_reg else np.zeros(n)
        batch = PpoBatch(x_gen_pi, gen.a, gen.log_pi, normalize_advantages(adv), ret,
                         log_omega, phi)
        stats = learner.update(batch, rng_upd, epochs=ppo.epochs, minibatch=mb, clip=ppo.clip,
                               lambda_h=lam.h,
                               lambda_i=lam.i if flags.use_empowerment_reg else 0.0)
        row["mean_entropy"] = stats["entropy"]
        row["kl_old_new"] = stats["kl"]
        row["kl_warning"] = int(stats["kl"] > ppo.kl_warn)
        row["value_loss"] = _finite("value_loss", stats["value_loss"], it)
        if row["kl_warning"]:
            log.warning("iteration %d: KL(old||new) = %.3f exceeds %.3f", it, stats["kl"],
                        ppo.kl_warn)

        # 5) target sync
        if it % cfg.adv.sync_interval == 0:
            nets["potential_target"].params = nets["potential"].params.copy()

        # diagnostics
        for j in range(k):
            sel = gen.c == j
            row[f"rhat_mean_c{j}"] = float(rhat[sel].mean()) if sel.any() else float("nan")
            row[f"rhat_std_c{j}"] = float(rhat[sel].std()) if sel.any() else float("nan")
        for j, name in enumerate(env.subtasks):
            sel = gen.subtask == j
            row[f"rhat_std_{name}"] = float(rhat[sel].std()) if sel.sum() > 1 else float("nan")
            row[f"raw_std_{name}"] = float(raw_r[sel].std()) if sel.sum() > 1 else float("nan")
        if k > 1:
            logits = nets["posterior"](posterior_input(gen.c_prev, gen.s, gen.a_prev_enc, k))
            kl_terms = kl_to_prior(logits)[0]
        else:
            kl_terms = np.zeros(n)
        row.update(hindsight_objective_estimate(rhat, gen.log_pi, gen.traj, f, gen.c, kl_terms, k))

        if it % cfg.eval.every == 0 or it == cfg.iterations:
            ev = evaluate(agent, env, cfg.eval.episodes, eval_rng(cfg.seed))
            row["eval_success"] = ev["success_rate"]
            art.evaluation = ev
            if art.iterations_to_threshold is None and ev["success_rate"] >= cfg.eval.threshold:
                art.iterations_to_threshold = it
        else:
            row["eval_success"] = float("nan")
        row["wall_ms"] = round(1000.0 * (time.perf_counter() - t0), 3)
        art.metrics.append(row)
        if on_iteration is not None:
            on_iteration(row)
    if not art.evaluation:
        art.evaluation = art.initial_evaluation
    return art


def _advantages(trajs, gen: Flat, rhat, value: Net, k: int, ppo):
    """GAE per trajectory; returns flat advantages and value targets."""
    states = np.concatenate([t.states for t in trajs])
    codes = np.concatenate([t.codes for t in trajs])
    v_all = value(np.concatenate([states, _one_hot(codes, k)], axis=1))[:, 0]
    adv = np.zeros(len(gen))
    pos_s = pos_t = 0
    for tr in trajs:
        T = len(tr)
        adv[pos_t:pos_t + T] = gae_advantages(rhat[pos_t:pos_t + T], v_all[pos_s:pos_s + T + 1],
                                              ppo.gamma, ppo.gae_lambda, tr.terminated)
        pos_s += T + 1
        pos_t += T
    starts = np.cumsum([0] + [len(t) + 1 for t in trajs[:-1]])
    v_now = np.concatenate([v_all[s:s + len(t)] for s, t in zip(starts, trajs)])
    return adv, adv + v_now


def transfer_finetune(source: RunArtifacts, cfg: TrainConfig, env, demos: DemoSet,
                      config_text: str | None = None, on_iteration=None) -> RunArtifacts:
    """Adapt a source run to new scenarios.

    Every network starts from the source run. The posterior and policy first
    get ``cfg.pretrain.epochs`` of VAE adaptation on the new demonstrations
    (warm-started, so a short budget suffices), then the adversarial loop
    continues with the learned reward, potential and inverse model. Optimiser
    state starts fresh.
    """
    if source.config.n_codes != cfg.n_codes:
        raise ConfigError("code count differs between the source run and the transfer config")
    nets = {n: source.networks[n].copy() for n in NETWORKS}
    if cfg.pretrain.epochs > 0:
        nets, _ = pretrain(cfg, env, demos, nets)
    return train_seairl(cfg, env, demos, networks=nets, config_text=config_text,
                        on_iteration=on_iteration)


def load_networks(path) -> dict:
    nets, _ = checkpoint.load(path)
    return {name: Net(spec, params) for name, (spec, params) in nets.items()}


def env_for(cfg: TrainConfig):
    return make_env(cfg.env.spec())


def with_overrides(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
