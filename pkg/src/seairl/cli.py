"""Command line: ``seairl <subcommand> ...``.

Exit codes: 0 success, 1 a verification check failed, 2 configuration or
usage error, 3 numeric or runtime abort, 4 file or format error. Failures
print one line ``seairl: error[<category>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import PRESETS, TrainConfig, dump_config, parse_config, preset
from .envs import DEMO_SCHEMA, load_demos, make_env, parse_scenario, record_demos, save_demos
from .errors import ConfigError, FormatError, SeairlError, UsageError
from .latent import pseudo_label_batch
from .rollout import LearnedAgent, evaluate
from .trainer import (METRICS_SCHEMA, RunArtifacts, eval_rng, load_networks, pretrain,
                      train_seairl, transfer_finetune)

log = logging.getLogger("seairl")

EXIT_CODES = {"config": 2, "usage": 2, "numeric": 3, "runtime": 3, "format": 4, "io": 4}
MANIFEST = "manifest.json"
EFFECTIVE = "effective_config.txt"   # config.txt is the input verbatim; this is what ran


# ----------------------------------------------------------------------------
# shared plumbing

def _load_config(args) -> tuple[TrainConfig, str]:
    """Config from ``--config`` (or defaults) with ``--preset``/``--seed`` on top.

    Returns the config and the text to echo: the input file verbatim, or the
    dumped defaults when no file was given.
    """
    if args.config:
        text = _read_text(args.config)
        cfg = parse_config(text)
    else:
        cfg = TrainConfig()
        text = None
    if getattr(args, "preset", None):
        cfg = preset(args.preset, cfg)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg, text if text is not None else dump_config(cfg)


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from None


def _run_dir(path, force: bool) -> Path:
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise UsageError(f"{out} exists and is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: TrainConfig, config_text: str, **extra) -> None:
    (out / "config.txt").write_text(config_text)
    (out / EFFECTIVE).write_text(dump_config(cfg))
    manifest = {"command": command, "seed": cfg.seed, "preset": cfg.preset,
                "schemas": {"demos": DEMO_SCHEMA, "metrics": METRICS_SCHEMA,
                            "checkpoint": f"{checkpoint.MAGIC} {checkpoint.VERSION}"}}
    manifest.update(extra)
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_manifest(run: Path) -> dict:
    path = run / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"{run} is not a run directory (no {MANIFEST})")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _announce(cfg: TrainConfig) -> None:
    print(f"seed = {cfg.seed}")
    print(f"preset = {cfg.preset}")


def _load_run(run_dir) -> tuple[Path, TrainConfig, dict, dict]:
    run = Path(run_dir)
    manifest = _read_manifest(run)
    cfg = parse_config(_read_text(run / EFFECTIVE))
    ckpt = run / "checkpoint.txt"
    if not ckpt.exists():
        raise FileNotFoundError(f"{run} has no checkpoint.txt")
    return run, cfg, manifest, load_networks(ckpt)


def _demos_for(args, env, manifest=None):
    path = args.demos or (manifest or {}).get("demos")
    if not path:
        raise UsageError("no demonstration file given (--demos)")
    if not Path(path).exists():
        raise FileNotFoundError(f"demo file {path} not found")
    return load_demos(path, env.spec), str(Path(path).resolve())


def _progress(row: dict) -> None:
    if np.isfinite(row.get("eval_success", float("nan"))):
        log.info("iteration %d: eval success %.2f, disc loss %.3f", row["iteration"],
                 row["eval_success"], row["loss_disc"])


# ----------------------------------------------------------------------------
# subcommands

def cmd_gen_demos(args) -> int:
    cfg, text = _load_config(args)
    _announce(cfg)
    env = make_env(cfg.env.spec())
    n = args.n or cfg.env.demos_per_scenario
    demos = record_demos(env, n, cfg.seed)
    out = _run_dir(args.out, args.force)
    save_demos(demos, out / "demos.txt")
    _write_manifest(out, "gen-demos", cfg, text, demos=str((out / "demos.txt").resolve()),
                    n_per_scenario=n, env_fingerprint=env.spec.fingerprint)
    print(f"wrote {len(demos.trajectories)} trajectories to {out / 'demos.txt'}")
    return 0


def cmd_pretrain(args) -> int:
    cfg, text = _load_config(args)
    _announce(cfg)
    env = make_env(cfg.env.spec())
    demos, demo_path = _demos_for(args, env)
    out = _run_dir(args.out, args.force)
    nets, trace = pretrain(cfg, env, demos)
    checkpoint.save(out / "checkpoint.txt", {k: (v.spec, v.params) for k, v in nets.items()},
                    {"seed": cfg.seed, "n_codes": cfg.n_codes, "env_fingerprint": env.spec.fingerprint})
    with open(out / "pretrain_trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "reconstruction", "temperature"])
        for i, row in enumerate(zip(trace.loss, trace.reconstruction, trace.temperature)):
            w.writerow([i, *map(repr, row)])
    _write_manifest(out, "pretrain", cfg, text, demos=demo_path,
                    env_fingerprint=env.spec.fingerprint)
    print(f"final VAE loss {trace.loss[-1]:.4f}; checkpoint in {out}")
    return 0


def _finish_run(out: Path, art: RunArtifacts, command: str, cfg, demo_path, **extra) -> None:
    art.save(out)
    _write_manifest(out, command, cfg, art.config_text, demos=demo_path,
                    env_fingerprint=art.env_fingerprint, **extra)
    ev = art.evaluation
    print(f"success rate {ev['success_rate']:.3f} "
          f"({', '.join(f'{k} {v:.2f}' for k, v in ev['per_scenario'].items())}); "
          f"threshold reached at iteration {art.iterations_to_threshold}")


def cmd_train(args) -> int:
    cfg, text = _load_config(args)
    _announce(cfg)
    env = make_env(cfg.env.spec())
    demos, demo_path = _demos_for(args, env)
    nets = None
    if args.init:
        nets = load_networks(Path(args.init) / "checkpoint.txt" if Path(args.init).is_dir()
                             else args.init)
    out = _run_dir(args.out, args.force)
    if nets is None:
        nets, _ = pretrain(cfg, env, demos)
    art = train_seairl(cfg, env, demos, networks=nets, config_text=text, on_iteration=_progress)
    _finish_run(out, art, "train", cfg, demo_path)
    return 0


def cmd_transfer(args) -> int:
    cfg, text = _load_config(args)
    _announce(cfg)
    _, src_cfg, _, src_nets = _load_run(args.source)
    env = make_env(cfg.env.spec())
    demos, demo_path = _demos_for(args, env)
    source = RunArtifacts(src_cfg, "", src_nets)
    out = _run_dir(args.out, args.force)
    art = transfer_finetune(source, cfg, env, demos, config_text=text, on_iteration=_progress)
    _finish_run(out, art, "transfer", cfg, demo_path, source=str(Path(args.source).resolve()))
    return 0


def _agent(cfg: TrainConfig, nets: dict, env) -> LearnedAgent:
    k = cfg.n_codes
    return LearnedAgent(nets["policy"], nets["posterior"] if k > 1 else None, k, env.encode_action)


def cmd_eval(args) -> int:
    _, cfg, _, nets = _load_run(args.run)
    env = make_env(cfg.env.spec())
    scenarios = [parse_scenario(s) for s in args.scenarios.split(",")] if args.scenarios else None
    seed = cfg.seed if args.seed is None else args.seed
    print(f"seed = {seed}")
    result = evaluate(_agent(cfg, nets, env), env, args.episodes or cfg.eval.episodes,
                      eval_rng(seed), scenarios)
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    from . import verify
    checks = verify.run_fast()
    if args.full:
        checks += verify.run_learning_study(log=lambda m: log.info(m))
    for c in checks:
        print(c.line())
    report = Path(args.report)
    report.parent.mkdir(parents=True, exist_ok=True)
    report.write_text("\n".join(verify.report_lines(checks)) + "\n")
    print(f"report: {report}")
    return 0 if all(c.passed for c in checks) else 1


def export_rows(what: str, cfg: TrainConfig, nets: dict, run: Path, demos=None):
    """Header and rows of one export table."""
    if what == "metrics":
        with open(run / "metrics.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise FormatError(f"{run / 'metrics.csv'} is empty")
        return rows[0], rows[1:]
    env = make_env(cfg.env.spec())
    trajs = demos.trajectories
    k = cfg.n_codes
    codes = (pseudo_label_batch(nets["posterior"], trajs, env.encode_action) if k > 1
             else [np.zeros(len(t), dtype=np.int64) for t in trajs])
    if what == "codes":
        header = ["trajectory", "t", "scenario", "code"]
        rows = [[i, t, tr.scenario, int(c)] for i, (tr, cs) in enumerate(zip(trajs, codes))
                for t, c in enumerate(cs)]
        return header, rows
    d = trajs[0].states.shape[1]
    a_width = env.encode_action(trajs[0].actions[:1]).shape[1]
    header = ([f"s{j}" for j in range(d)] + [f"a{j}" for j in range(a_width)]
              + ["code", "scenario", "subtask"])
    rows = []
    for tr, cs in zip(trajs, codes):
        enc = env.encode_action(tr.actions)
        for t in range(len(tr)):
            rows.append([*map(repr, tr.states[t].tolist()), *map(repr, enc[t].tolist()),
                         int(cs[t]), tr.scenario, int(tr.eval_only.subtasks[t])])
    return header, rows


def cmd_export(args) -> int:
    run, cfg, manifest, nets = _load_run(args.run)
    demos = None
    if args.what != "metrics":
        demos, _ = _demos_for(args, make_env(cfg.env.spec()), manifest)
    header, rows = export_rows(args.what, cfg, nets, run, demos)
    out = Path(args.out) if args.out else run / f"export_{args.what}.csv"
    if out.exists() and not args.force:
        raise UsageError(f"{out} exists; pass --force to overwrite")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


# ----------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seairl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, demos=False):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--preset", choices=PRESETS)
        sp.add_argument("--seed", type=int, help="overrides the config seed")
        if out:
            sp.add_argument("--out", required=True, help="run directory to create")
            sp.add_argument("--force", action="store_true", help="overwrite a non-empty --out")
        if demos:
            sp.add_argument("--demos", required=True, help="demonstration file")

    sp = sub.add_parser("gen-demos", help="record scripted expert demonstrations")
    common(sp)
    sp.add_argument("--n", type=int, help="episodes per scenario (default: env.demos_per_scenario)")
    sp.set_defaults(fn=cmd_gen_demos)

    sp = sub.add_parser("pretrain", help="VAE pretraining of the posterior and policy")
    common(sp, demos=True)
    sp.set_defaults(fn=cmd_pretrain)

    sp = sub.add_parser("train", help="adversarial training")
    common(sp, demos=True)
    sp.add_argument("--init", help="checkpoint (or run directory) to start from; "
                                   "without it the VAE pretraining runs first")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("transfer", help="fine-tune a finished run on new scenarios")
    common(sp, demos=True)
    sp.add_argument("--source", required=True, help="source run directory")
    sp.set_defaults(fn=cmd_transfer)

    sp = sub.add_parser("eval", help="greedy evaluation of a run")
    sp.add_argument("--run", required=True)
    sp.add_argument("--episodes", type=int)
    sp.add_argument("--scenarios", help="comma-separated scenario ids (default: the run's)")
    sp.add_argument("--seed", type=int, help="evaluation seed (default: the run's)")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("verify", help="oracle, property and gradient checks")
    sp.add_argument("--full", action="store_true", help="also run the learning study (slow)")
    sp.add_argument("--report", default="verify-report.txt", help="report file")
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("export", help="write metrics, embeddings or code sequences as CSV")
    sp.add_argument("--run", required=True)
    sp.add_argument("--what", required=True, choices=("metrics", "embeddings", "codes"))
    sp.add_argument("--demos", help="demonstrations (default: the run's)")
    sp.add_argument("--out", help="output file (default: <run>/export_<what>.csv)")
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(fn=cmd_export)
    return p


def _category(exc: BaseException) -> str:
    if isinstance(exc, SeairlError):
        return exc.category
    if isinstance(exc, (OSError, UnicodeDecodeError)):
        return "io"
    if isinstance(exc, (FloatingPointError, OverflowError, ZeroDivisionError)):
        return "numeric"
    return "runtime"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to one exit category
        cat = _category(exc)
        msg = " ".join(str(exc).split())
        print(f"seairl: error[{cat}]: {msg}", file=sys.stderr)
        return EXIT_CODES[cat]


if __name__ == "__main__":
    sys.exit(main())
