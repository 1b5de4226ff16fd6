"""Training configuration and its flat ``section.key = value`` text form."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields, replace

from .envs import GRID_TRAIN, POINT_TRAIN, EnvSpec, make_env, parse_scenario, scenario_id
from .errors import ConfigError

PRESETS = ("seairl", "eairl", "digail", "gail")


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "grid_pickup_deliver"
    scenarios: str = ",".join(scenario_id(s) for s in GRID_TRAIN)
    slow: str = ""            # scenarios whose expert idles every other step
    episode_cap: int = 0      # 0 = the kind's default
    demos_per_scenario: int = 50
    randomization: str = "agent_object"   # or "all"

    def __post_init__(self):
        if self.demos_per_scenario < 1:
            raise ConfigError("env.demos_per_scenario must be >= 1")
        if self.episode_cap < 0:
            raise ConfigError("env.episode_cap must be >= 0 (0 picks the default)")

    def spec(self) -> EnvSpec:
        def split(text):
            return tuple(parse_scenario(t) for t in text.split(",") if t)
        cap = self.episode_cap or (64 if self.kind == "grid_pickup_deliver" else 128)
        return EnvSpec(self.kind, split(self.scenarios), cap, split(self.slow), self.randomization)


@dataclass(frozen=True)
class FlagsConfig:
    use_codes: bool = True
    use_empowerment_reg: bool = True
    use_shaping: bool = True


@dataclass(frozen=True)
class LambdaConfig:
    q: float = 1.0
    h: float = 1e-3
    i: float = 0.01


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    epochs: int = 4
    minibatch: int = 256
    steps: int = 2048
    n_envs: int = 32
    lr: float = 1e-3
    value_lr: float = 1e-3
    kl_warn: float = 0.5


@dataclass(frozen=True)
class AdversaryConfig:
    lr: float = 3e-4
    epochs: int = 1
    sync_interval: int = 5
    inverse_lr: float = 1e-3
    potential_lr: float = 1e-3


@dataclass(frozen=True)
class EmConfig:
    beta: float = 1.0
    iters: int = 50
    mc_samples: int = 1000


@dataclass(frozen=True)
class LatentConfig:
    k: int = 3
    temperature: float = 0.5


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 600
    lr: float = 1e-3
    lambda_kl: float = 0.1
    stickiness: float = 0.95
    temp_start: float = 1.0
    temp_end: float = 0.3


@dataclass(frozen=True)
class EvalConfig:
    every: int = 5
    episodes: int = 100
    threshold: float = 0.8
    stop_at_threshold: bool = False


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iterations: int = 300
    preset: str = "seairl"
    env: EnvConfig = field(default_factory=EnvConfig)
    flags: FlagsConfig = field(default_factory=FlagsConfig)
    lam: LambdaConfig = field(default_factory=LambdaConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    adv: AdversaryConfig = field(default_factory=AdversaryConfig)
    em: EmConfig = field(default_factory=EmConfig)
    latent: LatentConfig = field(default_factory=LatentConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        p = self.ppo
        if not 0 < p.gamma < 1:
            raise ConfigError("ppo.gamma must lie in (0, 1)")
        if not 0 < p.clip <= 0.5:
            raise ConfigError("ppo.clip must lie in (0, 0.5]")
        if not 0 <= p.gae_lambda <= 1:
            raise ConfigError("ppo.gae_lambda must lie in [0, 1]")
        if min(self.lam.q, self.lam.h, self.lam.i) < 0:
            raise ConfigError("lambda weights must be non-negative")
        if self.em.beta <= 0:
            raise ConfigError("em.beta must be positive")
        if self.latent.k < 1 or self.latent.temperature <= 0:
            raise ConfigError("latent.k must be >= 1 and latent.temperature > 0")
        if self.iterations < 0 or p.steps < 1 or p.n_envs < 1 or p.minibatch < 1:
            raise ConfigError("iteration and batch sizes must be positive")
        if self.eval.every < 1 or self.eval.episodes < 1 or not 0 <= self.eval.threshold <= 1:
            raise ConfigError("eval.every and eval.episodes must be >= 1, eval.threshold in [0, 1]")
        if self.adv.sync_interval < 1:
            raise ConfigError("adv.sync_interval must be >= 1")
        if self.flags.use_empowerment_reg and not self.flags.use_shaping:
            raise ConfigError("the empowerment regularizer needs the shaped (potential) discriminator")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        make_env(self.env.spec())   # validates scenario names

    @property
    def n_codes(self) -> int:
        """Code count actually used: one constant code when codes are off."""
        return self.latent.k if self.flags.use_codes else 1


_SECTIONS = {"env": "env", "flags": "flags", "lambda": "lam", "ppo": "ppo", "adv": "adv",
             "em": "em", "latent": "latent", "pretrain": "pretrain", "eval": "eval"}


def preset(name: str, base: TrainConfig | None = None) -> TrainConfig:
    """Flags and weights of a named method on top of ``base``."""
    base = base or TrainConfig()
    table = {
        "seairl": (FlagsConfig(True, True, True), base.lam.q),
        "eairl": (FlagsConfig(False, True, True), 0.0),
        "digail": (FlagsConfig(True, False, False), base.lam.q),
        "gail": (FlagsConfig(False, False, False), 0.0),
    }
    if name not in table:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    flags, q = table[name]
    return replace(base, preset=name, flags=flags, lam=replace(base.lam, q=q))


def point_mass_defaults() -> EnvConfig:
    return EnvConfig(kind="point_mass_goals", scenarios=",".join(scenario_id(s) for s in POINT_TRAIN))


def _coerce(text: str, kind, key: str):
    try:
        if kind is bool or kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is int or kind == "int":
            return int(text)
        if kind is float or kind == "float":
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key}") from None


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Read ``key = value`` lines; ``#`` starts a comment. Unknown keys raise.

    A ``preset`` line is applied first, so explicit keys override it.
    """
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        pairs.append((key, value))
    cfg = base or TrainConfig()
    for key, value in pairs:
        if key == "preset":
            cfg = preset(value, cfg)
    updates: dict = {}
    top: dict = {}
    for key, value in pairs:
        if key == "preset":
            continue
        if "." not in key:
            if key not in ("seed", "iterations"):
                raise ConfigError(f"unknown config key {key!r}")
            top[key] = _coerce(value, "int", key)
            continue
        section, name = key.split(".", 1)
        attr = _SECTIONS.get(section)
        if attr is None:
            raise ConfigError(f"unknown config key {key!r}")
        sub = getattr(cfg, attr)
        ftypes = {f.name: f.type for f in fields(sub)}
        if name not in ftypes:
            raise ConfigError(f"unknown config key {key!r}")
        updates.setdefault(attr, {})[name] = _coerce(value, ftypes[name], key)
    for attr, vals in updates.items():
        top[attr] = replace(getattr(cfg, attr), **vals)
    return replace(cfg, **top)


def dump_config(cfg: TrainConfig) -> str:
    lines = [f"seed = {cfg.seed}", f"iterations = {cfg.iterations}", f"preset = {cfg.preset}"]
    inverse = {v: k for k, v in _SECTIONS.items()}
    for f in fields(cfg):
        sub = getattr(cfg, f.name)
        if dataclasses.is_dataclass(sub):
            for g in fields(sub):
                val = getattr(sub, g.name)
                val = str(val).lower() if isinstance(val, bool) else val
                lines.append(f"{inverse[f.name]}.{g.name} = {val}")
    return "\n".join(lines) + "\n"
