"""Run configuration: a strict flat key-value text format.

Grammar (one setting per line):

    line    := blank | comment | setting
    comment := '#' anything
    setting := key ' = ' value          # whitespace around '=' is free
    key     := dotted lowercase name from the schema below
    value   := int | float | word | comma-separated ints

Unknown keys, duplicate keys and malformed values are rejected with the
offending line number.  Every key has a default, so the empty string parses
to the default configuration, and serialize -> parse is the identity.
"""

from dataclasses import dataclass, fields

from .errors import ConfigError
from .model import TrainConfig
from .schedule import build_schedule
from .tasks import (
    GridWorld,
    RolloutSpec,
    make_bimodal_task,
    make_unimodal_task,
)

TASK_KINDS = ("bimodal", "unimodal", "gridworld")
AUX_MODES = ("history", "joint")
SCHEDULE_KINDS = ("linear", "cosine")


@dataclass
class RunConfig:
    task_kind: str = "bimodal"
    task_c: float = 2.0
    task_sigma: float = 0.1
    task_dim: int = 1
    task_pairs: int = 5000
    grid_size: int = 5
    grid_agents: int = 3
    grid_sight: int = 1
    grid_landmarks: int = 2
    grid_episode_len: int = 50
    aux_mode: str = "history"
    aux_window: int = 3
    schedule_kind: str = "linear"
    schedule_steps: int = 5
    schedule_beta_lo: float = 1e-4
    schedule_beta_hi: float = 0.02
    model_latent_dim: int = 16
    model_denoiser_hidden: tuple = (64, 64)
    model_head_hidden: tuple = (64, 64)
    train_batch_size: int = 32
    train_epochs: int = 200
    train_lr: float = 2e-4
    train_weight_decay: float = 1e-4
    train_beta_kl: float = 0.1
    train_eval_interval: int = 10
    sample_count: int = 1000
    out_dir: str = "out"
    seed: int = 0


# config key -> (attribute, value type); order fixes serialization order
SCHEMA = {
    "task.kind": ("task_kind", "word"),
    "task.c": ("task_c", "float"),
    "task.sigma": ("task_sigma", "float"),
    "task.dim": ("task_dim", "int"),
    "task.pairs": ("task_pairs", "int"),
    "grid.size": ("grid_size", "int"),
    "grid.agents": ("grid_agents", "int"),
    "grid.sight": ("grid_sight", "int"),
    "grid.landmarks": ("grid_landmarks", "int"),
    "grid.episode_len": ("grid_episode_len", "int"),
    "aux.mode": ("aux_mode", "word"),
    "aux.window": ("aux_window", "int"),
    "schedule.kind": ("schedule_kind", "word"),
    "schedule.steps": ("schedule_steps", "int"),
    "schedule.beta_lo": ("schedule_beta_lo", "float"),
    "schedule.beta_hi": ("schedule_beta_hi", "float"),
    "model.latent_dim": ("model_latent_dim", "int"),
    "model.denoiser_hidden": ("model_denoiser_hidden", "ints"),
    "model.head_hidden": ("model_head_hidden", "ints"),
    "train.batch_size": ("train_batch_size", "int"),
    "train.epochs": ("train_epochs", "int"),
    "train.lr": ("train_lr", "float"),
    "train.weight_decay": ("train_weight_decay", "float"),
    "train.beta_kl": ("train_beta_kl", "float"),
    "train.eval_interval": ("train_eval_interval", "int"),
    "sample.count": ("sample_count", "int"),
    "out.dir": ("out_dir", "word"),
    "seed": ("seed", "int"),
}

_CHOICES = {
    "task.kind": TASK_KINDS,
    "aux.mode": AUX_MODES,
    "schedule.kind": SCHEDULE_KINDS,
}


def _parse_value(key, kind, raw, line_no):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "ints":
            return tuple(int(part) for part in raw.split(",") if part.strip() != "")
        value = raw
    except ValueError:
        raise ConfigError(f"bad {kind} value {raw!r} for key {key!r}", line=line_no) from None
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(
            f"key {key!r} must be one of {_CHOICES[key]}, got {value!r}", line=line_no
        )
    return value


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw_line!r}", line=line_no)
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.split("#", 1)[0].strip()
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}", line=line_no)
        if key in seen:
            raise ConfigError(f"duplicate config key {key!r}", line=line_no)
        seen.add(key)
        attr, kind = SCHEMA[key]
        setattr(cfg, attr, _parse_value(key, kind, raw, line_no))
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for key, (attr, kind) in SCHEMA.items():
        value = getattr(cfg, attr)
        if kind == "ints":
            rendered = ",".join(str(v) for v in value)
        elif kind == "float":
            rendered = repr(float(value))
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def validate_config(cfg: RunConfig) -> None:
    if cfg.task_kind not in TASK_KINDS:
        raise ConfigError(f"task.kind must be one of {TASK_KINDS}")
    if cfg.aux_mode not in AUX_MODES:
        raise ConfigError(f"aux.mode must be one of {AUX_MODES}")
    if cfg.schedule_kind not in SCHEDULE_KINDS:
        raise ConfigError(f"schedule.kind must be one of {SCHEDULE_KINDS}")
    if cfg.task_pairs < 1:
        raise ConfigError("task.pairs must be >= 1")
    if cfg.sample_count < 0:
        raise ConfigError("sample.count must be >= 0")
    for name in ("model_denoiser_hidden", "model_head_hidden"):
        if not getattr(cfg, name):
            raise ConfigError(f"{name} needs at least one layer size")


def make_task(cfg: RunConfig):
    """The dataset source described by the config."""
    if cfg.task_kind == "bimodal":
        return make_bimodal_task(cfg.task_c, cfg.task_sigma, cfg.task_dim)
    if cfg.task_kind == "unimodal":
        return make_unimodal_task(cfg.task_sigma, cfg.task_dim)
    world = GridWorld(cfg.grid_size, cfg.grid_agents, cfg.grid_sight, cfg.grid_landmarks)
    return RolloutSpec(world, cfg.grid_episode_len, cfg.aux_mode, cfg.aux_window)


def task_meta(cfg: RunConfig) -> dict:
    """Extra metadata recorded in dataset headers for GMM tasks."""
    if cfg.task_kind == "gridworld":
        return {}
    meta = {"name": cfg.task_kind, "sigma": cfg.task_sigma, "dim": cfg.task_dim}
    if cfg.task_kind == "bimodal":
        meta["c"] = cfg.task_c
    return meta


def make_sched(cfg: RunConfig):
    return build_schedule(
        cfg.schedule_kind, cfg.schedule_steps, cfg.schedule_beta_lo, cfg.schedule_beta_hi
    )


def make_train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        batch_size=cfg.train_batch_size,
        epochs=cfg.train_epochs,
        lr=cfg.train_lr,
        weight_decay=cfg.train_weight_decay,
        beta_kl=cfg.train_beta_kl,
        seed=cfg.seed,
        eval_interval=cfg.train_eval_interval,
    )


def config_equal(a: RunConfig, b: RunConfig) -> bool:
    return all(getattr(a, f.name) == getattr(b, f.name) for f in fields(RunConfig))
