"""Experiment configuration: presets, TOML parsing, validation, serialization.

Configs are plain TOML with fixed sections. Unknown sections or keys are
rejected outright (with a suggestion) so a typo like `temprature` cannot
silently fall back to a default. Named presets bundle the benchmark-scale
settings; file values override the preset and `--set` overrides both.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .learner import LEARNER_KINDS
from .scheduler import SchedulerMode
from .suite import TIER_TABLE, SuiteConfig


class ParseError(ValueError):
    """The config text could not be parsed into known sections/keys."""


class ValidationError(ValueError):
    """A parsed config violates an invariant; the message names it."""


METHOD_NAMES = ("BC", "UniformDAgger", "MTDAgger-TN", "MTDAgger-PG", "MTDAgger-TN-noKF")

_METHOD_ALIASES = {
    "bc": "BC",
    "uniform": "UniformDAgger",
    "uniformdagger": "UniformDAgger",
    "uniform-dagger": "UniformDAgger",
    "tn": "MTDAgger-TN",
    "mtdagger-tn": "MTDAgger-TN",
    "pg": "MTDAgger-PG",
    "mtdagger-pg": "MTDAgger-PG",
    "tn-nokf": "MTDAgger-TN-noKF",
    "mtdagger-tn-nokf": "MTDAgger-TN-noKF",
}

_METHOD_MODES = {
    "UniformDAgger": (SchedulerMode.UNIFORM, True),
    "MTDAgger-TN": (SchedulerMode.TASK_NEED, True),
    "MTDAgger-PG": (SchedulerMode.PERFORMANCE_GAIN, True),
    "MTDAgger-TN-noKF": (SchedulerMode.TASK_NEED, False),
}


def canonical_method(name: str) -> str:
    key = name.strip().lower()
    if key in _METHOD_ALIASES:
        return _METHOD_ALIASES[key]
    hint = difflib.get_close_matches(key, _METHOD_ALIASES, n=1)
    extra = f"; did you mean {_METHOD_ALIASES[hint[0]]!r}?" if hint else ""
    raise ValidationError(f"unknown method {name!r} (choose from {METHOD_NAMES}){extra}")


@dataclass(frozen=True)
class ExperimentConfig:
    method: str = "MTDAgger-TN"
    rounds: int = 10
    budget_per_round: int = 36
    initial_demos_per_task: int = 3
    eval_episodes: int = 50
    bc_level_stride: int = 1
    master_seed: int = 0
    suite: SuiteConfig = field(default_factory=lambda: SuiteConfig(num_tasks=12))
    epsilon_start: float = 0.5
    epsilon_decay: float = 0.5
    epsilon_min: float = 0.0
    filter_q: float = 0.03
    filter_r0: float = 0.5
    prior_estimate: float = 0.5
    prior_variance: float = 0.25
    temperature: float = 0.5
    n_min: int = 1
    learner_kind: str = "linear"
    optimizer: str = "adam"
    train_steps: int = 1500
    batch_size: int | None = 128
    learning_rate: float = 0.05
    lr_round_decay: float = 1.0
    bc_train_steps: int | None = None
    encoder_dim: int = 16
    embedding_dim: int = 8
    hidden_dim: int = 64

    @property
    def is_dagger(self) -> bool:
        return self.method != "BC"

    @property
    def scheduler_mode(self) -> SchedulerMode:
        if not self.is_dagger:
            raise ValueError("BC has no scheduler mode")
        return _METHOD_MODES[self.method][0]

    @property
    def uses_kalman_need(self) -> bool:
        if not self.is_dagger:
            raise ValueError("BC has no scheduler mode")
        return _METHOD_MODES[self.method][1]

    @property
    def bc_steps(self) -> int:
        return self.train_steps if self.bc_train_steps is None else self.bc_train_steps


# section -> key -> (attribute path, type)
_SCHEMA: dict[str, dict[str, tuple[str, type]]] = {
    "run": {
        "method": ("method", str),
        "rounds": ("rounds", int),
        "budget_per_round": ("budget_per_round", int),
        "initial_demos_per_task": ("initial_demos_per_task", int),
        "eval_episodes": ("eval_episodes", int),
        "bc_level_stride": ("bc_level_stride", int),
        "master_seed": ("master_seed", int),
    },
    "suite": {
        "num_tasks": ("suite.num_tasks", int),
        "profile": ("suite.profile", str),
        "seed": ("suite.seed", int),
        "state_dim": ("suite.state_dim", int),
        "horizon": ("suite.horizon", int),
        "success_radius": ("suite.success_radius", float),
        "process_noise": ("suite.process_noise", float),
    },
    "epsilon": {
        "start": ("epsilon_start", float),
        "decay": ("epsilon_decay", float),
        "floor": ("epsilon_min", float),
    },
    "filter": {
        "q": ("filter_q", float),
        "r0": ("filter_r0", float),
        "prior_estimate": ("prior_estimate", float),
        "prior_variance": ("prior_variance", float),
    },
    "scheduler": {
        "temperature": ("temperature", float),
        "n_min": ("n_min", int),
    },
    "training": {
        "learner": ("learner_kind", str),
        "optimizer": ("optimizer", str),
        "steps": ("train_steps", int),
        "batch_size": ("batch_size", int),
        "learning_rate": ("learning_rate", float),
        "lr_round_decay": ("lr_round_decay", float),
        "bc_steps": ("bc_train_steps", int),
        "encoder_dim": ("encoder_dim", int),
        "embedding_dim": ("embedding_dim", int),
        "hidden_dim": ("hidden_dim", int),
    },
}

# Desk-scale default plus analogs of the three benchmark-scale setups.
PRESETS: dict[str, dict[str, dict]] = {
    "default-12": {
        "run": {"rounds": 10, "budget_per_round": 36, "initial_demos_per_task": 3,
                "eval_episodes": 50},
        "suite": {"num_tasks": 12, "profile": "three-tier", "seed": 7, "horizon": 12},
        "training": {"learner": "mlp", "steps": 2000, "batch_size": 128,
                     "learning_rate": 0.001, "lr_round_decay": 0.95, "hidden_dim": 160},
    },
    "metaworld-state-analog": {
        "run": {"rounds": 10, "budget_per_round": 108, "initial_demos_per_task": 3,
                "eval_episodes": 50},
        "suite": {"num_tasks": 36, "profile": "three-tier", "seed": 7},
        "scheduler": {"n_min": 1},
        "training": {"learner": "mlp", "batch_size": 1024, "learning_rate": 3e-4},
    },
    "metaworld-pixel-analog": {
        "run": {"rounds": 10, "budget_per_round": 720, "initial_demos_per_task": 40,
                "eval_episodes": 50},
        "suite": {"num_tasks": 36, "profile": "three-tier", "seed": 7},
        "scheduler": {"n_min": 1},
        "training": {"learner": "mlp", "batch_size": 1024, "learning_rate": 3e-4},
    },
    "isaac-drawer-analog": {
        "run": {"rounds": 10, "budget_per_round": 330, "initial_demos_per_task": 3,
                "eval_episodes": 50},
        "suite": {"num_tasks": 11, "profile": "three-tier", "seed": 7},
        "scheduler": {"n_min": 5},
        "training": {"learner": "mlp", "batch_size": 256, "learning_rate": 1e-4},
    },
}


def _reject_unknown(kind: str, name: str, known) -> None:
    hint = difflib.get_close_matches(name, list(known), n=1)
    extra = f"; did you mean {hint[0]!r}?" if hint else ""
    raise ParseError(f"unknown {kind} {name!r}{extra}")


def _merge(base: dict[str, dict], extra: dict[str, dict]) -> dict[str, dict]:
    out = {sec: dict(vals) for sec, vals in base.items()}
    for sec, vals in extra.items():
        out.setdefault(sec, {}).update(vals)
    return out


def _check_sections(data: dict) -> None:
    for sec, vals in data.items():
        if sec not in _SCHEMA:
            _reject_unknown("config section", sec, _SCHEMA)
        if not isinstance(vals, dict):
            raise ParseError(f"section [{sec}] must be a table of keys")
        for key in vals:
            if key not in _SCHEMA[sec]:
                _reject_unknown(f"key in [{sec}]", key, _SCHEMA[sec])


def _coerce(section: str, key: str, value):
    _, typ = _SCHEMA[section][key]
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"[{section}] {key} must be an integer, got {value!r}")
        return int(value)
    if not isinstance(value, typ):
        raise ParseError(f"[{section}] {key} must be {typ.__name__}, got {value!r}")
    return value


def _build(data: dict[str, dict]) -> ExperimentConfig:
    _check_sections(data)
    top: dict = {}
    suite_kwargs: dict = {}
    for sec, vals in data.items():
        for key, value in vals.items():
            attr, _ = _SCHEMA[sec][key]
            value = _coerce(sec, key, value)
            if attr.startswith("suite."):
                suite_kwargs[attr.split(".", 1)[1]] = value
            else:
                top[attr] = value
    if "method" in top:
        top["method"] = canonical_method(top["method"])
    if "num_tasks" not in suite_kwargs:
        suite_kwargs["num_tasks"] = 12
    return ExperimentConfig(suite=SuiteConfig(**suite_kwargs), **top)


def parse_override(text: str) -> tuple[str, str, object]:
    """Parse one --set override of the form section.key=value."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ParseError(f"override must look like section.key=value, got {text!r}")
    path, raw = text.split("=", 1)
    sec, key = path.split(".", 1)
    sec, key, raw = sec.strip(), key.strip(), raw.strip()
    if sec not in _SCHEMA:
        _reject_unknown("config section", sec, _SCHEMA)
    if key not in _SCHEMA[sec]:
        _reject_unknown(f"key in [{sec}]", key, _SCHEMA[sec])
    typ = _SCHEMA[sec][key][1]
    try:
        value: object = typ(raw) if typ is not bool else raw.lower() in ("1", "true", "yes")
    except ValueError as exc:
        raise ParseError(f"cannot parse {raw!r} as {typ.__name__} for {path}") from exc
    return sec, key, value


def parse_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: list[str] | None = None,
) -> ExperimentConfig:
    """Resolve preset -> file -> overrides into a validated config."""
    if preset is None and path is None:
        preset = "default-12"
    data: dict[str, dict] = {}
    if preset is not None:
        if preset not in PRESETS:
            _reject_unknown("preset", preset, PRESETS)
        data = _merge(data, PRESETS[preset])
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        _check_sections(loaded)
        data = _merge(data, loaded)
    for item in overrides or []:
        sec, key, value = parse_override(item)
        data.setdefault(sec, {})[key] = value
    config = _build(data)
    validate_config(config)
    return config


def validate_config(config: ExperimentConfig) -> None:
    s = config.suite
    checks = [
        (config.method in METHOD_NAMES, f"method must be one of {METHOD_NAMES}"),
        (config.rounds >= 0, "rounds must be >= 0"),
        (config.budget_per_round >= 1, "budget_per_round must be >= 1"),
        (config.initial_demos_per_task >= 1, "initial_demos_per_task must be >= 1"),
        (config.eval_episodes >= 0, "eval_episodes must be >= 0"),
        (config.bc_level_stride >= 1, "bc_level_stride must be >= 1"),
        (config.master_seed >= 0, "master_seed must be >= 0"),
        (0.0 <= config.epsilon_start <= 1.0, "epsilon start must be in [0, 1]"),
        (config.epsilon_decay >= 0.0, "epsilon decay must be >= 0"),
        (0.0 <= config.epsilon_min <= 1.0, "epsilon floor must be in [0, 1]"),
        (config.filter_q >= 0.0, "filter q must be >= 0"),
        (config.filter_r0 > 0.0, "filter r0 must be > 0"),
        (0.0 <= config.prior_estimate <= 1.0, "prior_estimate must be in [0, 1]"),
        (config.prior_variance > 0.0, "prior_variance must be > 0"),
        (config.temperature > 0.0, "temperature must be > 0"),
        (config.n_min >= 0, "n_min must be >= 0"),
        (config.learner_kind in LEARNER_KINDS, f"learner must be one of {LEARNER_KINDS}"),
        (config.optimizer in ("adam", "sgd"), "optimizer must be adam or sgd"),
        (config.train_steps >= 0, "training steps must be >= 0"),
        (config.batch_size is None or config.batch_size >= 1, "batch_size must be >= 1"),
        (config.learning_rate >= 0.0, "learning_rate must be >= 0"),
        (0.0 < config.lr_round_decay <= 1.0, "lr_round_decay must be in (0, 1]"),
        (config.bc_train_steps is None or config.bc_train_steps >= 0, "bc_steps must be >= 0"),
        (config.encoder_dim >= 1, "encoder_dim must be >= 1"),
        (config.embedding_dim >= 1, "embedding_dim must be >= 1"),
        (config.hidden_dim >= 1, "hidden_dim must be >= 1"),
        (s.num_tasks >= 1, "suite num_tasks must be >= 1"),
        (s.profile in TIER_TABLE, f"suite profile must be one of {tuple(TIER_TABLE)}"),
        (s.seed >= 0, "suite seed must be >= 0"),
        (s.state_dim >= 1, "suite state_dim must be >= 1"),
        (s.horizon >= 1, "suite horizon must be >= 1"),
        (s.success_radius > 0.0, "suite success_radius must be > 0"),
        (s.process_noise >= 0.0, "suite process_noise must be >= 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise ValidationError(message)
    if config.rounds > 0 and config.is_dagger:
        if config.budget_per_round < s.num_tasks * config.n_min:
            raise ValidationError(
                f"budget_per_round {config.budget_per_round} < num_tasks {s.num_tasks} "
                f"x n_min {config.n_min}"
            )


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return '"' + str(value).replace("\\", "\\\\").replace('"', '\\"') + '"'


def serialize_config(config: ExperimentConfig) -> str:
    """Render the fully-resolved config as TOML (parse -> serialize fixpoint)."""
    suite = config.suite
    values = {
        "run": {
            "method": config.method,
            "rounds": config.rounds,
            "budget_per_round": config.budget_per_round,
            "initial_demos_per_task": config.initial_demos_per_task,
            "eval_episodes": config.eval_episodes,
            "bc_level_stride": config.bc_level_stride,
            "master_seed": config.master_seed,
        },
        "suite": {
            "num_tasks": suite.num_tasks,
            "profile": suite.profile,
            "seed": suite.seed,
            "state_dim": suite.state_dim,
            "horizon": suite.horizon,
            "success_radius": suite.success_radius,
            "process_noise": suite.process_noise,
        },
        "epsilon": {
            "start": config.epsilon_start,
            "decay": config.epsilon_decay,
            "floor": config.epsilon_min,
        },
        "filter": {
            "q": config.filter_q,
            "r0": config.filter_r0,
            "prior_estimate": config.prior_estimate,
            "prior_variance": config.prior_variance,
        },
        "scheduler": {"temperature": config.temperature, "n_min": config.n_min},
        "training": {
            "learner": config.learner_kind,
            "optimizer": config.optimizer,
            "steps": config.train_steps,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "lr_round_decay": config.lr_round_decay,
            "bc_steps": config.bc_train_steps,
            "encoder_dim": config.encoder_dim,
            "embedding_dim": config.embedding_dim,
            "hidden_dim": config.hidden_dim,
        },
    }
    lines: list[str] = []
    for sec in _SCHEMA:
        lines.append(f"[{sec}]")
        for key in _SCHEMA[sec]:
            value = values[sec][key]
            if value is None:
                continue  # unset optionals keep their in-code default
            lines.append(f"{key} = {_fmt_value(value)}")
        lines.append("")
    return "\n".join(lines)


def with_method_and_seed(config: ExperimentConfig, method: str, seed: int) -> ExperimentConfig:
    cfg = replace(config, method=canonical_method(method), master_seed=seed)
    validate_config(cfg)
    return cfg
