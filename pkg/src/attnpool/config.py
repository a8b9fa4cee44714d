"""Run configuration: line-oriented `key = value` files with sections.

Format: `#` starts a comment, `[section]` opens a section, and each
setting is one `key = value` line.  Keys resolve to `section.key`.
Unknown keys are rejected so typos fail loudly, and every run serializes
its fully resolved config next to its outputs.  The ATTNPOOL_SEED
environment variable overrides all seed keys; command-line overrides
(`--set section.key=value`) are applied last.
"""

from __future__ import annotations

import os


class ConfigError(ValueError):
    """Unknown key, bad syntax, or unparsable value."""


TASK_KEYS = {
    "n1": int, "n2": int, "f": int, "classes": int,
    "train_samples": int, "val_samples": int,
    "signal_strength": float, "clutter_classes": int,
    "seed": int, "multi_label": bool, "pose": bool,
}
TRAIN_KEYS = {
    "head": str, "rank": int, "lr": float, "momentum": float,
    "weight_decay": float, "batch_size": int, "epochs": int,
    "seed": int, "lambda_pose": float, "loss": str,
    "hdim": int, "sketch_dim": int, "use_bias": bool,
}
KNOWN_KEYS = {f"task.{k}": t for k, t in TASK_KEYS.items()}
KNOWN_KEYS.update({f"train.{k}": t for k, t in TRAIN_KEYS.items()})

DEFAULTS = {
    "task.n1": 7, "task.n2": 7, "task.f": 32, "task.classes": 8,
    "task.train_samples": 2000, "task.val_samples": 500,
    "task.signal_strength": 3.0, "task.clutter_classes": 4,
    "task.seed": 7, "task.multi_label": False, "task.pose": False,
    "train.head": "attention", "train.rank": 1, "train.lr": 0.03,
    "train.momentum": 0.9, "train.weight_decay": 1e-4,
    "train.batch_size": 32, "train.epochs": 50, "train.seed": 0,
    "train.lambda_pose": 0.1, "train.loss": "softmax",
    "train.hdim": 128, "train.sketch_dim": 64, "train.use_bias": False,
}


def _coerce(key: str, raw: str):
    typ = KNOWN_KEYS[key]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from exc


def parse_config_text(text: str) -> dict:
    out = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        full = f"{section}.{key.strip()}" if section else key.strip()
        if full not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {full!r}")
        out[full] = _coerce(full, raw)
    return out


def resolve(path=None, overrides=(), env=None) -> dict:
    """defaults < config file < ATTNPOOL_SEED < --set overrides."""
    env = os.environ if env is None else env
    cfg = dict(DEFAULTS)
    if path is not None:
        with open(path) as fh:
            cfg.update(parse_config_text(fh.read()))
    if "ATTNPOOL_SEED" in env:
        try:
            seed = int(env["ATTNPOOL_SEED"])
        except ValueError as exc:
            raise ConfigError(f"ATTNPOOL_SEED is not an integer: {env['ATTNPOOL_SEED']!r}") from exc
        cfg["task.seed"] = seed
        cfg["train.seed"] = seed
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    return cfg


def serialize(cfg: dict) -> str:
    """Stable `key = value` rendering of a resolved config."""
    lines = []
    for key in sorted(cfg):
        lines.append(f"{key} = {cfg[key]}")
    return "\n".join(lines) + "\n"
