"""Named configuration presets and run-config files for the CLI.

A run-config file is JSON with up to four sections — "arch", "weights",
"toggles", "train" — whose keys mirror the dataclass fields of ArchConfig,
LossWeights, LossToggles, and TrainConfig exactly.  Unknown sections or keys
are rejected.  Precedence: command-line flag > config file > preset default.
"""

import dataclasses
import json

from .errors import ConfigError
from .models import ArchConfig
from .trainer import TrainConfig, config_from_dict, config_to_dict


def preset(name):
    """A fresh TrainConfig for a named preset."""
    if name == "default":
        return TrainConfig()
    if name == "tuned":
        # best search result: shallower generator, deeper discriminators,
        # much hotter learning rates
        return TrainConfig(
            arch=ArchConfig(
                generator_size=2048,
                discriminator_size=2048,
                generator_hidden_layers=1,
                discriminator_hidden_layers=3,
            ),
            g_lr=0.00495,
            d_lr=0.00885,
            batch_size=32,
            dis_train_amount=1,
        )
    raise ConfigError(f"unknown preset {name!r} (available: default, tuned)")


PRESET_NAMES = ("default", "tuned")


def load_run_config(path, base=None):
    """Merge a JSON run-config file over a base TrainConfig.

    Sections and keys must match the config dataclasses; unknown names raise
    ConfigError naming the offender.
    """
    base = base if base is not None else TrainConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except ValueError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")

    merged = config_to_dict(base)
    extra = set(data) - set(merged)
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    for section, values in data.items():
        if not isinstance(values, dict):
            raise ConfigError(f"section {section!r} must be an object")
        unknown = set(values) - set(merged[section])
        if unknown:
            raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")
        merged[section].update(values)
    return config_from_dict(merged)


def apply_overrides(config, **overrides):
    """Apply non-None flag overrides onto a TrainConfig; returns a new config."""
    train_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    arch_fields = {f.name for f in dataclasses.fields(ArchConfig)}
    cfg = dataclasses.replace(config)
    arch_updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key in arch_fields:
            arch_updates[key] = value
        elif key in train_fields:
            cfg = dataclasses.replace(cfg, **{key: value})
        else:
            raise ConfigError(f"unknown override {key!r}")
    if arch_updates:
        cfg = dataclasses.replace(cfg, arch=dataclasses.replace(cfg.arch, **arch_updates))
    cfg.validate()
    return cfg


def write_effective_config(config, path):
    """Echo the fully resolved config next to a run's outputs."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")
