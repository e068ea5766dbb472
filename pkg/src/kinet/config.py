"""Flat text run configuration: dotted keys, `key = value` lines.

The format is deliberately diff-friendly: one assignment per line, `#`
comments, no nesting. Every key is declared in a schema with its converter
and default; anything undeclared is a hard error so typos cannot silently
fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .baselines import DLSConfig, SamplerConfig
from .kinematics import DHTable, MountTransform, default_table
from .losses import LossWeights
from .predictor import TrainConfig


class ConfigError(ValueError):
    """Malformed or unknown configuration input (CLI exit code 2)."""


def _floats6(text: str) -> tuple:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 6:
        raise ConfigError(f"expected 6 comma-separated numbers, got {len(parts)}")
    return tuple(parts)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# key -> (converter, default). Defaults are expressed as strings through the
# same converters so the file format round-trips exactly.
SCHEMA = {
    "data.n": (int, 1250),
    "data.seed": (int, 0),
    "split.train": (float, 0.8),
    "split.val": (float, 0.1),
    "split.test": (float, 0.1),
    "split.seed": (int, 0),
    "table.a": (_floats6, None),
    "table.d": (_floats6, None),
    "table.alpha": (_floats6, None),
    "mount.post_z": (float, 0.4),
    "train.case": (int, 2),
    "train.epochs": (int, None),
    "train.batch_size": (int, 32),
    "train.lr": (float, 1e-3),
    "train.seed": (int, 0),
    "train.dropout_rate": (float, 0.05),
    "train.acc_every": (int, 10),
    "train.acc_cap": (int, 200),
    "loss.delta_illroot": (float, 1.0),
    "loss.delta_outdom": (float, 1.0),
    "loss.delta_illsolu": (float, 1.0),
    "loss.delta_idesolu": (float, 1.0),
    "loss.delta_pre_error": (float, 1.0),
    "loss.delta_distance": (float, 0.5),
    "loss.delta_orien": (float, 0.5),
    "sampler.half_x": (float, 5.0),
    "sampler.half_y": (float, 5.0),
    "sampler.heading": (str, "uniform"),
    "sampler.ebs_radial_factor": (float, 0.7),
    "sampler.ebs_sigma": (float, 1.0),
    "sampler.ebs_heading_jitter_deg": (float, 15.0),
    "sampler.seed": (int, 0),
    "dls.lam": (float, 0.05),
    "dls.pos_tol": (float, 1e-4),
    "dls.rot_tol": (float, 1e-3),
    "dls.max_iters": (int, 500),
    "dls.seed_policy": (str, "fixed"),
    "bench.tasks": (int, 300),
    "bench.repeats": (int, 3),
    "bench.seed": (int, 0),
    "bench.cap_ms": (float, 30_000.0),
    "predict.max_attempts": (int, 20),
    "out.dir": (str, "runs"),
}


def parse_pairs(text: str) -> dict:
    """Raw key -> string map from config text; syntax errors carry line numbers."""
    pairs: dict = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if not key or not val:
            raise ConfigError(f"line {ln}: empty key or value")
        if key in pairs:
            raise ConfigError(f"line {ln}: duplicate key {key!r}")
        pairs[key] = val
    return pairs


@dataclass
class RunConfig:
    """Everything a subcommand needs, resolved before it runs."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def table(self) -> DHTable:
        a, d, al = self["table.a"], self["table.d"], self["table.alpha"]
        given = [v is not None for v in (a, d, al)]
        if not any(given):
            return default_table()
        if not all(given):
            raise ConfigError("table.a, table.d, table.alpha must be given together")
        return DHTable(a=a, d=d, alpha=al)

    def mount(self) -> MountTransform:
        z = self["mount.post_z"]
        if z == 0.4:
            return MountTransform()
        return MountTransform(((1.0, 0.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0),
                               (0.0, 0.0, 1.0, z), (0.0, 0.0, 0.0, 1.0)))

    def loss_weights(self, U: int = 1) -> LossWeights:
        return LossWeights(
            delta_illroot=self["loss.delta_illroot"],
            delta_outdom=self["loss.delta_outdom"],
            delta_illsolu=self["loss.delta_illsolu"],
            delta_idesolu=self["loss.delta_idesolu"],
            delta_pre_error=self["loss.delta_pre_error"],
            delta_distance=self["loss.delta_distance"],
            delta_orien=self["loss.delta_orien"],
            U=U)

    def train_config(self, kind: str, U: int = 1) -> TrainConfig:
        return TrainConfig(
            kind=kind,
            case=self["train.case"],
            epochs=self["train.epochs"],
            batch_size=self["train.batch_size"],
            learning_rate=self["train.lr"],
            seed=self["train.seed"],
            weights=self.loss_weights(U),
            dropout_rate=self["train.dropout_rate"],
            acc_every=self["train.acc_every"],
            acc_train_cap=self["train.acc_cap"])

    def sampler(self, heading: str | None = None) -> SamplerConfig:
        return SamplerConfig(
            half_x=self["sampler.half_x"],
            half_y=self["sampler.half_y"],
            heading=heading or self["sampler.heading"],
            ebs_radial_factor=self["sampler.ebs_radial_factor"],
            ebs_sigma=self["sampler.ebs_sigma"],
            ebs_heading_jitter_deg=self["sampler.ebs_heading_jitter_deg"],
            seed=self["sampler.seed"])

    def dls(self) -> DLSConfig:
        return DLSConfig(
            lam=self["dls.lam"],
            pos_tol=self["dls.pos_tol"],
            rot_tol=self["dls.rot_tol"],
            max_iters=self["dls.max_iters"],
            seed_policy=self["dls.seed_policy"])

    def manifest_lines(self) -> list:
        out = []
        for key in sorted(SCHEMA):
            v = self.values[key]
            if v is None:
                continue
            if isinstance(v, tuple):
                out.append(f"{key} = " + ",".join(f"{x:.17g}" for x in v))
            elif isinstance(v, float):
                out.append(f"{key} = {v:.17g}")
            else:
                out.append(f"{key} = {v}")
        return out


def load_config(text: str = "", overrides: dict | None = None) -> RunConfig:
    """Resolve text plus override pairs against the schema; unknown keys fail."""
    pairs = parse_pairs(text)
    pairs.update(overrides or {})
    values: dict = {}
    for key, raw in pairs.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown configuration key {key!r}")
        conv, _ = SCHEMA[key]
        try:
            values[key] = conv(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from exc
    for key, (_, default) in SCHEMA.items():
        values.setdefault(key, default)
    if not math.isclose(values["split.train"] + values["split.val"] + values["split.test"], 1.0):
        raise ConfigError("split fractions must sum to 1")
    return RunConfig(values=values)
