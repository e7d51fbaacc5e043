"""Declarative experiment configuration.

A config is a JSON-compatible dict; every field has a default, and every
default that is not pinned by the method itself is recorded in the run
snapshot under ``non_paper_defaults`` so the provenance of each knob stays
auditable.  Seeds cascade from ``seeds.global``: any unset seed (data,
split, model init, per-stage shuffling, frame picks) is derived from it,
so one integer reproduces or varies an entire run.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from freqveil.datagen import SynthesisSpec
from freqveil.frequency import TransformConfig, TransformError
from freqveil.models import OptimizerConfig, OptimizerConfigError

VARIANTS = ("none", "full", "task1", "task2", "task3", "task4", "task5",
            "task6", "gaussian", "tradeoff")

OPTIM_STAGES = ("pretrain_classifier", "pretrain_expression",
                "pretrain_enhancer", "identity_removal", "compensation",
                "utility", "attack", "joint", "joint_enhancer",
                "joint_identity")


class ConfigError(ValueError):
    """Raised with every violation listed at once."""


def default_config() -> dict:
    return {
        "data": {
            "synthesis": {
                "num_identities": 10,
                "num_expressions": 4,
                "clips_per_pair": 5,
                "frames": 16,
                "height": 16,
                "width": 16,
                "channels": 1,
                "identity_pattern_scale": 0.25,
                "expression_amplitude": 0.2,
                "noise_std": 0.03,
                "seed": None,
            },
            "ingest": None,
        },
        "split": {"test_fraction": 0.25, "seed": None},
        "transform": {"family": "haar", "axis": "temporal", "levels": 1,
                      "boundary": "periodic"},
        "models": {
            "classifier_width": 8,
            "enhancer_width": 8,
            "compensator_width": 16,
            "utility_width": 6,
            "utility_restarts": 2,
            "recovery_width": 8,
            "init_seed": None,
        },
        "optim": {
            "pretrain_classifier": {"method": "adam", "learning_rate": 0.03,
                                    "epochs": 12, "batch_size": 64, "seed": None},
            "pretrain_expression": {"method": "adam", "learning_rate": 0.03,
                                    "epochs": 60, "batch_size": 32, "seed": None},
            "pretrain_enhancer": {"method": "adam", "learning_rate": 1e-3,
                                  "epochs": 2, "batch_size": 64, "seed": None},
            "identity_removal": {"method": "adam", "learning_rate": 2e-3,
                                 "epochs": 8, "batch_size": 16, "seed": None},
            "compensation": {"method": "adam", "learning_rate": 1e-3,
                             "epochs": 10, "batch_size": 64, "seed": None},
            "utility": {"method": "adam", "learning_rate": 0.01,
                        "epochs": 10, "batch_size": 4, "seed": None},
            "attack": {"method": "adam", "learning_rate": 1e-3,
                       "epochs": 4, "batch_size": 64, "seed": None},
            "joint": {"method": "adam", "learning_rate": 0.01,
                      "epochs": 14, "batch_size": 4, "seed": None},
            "joint_enhancer": {"method": "sgd", "learning_rate": 0.003,
                               "epochs": 1, "batch_size": 4, "seed": None},
            "joint_identity": {"method": "adam", "learning_rate": 0.03,
                               "epochs": 1, "batch_size": 8, "seed": None},
        },
        "identity_removal": {"loss_cap": 20.0, "ascent_mode": "negated_ce"},
        "seeds": {"global": 0, "shuffle": None, "frame": None},
        "variant": "full",
        "variant_params": {"sigma": 1.5, "kernel_radius": 4, "lambda": 1.0,
                           "joint_warmup_epochs": 8},
        "report_stage_g": True,
    }


def derive_seed(base: int, tag: str) -> int:
    digest = hashlib.sha256(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def _merge(base: dict, override: dict, path: str,
           explicit: set[str], problems: list[str]) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            problems.append(f"unknown config key {here!r}")
            continue
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge(base[key], value, here, explicit, problems)
        else:
            out[key] = copy.deepcopy(value)
            explicit.add(here)
    return out


def _leaf_paths(node, path="") -> list[str]:
    if isinstance(node, dict):
        out = []
        for key, value in node.items():
            here = f"{path}.{key}" if path else key
            out.extend(_leaf_paths(value, here))
        return out
    return [path]


@dataclass
class ExperimentConfig:
    raw: dict
    explicit_paths: set[str] = field(default_factory=set)

    @classmethod
    def from_dict(cls, user: dict | None = None) -> "ExperimentConfig":
        problems: list[str] = []
        explicit: set[str] = set()
        merged = _merge(default_config(), user or {}, "", explicit, problems)
        cfg = cls(raw=merged, explicit_paths=explicit)
        problems.extend(cfg._fill_seeds_and_validate())
        if problems:
            raise ConfigError(
                "invalid configuration:\n  " + "\n  ".join(problems)
            )
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def _fill_seeds_and_validate(self) -> list[str]:
        problems: list[str] = []
        raw = self.raw
        seeds = raw["seeds"]
        if not isinstance(seeds["global"], int):
            problems.append("seeds.global must be an integer")
            return problems
        g = seeds["global"]
        if seeds["shuffle"] is None:
            seeds["shuffle"] = derive_seed(g, "shuffle")
        if seeds["frame"] is None:
            seeds["frame"] = derive_seed(g, "frame")
        syn = raw["data"]["synthesis"]
        if syn is not None and syn.get("seed") is None:
            syn["seed"] = g
        if raw["split"]["seed"] is None:
            raw["split"]["seed"] = derive_seed(g, "split")
        if raw["models"]["init_seed"] is None:
            raw["models"]["init_seed"] = derive_seed(g, "init")
        for stage, opt in raw["optim"].items():
            if opt.get("seed") is None:
                opt["seed"] = derive_seed(seeds["shuffle"], f"optim:{stage}")

        if raw["data"]["synthesis"] is None and raw["data"]["ingest"] is None:
            problems.append("one of data.synthesis or data.ingest is required")
        if raw["data"]["ingest"] is not None:
            ing = raw["data"]["ingest"]
            if not isinstance(ing, dict) or "path" not in ing or "manifest" not in ing:
                problems.append("data.ingest needs 'path' and 'manifest'")
        try:
            if raw["data"]["synthesis"] is not None:
                self.synthesis_spec().validate()
        except Exception as exc:
            problems.append(f"data.synthesis: {exc}")
        if not (0.0 < raw["split"]["test_fraction"] < 1.0):
            problems.append(
                f"split.test_fraction must lie in (0, 1), got "
                f"{raw['split']['test_fraction']}"
            )
        try:
            self.transform()
        except TransformError as exc:
            problems.append(f"transform: {exc}")
        for stage in OPTIM_STAGES:
            try:
                self.optimizer(stage)
            except OptimizerConfigError as exc:
                problems.append(f"optim.{stage}: {exc}")
        if raw["variant"] not in VARIANTS:
            problems.append(
                f"variant must be one of {VARIANTS}, got {raw['variant']!r}"
            )
        vp = raw["variant_params"]
        if raw["variant"] == "gaussian" and not (vp.get("sigma", 0) > 0):
            problems.append("variant gaussian requires variant_params.sigma > 0")
        if raw["variant"] == "gaussian" and not (vp.get("kernel_radius", 0) >= 1):
            problems.append("variant gaussian requires variant_params.kernel_radius >= 1")
        cap = raw["identity_removal"]["loss_cap"]
        if not (cap > 0):
            problems.append(f"identity_removal.loss_cap must be > 0, got {cap}")
        if raw["identity_removal"]["ascent_mode"] not in ("negated_ce",
                                                          "uniform_target"):
            problems.append(
                "identity_removal.ascent_mode must be negated_ce|uniform_target"
            )
        for key in ("classifier_width", "enhancer_width", "compensator_width",
                    "utility_width", "utility_restarts", "recovery_width"):
            if raw["models"][key] < 1:
                problems.append(f"models.{key} must be >= 1")
        return problems

    def synthesis_spec(self) -> SynthesisSpec | None:
        syn = self.raw["data"]["synthesis"]
        if syn is None:
            return None
        return SynthesisSpec(
            num_identities=syn["num_identities"],
            num_expressions=syn["num_expressions"],
            clips_per_pair=syn["clips_per_pair"],
            frames=syn["frames"], height=syn["height"], width=syn["width"],
            channels=syn["channels"],
            identity_pattern_scale=syn["identity_pattern_scale"],
            expression_amplitude=syn["expression_amplitude"],
            noise_std=syn["noise_std"], seed=syn["seed"],
        )

    def transform(self) -> TransformConfig:
        t = self.raw["transform"]
        return TransformConfig(family=t["family"], axis=t["axis"],
                               levels=t["levels"], boundary=t["boundary"])

    def optimizer(self, stage: str) -> OptimizerConfig:
        opt = self.raw["optim"][stage]
        return OptimizerConfig(method=opt["method"],
                               learning_rate=opt["learning_rate"],
                               epochs=opt["epochs"],
                               batch_size=opt["batch_size"], seed=opt["seed"])

    @property
    def variant(self) -> str:
        return self.raw["variant"]

    @property
    def seeds(self) -> dict:
        return self.raw["seeds"]

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def snapshot(self) -> dict:
        non_paper = sorted(
            p for p in _leaf_paths(default_config())
            if p not in self.explicit_paths
        )
        return {
            "config": self.raw,
            "non_paper_defaults": non_paper,
            "digest": self.digest(),
        }

    def write_snapshot(self, directory: str | Path) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "config_snapshot.json", "w") as fh:
            json.dump(self.snapshot(), fh, sort_keys=True, indent=2)

    @staticmethod
    def verify_snapshot(directory: str | Path) -> "ExperimentConfig":
        """Reload a snapshot and refuse to proceed if its digest does not
        match its stored config."""
        with open(Path(directory) / "config_snapshot.json") as fh:
            snap = json.load(fh)
        cfg = ExperimentConfig(raw=snap["config"], explicit_paths=set())
        if cfg.digest() != snap["digest"]:
            raise ConfigError(
                f"{directory}: config snapshot digest mismatch "
                f"(stored {snap['digest'][:12]}…, recomputed {cfg.digest()[:12]}…)"
            )
        return cfg
