"""Pipeline configuration: documented defaults, deep merge, strict validation."""

from __future__ import annotations

import copy
import json
from pathlib import Path

# Every key the pipeline understands, with its default. Unknown keys are
# rejected with their dotted path; None defaults accept any value of the
# type noted in the comment.
DEFAULT_CONFIG: dict = {
    "seed": 0,
    "out_dir": "runs/default",
    "ingest": {
        "path": None,          # str; None selects the shipped fixture corpus
        "format": "jsonl",     # jsonl | csv
        "column_map": None,    # dict for csv ingestion; None = ROW_ID/CATEGORY/TEXT
    },
    "clean": {
        "lowercase": True,
        "min_token_count": 1,
        "preserve_deid_markers": True,
        "abbreviations_path": None,  # str; None selects the shipped list
    },
    "split": {
        "train": 0.8,
        "validation": 0.1,
        "test": 0.1,
    },
    "train": {
        "lm": {"enabled": True, "order": 2, "alpha": 0.01},
        "gan": {
            "enabled": True,
            "epochs": 10,
            "batch_size": 16,
            "d_steps": 1,
            "g_steps": 1,
            "d_learning_rate": 0.5,
            "g_learning_rate": 0.15,
            "generator_order": 2,
            "discriminator_order": 2,
            "max_length": 20,
            "nll_order": 2,
            "nll_alpha": 0.01,
            "eval_samples": 32,
            "max_sequences": 64,   # cap on real training sequences
        },
        "mixture": {"enabled": True, "k": 3, "alpha": 0.01, "iterations": 15, "order": 1},
    },
    "generate": {
        "count": 12,               # per method
        "methods": ["template", "sample", "gan", "mixture", "llm"],
        "sampler": {"temperature": 1.0, "top_k": "all", "top_p": None, "max_length": 60},
        "llm": {
            "provider": "mock",    # mock | http
            "endpoint": "",
            "auth_token": "",      # CLINSYNTH_API_TOKEN env var overrides this
            "model": "default",
            "temperature": 0.7,
            "max_tokens": 512,
            "max_retries": 2,
            "max_inflight": 4,
            "fixtures_dir": None,  # canned mock completions
            "conditions": [
                "anxiety and panic attacks",
                "shortness of breath and wheezing",
                "persistent lower back pain",
                "type 2 diabetes needing a follow-up review",
                "memory loss and confusion",
                "severe abdominal pain and nausea",
            ],
        },
    },
    "evaluate": {
        "perplexity": {"enabled": True},
        "bleu": {
            "enabled": True,
            "max_order": 4,
            "smooth": False,
            "max_references": 16,
            "max_candidates": 40,
        },
        "wer": {
            "enabled": True,
            "max_references": 30,
            "channels": {
                "initial": {"substitution": 0.10, "deletion": 0.025, "insertion": 0.025},
                "finetuned": {"substitution": 0.03, "deletion": 0.01, "insertion": 0.01},
            },
        },
    },
    "report": {"bucket_width": 50},
}

GENERATE_METHODS = ("template", "sample", "gan", "mixture", "llm")

# Subtrees whose contents are free-form rather than schema keys.
_OPEN_SUBTREES = {
    ("ingest", "column_map"),
    ("evaluate", "wer", "channels"),
}


class ConfigError(ValueError):
    """Configuration rejected before any pipeline work starts."""


def _merge(defaults: dict, overrides: dict, path: tuple[str, ...]) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        dotted = ".".join(path + (key,))
        if key not in defaults:
            raise ConfigError(f"unknown config key: {dotted}")
        default = defaults[key]
        if isinstance(default, dict) and path + (key,) not in _OPEN_SUBTREES:
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted} must be a section (object), got {type(value).__name__}")
            merged[key] = _merge(default, value, path + (key,))
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_config(overrides: dict | None = None) -> dict:
    """Merge user overrides over the defaults and cross-check the result."""
    config = _merge(DEFAULT_CONFIG, overrides or {}, ())

    ratios = config["split"]
    total = ratios["train"] + ratios["validation"] + ratios["test"]
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {total}")
    if any(ratios[k] < 0 for k in ("train", "validation", "test")):
        raise ConfigError("split ratios must be nonnegative")

    if config["ingest"]["format"] not in ("jsonl", "csv"):
        raise ConfigError(f"ingest.format must be jsonl or csv, got {config['ingest']['format']!r}")

    methods = config["generate"]["methods"]
    unknown = [m for m in methods if m not in GENERATE_METHODS]
    if unknown:
        raise ConfigError(f"generate.methods contains unknown method(s): {unknown}")

    train = config["train"]
    requirements = {"sample": "lm", "gan": "gan", "mixture": "mixture"}
    for method, trainer in requirements.items():
        if method in methods and not train[trainer]["enabled"]:
            raise ConfigError(
                f"generate method {method!r} requires train.{trainer}.enabled = true"
            )
    if config["evaluate"]["perplexity"]["enabled"] and not train["lm"]["enabled"]:
        raise ConfigError("evaluate.perplexity requires train.lm.enabled = true")
    if config["evaluate"]["bleu"]["enabled"] and not methods:
        raise ConfigError("evaluate.bleu requires at least one generate method")
    if config["generate"]["llm"]["provider"] not in ("mock", "http"):
        raise ConfigError("generate.llm.provider must be mock or http")
    if config["generate"]["llm"]["provider"] == "http" and not config["generate"]["llm"]["endpoint"]:
        raise ConfigError("generate.llm.provider = http requires generate.llm.endpoint")

    for name, channel in config["evaluate"]["wer"]["channels"].items():
        extra = set(channel) - {"substitution", "deletion", "insertion"}
        if extra:
            raise ConfigError(f"evaluate.wer.channels.{name} has unknown rate(s): {sorted(extra)}")

    return config


def load_config(path: str | Path | None) -> dict:
    """Load a JSON config file (or just the defaults when path is None)."""
    if path is None:
        return validate_config({})
    with open(path, encoding="utf-8") as fh:
        try:
            overrides = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from exc
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate_config(overrides)
