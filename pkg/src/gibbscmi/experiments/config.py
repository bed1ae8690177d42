"""YAML experiment configs: loading, defaults, strict validation and hashing."""

import copy
import hashlib
import json
from importlib import resources
from pathlib import Path

import jsonschema
import yaml

from ..errors import ConfigError

EXPERIMENTS = (
    "cmi-scan",
    "bp-verify",
    "bp-truncate",
    "efflog-verify",
    "enthal-locality",
    "ptp-verify",
    "continuity-verify",
    "recovery-scan",
    "eof-scan",
    "mi-localize",
    "learn-1d",
    "appendix-demo",
)

LATTICE_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"enum": ["chain", "grid"]},
        "n": {"type": "integer", "minimum": 1},
        "rows": {"type": "integer", "minimum": 1},
        "cols": {"type": "integer", "minimum": 1},
        "periodic": {"type": "boolean"},
        "local_dim": {"type": "integer", "minimum": 2},
    },
    "required": ["type"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"type": {"const": "chain"}}}, "then": {"required": ["n"]}},
        {"if": {"properties": {"type": {"const": "grid"}}}, "then": {"required": ["rows", "cols"]}},
    ],
}

MODEL_SCHEMA = {
    "type": "object",
    "properties": {
        "model": {"enum": ["tfim", "ising", "heisenberg", "random_expdecay", "custom"]},
        "J": {"type": "number"},
        "g": {"type": "number"},
        "h": {"type": "number"},
        "J0bar": {"type": "number", "exclusiveMinimum": 0},
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "k": {"type": "number"},
        "seed": {"type": "integer", "minimum": 0},
        "terms": {"type": ["string", "array"]},
    },
    "required": ["model"],
    "additionalProperties": False,
}


def _json_type(value):
    if isinstance(value, bool):
        return {"type": "boolean"}
    if isinstance(value, int):
        return {"type": "integer"}
    if isinstance(value, float):
        return {"type": "number"}
    if isinstance(value, str):
        return {"type": "string"}
    if isinstance(value, (list, tuple)):
        return {"type": "array"}
    if isinstance(value, dict):
        return {"type": "object"}
    return {}  # None: anything (usually "unset")


def params_schema(defaults):
    return {
        "type": "object",
        "properties": {k: _json_type(v) for k, v in defaults.items()},
        "additionalProperties": False,
    }


def top_schema(experiment, param_defaults):
    return {
        "type": "object",
        "properties": {
            "experiment": {"const": experiment},
            "seed": {"type": "integer", "minimum": 0},
            "lattice": LATTICE_SCHEMA,
            "model": MODEL_SCHEMA,
            "betas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
            "params": params_schema(param_defaults),
            "dense_cap": {"type": "integer", "minimum": 2},
        },
        "required": ["experiment"],
        "additionalProperties": False,
    }


def default_config_path(experiment):
    return resources.files("gibbscmi.experiments") / "configs" / f"{experiment}.yaml"


def read_yaml(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config-unreadable", str(exc), path=str(path)) from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config-syntax", str(exc), path=str(path)) from exc
    if not isinstance(data, dict):
        raise ConfigError("config-syntax", "top level must be a mapping", path=str(path))
    return data


def resolve(raw, experiment, defaults, seed=None):
    """Validate ``raw`` against the experiment schema and fill in defaults.

    ``defaults`` is the runner's full default config; ``raw`` may override any
    subset of it.  Returns a new dict with every key present.
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError("unknown-experiment", experiment)
    raw = dict(raw)
    raw.setdefault("experiment", experiment)
    schema = top_schema(experiment, defaults["params"])
    try:
        jsonschema.validate(raw, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError("schema-violation", f"{where}: {exc.message}", path=where) from exc
    cfg = copy.deepcopy(defaults)
    for key, value in raw.items():
        if key == "params":
            cfg["params"].update(value)
        else:
            cfg[key] = value
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
