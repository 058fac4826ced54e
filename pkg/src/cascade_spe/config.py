"""Run configuration documents (YAML or JSON) and provenance records."""

from __future__ import annotations

import hashlib
import json
import platform
import re
from dataclasses import dataclass, field
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import jsonschema
import numpy as np
import scipy
import yaml

from .fileio import FileFormatError, dumps, sha256_file
from .model import PRESETS, RateParams

CONFIG_VERSION = 1
TOOL_NAME = "cascade_spe"


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def load_schema() -> dict:
    text = resources.files(__package__).joinpath("schemas/run_config.schema.json").read_text()
    return json.loads(text)


class ConfigError(FileFormatError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``4e6`` and ``4.0e6`` as floats (YAML 1.2 style)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?|\.[0-9_]+(?:[eE][-+]?[0-9]+)?"
               r"|[0-9][0-9_]*[eE][-+]?[0-9]+|[-+]?\.(?:inf|Inf|INF)|\.(?:nan|NaN|NAN))$"),
    list("-+0123456789."))


@dataclass(frozen=True)
class RunConfig:
    document: dict
    path: str | None = None
    hash: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "hash", settings_hash(self.document))

    def section(self, name: str) -> dict:
        return dict(self.document.get(name, {}))


def settings_hash(settings) -> str:
    return hashlib.sha256(dumps(settings).encode()).hexdigest()


def _yaml_line(text: str, path_parts) -> int | None:
    """Line (1-based) of the node at ``path_parts`` in a YAML document."""
    try:
        node = yaml.compose(text, Loader=_Loader)
    except yaml.YAMLError:
        return None
    line = node.start_mark.line + 1 if node is not None else None
    for part in path_parts:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == part:
                    node = v
                    break
            else:
                # missing or unknown key: point at the enclosing mapping
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
        else:
            return line
        line = node.start_mark.line + 1
    return line


def validate_document(doc, text: str = "", path=None) -> RunConfig:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        line = _yaml_line(text, list(err.absolute_path)) if text else None
        if err.validator == "additionalProperties":
            # point at the offending key itself
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            if extra and text:
                line = _yaml_line(text, list(err.absolute_path) + [extra[0]]) or line
        raise ConfigError(f"field {where}: {err.message}", path, line)
    return RunConfig(doc, None if path is None else str(path))


def load_config(path) -> RunConfig:
    """Parse and schema-validate a YAML or JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config ({exc.strerror})", path) from None
    try:
        doc = yaml.load(text, Loader=_Loader)  # JSON is a subset of YAML
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"not valid YAML/JSON: {getattr(exc, 'problem', exc)}", path,
                          None if mark is None else mark.line + 1) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping", path, 1)
    return validate_document(doc, text, path)


def params_from_section(section: dict | None, default: str = "device") -> RateParams:
    if not section:
        return PRESETS[default]
    if "preset" in section:
        return PRESETS[section["preset"]]
    return RateParams.from_lifetimes(section["tau_x_ns"], section["tau_xx_ns"],
                                     section["qy_x"], section["qy_xx"])


def provenance_record(command: str, settings: dict, seed=None, inputs=(),
                      config: RunConfig | None = None) -> dict:
    """Deterministic record of how an output was made (no clock, no output path)."""
    rec = {
        "tool": TOOL_NAME,
        "tool_version": tool_version(),
        "command": command,
        "settings_hash": settings_hash(settings),
        "config_hash": None if config is None else config.hash,
        "seed": seed,
        "inputs": [{"path": Path(p).name, "sha256": sha256_file(p)} for p in inputs],
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "scipy": scipy.__version__},
    }
    return rec
