"""Flat ``key = value`` configuration files.

Grammar, one entry per line::

    # comment
    n_channels = 2
    cell_length = 0.5
    couplings = 1, 1
    disorder_support = 0, 1
    disorder_weights = 0.5, 0.5
    log_chart_radius = 1.0
    seed = 12345

    [params]
    n_steps = 100000

Lists are comma separated. Blank lines and ``#`` comments are ignored. Keys
before the optional ``[params]`` header describe the model; keys after it are
command parameters, validated by the command. Unknown model keys are errors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError
from .model import ModelConfig

MODEL_KEYS = {
    "n_channels": "int",
    "cell_length": "float",
    "couplings": "floats",
    "disorder_support": "floats",
    "disorder_weights": "floats",
    "log_chart_radius": "float",
    "seed": "int",
    "allow_zero_coupling": "bool",
}
REQUIRED = ("n_channels", "cell_length")


def parse_value(key, text, kind):
    try:
        if kind == "int":
            return int(text, 0)
        if kind == "float":
            return float(text)
        if kind == "floats":
            return [float(t) for t in text.split(",") if t.strip()]
        if kind == "ints":
            return [int(t, 0) for t in text.split(",") if t.strip()]
        if kind == "bool":
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "str":
            return text.strip()
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {text!r}", key) from None
    raise ConfigError(f"unknown value kind for {key!r}", key)


@dataclass
class ParsedConfig:
    model: dict
    params: dict = field(default_factory=dict)

    @property
    def seed(self):
        return self.model.get("seed", 0)

    def model_config(self):
        m = dict(self.model)
        m.pop("seed", None)
        for key in REQUIRED:
            if key not in m:
                raise ConfigError(f"missing required key {key!r}", key)
        n = m["n_channels"]
        m.setdefault("couplings", [1.0] * n)
        try:
            return ModelConfig(
                n, m["cell_length"], m["couplings"],
                m.get("disorder_support", [0.0, 1.0]),
                m.get("disorder_weights", [0.5, 0.5]),
                m.get("log_chart_radius", 1.0),
                m.get("allow_zero_coupling", False),
            )
        except ValueError as exc:
            raise ConfigError(f"invalid model: {exc}", _guess_key(str(exc))) from None


def _guess_key(message):
    for key in MODEL_KEYS:
        if key in message:
            return key
    return None


def parse_text(text):
    model, params = {}, {}
    section = model
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[params]":
            section = params
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", None)
        key, value = (s.strip() for s in line.split("=", 1))
        if section is model:
            if key not in MODEL_KEYS:
                raise ConfigError(f"unknown config key {key!r}", key)
            model[key] = parse_value(key, value, MODEL_KEYS[key])
        else:
            params[key] = value
    return ParsedConfig(model, params)


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", None) from None


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ", ".join(repr(float(x)) for x in v)
    return repr(v)


def dump(model, params=None):
    """Serialize a model dict (and optional raw parameters) back to the grammar."""
    lines = [f"{k} = {_fmt(v)}" for k, v in model.items()]
    if params:
        lines.append("")
        lines.append("[params]")
        lines.extend(f"{k} = {v}" for k, v in params.items())
    return "\n".join(lines) + "\n"
