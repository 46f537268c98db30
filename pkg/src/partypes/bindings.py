"""Extern values for a program run, and the JSON bindings file format.

A bindings file looks like::

    {"size-defaults": {"iterations": 2},
     "per-size": {"4": {"inputVector": [0.0, 1.0, 2.0, 3.0]}}}
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .core import base_kind, check_value, is_array, show_type, show_value, strip_refinements
from .errors import CheckError, PreconditionError


@dataclass(frozen=True)
class Bindings:
    size: int
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.size, int) or self.size < 1:
            raise PreconditionError(f"size must be a positive integer, got {self.size!r}")


def coerce(raw, datatype):
    """Turn a JSON number/list into a runtime value shaped by ``datatype``."""
    if isinstance(raw, bool) or raw is None:
        raise PreconditionError(f"unsupported binding value {raw!r}")
    if isinstance(raw, list):
        elem = None
        if datatype is not None:
            arr = strip_refinements(datatype)
            elem = getattr(arr, "elem", None)
        return tuple(coerce(x, elem) for x in raw)
    if isinstance(raw, (int, float)):
        if datatype is not None and base_kind(datatype) == "float":
            return float(raw)
        return raw
    raise PreconditionError(f"unsupported binding value {raw!r}")


def validate(program, bindings: Bindings):
    """Every declared extern is bound and inhabits its declared datatype."""
    env = {"size": bindings.size, **bindings.values}
    for name, d in program.externs:
        if name not in bindings.values:
            raise PreconditionError(f"missing binding for extern '{name}' at size {bindings.size}")
        if d is None:
            continue
        try:
            ok = check_value(bindings.values[name], d, env)
        except CheckError as e:
            raise PreconditionError(str(e)) from e
        if not ok:
            v = bindings.values[name]
            shown = f"array of length {len(v)}" if is_array(v) else show_value(v)
            raise PreconditionError(f"extern '{name}' = {shown} does not inhabit {show_type(d)}")


class BindingsFile:
    def __init__(self, defaults=None, per_size=None):
        self.defaults = defaults or {}
        self.per_size = {int(k): v for k, v in (per_size or {}).items()}

    @classmethod
    def from_json(cls, data):
        if not isinstance(data, dict):
            raise PreconditionError("bindings file must hold a JSON object")
        unknown = set(data) - {"size-defaults", "per-size"}
        if unknown:
            raise PreconditionError(f"unknown keys in bindings file: {sorted(unknown)}")
        defaults = data.get("size-defaults", {})
        per_size = data.get("per-size", {})
        if not isinstance(defaults, dict) or not isinstance(per_size, dict):
            raise PreconditionError("'size-defaults' and 'per-size' must be objects")
        try:
            return cls(defaults, per_size)
        except ValueError as e:
            raise PreconditionError(f"bad size key in 'per-size': {e}") from e

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise PreconditionError(f"cannot read bindings {path}: {e}") from e
        return cls.from_json(data)

    def for_size(self, size, program=None) -> Bindings:
        raw = {**self.defaults, **self.per_size.get(size, {})}
        types = dict(program.externs) if program is not None else {}
        return Bindings(size, {k: coerce(v, types.get(k)) for k, v in raw.items()})
