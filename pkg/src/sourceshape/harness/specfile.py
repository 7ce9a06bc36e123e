"""Problem definitions read from TOML files.

A file either starts from a builtin example (``base = "e1"``) and overrides
some keys, or defines every field. Expressions are strings::

    name = "blob"
    f = "1"
    u_n = "sin(pi*x)*sin(pi*y)"
    q_e = "1"
    omega_e = "x^2 + y^2 < 0.09"
    omega_0 = "(x-0.2)^2 + y^2 < 0.02"
    sigma = 0.0

    [config]
    alpha0 = 1e-3
    max_iter = 80
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..errors import ConfigurationError
from ..shapeopt import OptimizeConfig
from .problems import ProblemSpec, get_example

__all__ = ["load_spec_file", "spec_from_mapping"]

_FIELDS = ("name", "f", "u_n", "q_e", "omega_e", "omega_0", "sigma", "noise_mode",
           "fine_n", "coarse_n", "description")
_REQUIRED = ("f", "u_n", "q_e", "omega_e", "omega_0")


def spec_from_mapping(data: dict, default_name: str = "custom") -> ProblemSpec:
    data = dict(data)
    unknown = set(data) - set(_FIELDS) - {"base", "config"}
    if unknown:
        raise ConfigurationError(f"unknown keys: {', '.join(sorted(unknown))}")
    cfg_over = data.pop("config", {})
    if not isinstance(cfg_over, dict):
        raise ConfigurationError("[config] must be a table")
    cfg_names = {f.name for f in dataclasses.fields(OptimizeConfig)}
    bad = set(cfg_over) - cfg_names
    if bad:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(bad))}")
    base = data.pop("base", None)
    if base is not None:
        spec = get_example(base)
        config = dataclasses.replace(spec.config, **cfg_over)
        spec = dataclasses.replace(spec, config=config, **data)
    else:
        missing = [k for k in _REQUIRED if k not in data]
        if missing:
            raise ConfigurationError(f"missing keys: {', '.join(missing)}")
        data.setdefault("name", default_name)
        spec = ProblemSpec(config=OptimizeConfig(**cfg_over), **data)
    # surface expression errors now rather than mid-run
    for key in ("f", "u_n", "q_e", "omega_e", "omega_0"):
        try:
            getattr(spec, key)(0.0, 0.0)
        except Exception as exc:
            raise ConfigurationError(f"cannot evaluate {key}: {exc}") from exc
    return spec


def load_spec_file(path) -> ProblemSpec:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot read spec file {path}: {exc}") from exc
    try:
        return spec_from_mapping(data, default_name=path.stem)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
