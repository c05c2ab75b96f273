"""Run configuration: TOML file plus command-line overrides.

Example ``config.toml``::

    fixture = "MP-VAR"
    eps_list = [0.1, 0.05, 0.025, 0.0125]
    p_list = [0.01, 0.02, 0.04]
    checks = ["residual", "boundary", "decay"]
    output = "out"

    [layer1d]
    n = 40001

    [corner2d]
    n = 600

Unknown keys are rejected with the line they appear on.
"""

from __future__ import annotations

import dataclasses
import importlib
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .expansion import ExpansionSettings
from .problem import FIXTURES, SemilinearProblem, builtin_fixture

CHECKS = ("residual", "boundary", "vt0v0", "Qid", "monotone", "sign", "decay", "reference")
DEFAULT_EPS = (0.1, 0.05, 0.025, 0.0125)
DEFAULT_P = (0.01, 0.02, 0.04)


@dataclass
class GridConfig:
    Xi_factor: float = 40.0
    n: int = 40001


@dataclass
class CornerGridConfig:
    R_factor: float = 40.0
    n: int = 600


@dataclass
class ReferenceConfig:
    box_radius: float = 2.0
    N: int = 256
    eps_list: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    sandwich_eps: float = 0.05


@dataclass
class RunConfig:
    """Resolved configuration of one run.

    ``fixture`` names a built-in problem; ``problem`` (``"module:callable"``)
    loads a custom :class:`SemilinearProblem` instead.  ``identity_eps`` x
    ``p_list`` is the grid of the perturbation-identity fits.  ``K`` is the
    multiplier of the ``p = K eps^2`` rule used by the ordering check;
    ``sign_K`` lists the multipliers searched by the sign check.
    """

    fixture: str = "MP-CUBIC"
    problem: str | None = None
    omega: float | None = None
    eps_list: list = field(default_factory=lambda: list(DEFAULT_EPS))
    p_list: list = field(default_factory=lambda: list(DEFAULT_P))
    identity_eps: list = field(default_factory=lambda: [0.1, 0.05, 0.025])
    p_rule: str = "K*eps^2"
    K: float = 4.0
    sign_eps: list = field(default_factory=lambda: [0.05, 0.025])
    sign_K: list = field(default_factory=lambda: [1, 2, 4, 8, 16, 32])
    checks: list = field(default_factory=lambda: list(CHECKS))
    output: str = "layerlab-out"
    seed: int = 0
    n_points: int = 10_000
    radius: float = 1.0
    layer1d: GridConfig = field(default_factory=GridConfig)
    corner2d: CornerGridConfig = field(default_factory=CornerGridConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)

    def validate(self) -> "RunConfig":
        if self.problem is None and self.fixture not in FIXTURES:
            raise _invalid("fixture", f"unknown fixture {self.fixture!r}; choose from {sorted(FIXTURES)}")
        try:
            e = [float(x) for x in self.eps_list]
            self.p_list = [float(p) for p in self.p_list]
        except (TypeError, ValueError):
            raise _invalid("eps_list", "eps_list and p_list must be lists of numbers") from None
        if not e or any(x <= 0 or x >= 1 for x in e):
            raise _invalid("eps_list", "eps_list entries must lie in (0, 1)")
        if any(b >= a for a, b in zip(e, e[1:])):
            raise _invalid("eps_list", "eps_list must be strictly decreasing")
        self.eps_list = e
        bad = [c for c in self.checks if c not in CHECKS]
        if bad:
            raise _invalid("checks", f"unknown checks {bad}; choose from {list(CHECKS)}")
        if self.p_rule.replace(" ", "") != "K*eps^2":
            raise _invalid("p_rule", f"unsupported p_rule {self.p_rule!r}; only 'K*eps^2' is implemented")
        if self.omega is not None and not (0.0 < self.omega < np.pi):
            raise _invalid("omega", "omega must lie in (0, pi)")
        if self.layer1d.n < 101:
            raise _invalid("layer1d", "layer1d.n must be at least 101")
        if self.corner2d.n < 20:
            raise _invalid("corner2d", "corner2d.n must be at least 20")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def settings(self) -> ExpansionSettings:
        return ExpansionSettings(
            Xi_factor=float(self.layer1d.Xi_factor),
            n1d=int(self.layer1d.n),
            R_factor=float(self.corner2d.R_factor),
            n2d=int(self.corner2d.n),
            radius=float(self.radius),
        )

    def build_problem(self) -> SemilinearProblem:
        if self.problem:
            mod, _, attr = self.problem.partition(":")
            try:
                obj = getattr(importlib.import_module(mod), attr)
            except (ImportError, AttributeError, ValueError) as exc:
                raise ConfigError(f"cannot load problem {self.problem!r}: {exc}") from None
            prob = obj() if callable(obj) and not isinstance(obj, SemilinearProblem) else obj
            if not isinstance(prob, SemilinearProblem):
                raise ConfigError(f"{self.problem!r} did not produce a SemilinearProblem")
        else:
            prob = builtin_fixture(self.fixture)
        if self.omega is not None:
            prob = dataclasses.replace(prob, omega=float(self.omega))
        return prob


def _invalid(key: str, msg: str) -> ConfigError:
    err = ConfigError(msg)
    err.key = key
    return err


_SECTIONS = {"layer1d": GridConfig, "corner2d": CornerGridConfig, "reference": ReferenceConfig}


def _key_line(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*(\[\s*{re.escape(key)}\s*\]|{re.escape(key)}\s*=)", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _reject_unknown(text: str, data: dict, allowed: set, where: str, source: str) -> None:
    for key in data:
        if key not in allowed:
            line = _key_line(text, key)
            at = f"{source}:{line}" if line else source
            raise ConfigError(f"{at}: unknown key {key!r} in {where}")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse TOML text into a validated :class:`RunConfig`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = m.group(1) if m else text.count("\n") + 1
        at = f"{source}:{line}"
        raise ConfigError(f"{at}: {exc}") from None
    top = {f.name for f in dataclasses.fields(RunConfig)}
    _reject_unknown(text, data, top, "top level", source)
    kwargs = {}
    for key, val in data.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise ConfigError(f"{source}:{_key_line(text, key)}: {key} must be a table")
            cls = _SECTIONS[key]
            _reject_unknown(text, val, {f.name for f in dataclasses.fields(cls)}, f"[{key}]", source)
            kwargs[key] = cls(**val)
        else:
            kwargs[key] = val
    try:
        return RunConfig(**kwargs).validate()
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    except ConfigError as exc:
        line = _key_line(text, getattr(exc, "key", ""))
        at = f"{source}:{line}" if line else source
        raise ConfigError(f"{at}: {exc}") from None


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Load ``path`` (or defaults) and apply non-``None`` overrides; flags win."""
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        cfg = parse_config(text, str(p))
    else:
        cfg = RunConfig()
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if "." in key:
            sec, sub = key.split(".", 1)
            setattr(getattr(cfg, sec), sub, val)
        else:
            setattr(cfg, key, val)
    return cfg.validate()
