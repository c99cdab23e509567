"""Scenario files: four nested blocks (game, policy, run, output) in YAML.

Every key is checked. Unknown keys, wrong types and values outside the owning
module's domain raise :class:`ConfigurationError` naming the offending key.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional

import yaml

from .errors import ConfigurationError, PutsError
from .policy import TOL_RULES

FAMILIES = ("canonical", "affine", "tabulated", "regime")
POLICY_KINDS = ("puts", "no_information", "conclusive_bad_news", "delayed_jump")
MODES = ("certify", "simulate", "finite", "concentration", "audit", "constants", "dominance", "private-bound")
PROFILES = ("compliant", "adversarial", "adversarial_upper")
FORMATS = ("csv", "json")


@dataclass
class GameConfig:
    family: str = "canonical"
    parameters: dict = field(default_factory=dict)
    discount_rate: float = 1.0
    switch_rate: float = 1.0
    dominant: Optional[int] = None

    def check(self):
        _choice("game.family", self.family, FAMILIES)
        _positive("game.discount_rate", self.discount_rate)
        if not _is_number(self.switch_rate):
            raise ConfigurationError("game.switch_rate: expected a number")
        if not self.switch_rate > 0:
            raise ConfigurationError("game.switch_rate: switch_rate must be positive")
        if not isinstance(self.parameters, dict):
            raise ConfigurationError("game.parameters: expected a mapping")
        allowed = {"canonical": set(), "affine": {"a", "b", "c", "states"},
                   "tabulated": {"A_grid", "table", "states"},
                   "regime": {"intercepts", "slopes", "cost"}}[self.family]
        for k in self.parameters:
            if k not in allowed:
                raise ConfigurationError(f"game.parameters.{k}: unknown key for family {self.family!r}")
        if self.family == "tabulated":
            for k in ("A_grid", "table"):
                if k not in self.parameters:
                    raise ConfigurationError(f"game.parameters.{k}: required for the tabulated family")
        if self.family == "regime":
            for k in ("intercepts", "slopes", "cost"):
                if k not in self.parameters:
                    raise ConfigurationError(f"game.parameters.{k}: required for the regime family")


@dataclass
class PolicyConfig:
    kind: str = "puts"
    eta: float = 0.01
    tol_rule: str = "exact_appendix"
    safety: float = 0.99
    finite_delta_bar: Optional[float] = None
    m: Optional[float] = None
    t_delay: Optional[float] = None

    def check(self):
        _choice("policy.kind", self.kind, POLICY_KINDS)
        _number("policy.eta", self.eta)
        if not 0 < self.eta < 1:
            raise ConfigurationError("policy.eta: must lie in (0, 1)")
        _choice("policy.tol_rule", self.tol_rule, TOL_RULES)
        _number("policy.safety", self.safety)
        if not 0 < self.safety <= 1:
            raise ConfigurationError("policy.safety: must lie in (0, 1]")
        for k in ("finite_delta_bar", "m", "t_delay"):
            v = getattr(self, k)
            if v is not None:
                _positive(f"policy.{k}", v)
        if self.kind == "delayed_jump" and self.t_delay is None:
            raise ConfigurationError("policy.t_delay: required for delayed_jump")


@dataclass
class RunConfig:
    mode: Optional[str] = None
    mu0: float = 0.5
    A0: float = 0.0
    N: Optional[int] = None
    horizon: float = 10.0
    trials: int = 1000
    seed: int = 0
    grid: int = 200
    eps: float = 1e-3
    profile: str = "compliant"
    delta: float = 0.5
    Ns: List[int] = field(default_factory=list)
    oracle: bool = False
    rate: float = 1.0

    def check(self):
        if self.mode is not None:
            _choice("run.mode", self.mode, MODES)
        for k in ("mu0", "A0"):
            _number(f"run.{k}", getattr(self, k))
            if not 0 <= getattr(self, k) <= 1:
                raise ConfigurationError(f"run.{k}: must lie in [0, 1]")
        if self.N is not None:
            _integer("run.N", self.N, 1)
        _positive("run.horizon", self.horizon)
        _integer("run.trials", self.trials, 1)
        _integer("run.seed", self.seed, 0)
        _integer("run.grid", self.grid, 64)
        _positive("run.eps", self.eps)
        _choice("run.profile", self.profile, PROFILES)
        _positive("run.delta", self.delta)
        if not isinstance(self.Ns, list):
            raise ConfigurationError("run.Ns: expected a list")
        for i, n in enumerate(self.Ns):
            _integer(f"run.Ns[{i}]", n, 1)
        if not isinstance(self.oracle, bool):
            raise ConfigurationError("run.oracle: expected true or false")
        _positive("run.rate", self.rate)


@dataclass
class OutputConfig:
    directory: str = "runs"
    formats: List[str] = field(default_factory=lambda: ["csv", "json"])

    def check(self):
        if not isinstance(self.directory, str) or not self.directory:
            raise ConfigurationError("output.directory: expected a nonempty string")
        if not isinstance(self.formats, list) or not self.formats:
            raise ConfigurationError("output.formats: expected a nonempty list")
        for f in self.formats:
            _choice("output.formats", f, FORMATS)


@dataclass
class ScenarioConfig:
    game: GameConfig = field(default_factory=GameConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def check(self):
        for block in (self.game, self.policy, self.run, self.output):
            block.check()
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc):
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            raise ConfigurationError("scenario: top level must be a mapping")
        blocks = {"game": GameConfig, "policy": PolicyConfig, "run": RunConfig, "output": OutputConfig}
        _no_unknown("", doc, blocks)
        kw = {}
        for name, klass in blocks.items():
            sub = doc.get(name) or {}
            if not isinstance(sub, dict):
                raise ConfigurationError(f"{name}: expected a mapping")
            _no_unknown(name + ".", sub, {f.name for f in dataclasses.fields(klass)})
            kw[name] = klass(**sub)
        return cls(**kw).check()


def _no_unknown(prefix, doc, allowed):
    for k in doc:
        if k not in allowed:
            raise ConfigurationError(f"{prefix}{k}: unknown key")


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number(key, v):
    if not _is_number(v):
        raise ConfigurationError(f"{key}: expected a number, got {type(v).__name__}")


def _positive(key, v):
    _number(key, v)
    if not v > 0:
        raise ConfigurationError(f"{key}: must be positive")


def _integer(key, v, lo):
    if not isinstance(v, int) or isinstance(v, bool):
        raise ConfigurationError(f"{key}: expected an integer")
    if v < lo:
        raise ConfigurationError(f"{key}: must be at least {lo}")


def _choice(key, v, options):
    if v not in options:
        raise ConfigurationError(f"{key}: {v!r} is not one of {', '.join(options)}")


def parse_scenario(path):
    """Read and validate a scenario file; missing keys take their defaults."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ConfigurationError(f"cannot read scenario {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigurationError(f"malformed scenario {path}: {e}") from e
    return ScenarioConfig.from_dict(doc)


def emit_scenario(config, path=None):
    text = yaml.safe_dump(config.to_dict(), sort_keys=False)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def build_game(gc):
    """GameSpec (or RegimeChangeSpec for the regime family) from a game block."""
    from .applications import affine_regime
    from .game import affine_game, canonical_game, tabulated_game

    p = dict(gc.parameters)
    try:
        if gc.family == "canonical":
            return canonical_game(gc.discount_rate, gc.switch_rate)
        if gc.family == "affine":
            states = tuple(p.pop("states", (0, 1)))
            return affine_game(states=states, r=gc.discount_rate, lam=gc.switch_rate,
                               dominant=gc.dominant, **p)
        if gc.family == "tabulated":
            states = p.get("states")
            return tabulated_game(p["A_grid"], p["table"], None if states is None else tuple(states),
                                  gc.discount_rate, gc.switch_rate, gc.dominant)
        return affine_regime(tuple(p["intercepts"]), tuple(p["slopes"]), p["cost"],
                             r=gc.discount_rate, lam=gc.switch_rate)
    except PutsError as e:
        raise ConfigurationError(f"game: {e}") from e
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"game.parameters: {e}") from e
