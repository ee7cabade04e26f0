"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, fields

from .dynamics import BETA_STRAND_DEG, PotentialParams, SimConfig
from .errors import ConfigError
from .metrics import DEFAULT_COLLISION_THRESHOLD, DEFAULT_EXCLUSION_WINDOW
from .targets import DEFAULT_AUX_LAMBDA, DEFAULT_DISTOGRAM_THRESHOLD

log = logging.getLogger(__name__)

SEED_ENV = "UNFOLDSIM_SEED"


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _angles(text: str) -> tuple:
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 6:
        raise ValueError("expected six comma-separated angles")
    return tuple(float(p) for p in parts)


@dataclass(frozen=True)
class RunConfig:
    # simulation
    n_steps: int = 100
    sigma_beta: float = 0.01
    sigma_v: float = 0.1
    sigma_z: float = 0.01
    seed: int = 0
    variant: str = "angular"
    integrator: str = "explicit-euler"
    mu_beta_deg: tuple = BETA_STRAND_DEG
    align_target: bool = True
    # potential
    k1: float = 1.0
    k2: float = 1.0
    gamma: float = 1.0
    epsilon: float = 1e-6
    wrap_target: bool = True
    repulsion_atoms: str = "ca"
    # metrics and losses
    collision_threshold: float = DEFAULT_COLLISION_THRESHOLD
    exclusion_window: int = DEFAULT_EXCLUSION_WINDOW
    distogram_threshold: float = DEFAULT_DISTOGRAM_THRESHOLD
    aux_lambda: float = DEFAULT_AUX_LAMBDA
    present: frozenset = field(default=frozenset(), compare=False, repr=False)

    def __post_init__(self):
        try:
            self.sim_config()
            self.potential_params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.collision_threshold > 0 or self.exclusion_window < 1:
            raise ConfigError("collision_threshold must be > 0 and exclusion_window >= 1")
        if not self.distogram_threshold > 0:
            raise ConfigError("distogram_threshold must be > 0")

    def sim_config(self) -> SimConfig:
        return SimConfig(self.n_steps, self.sigma_beta, self.sigma_v, self.sigma_z, self.seed,
                         self.variant, self.integrator, self.mu_beta_deg, self.align_target)

    def potential_params(self) -> PotentialParams:
        return PotentialParams(self.k1, self.k2, self.gamma, self.epsilon, None,
                               self.wrap_target, self.repulsion_atoms)


_PARSERS = {
    int: int,
    float: float,
    str: str.strip,
    bool: _bool,
    tuple: _angles,
}

KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "present")


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Unknown or repeated keys are errors; absent keys take their defaults
    and are logged.
    """
    kinds = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_number}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {line_number}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {line_number}: key {key!r} given twice")
        kind = {"int": int, "float": float, "str": str, "bool": bool, "tuple": tuple}[kinds[key]]
        try:
            values[key] = _PARSERS[kind](value)
        except ValueError as exc:
            raise ConfigError(f"line {line_number}: bad value for {key}: {exc}") from None
    for key in KEYS:
        if key not in values:
            log.info("config key %s not set; using default %r", key, getattr(RunConfig, key))
    return RunConfig(**values, present=frozenset(values))


def load_config(path=None) -> RunConfig:
    if path is None:
        for key in KEYS:
            log.info("no config file; %s = %r", key, getattr(RunConfig, key))
        return RunConfig()
    with open(path) as fh:
        return parse_config(fh.read())


def resolve_seed(config: RunConfig, cli_seed=None, environ=None) -> int:
    """CLI flag, then ``UNFOLDSIM_SEED``, then the config file."""
    environ = os.environ if environ is None else environ
    if cli_seed is not None:
        return int(cli_seed)
    if environ.get(SEED_ENV, "").strip():
        try:
            return int(environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {environ[SEED_ENV]!r}") from None
    return config.seed


def format_config(config: RunConfig) -> str:
    """Text form accepted by :func:`parse_config`."""
    lines = []
    for key in KEYS:
        value = getattr(config, key)
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
