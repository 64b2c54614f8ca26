"""Experiment configuration loaded from YAML."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .potential import Potential, from_dict as potential_from_dict
from .reference import FineLatticeOracle, FourierData, HorizonError, LinearExact, blowup_time

RECIPES = ("sample_reference", "perturbed", "oscillatory", "concentrated")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class Recipe:
    kind: str = "sample_reference"
    mode: int = 3
    amplitude: float = 0.0
    # amplitude multiplied by eps when set, giving data that converge to the reference
    scale_with_eps: bool = False
    wavelength: float = 1.0
    width: float = 1.0
    resolution: int = 8

    @classmethod
    def from_dict(cls, d: dict | None) -> "Recipe":
        d = dict(d or {})
        kind = d.pop("recipe", d.pop("kind", "sample_reference"))
        if kind not in RECIPES:
            raise ConfigError(f"unknown initial-data recipe {kind!r}; expected one of {RECIPES}")
        try:
            r = cls(kind=kind, **d)
        except TypeError as exc:
            raise ConfigError(f"bad recipe fields: {exc}") from None
        if r.mode < 1:
            raise ConfigError("perturbation mode must be >= 1")
        return r


@dataclass(frozen=True)
class ExperimentConfig:
    potential: dict
    reference: dict
    eps_list: tuple
    t_end: float = 1.0
    rho: float = 1.0
    cfl_fraction: float = 0.5
    samples: int = 8
    initial_data: Recipe = Recipe()
    output: str = "out"
    seed: int = 0
    # per-experiment blocks, kept as plain dicts
    checks: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    young: dict = field(default_factory=dict)
    uniqueness: dict = field(default_factory=dict)
    entropy: dict = field(default_factory=dict)
    source: str = ""

    def __post_init__(self):
        ns = tuple(int(n) for n in self.eps_list)
        object.__setattr__(self, "eps_list", ns)
        if not ns:
            raise ConfigError("eps_list must name at least one N")
        if any(n < 2 for n in ns) or any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError("eps_list must be strictly increasing N values >= 2")
        if not self.t_end >= 0:
            raise ConfigError("t_end must be non-negative")
        if not self.rho > 0:
            raise ConfigError("rho must be positive")
        if not 0 < self.cfl_fraction <= 1:
            raise ConfigError("cfl_fraction must lie in (0, 1]")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")

    @property
    def sample_interval(self) -> float:
        return self.t_end / self.samples

    @property
    def sample_times(self) -> np.ndarray:
        return self.sample_interval * np.arange(self.samples + 1)

    def build_potential(self) -> Potential:
        try:
            return potential_from_dict(self.potential)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"potential block: {exc}") from None

    @property
    def data(self) -> FourierData:
        return FourierData.from_dict(self.reference.get("data", {}))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("source")
        d["eps_list"] = list(self.eps_list)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_FIELDS = {"potential", "reference", "eps_list", "t_end", "rho", "dt_policy", "samples",
           "initial_data", "output", "seed", "checks", "trace", "young", "uniqueness", "entropy"}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw, source=str(path))


def parse_config(raw: dict, source: str = "") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("potential", "reference", "eps_list"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    raw = dict(raw)
    dt_policy = raw.pop("dt_policy", {}) or {}
    recipe = Recipe.from_dict(raw.pop("initial_data", None))
    try:
        return ExperimentConfig(initial_data=recipe, cfl_fraction=float(dt_policy.get("cfl_fraction", 0.5)),
                                source=source, **raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_reference(cfg: ExperimentConfig, pot: Potential, t_end: float | None = None):
    """Reference solution named by the config, certified up to ``t_end``.

    ``linear_exact`` requires a quadratic potential. ``fine_lattice`` builds an
    oracle with ``n_ref`` at least eight times the largest N, stored at the
    config's sample times.
    """
    ref = cfg.reference
    kind = ref.get("kind", "linear_exact")
    t_end = cfg.t_end if t_end is None else t_end
    data = cfg.data
    t_max = float(ref["t_max"]) if "t_max" in ref else None
    if kind == "linear_exact":
        if pot.kind != "quadratic":
            raise ConfigError("linear_exact reference needs a quadratic potential")
        exact = LinearExact(pot.k, cfg.rho, data, math.inf if t_max is None else t_max)
        if t_end > exact.t_max:
            raise HorizonError(f"t_end={t_end:g} beyond reference horizon {exact.t_max:g}")
        return exact
    if kind == "fine_lattice":
        n_ref = int(ref.get("n_ref", 8 * cfg.eps_list[-1]))
        if n_ref < 8 * cfg.eps_list[-1]:
            raise ConfigError(f"n_ref={n_ref} is below 8x the largest N")
        if t_max is None:
            # heuristic lifespan, halved for safety
            t_max = 0.5 * blowup_time(pot, cfg.rho, data)
        times = np.linspace(0.0, t_end, cfg.samples + 1)
        return FineLatticeOracle.build(pot, cfg.rho, data, n_ref, times, cfg.cfl_fraction, t_max,
                                       float(ref.get("lipschitz_cap_factor", 10.0)))
    raise ConfigError(f"unknown reference kind {kind!r}")
