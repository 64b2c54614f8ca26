"""Periodic nearest-neighbour spring-mass chain.

Particle ``i`` has reference site ``X_i = eps * i`` with ``eps = 2 pi / N`` and
mass ``eps * rho``. Positions are stored as displacements ``d_i = x_i - X_i``
so that the periodic winding ``x_{i+N} = x_i + 2 pi`` becomes plain periodic
indexing of ``d`` and the reference lattice is the zero state.

Equation of motion::

    eps rho x_i'' = W'(s_i) - W'(s_{i-1}),    s_i = (x_{i+1} - x_i) / eps

integrated with velocity Verlet.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .potential import Potential

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi


class IntegrationError(RuntimeError):
    """Non-finite forces or states encountered while stepping."""


class CFLError(ValueError):
    """Time step too large for the stiffest admissible spring."""


@dataclass
class LatticeState:
    n: int
    rho: float
    disp: np.ndarray
    vel: np.ndarray
    t: float = 0.0
    # (potential, acceleration at disp); reused by the next Verlet half-kick
    _acc: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.disp = np.asarray(self.disp, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        if self.n < 1:
            raise ValueError("need at least one particle")
        if self.disp.shape != (self.n,) or self.vel.shape != (self.n,):
            raise ValueError(f"disp and vel must have shape ({self.n},)")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def eps(self) -> float:
        return TWO_PI / self.n

    @property
    def sites(self) -> np.ndarray:
        return self.eps * np.arange(self.n)

    @property
    def positions(self) -> np.ndarray:
        return self.sites + self.disp

    @classmethod
    def rest(cls, n: int, rho: float = 1.0) -> "LatticeState":
        return cls(n, rho, np.zeros(n), np.zeros(n))

    @classmethod
    def from_cells(cls, strain, vel, rho: float = 1.0, d0: float = 0.0, t: float = 0.0,
                   atol: float = 1e-10) -> "LatticeState":
        """Build a state whose bond strains are ``strain`` and velocities ``vel``.

        The strains must average to 1, otherwise the chain cannot close up on the
        circle with one winding.
        """
        strain = np.asarray(strain, dtype=float)
        n = strain.size
        eps = TWO_PI / n
        mismatch = eps * float(np.sum(strain - 1.0))
        if abs(mismatch) > atol * max(1.0, eps * float(np.sum(np.abs(strain)))):
            raise ValueError(f"strains do not close the ring (mean strain off by {mismatch / TWO_PI:g})")
        disp = d0 + np.concatenate([[0.0], np.cumsum(eps * (strain[:-1] - 1.0))])
        return cls(n, rho, disp, np.array(vel, dtype=float), t)

    def copy(self) -> "LatticeState":
        acc = None if self._acc is None else (self._acc[0], self._acc[1].copy())
        return replace(self, disp=self.disp.copy(), vel=self.vel.copy(), _acc=acc)


def strains(state: LatticeState) -> np.ndarray:
    """All bond strains ``(x_{i+1} - x_i) / eps``; bond ``N-1`` wraps to particle 0."""
    d = state.disp
    return (np.roll(d, -1) - d) / state.eps + 1.0


def strain(state: LatticeState, i: int) -> float:
    if not 0 <= i < state.n:
        raise IndexError(f"bond index {i} out of range for N={state.n}")
    j = (i + 1) % state.n
    return (state.disp[j] - state.disp[i]) / state.eps + 1.0


def _acceleration(disp, eps, rho, pot):
    s = (np.roll(disp, -1) - disp) / eps + 1.0
    f = pot._d1(s)
    return (f - np.roll(f, 1)) / (eps * rho)


def acceleration(state: LatticeState, pot: Potential) -> np.ndarray:
    return _acceleration(state.disp, state.eps, state.rho, pot)


def energy(state: LatticeState, pot: Potential) -> float:
    """Kinetic plus stored energy ``sum eps (rho v_i^2 / 2 + W(s_i))``."""
    eps = state.eps
    return float(eps * np.sum(0.5 * state.rho * state.vel ** 2 + pot._w(strains(state))))


def momentum(state: LatticeState) -> float:
    return float(state.eps * state.rho * np.sum(state.vel))


def cfl_timestep(pot: Potential, eps: float, rho: float, cfl_fraction: float = 0.5,
                 interval=None) -> float:
    """Largest admissible step ``cfl_fraction * eps / c_max``.

    ``c_max = sqrt(max W'' / rho)`` over the certified interval.
    """
    if not 0 < cfl_fraction <= 1:
        raise ValueError("cfl_fraction must lie in (0, 1]")
    c_max = math.sqrt(pot.max_d2(interval) / rho)
    return cfl_fraction * eps / c_max


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    sample_stride: int = 1
    scheme: str = "velocity_verlet"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")
        if self.scheme != "velocity_verlet":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    @classmethod
    def from_cfl(cls, pot: Potential, n: int, rho: float, t_end: float,
                 cfl_fraction: float = 0.5, sample_interval: float | None = None,
                 interval=None) -> "IntegratorConfig":
        """Pick ``dt`` below the CFL limit so that ``sample_interval`` is a whole number of steps."""
        dt_max = cfl_timestep(pot, TWO_PI / n, rho, cfl_fraction, interval)
        if sample_interval is None or sample_interval <= 0:
            span = t_end if t_end > 0 else dt_max
            steps = max(1, math.ceil(span / dt_max - 1e-12))
            return cls(span / steps, t_end, sample_stride=steps)
        stride = max(1, math.ceil(sample_interval / dt_max - 1e-12))
        return cls(sample_interval / stride, t_end, sample_stride=stride)

    def check_cfl(self, pot: Potential, state: LatticeState, cfl_fraction: float = 0.5,
                  interval=None) -> None:
        limit = cfl_timestep(pot, state.eps, state.rho, cfl_fraction, interval)
        if self.dt > limit * (1 + 1e-12):
            raise CFLError(f"dt={self.dt:g} exceeds CFL limit {limit:g} for N={state.n}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.dt + 1e-9))


def step(state: LatticeState, pot: Potential, dt: float) -> LatticeState:
    """One velocity-Verlet step; returns a new state, leaving ``state`` untouched."""
    eps, rho = state.eps, state.rho
    if state._acc is not None and state._acc[0] is pot:
        a0 = state._acc[1]
    else:
        a0 = _acceleration(state.disp, eps, rho, pot)
    v_half = state.vel + 0.5 * dt * a0
    disp = state.disp + dt * v_half
    a1 = _acceleration(disp, eps, rho, pot)
    if not np.all(np.isfinite(a1)):
        bad = np.flatnonzero(~np.isfinite(a1))
        raise IntegrationError(
            f"non-finite acceleration at t={state.t + dt:g}, particles {bad[:5].tolist()}")
    vel = v_half + 0.5 * dt * a1
    return LatticeState(state.n, rho, disp, vel, state.t + dt, _acc=(pot, a1))


def run(state: LatticeState, pot: Potential, cfg: IntegratorConfig,
        sink: Callable[[LatticeState], None] | None = None) -> LatticeState:
    """Integrate from ``state.t`` to ``state.t + cfg.t_end``.

    The initial state, every ``sample_stride``-th state and the final state are
    passed to ``sink``. Times are recomputed as ``t0 + k dt`` to avoid drift.
    A trailing partial step is taken when ``t_end`` is not a multiple of ``dt``.
    """
    t0 = state.t
    if sink is not None:
        sink(state)
    n = cfg.n_steps
    cur = state
    for k in range(1, n + 1):
        cur = step(cur, pot, cfg.dt)
        cur.t = t0 + k * cfg.dt
        if sink is not None and (k % cfg.sample_stride == 0 or k == n):
            sink(cur)
    rest = cfg.t_end - n * cfg.dt
    if rest > 1e-12 * max(1.0, cfg.t_end):
        cur = step(cur, pot, rest)
        cur.t = t0 + cfg.t_end
        if sink is not None:
            sink(cur)
    return cur


def reverse(state: LatticeState) -> LatticeState:
    """Negate velocities (time reversal)."""
    out = state.copy()
    out.vel = -out.vel
    return out


class Recorder:
    """Sink that keeps copies of every state it receives."""

    def __init__(self):
        self.states: list[LatticeState] = []

    def __call__(self, state: LatticeState) -> None:
        self.states.append(state.copy())

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def write_csv(states: Iterable[LatticeState], path) -> None:
    """Snapshot rows ``t, i, disp, vel``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "disp", "vel"])
        for s in states:
            for i in range(s.n):
                w.writerow([repr(float(s.t)), i, repr(float(s.disp[i])), repr(float(s.vel[i]))])


def to_record(state: LatticeState) -> dict:
    return {"t": state.t, "N": state.n, "rho": state.rho,
            "disp": state.disp.tolist(), "vel": state.vel.tolist()}


def from_record(rec: dict) -> LatticeState:
    return LatticeState(int(rec["N"]), float(rec["rho"]), np.array(rec["disp"]),
                        np.array(rec["vel"]), float(rec["t"]))


def save_checkpoint(state: LatticeState, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_record(state), fh)


def load_checkpoint(path) -> LatticeState:
    with open(path) as fh:
        return from_record(json.load(fh))
