"""Classical solutions of the continuum p-system used as strong references.

The continuum limit of the chain is::

    u_t = v_X,        rho v_t = (W'(u))_X

on the periodic cell. Two references are provided:

``LinearExact``
    Fourier solution for ``W(u) = k u^2 / 2``; exact at every ``(t, X)``.
``FineLatticeOracle``
    A chain with many more particles, stored at a list of times. Used for
    nonlinear ``W`` where no closed form is available.

Both expose ``evaluate``, ``cell_averages``, ``pair_at`` and a certified
horizon ``t_max``. Requests beyond the horizon raise :class:`HorizonError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import lattice
from .fields import Field, FieldPair, sample, uniform_breaks
from .lattice import IntegratorConfig, LatticeState, TWO_PI
from .potential import Potential, Quadratic

_TIME_MATCH = 1e-9


class HorizonError(ValueError):
    """Reference requested outside the interval on which it is certified classical."""


@dataclass(frozen=True)
class FourierData:
    """Periodic initial data as finite Fourier sums.

    ``modes`` rows are ``(m, u_cos, u_sin, v_cos, v_sin)`` so that
    ``u(X) = u_mean + sum u_cos cos(mX) + u_sin sin(mX)`` and likewise for ``v``.
    """

    u_mean: float = 1.0
    v_mean: float = 0.0
    modes: tuple = ()

    def __post_init__(self):
        rows = np.asarray(self.modes, dtype=float).reshape(-1, 5)
        if np.any(rows[:, 0] < 1) or np.any(rows[:, 0] != np.round(rows[:, 0])):
            raise ValueError("Fourier mode numbers must be positive integers")
        object.__setattr__(self, "modes", tuple(map(tuple, rows)))

    @classmethod
    def from_dict(cls, d: dict) -> "FourierData":
        return cls(float(d.get("u_mean", 1.0)), float(d.get("v_mean", 0.0)),
                   tuple(tuple(r) for r in d.get("modes", ())))

    def to_dict(self) -> dict:
        return {"u_mean": self.u_mean, "v_mean": self.v_mean, "modes": [list(r) for r in self.modes]}

    @property
    def _rows(self):
        return np.asarray(self.modes, dtype=float).reshape(-1, 5)

    def coefficients(self):
        """Mode numbers and complex coefficients ``c`` with ``f = Re(c e^{imX})``."""
        r = self._rows
        return r[:, 0], r[:, 1] - 1j * r[:, 2], r[:, 3] - 1j * r[:, 4]

    def value_range(self, samples: int = 4096):
        X = TWO_PI * np.arange(samples) / samples
        m, cu, cv = self.coefficients()
        u = self.u_mean + _synth(m, cu, X)
        return float(u.min()), float(u.max())


def _synth(m, c, X):
    X = np.asarray(X, dtype=float)
    if m.size == 0:
        return np.zeros_like(X)
    return np.real(np.exp(1j * np.multiply.outer(X, m)) @ c)


@dataclass(frozen=True)
class LinearExact:
    """Exact solution of ``u_t = v_X, rho v_t = k u_X`` from Fourier data."""

    k: float
    rho: float
    data: FourierData
    t_max: float = math.inf

    def __post_init__(self):
        if not (self.k > 0 and self.rho > 0):
            raise ValueError("LinearExact needs k > 0 and rho > 0")

    @property
    def speed(self) -> float:
        return math.sqrt(self.k / self.rho)

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -_TIME_MATCH) or np.any(t > self.t_max + _TIME_MATCH):
            raise HorizonError(f"t outside certified horizon [0, {self.t_max}]")

    def _modes_at(self, t):
        """Complex mode coefficients of u and v at time ``t`` (scalar)."""
        m, cu, cv = self.data.coefficients()
        w = self.speed * m
        cw, sw = np.cos(w * t), np.sin(w * t)
        # u'' = -w^2 u with u'(0) = i m v0 and v'(0) = i m (k/rho) u0
        u = cu * cw + (1j * m * cv / w) * sw
        v = cv * cw + (1j * m * (self.k / self.rho) * cu / w) * sw
        return m, u, v

    def evaluate(self, t: float, X):
        self._check(t)
        m, cu, cv = self._modes_at(float(t))
        return self.data.u_mean + _synth(m, cu, X), self.data.v_mean + _synth(m, cv, X)

    def derivatives(self, t: float, X):
        """``(u_X, v_X, u_t, v_t)`` at ``(t, X)``."""
        self._check(t)
        m, cu, cv = self._modes_at(float(t))
        ux = _synth(m, 1j * m * cu, X)
        vx = _synth(m, 1j * m * cv, X)
        return ux, vx, vx.copy(), (self.k / self.rho) * ux

    def cell_averages(self, t: float, n: int):
        """Exact averages of ``(u, v)`` over the ``n`` lattice cells."""
        self._check(t)
        m, cu, cv = self._modes_at(float(t))
        b = uniform_breaks(n)
        w = np.diff(b)
        # antiderivative of Re(c e^{imX}) is Re(c e^{imX} / (im))
        Fu = _synth(m, cu / (1j * m), b)
        Fv = _synth(m, cv / (1j * m), b)
        return self.data.u_mean + np.diff(Fu) / w, self.data.v_mean + np.diff(Fv) / w

    def pair_at(self, t: float, n: int) -> FieldPair:
        u, v = self.cell_averages(t, n)
        return FieldPair(Field.constant(u), Field.constant(v))

    def value_range(self, t_end: float | None = None):
        # each mode's (k/2)|u|^2 + (rho/2)|v|^2 is conserved, so |u_m(t)| is bounded
        m, cu, cv = self.data.coefficients()
        amp = np.sqrt(np.abs(cu) ** 2 + (self.rho / self.k) * np.abs(cv) ** 2)
        s = float(np.sum(amp))
        return self.data.u_mean - s, self.data.u_mean + s

    def potential(self) -> Potential:
        return Quadratic(self.k)

    def time_window(self, t_end=None) -> float:
        if t_end is not None:
            return float(t_end)
        if math.isfinite(self.t_max):
            return self.t_max
        m, _, _ = self.data.coefficients()
        return TWO_PI / (self.speed * m.min()) if m.size else 0.0


@dataclass
class FineLatticeOracle:
    """Fine chain stored at ``times``; nonlinear reference of last resort."""

    pot: Potential
    rho: float
    n_ref: int
    times: np.ndarray
    states: list
    t_max: float
    data: FourierData | None = None
    lipschitz_cap: float = math.inf
    lipschitz_history: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def build(cls, pot: Potential, rho: float, data: FourierData, n_ref: int,
              sample_times, cfl_fraction: float = 0.5, t_max: float | None = None,
              lipschitz_cap_factor: float = 10.0) -> "FineLatticeOracle":
        """Integrate the fine chain from cell-averaged ``data`` and store it at ``sample_times``.

        ``t_max`` defaults to :func:`blowup_time`. The run is rejected with
        :class:`HorizonError` if any stored time exceeds it, or if the discrete
        Lipschitz norm grows beyond ``lipschitz_cap_factor`` times its initial value.
        """
        sample_times = np.unique(np.concatenate([[0.0], np.asarray(sample_times, dtype=float)]))
        if t_max is None:
            t_max = blowup_time(pot, rho, data)
        if sample_times[-1] > t_max + _TIME_MATCH:
            raise HorizonError(f"oracle requested to t={sample_times[-1]:g} beyond lifespan {t_max:g}")
        u0, v0 = _fourier_cell_averages(data, n_ref)
        state = LatticeState.from_cells(u0, v0, rho)
        states = [state.copy()]
        for t0, t1 in zip(sample_times[:-1], sample_times[1:]):
            cfg = IntegratorConfig.from_cfl(pot, n_ref, rho, t1 - t0, cfl_fraction)
            state = lattice.run(state, pot, cfg)
            state.t = float(t1)
            states.append(state.copy())
        oracle = cls(pot, rho, n_ref, sample_times, states, float(t_max), data)
        hist = np.array([_discrete_lipschitz(s, pot) for s in states])
        oracle.lipschitz_history = hist
        oracle.lipschitz_cap = lipschitz_cap_factor * hist[0] + 1e-9
        if np.any(hist > oracle.lipschitz_cap):
            raise HorizonError("oracle Lipschitz norm exceeded its cap; solution is no longer classical")
        return oracle

    def _check(self, t):
        if t < -_TIME_MATCH or t > self.t_max + _TIME_MATCH or t > self.times[-1] + _TIME_MATCH:
            raise HorizonError(f"t={t:g} outside stored/certified range [0, {min(self.t_max, self.times[-1]):g}]")

    def _locate(self, t):
        t = float(t)
        self._check(t)
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) <= _TIME_MATCH:
            return j, j, 0.0
        j1 = int(np.searchsorted(self.times, t))
        j0 = j1 - 1
        return j0, j1, (t - self.times[j0]) / (self.times[j1] - self.times[j0])

    def _cells(self, t):
        j0, j1, w = self._locate(t)
        s0, s1 = self.states[j0], self.states[j1]
        u0, v0 = lattice.strains(s0), s0.vel
        if j0 == j1:
            return u0, v0
        return (1 - w) * u0 + w * lattice.strains(s1), (1 - w) * v0 + w * s1.vel

    def state_at(self, t: float) -> LatticeState:
        j0, j1, w = self._locate(t)
        if j0 != j1:
            raise HorizonError(f"t={t:g} is not a stored oracle time")
        return self.states[j0]

    def pair_at(self, t: float, n: int | None = None) -> FieldPair:
        """Fine (u, v) fields at ``t``; ``n`` is accepted for interface symmetry and ignored."""
        u, v = self._cells(t)
        return FieldPair(Field.constant(u), Field.constant(v))

    def evaluate(self, t: float, X):
        pair = self.pair_at(t)
        return sample(pair.u, X), sample(pair.v, X)

    def cell_averages(self, t: float, n: int):
        u, v = self._cells(t)
        return _coarsen(u, n), _coarsen(v, n)

    def value_range(self, t_end: float | None = None):
        hi = self.times[-1] if t_end is None else t_end
        us = [lattice.strains(s) for s, t in zip(self.states, self.times) if t <= hi + _TIME_MATCH]
        return float(min(u.min() for u in us)), float(max(u.max() for u in us))

    def time_window(self, t_end=None) -> float:
        return float(self.times[-1] if t_end is None else t_end)


def _fourier_cell_averages(data: FourierData, n: int):
    return LinearExact(1.0, 1.0, data).cell_averages(0.0, n)


def _coarsen(values, n):
    """Averages of a piecewise-constant field on ``len(values)`` uniform cells over ``n`` cells."""
    values = np.asarray(values, dtype=float)
    n_fine = values.size
    if n_fine % n == 0:
        return values.reshape(n, n_fine // n).mean(axis=1)
    F = np.concatenate([[0.0], np.cumsum(values)]) / n_fine
    # cumulative integral (in units of 2 pi) is piecewise linear, so interpolation is exact
    Fc = np.interp(np.arange(n + 1) / n, np.arange(n_fine + 1) / n_fine, F)
    return np.diff(Fc) * n


def _discrete_lipschitz(state: LatticeState, pot: Potential) -> float:
    """Max of difference quotients of u, v in X and the lattice time derivatives."""
    eps, rho = state.eps, state.rho
    u = lattice.strains(state)
    v = state.vel
    ux = (np.roll(u, -1) - u) / eps
    vx = (np.roll(v, -1) - v) / eps
    # exact lattice rates: u_t = (v_{i+1} - v_i)/eps, v_t = acceleration
    vt = lattice.acceleration(state, pot)
    return float(max(np.abs(ux).max(), np.abs(vx).max(), np.abs(vt).max()))


def blowup_time(pot: Potential, rho: float, data: FourierData, samples: int = 4096) -> float:
    """Gradient-catastrophe estimate from the steepest Riemann invariant.

    With ``w = v +- Phi(u)``, ``Phi' = sqrt(W''/rho)``, a wave of one family steepens
    at rate ``|W'''(u)| |w_X| / (4 W''(u))``; the estimate is the reciprocal of its
    maximum over the initial data. Infinite for linear laws.
    """
    X = TWO_PI * np.arange(samples) / samples
    ref = LinearExact(1.0, 1.0, data)
    u, v = ref.evaluate(0.0, X)
    ux, vx, _, _ = ref.derivatives(0.0, X)
    d2 = pot._d2(u)
    h = 1e-4 * np.maximum(1.0, np.abs(u))
    d3 = (pot._d2(u + h) - pot._d2(u - h)) / (2 * h)
    lam = np.sqrt(d2 / rho)
    rate = np.abs(d3) * np.maximum(np.abs(vx + lam * ux), np.abs(vx - lam * ux)) / (4 * d2)
    peak = float(rate.max())
    return math.inf if peak <= 1e-12 else 1.0 / peak


@dataclass(frozen=True)
class Probe:
    """Test function ``phi(t, X) = amplitude * theta(t) * psi(X)``.

    ``psi`` is ``sin(mX)`` or ``cos(mX)``; ``theta(t) = cos^2(pi t / (2T))`` on
    ``[0, T)`` and 0 afterwards, which is C^1 with ``theta(0) = 1``.
    """

    m: int = 1
    kind: str = "sin"
    T: float = 1.0
    amplitude: float = 1.0

    def theta(self, t):
        return np.where(t < self.T, np.cos(0.5 * math.pi * t / self.T) ** 2, 0.0)

    def dtheta(self, t):
        a = 0.5 * math.pi / self.T
        return np.where(t < self.T, -a * np.sin(2 * a * t), 0.0)

    def psi(self, X):
        return np.sin(self.m * X) if self.kind == "sin" else np.cos(self.m * X)

    def dpsi(self, X):
        return self.m * np.cos(self.m * X) if self.kind == "sin" else -self.m * np.sin(self.m * X)


def residual(ref, pot: Potential, probe: Probe, equation: str = "momentum",
             n_t: int = 64, n_x: int = 256) -> float:
    """Weak-form residual of ``ref`` against ``probe``.

    ``momentum``: ``iint rho phi_t v - phi_X W'(u) + int rho phi(., 0) v_0``
    ``kinematic``: ``iint phi_t u - phi_X v + int phi(., 0) u_0``

    Time uses Gauss-Legendre on ``[0, T]``; space uses the periodic trapezoid rule,
    which is spectrally accurate for smooth periodic integrands.
    """
    if probe.amplitude == 0:
        return 0.0
    rho = getattr(ref, "rho", 1.0)
    xg, wg = np.polynomial.legendre.leggauss(n_t)
    t = 0.5 * probe.T * (xg + 1)
    wt = 0.5 * probe.T * wg
    X = TWO_PI * np.arange(n_x) / n_x
    wx = TWO_PI / n_x
    psi, dpsi = probe.psi(X), probe.dpsi(X)
    total = 0.0
    for ti, wti in zip(t, wt):
        u, v = ref.evaluate(ti, X)
        th, dth = probe.theta(ti), probe.dtheta(ti)
        if equation == "momentum":
            integrand = rho * dth * psi * v - th * dpsi * pot._d1(np.asarray(u))
        elif equation == "kinematic":
            integrand = dth * psi * u - th * dpsi * v
        else:
            raise ValueError(f"unknown equation {equation!r}")
        total += wti * wx * float(np.sum(integrand))
    u0, v0 = ref.evaluate(0.0, X)
    first = rho * v0 if equation == "momentum" else u0
    total += wx * float(np.sum(psi * first))
    return probe.amplitude * total


def derivative_sups(ref, t_end: float | None = None, n_t: int = 201, n_x: int = 512) -> dict:
    """Sup norms of ``u_X, v_X, u_t, v_t`` over a space-time grid (or stored snapshots)."""
    if isinstance(ref, FineLatticeOracle):
        hi = ref.time_window(t_end)
        out = dict(u_x=0.0, v_x=0.0, u_t=0.0, v_t=0.0)
        for s, t in zip(ref.states, ref.times):
            if t > hi + _TIME_MATCH:
                break
            u, v = lattice.strains(s), s.vel
            ux = np.abs(np.roll(u, -1) - u).max() / s.eps
            vx = np.abs(np.roll(v, -1) - v).max() / s.eps
            vt = np.abs(lattice.acceleration(s, ref.pot)).max()
            out["u_x"] = max(out["u_x"], float(ux))
            out["v_x"] = max(out["v_x"], float(vx))
            out["u_t"] = max(out["u_t"], float(vx))
            out["v_t"] = max(out["v_t"], float(vt))
        return out
    T = ref.time_window(t_end)
    X = TWO_PI * np.arange(n_x) / n_x
    out = dict(u_x=0.0, v_x=0.0, u_t=0.0, v_t=0.0)
    for t in np.linspace(0.0, T, n_t):
        for key, d in zip(out, ref.derivatives(t, X)):
            out[key] = max(out[key], float(np.abs(d).max()))
    return out


def lipschitz_norm(ref, t_end: float | None = None) -> float:
    """``max(|u_X|, |v_X|, |u_t|, |v_t|)`` over the certified window."""
    return max(derivative_sups(ref, t_end).values())
