"""Stored-energy laws for the nearest-neighbour chain.

Three kinds are supported:

- :class:`Quadratic`, ``W(u) = k u^2 / 2`` (the linear chain),
- :class:`PowerPlusQuadratic`, ``W(u) = a |u|^p + b u^2 / 2``,
- :class:`Custom`, user callables for ``W``, ``W'`` and ``W''`` together with
  declared constants that :func:`verify_hypotheses` cross-checks by sampling.

All evaluators accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DomainError(ValueError):
    """Raised when a potential is evaluated at a non-finite strain."""


def _checked(u):
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("potential evaluated at non-finite strain")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class Potential:
    """Base class. Subclasses implement ``_w``, ``_d1`` and ``_d2`` on arrays."""

    kind = "abstract"
    #: certified lower bound on W''
    c0: float
    #: growth exponent
    p: float
    #: coercivity constants in W(u) >= max(0, c1 |u|^p - c2)
    c1: float
    c2: float
    interval: tuple[float, float] | None = None

    def __call__(self, u):
        return _out(self._w(_checked(u)), u)

    def d1(self, u):
        return _out(self._d1(_checked(u)), u)

    def d2(self, u):
        return _out(self._d2(_checked(u)), u)

    def is_even(self) -> bool:
        return False

    def max_d2(self, interval=None, samples: int = 2001) -> float:
        """Largest W'' over ``interval`` (defaults to the certified interval)."""
        lo, hi = self._interval(interval)
        u = np.concatenate([np.linspace(lo, hi, samples), [lo, hi]])
        return float(np.max(self._d2(u)))

    def _interval(self, interval):
        if interval is None:
            interval = self.interval
        if interval is None:
            raise ValueError(f"{self.kind} potential has no certified interval")
        lo, hi = (float(x) for x in interval)
        if not hi > lo:
            raise ValueError(f"degenerate interval [{lo}, {hi}]")
        return lo, hi

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Quadratic(Potential):
    k: float
    interval: tuple[float, float] | None = None

    kind = "quadratic"

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("Quadratic potential needs k > 0")

    @property
    def c0(self):
        return self.k

    @property
    def p(self):
        return 2.0

    @property
    def c1(self):
        return self.k / 2

    @property
    def c2(self):
        return 0.0

    def max_d2(self, interval=None, samples: int = 2001) -> float:
        return float(self.k)

    def _w(self, u):
        return 0.5 * self.k * u * u

    def _d1(self, u):
        return self.k * u

    def _d2(self, u):
        return np.full_like(u, self.k)

    def is_even(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "k": self.k, "interval": self.interval}


@dataclass(frozen=True)
class PowerPlusQuadratic(Potential):
    """``W(u) = a |u|^p + b u^2 / 2`` with ``p >= 2`` and ``a, b > 0``."""

    p: float
    a: float
    b: float
    interval: tuple[float, float] | None = None

    kind = "power"

    def __post_init__(self):
        if not self.p >= 2:
            raise ValueError("PowerPlusQuadratic needs p >= 2")
        if not (self.a > 0 and self.b > 0):
            raise ValueError("PowerPlusQuadratic needs a > 0 and b > 0")

    @property
    def c0(self):
        # W'' = p(p-1) a |u|^(p-2) + b is smallest at u = 0
        return self.b + (2 * self.a if self.p == 2 else 0.0)

    @property
    def c1(self):
        return self.a

    @property
    def c2(self):
        return 0.0

    def _w(self, u):
        return self.a * np.abs(u) ** self.p + 0.5 * self.b * u * u

    def _d1(self, u):
        return self.p * self.a * np.sign(u) * np.abs(u) ** (self.p - 1) + self.b * u

    def _d2(self, u):
        if self.p == 2:
            return np.full_like(u, 2 * self.a + self.b)
        return self.p * (self.p - 1) * self.a * np.abs(u) ** (self.p - 2) + self.b

    def is_even(self):
        return True

    def to_dict(self):
        return {"kind": self.kind, "p": self.p, "a": self.a, "b": self.b,
                "interval": self.interval}


@dataclass(frozen=True)
class Custom(Potential):
    """User-supplied law. The callables must be vectorised over numpy arrays.

    The constants are taken on trust at construction and checked later by
    :func:`verify_hypotheses`.
    """

    w: Callable
    dw: Callable
    d2w: Callable
    c0: float
    p: float = 2.0
    c1: float = 0.0
    c2: float = 0.0
    interval: tuple[float, float] | None = None
    even: bool = False
    name: str = "custom"

    kind = "custom"

    def _w(self, u):
        return np.asarray(self.w(u), dtype=float)

    def _d1(self, u):
        return np.asarray(self.dw(u), dtype=float)

    def _d2(self, u):
        return np.broadcast_to(np.asarray(self.d2w(u), dtype=float), np.shape(u)).copy()

    def is_even(self):
        return self.even

    def to_dict(self):
        return {"kind": self.kind, "name": self.name, "c0": self.c0, "p": self.p,
                "c1": self.c1, "c2": self.c2, "interval": self.interval}


def from_dict(d: dict) -> Potential:
    """Build a builtin potential from a config block."""
    d = dict(d)
    kind = d.pop("kind")
    interval = d.pop("interval", None)
    if interval is not None:
        interval = (float(interval[0]), float(interval[1]))
    if kind == "quadratic":
        return Quadratic(k=float(d["k"]), interval=interval)
    if kind in ("power", "power_plus_quadratic"):
        return PowerPlusQuadratic(p=float(d["p"]), a=float(d["a"]),
                                  b=float(d["b"]), interval=interval)
    raise ValueError(f"unknown potential kind {kind!r} (custom laws are Python-only)")


def relative_potential(pot: Potential, M, ubar):
    """``W(M) - W(ubar) - W'(ubar) (M - ubar)``, the strain part of the relative entropy."""
    M_arr = _checked(M)
    ub = _checked(ubar)
    out = pot._w(M_arr) - pot._w(ub) - pot._d1(ub) * (M_arr - ub)
    return out if out.ndim else float(out)


def flux_remainder(pot: Potential, M, ubar):
    """``W'(M) - W'(ubar) - W''(ubar) (M - ubar)``, the first-order flux error."""
    M_arr = _checked(M)
    ub = _checked(ubar)
    out = pot._d1(M_arr) - pot._d1(ub) - pot._d2(ub) * (M_arr - ub)
    return out if out.ndim else float(out)


@dataclass
class HypothesisReport:
    """Sampled certificate for a potential on a declared interval."""

    interval: tuple[float, float]
    c0: float
    min_d2: float
    argmin_d2: float
    max_d2: float
    coercivity_margin: float
    superlinearity_ratio: tuple[float, float]
    quotient_bound: float
    derivative_error: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "interval": list(self.interval),
            "c0": self.c0,
            "min_d2": self.min_d2,
            "argmin_d2": self.argmin_d2,
            "max_d2": self.max_d2,
            "coercivity_margin": self.coercivity_margin,
            "superlinearity_ratio": list(self.superlinearity_ratio),
            "quotient_bound": self.quotient_bound,
            "derivative_error": self.derivative_error,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def quotient_bound(pot: Potential, interval, ubar_samples: int = 201,
                   m_samples: int = 4001, reach: float = 10.0) -> float:
    """Sampled ``sup |flux_remainder| / relative_potential``.

    ``ubar`` ranges over ``interval``; ``M`` over ``[-reach R, reach R]`` with
    ``R`` the interval radius, plus the interval itself. Pairs with
    ``|M - ubar|`` below ``1e-3 max(1, |ubar|)`` are skipped since both terms
    vanish quadratically there and the ratio is continuous.
    """
    lo, hi = pot._interval(interval)
    radius = max(abs(lo), abs(hi))
    ub = np.linspace(lo, hi, ubar_samples)
    M = np.concatenate([np.linspace(-reach * radius, reach * radius, m_samples),
                        np.linspace(lo, hi, ubar_samples)])
    ub2, M2 = np.meshgrid(ub, M, indexing="ij")
    num = np.abs(flux_remainder(pot, M2, ub2))
    den = relative_potential(pot, M2, ub2)
    mask = np.abs(M2 - ub2) >= 1e-3 * np.maximum(1.0, np.abs(ub2))
    num, den = num[mask], den[mask]
    # a non-positive denominator means W is not convex there: no finite bound
    safe = np.where(den > 0, den, 1.0)
    return float(np.max(np.where(den > 0, num / safe, np.inf)))


def verify_hypotheses(pot: Potential, interval=None, samples: int = 2001) -> HypothesisReport:
    """Check convexity, coercivity and growth of ``pot`` on ``interval`` by sampling.

    Violations are reported in ``failures``; nothing is raised for them.
    """
    lo, hi = pot._interval(interval)
    if samples < 2:
        raise ValueError("need at least two samples")
    u = np.unique(np.concatenate([np.linspace(lo, hi, samples), [lo, hi, 0.0 if lo < 0 < hi else lo]]))
    w = pot._w(u)
    dd = pot._d2(u)
    i_min = int(np.argmin(dd))
    min_d2 = float(dd[i_min])
    coerc = w - np.maximum(0.0, pot.c1 * np.abs(u) ** pot.p - pot.c2)
    margin = float(np.min(coerc))

    ends = np.array([lo, hi])
    ratio = pot._d1(ends) / np.maximum(np.abs(ends), 1e-300) ** pot.p

    h = 1e-5 * max(1.0, hi - lo)
    fd1 = (pot._w(u + h) - pot._w(u - h)) / (2 * h)
    fd2 = (pot._d1(u + h) - pot._d1(u - h)) / (2 * h)
    err1 = np.abs(fd1 - pot._d1(u)) / np.maximum(1.0, np.abs(pot._d1(u)))
    err2 = np.abs(fd2 - dd) / np.maximum(1.0, np.abs(dd))
    deriv_err = float(max(err1.max(), err2.max()))

    failures = []
    if not min_d2 > 0:
        failures.append(f"W'' not positive: min {min_d2:g} at u={u[i_min]:g}")
    elif min_d2 < pot.c0 * (1 - 1e-12):
        failures.append(f"declared c0={pot.c0:g} exceeds sampled min W''={min_d2:g}")
    if np.any(w < -1e-12 * max(1.0, float(np.max(np.abs(w))))):
        failures.append("W takes negative values")
    if margin < -1e-12 * max(1.0, float(np.max(np.abs(w)))):
        failures.append(f"coercivity violated by {-margin:g}")
    if deriv_err > 1e-6:
        failures.append(f"derivatives inconsistent with W (rel err {deriv_err:g})")

    qb = quotient_bound(pot, (lo, hi)) if min_d2 > 0 else math.inf
    if not np.isfinite(qb):
        failures.append("flux-remainder quotient unbounded")

    return HypothesisReport(
        interval=(lo, hi), c0=float(pot.c0), min_d2=min_d2, argmin_d2=float(u[i_min]),
        max_d2=float(np.max(dd)), coercivity_margin=margin,
        superlinearity_ratio=(float(ratio[0]), float(ratio[1])),
        quotient_bound=qb, derivative_error=deriv_err, failures=failures,
    )
