"""Relative entropy between a chain and a classical reference, and the Gronwall check.

For the energy density ``eta(u, v) = rho v^2 / 2 + W(u)`` the relative entropy is
the first-order Taylor remainder::

    eta_rel(u, v | ub, vb) = rho/2 (v - vb)^2 + W(u) - W(ub) - W'(ub) (u - ub)

For smooth solutions ``d/dt int eta_rel = int vb_X * Z`` with
``Z = W'(u) - W'(ub) - W''(ub)(u - ub)``, so a bound ``|Z| <= C_q * eta_rel``
gives ``H(t) <= H(0) exp(C_q ||vb_X||_inf t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import FieldPair, _merged_breaks, restrict
from .potential import Potential, quotient_bound, relative_potential
from .reference import FineLatticeOracle, derivative_sups


def eta(pot: Potential, rho: float, u, v):
    out = 0.5 * rho * np.asarray(v, dtype=float) ** 2 + pot._w(np.asarray(u, dtype=float))
    return out if np.ndim(out) else float(out)


def eta_rel(pot: Potential, rho: float, u, v, ubar, vbar):
    dv = np.asarray(v, dtype=float) - np.asarray(vbar, dtype=float)
    out = 0.5 * rho * dv ** 2 + relative_potential(pot, u, ubar)
    return out if np.ndim(out) else float(out)


def integrate_against(pair: FieldPair, ref, t: float, fn, order: int = 5) -> float:
    """``int_Q fn(u, v, ubar(t, X), vbar(t, X)) dX`` for a piecewise-constant pair.

    Against an oracle both sides are piecewise constant and the integral is an
    exact sum over the merged partition. Against a smooth reference each cell
    uses ``order``-point Gauss-Legendre.
    """
    if isinstance(ref, FineLatticeOracle):
        rp = ref.pair_at(t)
        b = _merged_breaks(pair.u, pair.v, rp.u, rp.v)
        u, _ = restrict(pair.u, b)
        v, _ = restrict(pair.v, b)
        ub, _ = restrict(rp.u, b)
        vb, _ = restrict(rp.v, b)
        return float(np.sum(np.diff(b) * fn(u, v, ub, vb)))
    b = pair.u.breakpoints
    if not np.array_equal(b, pair.v.breakpoints):
        raise ValueError("u and v fields must share cells")
    x, w = np.polynomial.legendre.leggauss(order)
    left, width = b[:-1], np.diff(b)
    X = left[:, None] + 0.5 * width[:, None] * (x + 1.0)
    ub, vb = ref.evaluate(t, X.ravel())
    ub = np.asarray(ub).reshape(X.shape)
    vb = np.asarray(vb).reshape(X.shape)
    vals = fn(pair.u.c0[:, None], pair.v.c0[:, None], ub, vb)
    return float(np.sum(0.5 * width * (vals @ w)))


def integrate_relative_entropy(pair: FieldPair, ref, t: float, pot: Potential, rho: float,
                               order: int = 5) -> float:
    """``H(t) = int_Q eta_rel(u, v | ubar, vbar) dX``."""
    return integrate_against(pair, ref, t, lambda u, v, ub, vb: eta_rel(pot, rho, u, v, ub, vb), order)


def reference_energy(ref, t: float, pot: Potential, rho: float, n_cells: int = 256, order: int = 5) -> float:
    """``int_Q eta(ubar, vbar) dX`` at time ``t``."""
    from .fields import Field
    zero = Field.constant(np.zeros(n_cells))
    return integrate_against(FieldPair(zero, zero), ref, t,
                             lambda u, v, ub, vb: eta(pot, rho, ub, vb), order)


def lp_errors(pair: FieldPair, ref, t: float, p: float = 2.0, order: int = 5) -> tuple[float, float]:
    """``(||u - ubar||_p, ||v - vbar||_2)`` at time ``t``."""
    eu = integrate_against(pair, ref, t, lambda u, v, ub, vb: np.abs(u - ub) ** p, order)
    ev = integrate_against(pair, ref, t, lambda u, v, ub, vb: (v - vb) ** 2, order)
    return eu ** (1 / p), math.sqrt(ev)


def gronwall_constant(pot: Potential, ref, t_end: float | None = None, interval=None) -> dict:
    """Assemble ``C = C_q * sup |vbar_X|`` from certificates.

    ``C_q`` is the sampled flux-remainder quotient bound with ``ubar`` ranging over
    ``interval`` (default: the potential's certified interval, or else the
    reference's strain range). Returns the pieces alongside ``C``.
    """
    lo, hi = ref.value_range(t_end)
    if interval is None:
        interval = pot.interval
    if interval is None:
        pad = 1e-3 * max(1.0, abs(lo), abs(hi))
        interval = (lo - pad, hi + pad)
    elif lo < interval[0] - 1e-12 or hi > interval[1] + 1e-12:
        raise ValueError(f"reference strain range [{lo:g}, {hi:g}] leaves certified interval {interval}")
    cq = quotient_bound(pot, interval)
    sups = derivative_sups(ref, t_end)
    return {"C": cq * sups["v_x"], "quotient_bound": cq, "vbar_x_sup": sups["v_x"],
            "lipschitz": max(sups.values()), "interval": list(interval)}


@dataclass
class EntropyReport:
    times: np.ndarray
    H: np.ndarray
    E: np.ndarray
    C: float = float("nan")
    slack: float = 0.0
    bound: np.ndarray | None = None
    margin: np.ndarray | None = None
    tol: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def gronwall_c1(self) -> float:
        H0 = float(self.H[0])
        return (H0 + self.slack) / H0 if H0 > 0 else math.inf

    @property
    def gronwall_c2(self) -> float:
        return self.C

    @property
    def worst_margin(self) -> float:
        return float(np.min(self.margin)) if self.margin is not None else float("nan")

    @property
    def passed(self) -> bool:
        return self.margin is not None and bool(np.all(self.margin >= -self.tol))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "H", "E", "bound", "margin"])
            bound = self.bound if self.bound is not None else np.full_like(self.H, np.nan)
            margin = self.margin if self.margin is not None else np.full_like(self.H, np.nan)
            for row in zip(self.times, self.H, self.E, bound, margin):
                w.writerow([repr(float(x)) for x in row])


def entropy_series(states, ref, pot: Potential, rho: float | None = None) -> EntropyReport:
    """Relative entropy and chain energy at each recorded state."""
    from .fields import interpolate
    from .lattice import energy
    times, H, E = [], [], []
    for s in states:
        _, _, pair = interpolate(s)
        r = s.rho if rho is None else rho
        times.append(s.t)
        H.append(integrate_relative_entropy(pair, ref, s.t, pot, r))
        E.append(energy(s, pot))
    return EntropyReport(np.array(times), np.array(H), np.array(E))


def gronwall_check(report: EntropyReport, C: float, slack: float = 0.0,
                   rtol: float = 1e-10) -> EntropyReport:
    """Compare ``H(t)`` with ``(H(0) + slack) exp(C t)``.

    Returns a copy of ``report`` with ``bound`` and ``margin`` filled in;
    ``passed`` is false if any margin is below ``-rtol * bound``. Failures are
    reported, never raised.
    """
    if len(report.H) == 0:
        raise ValueError("empty entropy report")
    if C < 0 or slack < 0:
        raise ValueError("Gronwall constant and slack must be non-negative")
    t0 = report.times[0]
    bound = (report.H[0] + slack) * np.exp(C * (report.times - t0))
    margin = bound - report.H
    tol = rtol * float(np.max(bound)) if bound.size else 0.0
    return replace(report, C=float(C), slack=float(slack), bound=bound, margin=margin, tol=tol)
