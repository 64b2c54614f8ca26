"""Piecewise-polynomial fields on the periodic cell ``[0, 2 pi)``.

A :class:`Field` is piecewise constant or piecewise linear over a partition
``0 = b_0 < b_1 < ... < b_n = 2 pi``. On cell ``j`` its value is
``c0[j] + c1[j] * (X - b_j)``. Cells are half-open ``[b_j, b_{j+1})`` so point
evaluation at a breakpoint returns the right limit.

Deformation fields are not periodic but satisfy ``y(X + 2 pi) = y(X) + 2 pi``;
this shift is carried in ``Field.winding``.

L^p norms are computed cell by cell in closed form, never by quadrature.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeState, TWO_PI, strains

CONSTANT = "constant"
LINEAR = "linear"

# breakpoints closer than this are treated as one
_MERGE_TOL = 1e-12


def uniform_breaks(n: int) -> np.ndarray:
    b = TWO_PI * np.arange(n + 1) / n
    b[-1] = TWO_PI
    return b


@dataclass(frozen=True)
class Field:
    kind: str
    breakpoints: np.ndarray
    c0: np.ndarray
    c1: np.ndarray
    winding: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.breakpoints, dtype=float)
        c0 = np.asarray(self.c0, dtype=float)
        c1 = np.asarray(self.c1, dtype=float)
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c1", c1)
        if self.kind not in (CONSTANT, LINEAR):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if b.ndim != 1 or b.size < 2 or b[0] != 0.0 or abs(b[-1] - TWO_PI) > 1e-12:
            raise ValueError("breakpoints must run from 0 to 2*pi")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if c0.shape != (b.size - 1,) or c1.shape != c0.shape:
            raise ValueError("one coefficient pair per cell required")
        if not (np.all(np.isfinite(c0)) and np.all(np.isfinite(c1))):
            raise ValueError("field coefficients must be finite")
        if self.kind == CONSTANT and np.any(c1 != 0):
            raise ValueError("piecewise-constant field with nonzero slope")

    @classmethod
    def constant(cls, values, breakpoints=None, winding: float = 0.0) -> "Field":
        values = np.asarray(values, dtype=float)
        if breakpoints is None:
            breakpoints = uniform_breaks(values.size)
        return cls(CONSTANT, breakpoints, values, np.zeros_like(values), winding)

    @classmethod
    def from_nodes(cls, nodes, breakpoints=None, winding: float = 0.0) -> "Field":
        """Continuous piecewise-linear field through ``nodes`` at the left breakpoints.

        The right end of the last cell takes ``nodes[0] + winding``.
        """
        nodes = np.asarray(nodes, dtype=float)
        if breakpoints is None:
            breakpoints = uniform_breaks(nodes.size)
        b = np.asarray(breakpoints, dtype=float)
        right = np.append(nodes[1:], nodes[0] + winding)
        return cls(LINEAR, b, nodes, (right - nodes) / np.diff(b), winding)

    @property
    def n_cells(self) -> int:
        return self.c0.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def __sub__(self, other: "Field") -> "Field":
        b, (a0, a1), (b0, b1) = _common_refinement(self, other)
        kind = CONSTANT if (self.kind == CONSTANT and other.kind == CONSTANT) else LINEAR
        return Field(kind, b, a0 - b0, a1 - b1, self.winding - other.winding)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell_left", "cell_right", "coeff0", "coeff1"])
            for j in range(self.n_cells):
                w.writerow([repr(float(self.breakpoints[j])), repr(float(self.breakpoints[j + 1])),
                            repr(float(self.c0[j])), repr(float(self.c1[j]))])


@dataclass(frozen=True)
class FieldPair:
    """Strain and velocity fields, both piecewise constant on the lattice cells."""

    u: Field
    v: Field


def interpolate(state: LatticeState) -> tuple[Field, Field, FieldPair]:
    """Interpolated deformation ``y``, step deformation ``ytilde`` and the (u, v) pair."""
    x = state.positions
    b = uniform_breaks(state.n)
    y = Field.from_nodes(x, b, winding=TWO_PI)
    ytilde = Field.constant(x, b, winding=TWO_PI)
    pair = FieldPair(Field.constant(strains(state), b), Field.constant(state.vel, b))
    return y, ytilde, pair


def _cell_powers(a, b, w, p):
    """``int_0^w |a + b s|^p ds`` elementwise."""
    out = np.empty_like(a)
    flat = np.abs(b) * w <= 1e-3 * np.abs(a)
    if np.any(flat):
        # integrand analytic and nearly constant: 8-point Gauss-Legendre is exact to round-off
        x, wt = np.polynomial.legendre.leggauss(8)
        s = 0.5 * w[flat, None] * (x + 1.0)
        vals = np.abs(a[flat, None] + b[flat, None] * s) ** p
        out[flat] = 0.5 * w[flat] * (vals @ wt)
    rest = ~flat
    if np.any(rest):
        a_, b_, w_ = a[rest], b[rest], w[rest]
        slope = b_ != 0
        res = np.abs(a_) ** p * w_
        z0 = a_[slope]
        z1 = a_[slope] + b_[slope] * w_[slope]
        # F(z) = sign(z)|z|^(p+1)/(p+1) is an antiderivative of |z|^p across sign changes
        F = lambda z: np.sign(z) * np.abs(z) ** (p + 1) / (p + 1)
        res[slope] = (F(z1) - F(z0)) / b_[slope]
        out[rest] = res
    return out


def lp_norm(f: Field, p: float) -> float:
    """Exact ``L^p(0, 2 pi)`` norm; ``p = inf`` gives the sup norm."""
    if not p >= 1:
        raise ValueError("lp_norm needs p >= 1")
    w = f.widths
    if math.isinf(p):
        right = f.c0 + f.c1 * w
        return float(max(np.max(np.abs(f.c0)), np.max(np.abs(right))))
    if f.kind == CONSTANT:
        total = float(np.sum(np.abs(f.c0) ** p * w))
    else:
        total = float(np.sum(_cell_powers(f.c0, f.c1, w, p)))
    return total ** (1.0 / p)


def _merged_breaks(*fields: Field) -> np.ndarray:
    b = np.unique(np.concatenate([f.breakpoints for f in fields]))
    keep = np.concatenate([[True], np.diff(b) > _MERGE_TOL])
    b = b[keep]
    b[-1] = TWO_PI
    return b


def restrict(f: Field, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients of ``f`` on a refinement ``b`` of its partition."""
    mid = 0.5 * (b[:-1] + b[1:])
    j = np.clip(np.searchsorted(f.breakpoints, mid, side="right") - 1, 0, f.n_cells - 1)
    c0 = f.c0[j] + f.c1[j] * (b[:-1] - f.breakpoints[j])
    return c0, f.c1[j].copy()


def _common_refinement(f: Field, g: Field):
    b = _merged_breaks(f, g)
    return b, restrict(f, b), restrict(g, b)


def lp_distance(f: Field, g: Field, p: float) -> float:
    """``||f - g||_p`` on the merged partition (exact for mixed kinds and grids)."""
    if abs(f.winding - g.winding) > 1e-12:
        raise ValueError("fields have incompatible periodic shifts")
    return lp_norm(f - g, p)


def sample(f: Field, X):
    """Point values with ``X`` wrapped into ``[0, 2 pi)``; right-continuous at breakpoints."""
    X = np.asarray(X, dtype=float)
    k = np.floor(X / TWO_PI)
    Xw = X - TWO_PI * k
    # round-off can land exactly on the right end
    wrap = Xw >= TWO_PI
    Xw = np.where(wrap, 0.0, Xw)
    k = k + wrap
    j = np.clip(np.searchsorted(f.breakpoints, Xw, side="right") - 1, 0, f.n_cells - 1)
    out = f.c0[j] + f.c1[j] * (Xw - f.breakpoints[j]) + k * f.winding
    return float(out) if out.ndim == 0 else out


def difference_quotient(f: Field, m: int) -> Field:
    """Piecewise-constant forward difference quotients of ``f`` on a uniform ``m``-cell grid."""
    b = uniform_breaks(m)
    vals = np.asarray(sample(f, b))
    return Field.constant(np.diff(vals) / np.diff(b), b)


def uniform_bounds(E0: float, rho: float, c1: float, c2: float, p: float) -> tuple[float, float]:
    """Energy-derived bounds on ``||v||_2`` and ``||u||_p`` for a chain with energy ``E0``.

    Uses ``W >= 0`` for the kinetic part and ``c1 int |u|^p <= E0 + 2 pi c2`` for the strain.
    """
    kinetic = math.sqrt(2 * E0 / rho)
    strain = ((E0 + TWO_PI * c2) / c1) ** (1.0 / p)
    return kinetic, strain
