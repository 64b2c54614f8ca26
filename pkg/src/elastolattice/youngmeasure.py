"""Empirical Young measures, defect and concentration masses for refinement families.

A family is a list of piecewise-constant functions ``f^eps`` (scalar fields or
``(u, v)`` pairs) on the periodic cell. The measure is the per-spatial-cell
histogram of the finest level over a uniform box in state space. Values outside
the box are counted in the boundary bins, so the part of their energy that the
bin centres cannot represent ends up in the concentration mass.

    gamma_cell = int_cell eta(f) - |cell| <nu, eta_R>     (R large)
    sigma_cell = int_cell eta(f) - |cell| eta(<nu, lambda>)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import Field, FieldPair, _merged_breaks, interpolate, restrict, uniform_breaks
from .lattice import LatticeState, TWO_PI
from .potential import Potential

# fraction of mass ignored at each tail when sizing the box
TAIL_TRIM = 1e-3
BOX_PADDING = 0.05


def square(lam):
    return np.asarray(lam, dtype=float) ** 2


@dataclass
class RefinementFamily:
    """Levels ``(eps, f)`` ordered coarse to fine; ``f`` is a Field or FieldPair."""

    levels: list
    energy_fn: Callable = square
    name: str = "family"

    def __post_init__(self):
        if not self.levels:
            raise ValueError("empty refinement family")
        self.levels = sorted(((float(e), f) for e, f in self.levels), key=lambda x: -x[0])
        kinds = {isinstance(f, FieldPair) for _, f in self.levels}
        if len(kinds) > 1:
            raise ValueError("family mixes scalar fields and pairs")
        for _, f in self.levels:
            for g in _components(f):
                if g.kind != "constant":
                    raise ValueError("only piecewise-constant levels are supported")

    @property
    def dim(self) -> int:
        return 2 if isinstance(self.levels[0][1], FieldPair) else 1

    @property
    def finest(self):
        return self.levels[-1]

    def energies(self) -> np.ndarray:
        return np.array([total_energy(f, self.energy_fn) for _, f in self.levels])

    @property
    def K(self) -> float:
        """Uniform energy bound over the recorded levels."""
        return float(np.max(self.energies()))


def _components(f) -> list[Field]:
    return [f.u, f.v] if isinstance(f, FieldPair) else [f]


def _pieces(f, cells: np.ndarray):
    """Lengths, spatial cell index and values of the pieces of ``f`` split at ``cells``."""
    comps = _components(f)
    b = _merged_breaks(*comps, Field.constant(np.zeros(cells.size - 1), cells))
    lengths = np.diff(b)
    mid = 0.5 * (b[:-1] + b[1:])
    idx = np.clip(np.searchsorted(cells, mid, side="right") - 1, 0, cells.size - 2)
    vals = np.stack([restrict(g, b)[0] for g in comps], axis=-1)
    return lengths, idx, vals


def _energy(fn, vals):
    return np.asarray(fn(*np.moveaxis(vals, -1, 0)), dtype=float)


def total_energy(f, energy_fn=square) -> float:
    lengths, _, vals = _pieces(f, uniform_breaks(1))
    return float(np.sum(lengths * _energy(energy_fn, vals)))


def _weighted_quantile(x, w, q):
    order = np.argsort(x, kind="stable")
    cw = np.cumsum(w[order])
    cw /= cw[-1]
    return float(x[order][min(np.searchsorted(cw, q), x.size - 1)])


def _box(vals, lengths, bins: int, trim: float, pad: float):
    edges = []
    for d in range(vals.shape[1]):
        x = vals[:, d]
        lo = _weighted_quantile(x, lengths, trim)
        hi = _weighted_quantile(x, lengths, 1.0 - trim)
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            # degenerate: put the common value at a bin centre
            h = 2 * pad * max(1.0, abs(lo)) / bins
            start = lo - (bins // 2 + 0.5) * h
            edges.append(start + h * np.arange(bins + 1))
            continue
        span = hi - lo
        edges.append(np.linspace(lo - pad * span, hi + pad * span, bins + 1))
    return edges


@dataclass(frozen=True)
class EmpiricalYoungMeasure:
    """Per-cell probability vectors over a uniform state-space grid.

    ``weights`` has shape ``(J, B)`` for scalar families and ``(J, B, B)`` for pairs.
    """

    cells: np.ndarray
    edges: tuple
    weights: np.ndarray
    finest_eps: float
    outlier_fraction: float = 0.0

    @property
    def n_cells(self) -> int:
        return self.cells.size - 1

    @property
    def dim(self) -> int:
        return len(self.edges)

    def centers(self) -> list[np.ndarray]:
        grids = [0.5 * (e[:-1] + e[1:]) for e in self.edges]
        return list(np.meshgrid(*grids, indexing="ij"))

    def expect(self, g) -> np.ndarray:
        """Per-cell ``<nu, g>`` as an array."""
        gv = np.asarray(g(*self.centers()), dtype=float)
        gv = np.broadcast_to(gv, self.weights.shape[1:])
        return np.tensordot(self.weights, gv, axes=self.dim)

    def write_csv(self, path) -> None:
        grids = self.centers()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            names = ["bin_center"] if self.dim == 1 else ["bin_center_u", "bin_center_v"]
            w.writerow(["cell_index", *names, "weight"])
            for j in range(self.n_cells):
                for k in np.flatnonzero(self.weights[j].ravel()):
                    cs = [repr(float(g.ravel()[k])) for g in grids]
                    w.writerow([j, *cs, repr(float(self.weights[j].ravel()[k]))])


def _histogram(f, cells, edges) -> tuple[np.ndarray, float]:
    lengths, idx, vals = _pieces(f, cells)
    B = edges[0].size - 1
    flat = idx.copy()
    outside = np.zeros(lengths.size, dtype=bool)
    for d, e in enumerate(edges):
        k = np.floor((vals[:, d] - e[0]) / (e[1] - e[0])).astype(np.int64)
        outside |= (k < 0) | (k >= B)
        flat = flat * B + np.clip(k, 0, B - 1)
    J = cells.size - 1
    counts = np.bincount(flat, weights=lengths, minlength=J * B ** len(edges))
    w = counts.reshape((J,) + (B,) * len(edges))
    mass = w.reshape(J, -1).sum(axis=1)
    w = w / mass.reshape((J,) + (1,) * len(edges))
    return w, float(np.sum(lengths[outside]) / TWO_PI)


def build_measure(family: RefinementFamily, J: int, B: int = 256,
                  trim: float = TAIL_TRIM, pad: float = BOX_PADDING) -> EmpiricalYoungMeasure:
    """Histogram of the finest level on ``J`` equal spatial cells and ``B`` bins per axis."""
    if len(family.levels) < 2:
        raise ValueError("build_measure needs at least two refinement levels")
    if J < 1 or B < 1:
        raise ValueError("J and B must be positive")
    eps, f = family.finest
    cells = uniform_breaks(J)
    lengths, _, vals = _pieces(f, cells)
    edges = tuple(_box(vals, lengths, B, trim, pad))
    w, out = _histogram(f, cells, edges)
    return EmpiricalYoungMeasure(cells, edges, w, eps, out)


def pair(measure: EmpiricalYoungMeasure, g) -> Field:
    """``<nu_X, g>`` as a piecewise-constant field over the spatial cells."""
    return Field.constant(measure.expect(g), measure.cells)


def _cell_energy(f, cells, energy_fn) -> np.ndarray:
    lengths, idx, vals = _pieces(f, cells)
    return np.bincount(idx, weights=lengths * _energy(energy_fn, vals), minlength=cells.size - 1)


@dataclass
class ConcentrationEstimate:
    cell_masses: np.ndarray
    truncation_levels: np.ndarray
    total_mass: float
    paired_energy: np.ndarray
    saturated: bool
    clip_magnitude: float
    residual: float
    level_totals: list = field(default_factory=list)
    stable: bool = True
    cells: np.ndarray | None = None

    @property
    def localized_fraction(self) -> float:
        """Share of the mass held by the heaviest cell."""
        return float(np.max(self.cell_masses) / self.total_mass) if self.total_mass > 0 else 0.0


@dataclass
class DefectEstimate:
    cell_masses: np.ndarray
    total_mass: float
    weak_limit: Field
    level_totals: list = field(default_factory=list)


def _gamma_cells(f, measure, energy_fn, R):
    wid = np.diff(measure.cells)
    e_cell = _cell_energy(f, measure.cells, energy_fn)
    paired = measure.expect(lambda *c: np.minimum(energy_fn(*c), R))
    return e_cell - wid * paired, e_cell


def _stable(totals, scale, rtol):
    if len(totals) < 2:
        return True
    a, b = totals[-2][1], totals[-1][1]
    return abs(a - b) <= rtol * max(abs(b), scale)


def concentration_measure(family: RefinementFamily, J: int, truncations=None, B: int = 256,
                          rtol: float = 0.05) -> ConcentrationEstimate:
    """Estimate the concentration mass per spatial cell.

    ``truncations`` must increase. By default they run geometrically up to twice the
    largest energy over the bin centres, which saturates the pairing. The sweep is
    ``saturated`` when the last two levels give the same pairing. Level-to-level
    stability compares the totals of the last two levels, each histogrammed on its own.
    """
    measure = build_measure(family, J, B)
    energy_fn = family.energy_fn
    if truncations is None:
        top = float(np.max(energy_fn(*measure.centers())))
        truncations = max(top, 1e-300) * 2.0 ** np.arange(-6, 2)
    R = np.asarray(truncations, dtype=float)
    if R.ndim != 1 or R.size == 0 or np.any(np.diff(R) <= 0):
        raise ValueError("truncations must be a strictly increasing sequence")
    wid = np.diff(measure.cells)
    paired = np.array([float(np.sum(wid * measure.expect(lambda *c, r=r: np.minimum(energy_fn(*c), r))))
                       for r in R])
    saturated = R.size >= 2 and abs(paired[-1] - paired[-2]) <= 1e-12 * max(1.0, abs(paired[-1]))
    raw, e_cell = _gamma_cells(family.finest[1], measure, energy_fn, R[-1])
    clipped = np.maximum(raw, 0.0)
    clip = float(np.sum(clipped - raw))
    total_e = float(np.sum(e_cell))
    residual = total_e - paired[-1] - float(np.sum(clipped))

    totals = []
    for eps, f in family.levels[-2:]:
        sub = RefinementFamily([(2 * eps, f), (eps, f)], energy_fn)
        m = build_measure(sub, J, B)
        g, _ = _gamma_cells(f, m, energy_fn, R[-1])
        totals.append((eps, float(np.sum(np.maximum(g, 0.0)))))
    return ConcentrationEstimate(clipped, R, float(np.sum(clipped)), paired, bool(saturated), clip,
                                 residual, totals, _stable(totals, 1e-2 * total_e, rtol), measure.cells)


def defect_measure(family: RefinementFamily, J: int, B: int = 256, rtol: float = 0.05) -> DefectEstimate:
    """Per-cell ``int_cell eta(f) - |cell| eta(<nu, lambda>)`` with the weak limit taken from ``nu``."""
    energy_fn = family.energy_fn

    def one(f, measure):
        wid = np.diff(measure.cells)
        means = [measure.expect(lambda *c, d=d: c[d]) for d in range(measure.dim)]
        return _cell_energy(f, measure.cells, energy_fn) - wid * energy_fn(*means), means

    measure = build_measure(family, J, B)
    masses, means = one(family.finest[1], measure)
    weak = Field.constant(means[0], measure.cells)
    totals = []
    for eps, f in family.levels[-2:]:
        m = build_measure(RefinementFamily([(2 * eps, f), (eps, f)], energy_fn), J, B)
        totals.append((eps, float(np.sum(one(f, m)[0]))))
    return DefectEstimate(masses, float(np.sum(masses)), weak, totals)


def write_masses_csv(path, gamma: ConcentrationEstimate, sigma: DefectEstimate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_index", "gamma_mass", "sigma_mass"])
        for j, (g, s) in enumerate(zip(gamma.cell_masses, sigma.cell_masses)):
            w.writerow([j, repr(float(g)), repr(float(s))])


def oscillatory_family(ns: Sequence[int], resolution: int = 8, amplitude: float = 1.0,
                       wavelength: float = 1.0) -> RefinementFamily:
    """``amplitude * sin(X / (wavelength eps))`` with ``eps = 2 pi / N``, sampled at cell midpoints
    of a grid with ``resolution`` cells per ``eps``."""
    levels = []
    for n in ns:
        eps = TWO_PI / n
        m = resolution * n
        b = uniform_breaks(m)
        mid = 0.5 * (b[:-1] + b[1:])
        levels.append((eps, Field.constant(amplitude * np.sin(mid / (wavelength * eps)), b)))
    return RefinementFamily(levels, square, "oscillatory")


def concentrated_family(ns: Sequence[int], width: float = 1.0) -> RefinementFamily:
    """Unit-energy spikes ``(w eps)^{-1/2}`` on ``[0, w eps]``, zero elsewhere."""
    levels = []
    for n in ns:
        eps = TWO_PI / n
        a = width * eps
        if not 0 < a < TWO_PI:
            raise ValueError("spike width must lie inside the period")
        b = np.array([0.0, a, TWO_PI])
        levels.append((eps, Field.constant([a ** -0.5, 0.0], b)))
    return RefinementFamily(levels, square, "concentrated")


def constant_family(c: float, ns: Sequence[int]) -> RefinementFamily:
    return RefinementFamily([(TWO_PI / n, Field.constant(np.full(n, float(c)))) for n in ns],
                            square, "constant")


def two_state_family(a: float, b: float, ns: Sequence[int]) -> RefinementFamily:
    """``a`` on even lattice cells, ``b`` on odd ones (``N`` even)."""
    levels = []
    for n in ns:
        if n % 2:
            raise ValueError("two-state family needs even N")
        vals = np.where(np.arange(n) % 2 == 0, float(a), float(b))
        levels.append((TWO_PI / n, Field.constant(vals)))
    return RefinementFamily(levels, square, "two_state")


def lattice_family(states: Sequence[LatticeState], pot: Potential) -> RefinementFamily:
    """Strain/velocity pairs of chain states at several ``N`` with the mechanical energy density."""
    rho = {s.rho for s in states}
    if len(rho) != 1:
        raise ValueError("states must share rho")
    rho = rho.pop()

    def eta(u, v):
        return 0.5 * rho * np.asarray(v) ** 2 + pot._w(np.asarray(u, dtype=float))

    return RefinementFamily([(s.eps, interpolate(s)[2]) for s in states], eta, "lattice")


def second_moment(measure: EmpiricalYoungMeasure) -> np.ndarray:
    """Per-cell ``<nu, |lambda|^2>``."""
    return measure.expect(lambda *c: sum(np.asarray(x) ** 2 for x in c))


def arcsine_average(g, samples: int = 1 << 16) -> float:
    """``(1/2pi) int_0^{2pi} g(sin theta) d theta`` by the periodic trapezoid rule."""
    th = TWO_PI * np.arange(samples) / samples
    return float(np.mean(g(np.sin(th))))


__all__ = [
    "RefinementFamily", "EmpiricalYoungMeasure", "ConcentrationEstimate", "DefectEstimate",
    "build_measure", "pair", "concentration_measure", "defect_measure", "write_masses_csv",
    "oscillatory_family", "concentrated_family", "constant_family", "two_state_family",
    "lattice_family", "second_moment", "arcsine_average", "total_energy", "square",
]
