import math

import numpy as np
import pytest

from elastolattice.entropy import reference_energy
from elastolattice.fields import lp_distance
from elastolattice.lattice import TWO_PI, energy
from elastolattice.potential import PowerPlusQuadratic, Quadratic
from elastolattice.reference import (
    FineLatticeOracle, FourierData, HorizonError, LinearExact, Probe, blowup_time, lipschitz_norm, residual,
)

A = 0.1
MODE = FourierData(1.0, 0.0, ((1, A, 0.0, 0.0, 0.0),))
PPQ = PowerPlusQuadratic(4, 1.0, 1.0, (0.5, 1.5))
X = np.linspace(0, TWO_PI, 97)


@pytest.fixture(scope="module")
def oracle_pair():
    times = np.linspace(0, 1.0, 5)
    lin = FineLatticeOracle.build(Quadratic(1.0), 1.0, MODE, 4096, times)
    return lin, LinearExact(1.0, 1.0, MODE)


class TestLinearExact:
    def test_single_mode_separation_of_variables(self):
        ref = LinearExact(1.0, 1.0, MODE)
        for t in (0.0, 0.3, 2.0):
            u, v = ref.evaluate(t, X)
            assert np.allclose(u, 1 + A * np.cos(X) * math.cos(t), atol=1e-15)
            assert np.allclose(v, -A * np.sin(X) * math.sin(t), atol=1e-15)

    def test_general_data_satisfies_pde(self):
        data = FourierData(1.2, 0.3, ((1, 0.1, 0.05, -0.02, 0.04), (3, 0.01, 0.0, 0.0, 0.02)))
        ref = LinearExact(2.0, 0.5, data)
        u0, v0 = ref.evaluate(0.0, X)
        assert np.allclose(u0, 1.2 + 0.1 * np.cos(X) + 0.05 * np.sin(X) + 0.01 * np.cos(3 * X))
        assert np.allclose(v0, 0.3 - 0.02 * np.cos(X) + 0.04 * np.sin(X) + 0.02 * np.sin(3 * X))
        h, t = 1e-5, 0.7
        (up, vp), (um, vm) = ref.evaluate(t + h, X), ref.evaluate(t - h, X)
        ux, vx, ut, vt = ref.derivatives(t, X)
        assert np.allclose((up - um) / (2 * h), vx, atol=1e-8)
        assert np.allclose((vp - vm) / (2 * h), (2.0 / 0.5) * ux, atol=1e-8)
        assert np.allclose(ut, vx) and np.allclose(vt, 4.0 * ux)

    def test_constant_data(self):
        ref = LinearExact(1.0, 1.0, FourierData(1.0, 0.4))
        u, v = ref.evaluate(5.0, X)
        assert np.all(u == 1.0) and np.all(v == 0.4)
        assert lipschitz_norm(ref, 1.0) == 0.0

    def test_cell_averages_exact(self):
        ref = LinearExact(1.0, 1.0, MODE)
        n = 16
        u, _ = ref.cell_averages(0.4, n)
        b = TWO_PI * np.arange(n + 1) / n
        exact = 1 + A * math.cos(0.4) * (np.sin(b[1:]) - np.sin(b[:-1])) / np.diff(b)
        assert np.allclose(u, exact, atol=1e-15)

    def test_horizon(self):
        ref = LinearExact(1.0, 1.0, MODE, t_max=1.0)
        with pytest.raises(HorizonError):
            ref.evaluate(1.5, X)

    def test_lipschitz_single_mode(self):
        assert lipschitz_norm(LinearExact(1.0, 1.0, MODE), 2 * math.pi) == pytest.approx(A, rel=1e-6)


class TestResidual:
    def test_exact_solution_has_zero_residual(self):
        ref = LinearExact(1.0, 1.0, MODE)
        for probe in (Probe(1, "sin", 1.0), Probe(1, "cos", 2.0), Probe(2, "sin", 0.7)):
            assert abs(residual(ref, Quadratic(1.0), probe)) < 1e-8
            assert abs(residual(ref, Quadratic(1.0), probe, "kinematic")) < 1e-8

    def test_mismatched_stiffness_is_detected(self):
        ref = LinearExact(1.0, 1.0, MODE)
        r = residual(ref, Quadratic(2.0), Probe(1, "sin", 1.0))
        assert abs(r) > 0.05

    def test_zero_probe(self):
        assert residual(LinearExact(1.0, 1.0, MODE), Quadratic(1.0), Probe(amplitude=0.0)) == 0.0

    def test_unknown_equation(self):
        with pytest.raises(ValueError):
            residual(LinearExact(1.0, 1.0, MODE), Quadratic(1.0), Probe(), "energy")


class TestOracle:
    def test_agrees_with_exact_solution(self, oracle_pair):
        orc, ex = oracle_pair
        for t in orc.times:
            pa = orc.pair_at(t)
            u, v = ex.cell_averages(t, orc.n_ref)
            assert np.max(np.abs(pa.u.c0 - u)) < 1e-3
            assert np.max(np.abs(pa.v.c0 - v)) < 1e-3

    def test_lipschitz_cross_validation(self, oracle_pair):
        orc, ex = oracle_pair
        assert abs(lipschitz_norm(orc) - lipschitz_norm(ex, 1.0)) < 1e-3

    def test_self_consistency_under_refinement(self):
        times = [0.0, 0.5]
        pairs = [FineLatticeOracle.build(PPQ, 1.0, MODE, n, times).pair_at(0.5) for n in (512, 1024, 2048)]
        d1 = math.hypot(lp_distance(pairs[0].u, pairs[1].u, 2), lp_distance(pairs[0].v, pairs[1].v, 2))
        d2 = math.hypot(lp_distance(pairs[1].u, pairs[2].u, 2), lp_distance(pairs[1].v, pairs[2].v, 2))
        # observed first order (velocities sit at the left node of each cell)
        assert d2 < 0.6 * d1

    def test_energy_constant(self):
        orc = FineLatticeOracle.build(PPQ, 1.0, MODE, 1024, np.linspace(0, 1, 5))
        E = np.array([energy(s, PPQ) for s in orc.states])
        # symplectic scheme: bounded O(dt^2) oscillation, no secular drift
        assert np.max(np.abs(E - E[0])) / E[0] < 1e-7

    def test_interpolates_between_snapshots(self, oracle_pair):
        orc, _ = oracle_pair
        mid = 0.5 * (orc.times[1] + orc.times[2])
        u, _ = orc.cell_averages(mid, 8)
        u1, _ = orc.cell_averages(orc.times[1], 8)
        u2, _ = orc.cell_averages(orc.times[2], 8)
        assert np.allclose(u, 0.5 * (u1 + u2))
        with pytest.raises(HorizonError):
            orc.state_at(mid)

    def test_beyond_lifespan(self):
        with pytest.raises(HorizonError):
            FineLatticeOracle.build(PPQ, 1.0, MODE, 256, [0, 2.0], t_max=1.0)
        orc = FineLatticeOracle.build(PPQ, 1.0, MODE, 256, [0, 0.5])
        with pytest.raises(HorizonError):
            orc.evaluate(0.75, X)

    def test_lipschitz_cap_triggers(self):
        with pytest.raises(HorizonError):
            FineLatticeOracle.build(PPQ, 1.0, MODE, 256, [0, 0.5], lipschitz_cap_factor=0.5)

    def test_coarsening_non_nested(self, oracle_pair):
        orc, ex = oracle_pair
        u, v = orc.cell_averages(0.0, 48)
        ue, ve = ex.cell_averages(0.0, 48)
        assert np.allclose(u, ue, atol=1e-12) and np.allclose(v, ve, atol=1e-12)


class TestReferenceEnergy:
    def test_linear_energy_conserved(self):
        ref = LinearExact(1.0, 1.0, MODE)
        pot = Quadratic(1.0)
        e = [reference_energy(ref, t, pot, 1.0) for t in (0.0, 0.7, 1.9)]
        assert np.allclose(e, e[0], rtol=1e-12)
        assert e[0] == pytest.approx(0.5 * (TWO_PI + math.pi * A * A), rel=1e-12)


class TestBlowup:
    def test_linear_law_never_blows_up(self):
        assert blowup_time(Quadratic(1.0), 1.0, MODE) == math.inf

    def test_power_law_estimate(self):
        # independent evaluation with W'' = 12u^2 + 1, W''' = 24u and u = 1 + a cos X, v = 0
        Xs = TWO_PI * np.arange(4096) / 4096
        u = 1 + A * np.cos(Xs)
        d2 = 12 * u ** 2 + 1
        rate = 24 * np.abs(u) * np.sqrt(d2) * A * np.abs(np.sin(Xs)) / (4 * d2)
        assert blowup_time(PPQ, 1.0, MODE) == pytest.approx(1 / rate.max(), rel=1e-6)
        assert 5.0 < blowup_time(PPQ, 1.0, MODE) < 7.0
