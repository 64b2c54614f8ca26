import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastolattice.lattice import (
    CFLError, IntegrationError, IntegratorConfig, LatticeState, Recorder, TWO_PI, acceleration,
    cfl_timestep, energy, load_checkpoint, momentum, reverse, run, save_checkpoint, step, strain,
    strains, write_csv,
)
from elastolattice.potential import Custom, PowerPlusQuadratic, Quadratic

LIN = Quadratic(1.0)
PPQ = PowerPlusQuadratic(4, 1.0, 1.0, (0.5, 1.5))


def smooth_state(n, a=0.02, rho=1.0):
    X = TWO_PI * np.arange(n) / n
    return LatticeState(n, rho, a * np.sin(X), a * np.sin(X))


def exact_linear(state, k, t):
    """Eigen-decomposition solution of the linear chain."""
    n, eps, rho = state.n, state.eps, state.rho
    L = (np.roll(np.eye(n), 1, axis=1) + np.roll(np.eye(n), -1, axis=1) - 2 * np.eye(n)) * k / (eps ** 2 * rho)
    lam, V = np.linalg.eigh(-L)
    lam = np.maximum(lam, 0.0)
    w = np.sqrt(lam)
    a = V.T @ state.disp
    b = V.T @ state.vel
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(w > 1e-12, np.sin(w * t) / np.where(w > 0, w, 1), t)
    return V @ (a * np.cos(w * t) + b * s)


class TestStrain:
    def test_rest_and_translation(self):
        assert np.all(strains(LatticeState.rest(6)) == 1.0)
        s = LatticeState(6, 1.0, np.full(6, 0.3), np.zeros(6))
        assert np.allclose(strains(s), 1.0)

    def test_four_particle_example(self):
        h = 0.1
        s = LatticeState(4, 1.0, np.array([0.0, h, 0.0, -h]), np.zeros(4))
        e = s.eps
        expected = [1 + h / e, 1 - h / e, 1 - h / e, 1 + h / e]
        assert np.allclose(strains(s), expected)
        assert [strain(s, i) for i in range(4)] == pytest.approx(expected)

    def test_out_of_range(self):
        s = LatticeState.rest(4)
        with pytest.raises(IndexError):
            strain(s, 4)
        with pytest.raises(IndexError):
            strain(s, -1)

    def test_eps_times_n_is_period(self):
        for n in (3, 64, 1000):
            assert LatticeState.rest(n).eps * n == pytest.approx(TWO_PI, rel=1e-15)

    def test_from_cells_round_trip(self):
        n = 16
        X = TWO_PI * np.arange(n) / n
        u = 1 + 0.1 * np.cos(X)
        s = LatticeState.from_cells(u, np.zeros(n))
        assert np.allclose(strains(s), u, atol=1e-14)
        with pytest.raises(ValueError):
            LatticeState.from_cells(u + 0.1, np.zeros(n))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            LatticeState(3, 1.0, np.zeros(4), np.zeros(3))
        with pytest.raises(ValueError):
            LatticeState(3, 0.0, np.zeros(3), np.zeros(3))


class TestAcceleration:
    def test_uniform_strain(self):
        s = LatticeState(8, 1.0, np.full(8, 0.2), np.zeros(8))
        assert np.allclose(acceleration(s, PPQ), 0.0)

    def test_discrete_laplacian(self):
        rng = np.random.default_rng(0)
        s = LatticeState(10, 2.0, rng.normal(size=10) * 0.01, np.zeros(10))
        d, e = s.disp, s.eps
        lap = (np.roll(d, -1) - 2 * d + np.roll(d, 1)) / (e * e * s.rho)
        assert np.allclose(acceleration(s, LIN), lap)

    def test_single_displaced_particle(self):
        h = 1e-3
        d = np.zeros(8)
        d[0] = h
        s = LatticeState(8, 1.0, d, np.zeros(8))
        e2 = s.eps ** 2
        a = acceleration(s, LIN)
        expected = np.zeros(8)
        expected[0] = -2 * h / e2
        expected[1] = expected[7] = h / e2
        assert np.allclose(a, expected, rtol=1e-12, atol=1e-12)


class TestEnergyAndConservation:
    def test_rest_energy(self):
        pot = Custom(w=lambda u: 0.5 * (u - 1) ** 2, dw=lambda u: u - 1, d2w=lambda u: np.ones_like(u), c0=1.0)
        assert energy(LatticeState.rest(16), pot) == 0.0
        s = LatticeState(16, 3.0, np.zeros(16), np.full(16, 2.0))
        assert energy(s, pot) == pytest.approx(TWO_PI * 3.0 * 4 / 2)

    def _drift(self, state, pot, t_end):
        cfg = IntegratorConfig.from_cfl(pot, state.n, state.rho, t_end, sample_interval=0.25, interval=pot.interval)
        rec = Recorder()
        run(state, pot, cfg, rec)
        E = np.array([energy(s, pot) for s in rec.states])
        return np.max(np.abs(E - E[0])) / abs(E[0])

    def test_energy_drift_nonlinear(self):
        s = smooth_state(256)
        d5 = self._drift(s, PPQ, 5.0)
        d10 = self._drift(s, PPQ, 10.0)
        assert d5 < 1e-6
        assert d10 < 2 * d5

    def test_momentum_conserved(self):
        rng = np.random.default_rng(1)
        n = 128
        s = LatticeState(n, 1.0, 0.001 * rng.normal(size=n), 0.05 + 0.01 * rng.normal(size=n))
        cfg = IntegratorConfig.from_cfl(PPQ, n, 1.0, 1.0, interval=PPQ.interval)
        rec = Recorder()
        run(s, PPQ, cfg, rec)
        P = np.array([momentum(x) for x in rec.states])
        assert np.max(np.abs(P - P[0])) < 1e-12 * n

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-3, 3))
    def test_translation_equivariance(self, c):
        s = smooth_state(32, 0.05)
        t = LatticeState(32, 1.0, s.disp + c, s.vel)
        assert np.allclose(strains(s), strains(t), atol=1e-12)
        assert np.allclose(acceleration(s, PPQ), acceleration(t, PPQ), atol=1e-8)
        assert energy(s, PPQ) == pytest.approx(energy(t, PPQ), rel=1e-12)


class TestStepAndRun:
    def test_fixed_point(self):
        s = LatticeState(8, 1.0, np.full(8, 0.1), np.zeros(8))
        out = step(s, PPQ, 0.01)
        assert np.array_equal(out.disp, s.disp) and np.array_equal(out.vel, s.vel)
        assert out.t == pytest.approx(0.01)
        assert s.t == 0.0

    def test_mode_returns_after_one_period_second_order(self):
        n, m = 32, 3
        eps = TWO_PI / n
        X = eps * np.arange(n)
        omega = (2 / eps) * abs(math.sin(m * eps / 2))
        period = TWO_PI / omega
        s0 = LatticeState(n, 1.0, 1e-3 * np.cos(m * X), np.zeros(n))
        errs = []
        for steps in (200, 400):
            cfg = IntegratorConfig(period / steps, period)
            end = run(s0, LIN, cfg)
            # velocity vanishes at the turning point, so its error is linear in the phase error
            errs.append(np.max(np.abs(end.vel)) / (1e-3 * omega))
        assert errs[0] < 1e-2
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)

    def test_reversibility(self):
        s0 = smooth_state(64, 0.05)
        cfg = IntegratorConfig.from_cfl(PPQ, 64, 1.0, 1.0, interval=PPQ.interval)
        fwd = run(s0, PPQ, cfg)
        back = reverse(run(reverse(fwd), PPQ, cfg))
        assert np.max(np.abs(back.disp - s0.disp)) <= 1e-10 * max(1.0, np.max(np.abs(s0.disp)))
        assert np.allclose(back.vel, s0.vel, atol=1e-10)

    def test_t_end_zero_emits_initial_only(self):
        rec = Recorder()
        s = smooth_state(8)
        out = run(s, LIN, IntegratorConfig(0.01, 0.0), rec)
        assert len(rec.states) == 1 and out is s

    def test_standing_wave_envelope(self):
        n, m, A = 64, 2, 1e-3
        eps = TWO_PI / n
        X = eps * np.arange(n)
        omega = (2 / eps) * abs(math.sin(m * eps / 2))
        s0 = LatticeState(n, 1.0, A * np.cos(m * X), np.zeros(n))
        rec = Recorder()
        run(s0, LIN, IntegratorConfig(eps / 10, 3.0, sample_stride=5), rec)
        for s in rec.states:
            assert abs(s.disp[0] / A - math.cos(omega * s.t)) < 1e-4

    def test_matches_eigen_decomposition_oracle(self):
        rng = np.random.default_rng(5)
        n = 24
        s0 = LatticeState(n, 1.5, 1e-3 * rng.normal(size=n), 1e-3 * rng.normal(size=n))
        k = 2.0
        pot = Quadratic(k)
        errs = []
        for dt in (2e-3, 1e-3):
            end = run(s0, pot, IntegratorConfig(dt, 0.7))
            errs.append(np.max(np.abs(end.disp - exact_linear(s0, k, 0.7))))
        assert errs[1] < 1e-4 * 1e-3
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    def test_dt_refinement_second_order(self):
        s0 = smooth_state(64, 0.05)
        base = cfl_timestep(PPQ, s0.eps, 1.0, 0.5, PPQ.interval)
        T = 0.5
        ref = run(s0, PPQ, IntegratorConfig(T / math.ceil(8 * T / base), T))
        errs = []
        for f in (1, 2):
            cfg = IntegratorConfig(T / (f * math.ceil(T / base)), T)
            errs.append(np.max(np.abs(run(s0, PPQ, cfg).disp - ref.disp)))
        assert 3.0 < errs[0] / errs[1] < 5.0

    def test_sampling_and_partial_step(self):
        rec = Recorder()
        run(smooth_state(8), LIN, IntegratorConfig(0.1, 1.05, sample_stride=3), rec)
        t = rec.times
        assert t[0] == 0.0 and t[-1] == pytest.approx(1.05)
        assert np.allclose(t[1:4], [0.3, 0.6, 0.9])

    def test_cfl_policy(self):
        eps = TWO_PI / 64
        dt = cfl_timestep(PPQ, eps, 2.0, 0.5, PPQ.interval)
        assert dt == pytest.approx(0.5 * eps / math.sqrt(PPQ.max_d2() / 2.0))
        cfg = IntegratorConfig(2 * dt, 1.0)
        with pytest.raises(CFLError):
            cfg.check_cfl(PPQ, LatticeState.rest(64, 2.0), 0.5)
        IntegratorConfig(dt, 1.0).check_cfl(PPQ, LatticeState.rest(64, 2.0), 0.5)

    def test_from_cfl_aligns_samples(self):
        cfg = IntegratorConfig.from_cfl(PPQ, 128, 1.0, 1.0, sample_interval=0.125, interval=PPQ.interval)
        assert cfg.dt * cfg.sample_stride == pytest.approx(0.125)
        assert cfg.dt <= cfl_timestep(PPQ, TWO_PI / 128, 1.0, 0.5, PPQ.interval)

    def test_nan_force_raises(self):
        bad = Custom(w=lambda u: u * u, dw=lambda u: np.where(u > 1.5, np.nan, u), d2w=lambda u: np.ones_like(u),
                     c0=1.0)
        d = np.zeros(8)
        d[1] = 0.5
        with pytest.raises(IntegrationError):
            step(LatticeState(8, 1.0, d, np.zeros(8)), bad, 1e-3)

    def test_cached_force_not_reused_across_potentials(self):
        s = smooth_state(16, 0.05)
        a = step(step(s, LIN, 1e-3), PPQ, 1e-3)
        b_mid = step(s, LIN, 1e-3)
        b_mid._acc = None
        b = step(b_mid, PPQ, 1e-3)
        assert np.array_equal(a.vel, b.vel)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            IntegratorConfig(0.0, 1.0)
        with pytest.raises(ValueError):
            IntegratorConfig(0.1, 1.0, scheme="rk4")


class TestSerialisation:
    def test_checkpoint_round_trip(self, tmp_path):
        s = smooth_state(8)
        s.t = 0.25
        save_checkpoint(s, tmp_path / "s.json")
        back = load_checkpoint(tmp_path / "s.json")
        assert back.n == 8 and back.t == 0.25
        assert np.array_equal(back.disp, s.disp) and np.array_equal(back.vel, s.vel)

    def test_csv_rows(self, tmp_path):
        s = smooth_state(4)
        write_csv([s], tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "t,i,disp,vel"
        assert len(lines) == 5
        assert float(lines[2].split(",")[2]) == s.disp[1]
