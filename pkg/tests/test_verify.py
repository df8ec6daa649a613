import dataclasses
import math

import numpy as np
import pytest

import stresscontrol as sc
from stresscontrol.errors import (NonlinearTrajectoryRejected,
                                  ZeroInputEnergy)
from stresscontrol.synthesis import RiccatiSolution

from conftest import SCALAR_P


def scalar_norm_oracle():
    # single-pole transfer function: sqrt(1 + P^2) / |1 - P|
    return math.sqrt(1.0 + SCALAR_P ** 2) / abs(1.0 - SCALAR_P)


class TestFrequencyDomainNorm:
    def test_scalar_formula(self, scalar_system, scalar_rs):
        est = sc.closed_loop_hinf_norm(scalar_system, scalar_rs)
        assert est.value == pytest.approx(scalar_norm_oracle(), abs=1e-4)
        assert est.value < est.gamma_design
        assert est.method == "frequency_domain"

    def test_worst_frequency_is_dc(self, scalar_system, scalar_rs):
        est = sc.closed_loop_hinf_norm(scalar_system, scalar_rs)
        freq = float(est.worst_input_descriptor.split("=")[1])
        assert freq == pytest.approx(0.0, abs=1e-9)

    def test_b1_zero(self, scalar_system, scalar_rs):
        sys = dataclasses.replace(scalar_system, B1=np.array([[0.0]]))
        rs = sc.solve_h_infinity_riccati(sys)
        assert sc.closed_loop_hinf_norm(sys, rs).value == 0.0

    def test_zero_output_and_gain(self):
        # stable drift, no control channel, zero sensing: the map w -> (Cs, u)
        # is identically zero
        sys = sc.LinearSystem(drift=np.array([[-1.0]]), B1=np.array([[1.0]]),
                              B2=np.zeros((1, 0)), C=np.array([[0.0]]),
                              gamma=2.0, weights=np.array([1.0]))
        rs = RiccatiSolution(P=np.zeros((1, 1)), P_folded=np.zeros((1, 1)),
                             gain=np.zeros((0, 1)), residual_norm=0.0,
                             closed_loop_abscissa=-1.0, saddle_abscissa=-1.0,
                             gamma_used=2.0, sys=sys)
        assert sc.closed_loop_hinf_norm(sys, rs).value == 0.0

    def test_frequency_response_matches_formula(self, scalar_system, scalar_rs):
        freqs = np.array([0.0, 1.0, 5.0])
        mags = sc.verify.frequency_response(scalar_system, scalar_rs, freqs) \
            if hasattr(sc, "verify") else None
        from stresscontrol.verify import frequency_response
        mags = frequency_response(scalar_system, scalar_rs, freqs)
        a_cl = 1.0 - SCALAR_P
        expected = np.sqrt(1.0 + SCALAR_P ** 2) / np.sqrt(freqs ** 2 + a_cl ** 2)
        np.testing.assert_allclose(mags, expected, rtol=1e-10)


class TestEmpiricalGain:
    def test_scalar_sinusoid_sweep(self, single_node, scalar_rs):
        disc, params, io = single_node
        freqs = np.geomspace(0.2, 20.0, 15)
        ensemble = [sc.DisturbanceSpec(kind="sinusoid", amplitude=1.0,
                                       frequency=float(f)) for f in freqs]
        est = sc.empirical_l2_gain(disc, params, io, scalar_rs, ensemble,
                                   T=60.0, dt=5e-3, linearized=True)
        fd = scalar_norm_oracle()
        assert est.value <= fd * 1.02
        assert est.value >= fd * 0.9   # sweep brackets the resonance
        assert est.ensemble_size == 15

    def test_nonlinear_small_amplitude(self, single_node, scalar_rs):
        disc, params, io = single_node
        ensemble = [sc.DisturbanceSpec(kind="sinusoid", amplitude=0.02,
                                       frequency=0.3),
                    sc.DisturbanceSpec(kind="filtered_noise", amplitude=0.02,
                                       bandwidth=2.0, seed=4)]
        est = sc.empirical_l2_gain(disc, params, io, scalar_rs, ensemble,
                                   T=60.0, dt=2e-3, linearized=False)
        assert est.value < est.gamma_design

    def test_zero_input_energy(self, single_node, scalar_rs):
        disc, params, io = single_node
        ensemble = [sc.DisturbanceSpec(kind="sinusoid", amplitude=0.0,
                                       frequency=1.0)]
        with pytest.raises(ZeroInputEnergy):
            sc.empirical_l2_gain(disc, params, io, scalar_rs, ensemble,
                                 T=5.0, dt=1e-2, linearized=True)


class TestDecrement:
    def run_linear(self, single_node, rs, dt, disturbance=None, T=4.0):
        disc, params, io = single_node
        return sc.simulate(disc, params, io, np.ones(1),
                           controller=sc.feedback_gain(rs),
                           disturbance=disturbance, T=T, dt=dt,
                           linearized=True)

    def test_zero_trajectory(self, single_node, scalar_rs):
        disc, params, io = single_node
        traj = sc.simulate(disc, params, io, np.zeros(1), T=1.0, dt=1e-2,
                           linearized=True)
        report = sc.lyapunov_decrement_check(traj, scalar_rs)
        assert report.max_identity_violation == 0.0

    def test_identity_and_halving(self, single_node, scalar_rs):
        dt = 1e-3
        r1 = sc.lyapunov_decrement_check(
            self.run_linear(single_node, scalar_rs, dt), scalar_rs)
        r2 = sc.lyapunov_decrement_check(
            self.run_linear(single_node, scalar_rs, dt / 2.0), scalar_rs)
        assert r1.mode == "identity"
        assert r1.m_est > 0.0
        ratio = r1.max_identity_violation / r2.max_identity_violation
        assert 1.6 <= ratio <= 2.6
        # violation bounded by the integrator-order scale
        scale = (1.0 + 1.0) * (1.0 + SCALAR_P) * (1.0 + SCALAR_P - 1.0)
        assert r1.max_identity_violation <= 10.0 * dt * scale

    def test_scalar_decrement_rate(self, single_node, scalar_rs):
        # -dV/dt = 1/2 (P^2 + P^2/4 + 1) s^2 for the scalar loop
        report = sc.lyapunov_decrement_check(
            self.run_linear(single_node, scalar_rs, 1e-4), scalar_rs)
        m_exact = 0.5 * (SCALAR_P ** 2 * 1.25 + 1.0)
        assert report.m_est == pytest.approx(m_exact, rel=1e-2)

    def test_rejects_nonlinear_trajectory(self, single_node, scalar_rs):
        disc, params, io = single_node
        traj = sc.simulate(disc, params, io, np.ones(1),
                           controller=sc.feedback_gain(scalar_rs),
                           T=1.0, dt=1e-3, linearized=False)
        with pytest.raises(NonlinearTrajectoryRejected):
            sc.lyapunov_decrement_check(traj, scalar_rs)

    def test_disturbed_inequality(self, single_node, scalar_rs):
        disc, params, io = single_node
        gen = sc.make_disturbance(
            sc.DisturbanceSpec(kind="sinusoid", amplitude=0.5, frequency=2.0),
            disc, io)
        traj = self.run_linear(single_node, scalar_rs, 1e-3, disturbance=gen,
                               T=6.0)
        report = sc.lyapunov_decrement_check(traj, scalar_rs)
        assert report.mode == "inequality"
        # completed square keeps dV/dt below the bound up to O(dt)
        assert report.max_identity_violation <= 1e-2


class TestCertificate:
    def test_scalar_constants(self, scalar_system, scalar_rs):
        params = sc.ModelParams(D_s=1e-12, c2=1.0, S=1.0, gamma=2.0)
        cert = sc.contraction_certificate(scalar_system, params, scalar_rs)
        a = SCALAR_P - 1.0
        assert cert.a == pytest.approx(a, abs=1e-10)
        assert cert.kappa == pytest.approx(1.0, abs=1e-9)
        assert cert.C_const == pytest.approx(1.0 / a, rel=1e-9)
        assert cert.s0_threshold == pytest.approx(a ** 2 / 8.0, rel=1e-9)
        assert cert.mu_contraction == pytest.approx(a / 4.0, rel=1e-9)
        assert cert.mu_stability_cap == pytest.approx(math.sqrt(a), rel=1e-9)
        assert cert.consistent
        assert cert.mu_lower <= cert.mu_upper
        assert cert.mu_lower < cert.mu_cap

    def test_interval_at_threshold_degenerates(self, scalar_system, scalar_rs):
        params = sc.ModelParams(D_s=1e-12, c2=1.0, S=1.0, gamma=2.0)
        cert = sc.contraction_certificate(scalar_system, params, scalar_rs,
                                          s0_norm=None)
        pinch = sc.contraction_certificate(scalar_system, params, scalar_rs,
                                           s0_norm=cert.s0_threshold)
        assert pinch.mu_lower == pytest.approx(pinch.mu_upper, abs=1e-9)

    def test_vanishing_nonlinearity_unbounded(self, scalar_system, scalar_rs):
        params = sc.ModelParams(D_s=1e-12, c2=0.0, S=1.0, gamma=2.0)
        cert = sc.contraction_certificate(scalar_system, params, scalar_rs)
        assert math.isinf(cert.s0_threshold)
        assert math.isinf(cert.mu_contraction)
        assert cert.consistent

    def test_kappa_at_least_one(self, grid17):
        disc, params, io, sys, rs = grid17
        cert = sc.contraction_certificate(sys, params, rs)
        assert cert.kappa >= 1.0
        assert cert.a == pytest.approx(-rs.closed_loop_abscissa)
        assert cert.C_const == pytest.approx(cert.kappa / cert.a)


class TestBasin:
    def test_scalar_certified_region_converges(self, single_node,
                                               scalar_system, scalar_rs):
        disc, params, io = single_node
        cert = sc.contraction_certificate(scalar_system, params, scalar_rs)
        thr = cert.s0_threshold
        report = sc.basin_sweep(disc, params, io, sc.feedback_gain(scalar_rs),
                                [0.0, 0.5 * thr, 0.9 * thr, 2.0 * thr],
                                T=20.0 / cert.a, dt=1e-3, certificate=cert)
        assert report.verdicts[0].verdict == "CONVERGED"
        for v in report.verdicts:
            if v.amplitude <= thr:
                assert v.verdict == "CONVERGED"
        assert report.certificate_conservative
        assert report.empirical_critical_amplitude >= thr

    def test_uncontrolled_diverges(self, single_node):
        disc, params, io = single_node
        report = sc.basin_sweep(disc, params, io, None, [1e-3, 0.1, 0.5],
                                T=30.0, dt=1e-3)
        for v in report.verdicts:
            assert v.verdict == "DIVERGED"
            assert v.final_norm == pytest.approx(params.S, rel=1e-3)

    def test_bump_shape(self, grid17):
        disc, params, io, sys, rs = grid17
        cert = sc.contraction_certificate(sys, params, rs)
        report = sc.basin_sweep(disc, params, io, sc.feedback_gain(rs),
                                [0.5 * cert.s0_threshold], T=20.0 / cert.a,
                                dt=1e-3, shape="bump", certificate=cert)
        assert report.verdicts[0].verdict == "CONVERGED"


class TestSaddleCost:
    def test_zero_initial_state(self, single_node, scalar_rs):
        disc, params, io = single_node
        report = sc.saddle_cost_check(disc, params, io, scalar_rs,
                                      [np.zeros(1)], scheme="rk4_explicit")
        entry = report.entries[0]
        assert entry.J == pytest.approx(0.0, abs=1e-12)
        assert entry.gradient_rel_error == 0.0

    def test_scalar_value_function(self, single_node, scalar_rs):
        disc, params, io = single_node
        report = sc.saddle_cost_check(disc, params, io, scalar_rs,
                                      [np.array([0.1])], scheme="rk4_explicit")
        entry = report.entries[0]
        assert entry.quadratic_value == pytest.approx(0.5 * SCALAR_P * 0.01,
                                                      rel=1e-12)
        assert entry.value_error <= 1e-3 * (1.0 + entry.s0_norm ** 2)
        assert entry.gradient_rel_error <= 1e-3
        assert entry.bounded_by_quadratic
        assert report.passed

    def test_quadratic_scaling(self, single_node, scalar_rs):
        disc, params, io = single_node
        report = sc.saddle_cost_check(
            disc, params, io, scalar_rs,
            [np.array([0.1]), np.array([0.2])], scheme="rk4_explicit")
        j1, j2 = report.entries[0].J, report.entries[1].J
        assert j2 / j1 == pytest.approx(4.0, rel=1e-4)

    def test_grid_with_directions(self, grid17):
        disc, params, io, sys, rs = grid17
        rng = np.random.default_rng(0)
        dirs = [v / np.linalg.norm(v) for v in rng.standard_normal((4, disc.n))]
        s0 = 0.05 * np.ones(disc.n)
        report = sc.saddle_cost_check(disc, params, io, rs, [s0],
                                      directions=dirs)
        assert report.passed
