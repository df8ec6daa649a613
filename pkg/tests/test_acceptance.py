"""Acceptance suite: one test per headline criterion, each printing a
PASS/FAIL line (run with ``pytest tests/test_acceptance.py -v -s``)."""

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

import stresscontrol as sc
from stresscontrol.cli import main as cli_main
from stresscontrol.synthesis import HjRepresentation

from conftest import SCALAR_P


@contextmanager
def criterion(num, desc):
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE {num}] FAIL - {desc}")
        raise
    print(f"\n[ACCEPTANCE {num}] PASS - {desc}")


def identity_scenario(dim, n, d_s=0.1, c2=1.0, S=1.0, gamma=2.0):
    disc = sc.build_grid(sc.GridSpec(dim, 1.0, n))
    io = sc.build_io_operators(disc, sc.IoLayout(mode="identity"))
    params = sc.ModelParams(D_s=d_s, c2=c2, S=S, gamma=gamma)
    sys = sc.assemble_linearization(disc, params, io)
    return disc, params, io, sys


def bumps_scenario(n, seed, d_s=0.1, c2=1.0, S=1.0):
    rng = np.random.default_rng(seed)
    disc = sc.build_grid(sc.GridSpec(1, 1.0, n))
    act_centers = 0.2 + 0.25 * rng.random(2) + np.array([0.0, 0.35])
    layout = sc.IoLayout(
        mode="bumps",
        disturbance_channels=(sc.Channel((float(0.2 + 0.5 * rng.random()),),
                                         0.05 + 0.03 * float(rng.random())), ),
        actuator_channels=tuple(sc.Channel((float(c),), 0.08)
                                for c in act_centers),
        sensor_channels=(sc.Channel((0.5,), 1.0),
                         sc.Channel((float(0.15 + 0.1 * rng.random()),), 0.25)))
    io = sc.build_io_operators(disc, layout)
    params = sc.ModelParams(D_s=d_s, c2=c2, S=S, gamma=1.0)
    sys = sc.assemble_linearization(disc, params, io, gamma=1.0)
    gamma = 1.3 * sc.minimal_gamma(sys, rel_width=1e-2)
    params = sc.ModelParams(D_s=d_s, c2=c2, S=S, gamma=gamma)
    sys = sc.assemble_linearization(disc, params, io)
    return disc, params, io, sys


def test_criterion_1_scalar_are_oracle(scalar_system):
    with criterion(1, "scalar ARE oracle: P, closed-loop pole, H-inf norm"):
        start = time.perf_counter()
        rs = sc.solve_h_infinity_riccati(scalar_system)
        est = sc.closed_loop_hinf_norm(scalar_system, rs)
        elapsed = time.perf_counter() - start
        assert abs(rs.P[0, 0] - SCALAR_P) <= 1e-10
        assert abs(rs.closed_loop_abscissa - (1.0 - SCALAR_P)) <= 1e-9
        oracle = math.sqrt(1.0 + SCALAR_P ** 2) / abs(1.0 - SCALAR_P)
        assert abs(est.value - oracle) <= 1e-4
        assert elapsed < 1.0


def test_criterion_2_hinf_bound_across_scenarios():
    desc = "H-inf bound: freq-domain norm < gamma and empirical <= norm + 2%"
    with criterion(2, desc):
        start = time.perf_counter()
        scenarios = [
            identity_scenario(1, 17, gamma=2.0),
            identity_scenario(1, 33, d_s=0.05, c2=0.8, gamma=2.0),
            identity_scenario(1, 65, gamma=2.0),
            identity_scenario(2, 9, gamma=2.5),
            bumps_scenario(33, seed=5),
            bumps_scenario(17, seed=9),
        ]
        for disc, params, io, sys in scenarios:
            report = sc.check_stabilizability_detectability(sys)
            assert report.passed, "scenario must pass PBH"
            rs = sc.solve_h_infinity_riccati(sys)
            fd = sc.closed_loop_hinf_norm(sys, rs)
            assert fd.value < rs.gamma_used
            a = -rs.closed_loop_abscissa
            freqs = np.geomspace(a / 10.0, 20.0 * a, 8)
            ensemble = [sc.DisturbanceSpec(kind="sinusoid",
                                           amplitude=0.01 * params.S,
                                           frequency=float(f))
                        for f in freqs]
            emp = sc.empirical_l2_gain(disc, params, io, rs, ensemble,
                                       T=min(10.0 / a, 50.0), dt=1.5e-3,
                                       linearized=False)
            assert emp.value <= fd.value * 1.02
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0


def test_criterion_3_lyapunov_decrement(single_node, scalar_rs):
    desc = "Lyapunov decrement identity: O(dt) violation halving, m_est > 0"
    with criterion(3, desc):
        disc, params, io = single_node

        def violation(dt):
            traj = sc.simulate(disc, params, io, np.ones(1),
                               controller=sc.feedback_gain(scalar_rs),
                               T=4.0, dt=dt, linearized=True)
            return sc.lyapunov_decrement_check(traj, scalar_rs)

        r1 = violation(1e-3)
        r2 = violation(5e-4)
        assert r1.m_est > 0 and r2.m_est > 0
        ratio = r1.max_identity_violation / r2.max_identity_violation
        assert 1.6 <= ratio <= 2.6


def test_criterion_4_logistic_oracle():
    with criterion(4, "uniform-field simulation matches the logistic closed form"):
        disc, params, io, _ = identity_scenario(1, 9, d_s=0.2)
        s0 = 0.1 * np.ones(disc.n)
        exact = params.S * 0.1 * math.exp(5.0) / (
            params.S + 0.1 * (math.exp(5.0) - 1.0))
        imex = sc.simulate(disc, params, io, s0, T=5.0, dt=1e-4,
                           scheme="imex_euler", sample_stride=1000)
        assert np.max(np.abs(imex.states[-1] - exact)) <= 1e-4
        rk4 = sc.simulate(disc, params, io, s0, T=5.0, dt=1e-3,
                          scheme="rk4_explicit", sample_stride=100)
        assert np.max(np.abs(rk4.states[-1] - exact)) <= 1e-8


def test_criterion_5_nonlinear_local_stability(scalar_system, scalar_rs,
                                               single_node):
    desc = ("nonlinear local stability: certified region converges, "
            "uncontrolled diverges, certificate conservative")
    with criterion(5, desc):
        # uncontrolled crisis attractor from every positive uniform amplitude
        disc_u, params_u, io_u, _ = identity_scenario(1, 9, d_s=0.2)
        crash = sc.basin_sweep(disc_u, params_u, io_u, None,
                               [1e-3, 0.1, 0.5], T=35.0, dt=1e-3)
        assert all(v.verdict == "DIVERGED" for v in crash.verdicts)

        scenarios = []
        disc, params, io = single_node
        scenarios.append((disc, params, io, scalar_system, scalar_rs))
        disc2, params2, io2, sys2 = identity_scenario(1, 17)
        scenarios.append((disc2, params2, io2, sys2,
                          sc.solve_h_infinity_riccati(sys2)))
        disc3, params3, io3, sys3 = bumps_scenario(17, seed=3)
        scenarios.append((disc3, params3, io3, sys3,
                          sc.solve_h_infinity_riccati(sys3)))

        for disc_i, params_i, io_i, sys_i, rs_i in scenarios:
            cert = sc.contraction_certificate(sys_i, params_i, rs_i)
            thr = cert.s0_threshold
            amps = [0.3 * thr, 0.6 * thr, 0.9 * thr, 1.5 * thr, 3.0 * thr]
            report = sc.basin_sweep(disc_i, params_i, io_i,
                                    sc.feedback_gain(rs_i), amps,
                                    T=20.0 / cert.a, dt=1e-3,
                                    certificate=cert)
            for v in report.verdicts:
                if v.amplitude <= thr:
                    assert v.verdict == "CONVERGED", \
                        f"amplitude {v.amplitude} below threshold {thr}"
            assert report.certificate_conservative


def test_criterion_6_hj_residual_slopes(single_node, scalar_system, scalar_rs,
                                        grid17):
    desc = "HJ residual slopes: 3.0 +/- 0.1 linear, 4.0 +/- 0.15 corrected"
    with criterion(6, desc):
        disc, params, io = single_node
        base = np.array([1.0])
        _, _, s3 = sc.hj_residual_slopes(disc, params, io,
                                         HjRepresentation(P=scalar_rs.P), base)
        hj = sc.hj_quadratic_correction(scalar_system, params, scalar_rs)
        _, _, s4 = sc.hj_residual_slopes(disc, params, io, hj, base)
        assert abs(s3 - 3.0) <= 0.1
        assert abs(s4 - 4.0) <= 0.15

        disc_g, params_g, io_g, sys_g, rs_g = grid17
        base_g = 1.0 + np.cos(np.pi * disc_g.node_coords[:, 0])
        base_g /= math.sqrt(sc.inner_product(disc_g, base_g, base_g))
        _, _, g3 = sc.hj_residual_slopes(disc_g, params_g, io_g,
                                         HjRepresentation(P=rs_g.P), base_g)
        hj_g = sc.hj_quadratic_correction(sys_g, params_g, rs_g)
        _, _, g4 = sc.hj_residual_slopes(disc_g, params_g, io_g, hj_g, base_g)
        assert abs(g3 - 3.0) <= 0.1
        assert abs(g4 - 4.0) <= 0.15


def test_criterion_7_saddle_cost_conditions(single_node, scalar_rs, grid17):
    desc = ("saddle cost: J = <s0,Ps0>/2, gradient = P s0 (1e-3 relative), "
            "J bounded by ||P||/2 * 1.01")
    with criterion(7, desc):
        disc, params, io = single_node
        rep = sc.saddle_cost_check(disc, params, io, scalar_rs,
                                   [np.array([0.1]), np.array([0.25])],
                                   scheme="rk4_explicit")
        for e in rep.entries:
            assert e.value_error <= 1e-3 * abs(e.quadratic_value)
            assert e.gradient_rel_error <= 1e-3
            assert e.bounded_by_quadratic

        disc_g, params_g, io_g, _, rs_g = grid17
        rng = np.random.default_rng(1)
        dirs = [v / np.linalg.norm(v)
                for v in rng.standard_normal((4, disc_g.n))]
        rep_g = sc.saddle_cost_check(disc_g, params_g, io_g, rs_g,
                                     [0.1 * np.ones(disc_g.n)],
                                     directions=dirs)
        e = rep_g.entries[0]
        assert e.value_error <= 1e-3 * abs(e.quadratic_value)
        assert e.gradient_rel_error <= 1e-3
        assert e.bounded_by_quadratic


def test_criterion_8_conservation_and_adjointness():
    desc = "pure-diffusion mass drift <= 1e-10/step; self-adjointness <= 1e-12"
    with criterion(8, desc):
        disc = sc.build_grid(sc.GridSpec(1, 1.0, 33))
        params = sc.ModelParams(D_s=0.5, c2=0.0, S=1.0, gamma=2.0)
        rng = np.random.default_rng(2)
        field = sc.StateField(values=rng.random(disc.n))
        mass0 = sc.inner_product(disc, np.ones(disc.n), field.values)
        n_steps = 500
        for _ in range(n_steps):
            field = sc.step(disc, params, field, None, None, dt=1e-3)
        mass = sc.inner_product(disc, np.ones(disc.n), field.values)
        assert abs(mass - mass0) <= 1e-10 * n_steps

        norm_a = np.linalg.norm(disc.laplacian, 2)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            u = rng.standard_normal(disc.n)
            v = rng.standard_normal(disc.n)
            lhs = sc.inner_product(disc, sc.apply_laplacian(disc, u), v)
            rhs = sc.inner_product(disc, u, sc.apply_laplacian(disc, v))
            scale = np.linalg.norm(u) * np.linalg.norm(v) * norm_a
            assert abs(lhs - rhs) <= 1e-12 * scale


ACCEPTANCE_CONFIG = """\
controller = "linear"
[grid]
dimension = 1
extent = 1.0
nodes_per_axis = 2
[model]
d_s = 0.5
c2 = 1.0
s_sat = 1.0
gamma = 2.0
[io]
mode = "identity"
[sim]
t_final = 4.0
dt = 1e-3
seed = 13
[disturbance]
kind = "none"
[verify]
ensemble_sinusoids = 3
ensemble_noise = 1
gain_horizon = 5.0
basin_horizon = 10.0
run_saddle = false
"""


def test_criterion_9_reproducible_artifacts(tmp_path):
    desc = "repeated verify runs with --reproducible are byte-identical"
    with criterion(9, desc):
        cfg = tmp_path / "scenario.toml"
        cfg.write_text(ACCEPTANCE_CONFIG)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli_main(["verify", "--config", str(cfg), "--out", str(out_a),
                         "--reproducible"]) == 0
        assert cli_main(["verify", "--config", str(cfg), "--out", str(out_b),
                         "--reproducible"]) == 0
        names = sorted(p.name for p in out_a.iterdir())
        assert names == sorted(p.name for p in out_b.iterdir())
        for name in names:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
