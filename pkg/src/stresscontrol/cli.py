"""Scenario-driven command line: synth, simulate, verify, sweep.

Exit codes: 0 success, 1 configuration/usage error, 2 gamma infeasible,
3 PBH (stabilizability/detectability) failure, 4 non-finite state during
simulation, 5 verification reported a failing check.
"""

from __future__ import annotations

import argparse
import copy
import math
import os
import sys as _sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import report as rep
from . import verify as ver
from .errors import (ConfigError, GammaInfeasible, NoFeasibleGammaFound,
                     NonFiniteState, NotDetectable, NotStabilizable,
                     StressControlError)
from .scenario import (Scenario, build_scenario, initial_field,
                       load_config, parse_config)
from .synthesis import (HjRepresentation, assemble_linearization,
                        feedback_gain, hj_feedback, hj_quadratic_correction,
                        minimal_gamma, solve_h_infinity_riccati)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_GAMMA = 2
EXIT_PBH = 3
EXIT_NONFINITE = 4
EXIT_VERIFY_FAILED = 5


def _thread_count() -> int:
    env = os.environ.get("STRESSCONTROL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _resolve_gamma(scn: Scenario) -> float:
    cfg = scn.config
    if cfg.gamma == "auto":
        sys0 = assemble_linearization(scn.disc, cfg.model_params(1.0),
                                      scn.io, gamma=1.0)
        return minimal_gamma(sys0) * cfg.gamma_margin
    return float(cfg.gamma)


def _synthesize(scn: Scenario):
    gamma_used = _resolve_gamma(scn)
    params = scn.config.model_params(gamma_used)
    sys = assemble_linearization(scn.disc, params, scn.io)
    rs = solve_h_infinity_riccati(sys)
    return params, sys, rs


def _build_controller(scn: Scenario, params, sys, rs):
    kind = scn.config.controller
    if kind == "none" or rs is None:
        return None
    if kind == "linear":
        return feedback_gain(rs)
    hj = hj_quadratic_correction(sys, params, rs)
    return hj_feedback(rs, hj, scn.io)


def cmd_synth(scn: Scenario, out_dir: Path, reproducible: bool,
              dump_matrices: bool = False) -> int:
    params, sys, rs = _synthesize(scn)
    outputs = ["riccati.json"]
    rep.write_json(out_dir / "riccati.json", rep.riccati_report(rs))
    if dump_matrices:
        rep.write_matrix_csv(out_dir / "p_matrix.csv", rs.P)
        rep.write_matrix_csv(out_dir / "gain.csv", rs.gain)
        outputs += ["p_matrix.csv", "gain.csv"]
    rep.write_manifest(out_dir, scn.scenario_hash, "synth", outputs,
                       passed=True, reproducible=reproducible)
    return EXIT_OK


def cmd_simulate(scn: Scenario, out_dir: Path, reproducible: bool) -> int:
    cfg = scn.config
    needs_synth = (cfg.controller != "none"
                   or cfg.disturbance.kind == "worst_case_linear")
    rs = None
    if needs_synth:
        params, sys, rs = _synthesize(scn)
        controller = _build_controller(scn, params, sys, rs)
    else:
        gamma_value = cfg.gamma if isinstance(cfg.gamma, float) else 1.0
        params = cfg.model_params(gamma_value)
        controller = None

    disturbance = None
    if cfg.disturbance.kind != "none":
        disturbance = dyn.make_disturbance(cfg.disturbance, scn.disc, scn.io,
                                           riccati=rs)
    s0 = initial_field(cfg, scn.disc)
    traj = dyn.simulate(scn.disc, params, scn.io, s0, controller=controller,
                        disturbance=disturbance, T=cfg.sim.t_final,
                        dt=cfg.sim.dt, scheme=cfg.sim.scheme,
                        sample_stride=cfg.sim.sample_stride,
                        linearized=False)

    outputs = ["trajectory.csv", "trajectory.svg"]
    rep.write_trajectory_csv(out_dir / "trajectory.csv", traj,
                             scn.disc.quad_weights, rs=rs)
    rep.plot_norm_vs_time(out_dir / "trajectory.svg", traj,
                          scn.disc.quad_weights, reproducible=reproducible,
                          salt=scn.scenario_hash)
    if cfg.sim.dump_state:
        rep.write_state_dump_csv(out_dir / "state_dump.csv", traj)
        outputs.append("state_dump.csv")
    rep.write_manifest(out_dir, scn.scenario_hash, "simulate", outputs,
                       passed=True, reproducible=reproducible)
    return EXIT_OK


def _gain_section(scn, params, sys, rs, gamma_design, outputs, out_dir,
                  reproducible):
    cfg = scn.config
    freq = ver.closed_loop_hinf_norm(sys, rs)
    a = -rs.closed_loop_abscissa
    ensemble = ver.standard_gain_ensemble(
        rs, n_sinusoids=cfg.verify.ensemble_sinusoids,
        n_noise=cfg.verify.ensemble_noise, seed=cfg.sim.seed,
        amplitude=0.01 * params.S)
    horizon = cfg.verify.gain_horizon or 20.0 / a
    emp = ver.empirical_l2_gain(scn.disc, params, scn.io, rs, ensemble,
                                T=horizon, dt=cfg.sim.dt,
                                scheme=cfg.sim.scheme, linearized=False,
                                gamma_design=gamma_design)
    passed = (freq.value < gamma_design
              and emp.value <= freq.value * 1.02)

    import scipy.linalg as sla
    lam_max = max(a, float(np.max(np.abs(sla.eigvals(sys.drift)))))
    freqs = np.geomspace(a / 10.0, 10.0 * lam_max, 120)
    mags = ver.frequency_response(sys, rs, freqs)
    rep.write_sweep_csv(out_dir / "gain_frequency_response.csv",
                        ["frequency", "sigma_max"],
                        [[f, m] for f, m in zip(freqs, mags)])
    rep.plot_gain_vs_frequency(out_dir / "gain.svg", freqs, mags,
                               gamma_design, freq.value,
                               reproducible=reproducible,
                               salt=scn.scenario_hash)
    outputs += ["gain.svg", "gain_frequency_response.csv"]
    return {
        "frequency_domain": rep.sanitize(freq),
        "empirical": rep.sanitize(emp),
        "gamma_design": gamma_design,
        "pass": passed,
    }


def _decrement_section(scn, params, sys, rs, outputs, out_dir, reproducible):
    cfg = scn.config
    a = -rs.closed_loop_abscissa
    s0 = initial_field(cfg, scn.disc)
    if not np.any(s0):
        s0 = 0.1 * params.S * np.ones(scn.disc.n)
    dt0 = cfg.sim.dt or dyn.default_dt(scn.disc, params)
    horizon = min(cfg.sim.t_final, 10.0 / a)
    controller = feedback_gain(rs)

    traj1 = dyn.simulate(scn.disc, params, scn.io, s0, controller=controller,
                         T=horizon, dt=dt0, scheme="imex_euler",
                         linearized=True)
    rep1 = ver.lyapunov_decrement_check(traj1, rs)
    traj2 = dyn.simulate(scn.disc, params, scn.io, s0, controller=controller,
                         T=horizon, dt=dt0 / 2.0, scheme="imex_euler",
                         linearized=True)
    rep2 = ver.lyapunov_decrement_check(traj2, rs)
    ratio = (rep1.max_identity_violation / rep2.max_identity_violation
             if rep2.max_identity_violation > 0 else float("inf"))
    passed = rep1.m_est > 0 and 1.5 <= ratio <= 2.6

    rep.plot_norm_vs_time(out_dir / "decrement.svg", traj1,
                          scn.disc.quad_weights, reproducible=reproducible,
                          salt=scn.scenario_hash)
    outputs.append("decrement.svg")
    return {
        "dt": dt0,
        "max_identity_violation": rep1.max_identity_violation,
        "max_identity_violation_half_dt": rep2.max_identity_violation,
        "halving_ratio": ratio,
        "m_est": rep1.m_est,
        "samples": rep1.samples,
        "pass": passed,
    }


def _basin_section(scn, params, sys, rs, cert, outputs, out_dir, reproducible):
    cfg = scn.config
    a = -rs.closed_loop_abscissa
    thr = cert.s0_threshold
    amplitudes = cfg.verify.amplitudes
    if amplitudes is None:
        amplitudes = tuple(f * thr for f in (0.25, 0.5, 0.9, 1.5, 3.0))
    horizon = cfg.verify.basin_horizon or 20.0 / a
    basin = ver.basin_sweep(scn.disc, params, scn.io, feedback_gain(rs),
                            amplitudes, T=horizon, dt=cfg.sim.dt,
                            scheme=cfg.sim.scheme,
                            shape=cfg.verify.basin_shape, certificate=cert)
    below_ok = all(v.verdict == "CONVERGED"
                   for v in basin.verdicts if v.amplitude <= thr)
    passed = bool(basin.certificate_conservative) and below_ok
    rep.write_sweep_csv(out_dir / "basin.csv",
                        ["amplitude", "verdict", "final_norm"],
                        [[v.amplitude, v.verdict, v.final_norm]
                         for v in basin.verdicts])
    rep.plot_basin_strip(out_dir / "basin.svg", basin.verdicts, threshold=thr,
                         reproducible=reproducible, salt=scn.scenario_hash)
    outputs += ["basin.svg", "basin.csv"]
    return {
        "verdicts": rep.sanitize(basin.verdicts),
        "empirical_critical_amplitude": basin.empirical_critical_amplitude,
        "certified_threshold": rep.sanitize(thr),
        "conservative": basin.certificate_conservative,
        "pass": passed,
    }


def _saddle_section(scn, params, sys, rs, outputs, out_dir, reproducible):
    cfg = scn.config
    n = scn.disc.n
    amps = cfg.verify.saddle_amplitudes or (0.1 * params.S,)
    s0_list = [amp * np.ones(n) for amp in amps]
    directions = None
    if n > 12:
        rng = np.random.default_rng(cfg.sim.seed)
        directions = [v / np.linalg.norm(v)
                      for v in rng.standard_normal((8, n))]
    cost = ver.saddle_cost_check(scn.disc, params, scn.io, rs, s0_list,
                                 directions=directions)

    hj = hj_quadratic_correction(sys, params, rs)
    coords = scn.disc.node_coords
    L = scn.disc.spec.extent
    base = 1.0 + np.prod(np.cos(np.pi * coords / L), axis=1)
    base = base / math.sqrt(float(np.sum(scn.disc.quad_weights * base * base)))
    scales, res_lin, slope_lin = ver.hj_residual_slopes(
        scn.disc, params, scn.io, HjRepresentation(P=rs.P), base)
    _, res_cor, slope_cor = ver.hj_residual_slopes(
        scn.disc, params, scn.io, hj, base)
    slopes_ok = abs(slope_lin - 3.0) <= 0.1 and abs(slope_cor - 4.0) <= 0.15
    passed = cost.passed and slopes_ok

    rep.plot_hj_ladder(out_dir / "hj_ladder.svg", scales,
                       {"linear term only": res_lin,
                        "with quadratic correction": res_cor},
                       reproducible=reproducible, salt=scn.scenario_hash)
    outputs.append("hj_ladder.svg")
    return {
        "entries": rep.sanitize(cost.entries),
        "value_tol": cost.value_tol,
        "gradient_tol": cost.gradient_tol,
        "hj_slope_linear": slope_lin,
        "hj_slope_corrected": slope_cor,
        "pass": passed,
    }


def cmd_verify(scn: Scenario, out_dir: Path, reproducible: bool) -> int:
    cfg = scn.config
    vopt = cfg.verify
    outputs = ["verify.json"]
    if not vopt.any_enabled:
        rep.write_json(out_dir / "verify.json", {"pass": True})
        rep.write_manifest(out_dir, scn.scenario_hash, "verify", outputs,
                           passed=True, reproducible=reproducible)
        return EXIT_OK

    params, sys, rs = _synthesize(scn)
    gamma_design = vopt.gamma_design or rs.gamma_used
    report: dict = {"gamma_used": rs.gamma_used,
                    "riccati": rep.riccati_report(rs)}
    section_pass = []

    def run_section(name, enabled, fn, *args):
        if not enabled:
            return
        try:
            section = fn(*args)
        except StressControlError as exc:
            section = {"error": f"{type(exc).__name__}: {exc}", "pass": False}
        report[name] = section
        section_pass.append(bool(section.get("pass", False)))

    cert = None
    if vopt.run_certificate or vopt.run_basin:
        cert = ver.contraction_certificate(sys, params, rs)

    run_section("gain", vopt.run_gain, _gain_section, scn, params, sys, rs,
                gamma_design, outputs, out_dir, reproducible)
    run_section("decrement", vopt.run_decrement, _decrement_section, scn,
                params, sys, rs, outputs, out_dir, reproducible)
    if vopt.run_certificate:
        report["certificate"] = dict(rep.sanitize(cert),
                                     **{"pass": cert.consistent})
        section_pass.append(bool(cert.consistent))
    run_section("basin", vopt.run_basin, _basin_section, scn, params, sys, rs,
                cert, outputs, out_dir, reproducible)
    run_section("saddle_cost", vopt.run_saddle, _saddle_section, scn, params,
                sys, rs, outputs, out_dir, reproducible)

    passed = all(section_pass)
    report["pass"] = passed
    rep.write_json(out_dir / "verify.json", report)
    rep.write_manifest(out_dir, scn.scenario_hash, "verify", outputs,
                       passed=passed, reproducible=reproducible)
    return EXIT_OK if passed else EXIT_VERIFY_FAILED


def _sweep_gamma(scn: Scenario, values):
    def run(v):
        raw = copy.deepcopy(scn.config.raw)
        raw.setdefault("model", {})["gamma"] = float(v)
        sub = build_scenario(parse_config(raw))
        try:
            _, _, rs = _synthesize(sub)
            return [v, "ok", rs.gamma_used, float(np.linalg.norm(rs.P)),
                    rs.closed_loop_abscissa, rs.residual_norm]
        except (GammaInfeasible, NoFeasibleGammaFound) as exc:
            return [v, type(exc).__name__, "", "", "", ""]

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        rows = list(pool.map(run, values))
    header = ["gamma", "verdict", "gamma_used", "P_frobenius",
              "closed_loop_abscissa", "residual_norm"]
    ok = all(r[1] == "ok" for r in rows)
    metric = {"P_frobenius": [r[3] if r[1] == "ok" else float("nan")
                              for r in rows]}
    return header, rows, ok, metric


def _sweep_grid(scn: Scenario, values):
    def run(v):
        raw = copy.deepcopy(scn.config.raw)
        raw.setdefault("grid", {})["nodes_per_axis"] = int(v)
        sub = build_scenario(parse_config(raw))
        try:
            sys_, rs = _synthesize(sub)[1:]
            gain = ver.closed_loop_hinf_norm(sys_, rs)
            return [int(v), sub.disc.n, "ok", rs.gamma_used, gain.value,
                    rs.residual_norm]
        except (GammaInfeasible, NoFeasibleGammaFound, NotStabilizable,
                NotDetectable) as exc:
            return [int(v), sub.disc.n, type(exc).__name__, "", "", ""]

    with ThreadPoolExecutor(max_workers=_thread_count()) as pool:
        rows = list(pool.map(run, values))
    header = ["nodes_per_axis", "n", "verdict", "gamma_used", "hinf_norm",
              "residual_norm"]
    ok = all(r[2] == "ok" for r in rows)
    metric = {"hinf_norm": [r[4] if r[2] == "ok" else float("nan")
                            for r in rows]}
    return header, rows, ok, metric


def _sweep_amplitude(scn: Scenario, values):
    params, sys, rs = _synthesize(scn)
    cfg = scn.config
    a = -rs.closed_loop_abscissa
    horizon = cfg.verify.basin_horizon or 20.0 / a
    basin = ver.basin_sweep(scn.disc, params, scn.io, feedback_gain(rs),
                            values, T=horizon, dt=cfg.sim.dt,
                            scheme=cfg.sim.scheme,
                            shape=cfg.verify.basin_shape)
    header = ["amplitude", "verdict", "final_norm"]
    rows = [[v.amplitude, v.verdict, v.final_norm] for v in basin.verdicts]
    metric = {"final_norm": [v.final_norm for v in basin.verdicts]}
    return header, rows, True, metric


def cmd_sweep(scn: Scenario, out_dir: Path, reproducible: bool, axis: str,
              values: list[float]) -> int:
    if axis == "gamma":
        header, rows, ok, metric = _sweep_gamma(scn, values)
    elif axis == "grid":
        header, rows, ok, metric = _sweep_grid(scn, values)
    elif axis == "amplitude":
        header, rows, ok, metric = _sweep_amplitude(scn, values)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")

    rep.write_sweep_csv(out_dir / "sweep.csv", header, rows)
    rep.plot_sweep(out_dir / "sweep.svg", axis, [r[0] for r in rows], metric,
                   reproducible=reproducible, salt=scn.scenario_hash)
    rep.write_manifest(out_dir, scn.scenario_hash, f"sweep:{axis}",
                       ["sweep.csv", "sweep.svg"], passed=ok,
                       reproducible=reproducible)
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="stresscontrol",
                     description="Synthesis and verification toolkit for "
                                 "distress-propagation control scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "simulate", "verify", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--reproducible", action="store_true",
                       help="suppress timestamps; byte-identical artifacts")
        p.add_argument("--seed", type=int, default=None,
                       help="override sim.seed")
        if name == "synth":
            p.add_argument("--dump-matrices", action="store_true",
                           help="also write P and gain as CSV")
        if name == "sweep":
            p.add_argument("--axis", required=True,
                           choices=("gamma", "amplitude", "grid"))
            p.add_argument("--values", required=True,
                           help="comma-separated values")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config, seed_override=args.seed)
        scn = build_scenario(cfg)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            return cmd_synth(scn, out_dir, args.reproducible,
                             dump_matrices=args.dump_matrices)
        if args.command == "simulate":
            return cmd_simulate(scn, out_dir, args.reproducible)
        if args.command == "verify":
            return cmd_verify(scn, out_dir, args.reproducible)
        values = [v for v in (s.strip() for s in args.values.split(",")) if v]
        if not values:
            raise ConfigError("sweep --values must be a nonempty csv list")
        parsed = [int(v) if args.axis == "grid" else float(v) for v in values]
        return cmd_sweep(scn, out_dir, args.reproducible, args.axis, parsed)
    except ConfigError as exc:
        print(f"ConfigError: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except (GammaInfeasible, NoFeasibleGammaFound) as exc:
        print(f"{type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_GAMMA
    except (NotStabilizable, NotDetectable) as exc:
        print(f"{type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_PBH
    except NonFiniteState as exc:
        print(f"NonFiniteState: {exc} (last finite time: "
              f"{exc.last_finite_time})", file=_sys.stderr)
        return EXIT_NONFINITE
    except (StressControlError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=_sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    _sys.exit(main())
