"""Artifact writers: CSV series, JSON reports, SVG plots, run manifests.

All writers are deterministic: floats are emitted with shortest round-trip
``repr``, JSON keys are sorted, and under reproducible mode the SVG backend
gets a fixed hash salt and no embedded date, so repeated runs of the same
scenario are byte-identical.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .dynamics import Trajectory


def _fmt(x) -> str:
    return repr(float(x))


def sanitize(obj):
    """Make an object JSON-serializable; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [sanitize(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return sanitize(dataclasses.asdict(obj))
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, payload) -> None:
    text = json.dumps(sanitize(payload), sort_keys=True, indent=2)
    Path(path).write_text(text + "\n")


def write_trajectory_csv(path, traj: Trajectory, state_weights: np.ndarray,
                         rs=None) -> None:
    """Series export: t, norm_s, norm_u, norm_w, V, y2, u2, w2."""
    lines = ["t,norm_s,norm_u,norm_w,V,y2,u2,w2"]
    w = state_weights
    for k in range(len(traj.times)):
        s = traj.states[k]
        norm_s = math.sqrt(max(float(s @ (w * s)), 0.0))
        V = rs.lyapunov_value(s) if rs is not None else 0.0
        lines.append(",".join(_fmt(v) for v in (
            traj.times[k], norm_s, math.sqrt(max(traj.u2[k], 0.0)),
            math.sqrt(max(traj.w2[k], 0.0)), V,
            traj.y2[k], traj.u2[k], traj.w2[k])))
    Path(path).write_text("\n".join(lines) + "\n")


def write_state_dump_csv(path, traj: Trajectory) -> None:
    n = traj.states.shape[1]
    header = "t," + ",".join(f"s_{i}" for i in range(n))
    lines = [header]
    for k in range(len(traj.times)):
        lines.append(",".join([_fmt(traj.times[k])]
                              + [_fmt(v) for v in traj.states[k]]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_matrix_csv(path, M: np.ndarray) -> None:
    lines = [",".join(_fmt(v) for v in row) for row in np.atleast_2d(M)]
    Path(path).write_text("\n".join(lines) + "\n")


def riccati_report(rs) -> dict:
    return {
        "gamma_used": rs.gamma_used,
        "residual_norm": rs.residual_norm,
        "closed_loop_abscissa": rs.closed_loop_abscissa,
        "saddle_abscissa": rs.saddle_abscissa,
        "P_frobenius": float(np.linalg.norm(rs.P)),
        "gain_frobenius": float(np.linalg.norm(rs.gain)),
    }


def write_sweep_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            _fmt(v) if isinstance(v, (int, float, np.floating)) else str(v)
            for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_manifest(out_dir, scenario_hash: str, command: str,
                   outputs: list[str], passed: bool,
                   reproducible: bool) -> None:
    stamp = None if reproducible else \
        datetime.datetime.now(datetime.timezone.utc).isoformat()
    payload = {
        "scenario_hash": scenario_hash,
        "toolkit_version": __version__,
        "command": command,
        "generated_at": stamp,
        "outputs": sorted(outputs),
        "pass": bool(passed),
    }
    write_json(Path(out_dir) / "manifest.json", payload)


def _save_svg(fig, path, reproducible: bool, salt: str) -> None:
    if reproducible:
        with matplotlib.rc_context({"svg.hashsalt": salt}):
            fig.savefig(path, format="svg", metadata={"Date": None})
    else:
        fig.savefig(path, format="svg")
    plt.close(fig)


def plot_norm_vs_time(path, traj: Trajectory, state_weights: np.ndarray,
                      reproducible: bool = False, salt: str = "") -> None:
    w = state_weights
    norms = np.sqrt(np.maximum(
        np.einsum("kj,j,kj->k", traj.states, w, traj.states), 0.0))
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(traj.times, norms, label="|s|")
    if np.max(traj.u2) > 0:
        ax.plot(traj.times, np.sqrt(np.maximum(traj.u2, 0.0)), label="|u|")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.set_yscale("log" if np.all(norms[norms > 0] > 0)
                  and np.any(norms > 0) else "linear")
    ax.legend(loc="best")
    ax.set_title("state and control norms")
    fig.tight_layout()
    _save_svg(fig, path, reproducible, salt)


def plot_gain_vs_frequency(path, freqs, mags, gamma_design: float,
                           norm_value: float, reproducible: bool = False,
                           salt: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(freqs, mags, label="sigma_max(G(jw))")
    ax.axhline(gamma_design, color="tab:red", linestyle="--",
               label="gamma design")
    ax.axhline(norm_value, color="tab:green", linestyle=":",
               label="computed norm")
    ax.set_xlabel("frequency")
    ax.set_ylabel("gain")
    ax.legend(loc="best")
    ax.set_title("closed-loop frequency response")
    fig.tight_layout()
    _save_svg(fig, path, reproducible, salt)


def plot_basin_strip(path, verdicts, threshold: float | None = None,
                     reproducible: bool = False, salt: str = "") -> None:
    colors = {"CONVERGED": "tab:green", "DIVERGED": "tab:red",
              "INCONCLUSIVE": "tab:orange"}
    fig, ax = plt.subplots(figsize=(6.0, 2.2))
    for v in verdicts:
        ax.scatter([v.amplitude], [0.0], s=120, marker="s",
                   color=colors.get(v.verdict, "gray"))
    if threshold is not None and math.isfinite(threshold):
        ax.axvline(threshold, color="black", linestyle="--",
                   label="certified threshold")
        ax.legend(loc="upper right")
    ax.set_yticks([])
    ax.set_xlabel("initial amplitude |s0|")
    ax.set_title("basin verdicts (green=converged, red=diverged)")
    fig.tight_layout()
    _save_svg(fig, path, reproducible, salt)


def plot_hj_ladder(path, scales, residual_sets: dict,
                   reproducible: bool = False, salt: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, residuals in residual_sets.items():
        ax.loglog(scales, np.abs(residuals), marker="o", label=label)
    ax.set_xlabel("state scale")
    ax.set_ylabel("|HJ residual|")
    ax.legend(loc="best")
    ax.set_title("Hamilton-Jacobi residual ladder")
    fig.tight_layout()
    _save_svg(fig, path, reproducible, salt)


def plot_sweep(path, xlabel: str, values, metrics: dict,
               reproducible: bool = False, salt: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, ys in metrics.items():
        ax.plot(values, ys, marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.legend(loc="best")
    ax.set_title(f"sweep over {xlabel}")
    fig.tight_layout()
    _save_svg(fig, path, reproducible, salt)
