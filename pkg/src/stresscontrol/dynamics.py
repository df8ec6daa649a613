"""Time integration of the distress field.

The semilinear dynamics are

    ds/dt = -D_s A s + c2 s - (c2/S) s^2 + B1 w + B2 u

i.e. drift plus logistic reaction plus bounded inputs.  Two steppers are
provided: IMEX Euler (linear part implicit, reaction tail and inputs explicit;
unconditionally stable in the stiff diffusion) and explicit RK4 (high order,
CFL-checked) used as a cross-validator.

The state is never clipped to [0, S]; the equations are integrated as written.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (CflViolation, DimensionMismatch, MissingRiccati,
                     NonFiniteState)
from .spatial import Discretization, IoOperators

SCHEMES = ("imex_euler", "rk4_explicit")


@dataclass(frozen=True)
class ModelParams:
    """Physical/financial coefficients of the reaction-diffusion model.

    c2 = 0 is admitted programmatically (pure diffusion, vanishing
    nonlinearity limits); scenario configs require strict positivity.
    """

    D_s: float
    c2: float
    S: float
    gamma: float

    def __post_init__(self):
        if not self.D_s > 0:
            raise ValueError(f"D_s must be > 0, got {self.D_s}")
        if self.c2 < 0:
            raise ValueError(f"c2 must be >= 0, got {self.c2}")
        if not self.S > 0:
            raise ValueError(f"S must be > 0, got {self.S}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


@dataclass(frozen=True)
class StateField:
    """Distress level over grid nodes at one instant."""

    values: np.ndarray
    time: float = 0.0


@dataclass(frozen=True)
class DisturbanceSpec:
    """Disturbance family: none, sinusoid, filtered noise, or the saddle law."""

    kind: str = "none"          # none | sinusoid | filtered_noise | worst_case_linear
    amplitude: float = 1.0
    frequency: float = 1.0      # sinusoid, rad per unit time
    bandwidth: float = 1.0      # filtered_noise low-pass corner
    seed: int = 0
    duration: float = 1e9

    def describe(self) -> str:
        if self.kind == "sinusoid":
            return f"sinusoid(frequency={self.frequency:g})"
        if self.kind == "filtered_noise":
            return f"filtered_noise(seed={self.seed}, bandwidth={self.bandwidth:g})"
        return self.kind


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled simulation record.

    y2/u2/w2 are the squared channel-space norms |Cs|^2, |u|^2, |w|^2 at each
    sample; ``linearized`` flags whether the quadratic reaction was dropped.
    """

    times: np.ndarray        # (k,)
    states: np.ndarray       # (k, n)
    controls: np.ndarray     # (k, m2)
    disturbances: np.ndarray  # (k, m1)
    y2: np.ndarray           # (k,)
    u2: np.ndarray           # (k,)
    w2: np.ndarray           # (k,)
    dt: float
    linearized: bool = False
    controller_kind: str = "none"

    @property
    def sample_dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else self.dt


def reaction(params: ModelParams, s: np.ndarray) -> np.ndarray:
    """Logistic source term c2 s (1 - s/S); zero at s = 0 and s = S."""
    s = np.asarray(s, dtype=float)
    return params.c2 * s * (1.0 - s / params.S)


def linear_reaction_part(params: ModelParams, s: np.ndarray) -> np.ndarray:
    """F0 s = -c2 s, the linear part of the reaction operator F."""
    return -params.c2 * np.asarray(s, dtype=float)


def nonlinear_reaction_part(params: ModelParams, s: np.ndarray) -> np.ndarray:
    """F_N(s) = (c2/S) s^2, the quadratic tail of F."""
    s = np.asarray(s, dtype=float)
    return (params.c2 / params.S) * s * s


class LinearFeedback:
    """u(s) = -K s with K = B2* P."""

    kind = "linear"

    def __init__(self, K: np.ndarray):
        self.K = np.asarray(K, dtype=float)

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return -self.K @ s


class HjFeedback:
    """u(s) = -(K s + Theta[s, s]) where Theta = B2* applied to the quadratic
    correction slices."""

    kind = "hj"

    def __init__(self, K: np.ndarray, theta: np.ndarray):
        self.K = np.asarray(K, dtype=float)
        self.theta = np.asarray(theta, dtype=float)   # (m2, n, n)

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return -(self.K @ s + np.einsum("ijk,j,k->i", self.theta, s, s))


def gershgorin_bound(disc: Discretization) -> float:
    """Upper bound on the spectral radius of the Neumann operator A."""
    return float(np.max(np.sum(np.abs(disc.laplacian), axis=1)))


def default_dt(disc: Discretization, params: ModelParams) -> float:
    """Conservative step: dt = min(1e-3, 0.5 / (c2 + D_s * lambda_max))."""
    lam = gershgorin_bound(disc)
    return min(1e-3, 0.5 / (params.c2 + params.D_s * lam + 1e-30))


def _rk4_dt_limit(disc: Discretization, params: ModelParams) -> float:
    lam_est = params.c2 + params.D_s * gershgorin_bound(disc)
    return 0.9 * 2.0 / lam_est


class _Stepper:
    """Cached one-step integrator for repeated stepping."""

    def __init__(self, disc: Discretization, params: ModelParams, dt: float,
                 scheme: str, linearized: bool = False):
        if dt <= 0:
            raise ValueError(f"dt must be positive, got {dt}")
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
        self.disc = disc
        self.params = params
        self.dt = dt
        self.scheme = scheme
        self.linearized = linearized
        n = disc.n
        # drift of the first-order form: ds/dt = drift s + ...
        self.drift = -params.D_s * disc.laplacian + params.c2 * np.eye(n)
        if scheme == "imex_euler":
            self._lu = sla.lu_factor(np.eye(n) - dt * self.drift)
        else:
            limit = _rk4_dt_limit(disc, params)
            if dt > limit:
                raise CflViolation(
                    f"rk4 step {dt:g} exceeds stability bound {limit:g}")

    def _f_n(self, s: np.ndarray) -> np.ndarray:
        if self.linearized or self.params.c2 == 0.0:
            return np.zeros_like(s)
        return nonlinear_reaction_part(self.params, s)

    def advance(self, s: np.ndarray, forcing) -> np.ndarray:
        """One step from state s; ``forcing(t_rel, state) -> input vector``
        evaluates B1 w + B2 u at a stage."""
        if self.scheme == "imex_euler":
            return self.advance_imex(s, forcing(0.0, s))
        dt = self.dt

        def f(tau, y):
            return self.drift @ y - self._f_n(y) + forcing(tau, y)

        k1 = f(0.0, s)
        k2 = f(dt / 2.0, s + dt / 2.0 * k1)
        k3 = f(dt / 2.0, s + dt / 2.0 * k2)
        k4 = f(dt, s + dt * k3)
        return s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def advance_imex(self, s: np.ndarray, force: np.ndarray) -> np.ndarray:
        """IMEX step with the input term already evaluated at the base state."""
        rhs = s + self.dt * (force - self._f_n(s))
        return sla.lu_solve(self._lu, rhs, check_finite=False)


def step(disc: Discretization, params: ModelParams, s: StateField,
         u: np.ndarray | None, w: np.ndarray | None, dt: float,
         scheme: str = "imex_euler", io: IoOperators | None = None,
         linearized: bool = False) -> StateField:
    """Advance one time step with fixed input values u, w.

    Without ``io`` the inputs are interpreted as already living on the state
    space (identity injection).  Raises CflViolation for rk4 above the bound
    and NonFiniteState if the step produces NaN/Inf.
    """
    values = np.asarray(s.values, dtype=float)
    if values.shape != (disc.n,):
        raise DimensionMismatch(f"state shape {values.shape} != ({disc.n},)")
    force = np.zeros(disc.n)
    if u is not None and np.size(u) > 0:
        force = force + (io.B2 @ u if io is not None else np.asarray(u, float))
    if w is not None and np.size(w) > 0:
        force = force + (io.B1 @ w if io is not None else np.asarray(w, float))
    stepper = _Stepper(disc, params, dt, scheme, linearized=linearized)
    out = stepper.advance(values, lambda tau, y: force)
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"state non-finite after step from t={s.time:g}",
                             last_finite_time=s.time)
    return StateField(values=out, time=s.time + dt)


def make_disturbance(spec: DisturbanceSpec, disc: Discretization,
                     io: IoOperators, riccati=None):
    """Build a deterministic generator w(t, s) -> disturbance-channel vector.

    ``worst_case_linear`` realizes the saddle law w = gamma^-2 B1* P s and
    requires a Riccati solution; the other kinds ignore the state argument.
    """
    m1 = io.B1.shape[1]
    if spec.kind == "none":
        zero = np.zeros(m1)

        def silent(t, s):
            return zero

        silent.state_dependent = False
        return silent
    if spec.kind == "sinusoid":
        pattern = spec.amplitude * np.ones(m1)

        def sinusoid(t, s):
            return np.sin(spec.frequency * t) * pattern

        sinusoid.state_dependent = False
        return sinusoid
    if spec.kind == "filtered_noise":
        # white noise through a first-order low-pass, precomputed on a fixed
        # spec-derived grid so the signal is independent of the solver dt
        rng = np.random.default_rng(spec.seed)
        grid_dt = 1.0 / (20.0 * max(spec.bandwidth, 1e-12))
        nsteps = int(np.ceil(spec.duration / grid_dt)) + 2
        nsteps = min(nsteps, 2_000_000)
        xi = rng.standard_normal((nsteps, m1))
        alpha = spec.bandwidth * grid_dt
        # first-order low-pass x_k = (1-alpha) x_{k-1} + alpha xi_{k-1}
        from scipy.signal import lfilter
        path = lfilter([0.0, alpha], [1.0, -(1.0 - alpha)], xi, axis=0)
        path *= spec.amplitude

        def noise(t, s):
            x = t / grid_dt
            k = int(np.floor(x))
            if k < 0:
                return path[0]
            if k >= nsteps - 1:
                return path[-1]
            frac = x - k
            return (1.0 - frac) * path[k] + frac * path[k + 1]

        noise.state_dependent = False
        return noise
    if spec.kind == "worst_case_linear":
        if riccati is None:
            raise MissingRiccati("worst_case_linear requires a Riccati solution")
        # w = gamma^-2 B1* P s, with the weighted adjoint folded into riccati
        M = riccati.worst_case_gain(io)

        def worst(t, s):
            return M @ s

        worst.state_dependent = True
        worst.state_gain = M
        return worst
    raise ValueError(f"unknown disturbance kind {spec.kind!r}")


def simulate(disc: Discretization, params: ModelParams, io: IoOperators,
             s0: np.ndarray, controller=None, disturbance=None,
             T: float = 1.0, dt: float | None = None,
             scheme: str = "imex_euler", sample_stride: int = 1,
             linearized: bool = False) -> Trajectory:
    """Integrate to time T and record uniformly sampled series.

    ``controller`` is None or a callable u(s) (LinearFeedback / HjFeedback);
    ``disturbance`` is None or a generator w(t, s) from make_disturbance.
    The step count is rounded up to a multiple of sample_stride so the sample
    spacing stays uniform.
    """
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    if dt is None:
        dt = default_dt(disc, params)
    if sample_stride < 1:
        raise ValueError("sample_stride must be >= 1")

    n_steps = max(1, int(np.ceil(T / dt - 1e-12)))
    if n_steps % sample_stride:
        n_steps += sample_stride - n_steps % sample_stride

    s = np.asarray(s0, dtype=float).copy()
    if s.shape != (disc.n,):
        raise DimensionMismatch(f"s0 shape {s.shape} != ({disc.n},)")

    m1 = io.B1.shape[1]
    m2 = io.B2.shape[1]
    zero_u = np.zeros(m2)
    zero_w = np.zeros(m1)
    u_of = controller if controller is not None else (lambda y: zero_u)
    w_of = disturbance if disturbance is not None else (lambda t, y: zero_w)

    stepper = _Stepper(disc, params, dt, scheme, linearized=linearized)
    B1, B2 = io.B1, io.B2
    Cmat = io.C
    wy, wu, ww = io.y_weights, io.u_weights, io.w_weights

    n_samples = n_steps // sample_stride + 1
    times = np.empty(n_samples)
    states = np.empty((n_samples, disc.n))
    controls = np.empty((n_samples, m2))
    dists = np.empty((n_samples, m1))
    y2 = np.empty(n_samples)
    u2 = np.empty(n_samples)
    w2 = np.empty(n_samples)

    def record(idx, t, y, u, w):
        times[idx] = t
        states[idx] = y
        controls[idx] = u
        dists[idx] = w
        cy = Cmat @ y
        y2[idx] = float(cy @ (wy * cy))
        u2[idx] = float(u @ (wu * u))
        w2[idx] = float(w @ (ww * w))

    # B1 w + B2 u collapses to one precomputed matrix when the controller is
    # a linear gain and the disturbance is absent, a pure time signal, or a
    # linear state law; otherwise fall back to per-call dispatch
    gain_part = None
    if controller is None:
        gain_part = np.zeros((disc.n, disc.n))
    elif isinstance(controller, LinearFeedback):
        gain_part = -B2 @ controller.K
    time_signal = None
    fast = gain_part is not None
    if disturbance is not None and fast:
        if getattr(disturbance, "state_dependent", True):
            sgain = getattr(disturbance, "state_gain", None)
            if sgain is None:
                fast = False
            else:
                gain_part = gain_part + B1 @ sgain
        else:
            time_signal = disturbance

    if fast and time_signal is None:
        F = gain_part
        if not F.any():
            zero_force = np.zeros(disc.n)

            def force_fn(tt, y):
                return zero_force
        else:
            def force_fn(tt, y):
                return F @ y
    elif fast:
        F = gain_part

        def force_fn(tt, y):
            return F @ y + B1 @ time_signal(tt, None)
    else:
        def force_fn(tt, y):
            return (B1 @ np.asarray(w_of(tt, y), dtype=float)
                    + B2 @ np.asarray(u_of(y), dtype=float))

    t = 0.0
    record(0, t, s, np.asarray(u_of(s), dtype=float),
           np.asarray(w_of(t, s), dtype=float))
    idx = 1
    imex = scheme == "imex_euler"
    for k in range(n_steps):
        if imex:
            s = stepper.advance_imex(s, force_fn(t, s))
        else:
            # rk4 evaluates inputs at stage times/states to keep full order
            s = stepper.advance(s, lambda tau, y, _t=t: force_fn(_t + tau, y))
        t = (k + 1) * dt
        if (k + 1) % sample_stride == 0:
            if not np.all(np.isfinite(s)):
                raise NonFiniteState(
                    f"state non-finite at t={t:g}",
                    last_finite_time=times[idx - 1])
            record(idx, t, s, np.asarray(u_of(s), dtype=float),
                   np.asarray(w_of(t, s), dtype=float))
            idx += 1

    kind = getattr(controller, "kind", "none") if controller is not None else "none"
    return Trajectory(times=times, states=states, controls=controls,
                      disturbances=dists, y2=y2, u2=u2, w2=w2, dt=dt,
                      linearized=linearized, controller_kind=kind)
