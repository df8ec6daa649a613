"""Feedback synthesis for the linearized distress dynamics.

The closed-loop design solves the symmetric first-order-form H-infinity
algebraic Riccati equation

    A_d^T P + P A_d + C*C + P (gamma^-2 B1 B1* - B2 B2*) P = 0

for the stabilizing P, from which the state feedback u = -B2* P s and the
saddle disturbance w = gamma^-2 B1* P s follow.  All adjoints are weighted;
internally the state is symmetrized by folding sqrt(W) into the coordinates,
so the solver itself works with plain transposes.

The quadratic Hamilton-Jacobi correction extends the linear feedback one
polynomial order: G(s) = P s + G2(s) with G2 chosen to cancel the cubic terms
of the Hamilton-Jacobi residual.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dynamics import (HjFeedback, LinearFeedback, ModelParams,
                       nonlinear_reaction_part)
from .errors import (DimensionMismatch, GammaInfeasible, NoFeasibleGammaFound,
                     NotDetectable, NotStabilizable, ResonantModes)
from .spatial import Discretization, IoOperators, adjoint

AXIS_TOL = 1e-9          # Hamiltonian eigenvalues this close to jR => infeasible
PBH_SV_TOL = 1e-10       # smallest singular value below this => PBH failure
PBH_EIG_TOL = 1e-12      # eigenvalues with Re >= -tol count as unstable
RESIDUAL_CONTRACT = 1e-8


@dataclass(frozen=True)
class LinearSystem:
    """Linearization bundle: drift A_d = -D_s A + c2 I, operators, weights."""

    drift: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    gamma: float
    weights: np.ndarray
    w_weights: np.ndarray | None = None
    u_weights: np.ndarray | None = None
    y_weights: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.drift.shape[0]

    def channel_weights(self):
        ones = np.ones
        w1 = self.w_weights if self.w_weights is not None else ones(self.B1.shape[1])
        u1 = self.u_weights if self.u_weights is not None else ones(self.B2.shape[1])
        y1 = self.y_weights if self.y_weights is not None else ones(self.C.shape[0])
        return w1, u1, y1

    def folded(self):
        """Return (A, B1, B2, C) in sqrt(W)-symmetrized coordinates."""
        s = np.sqrt(self.weights)
        w1, u1, y1 = self.channel_weights()
        A = self.drift * s[:, None] / s[None, :]
        B1 = self.B1 * s[:, None] / np.sqrt(w1)[None, :]
        B2 = self.B2 * s[:, None] / np.sqrt(u1)[None, :]
        C = self.C * np.sqrt(y1)[:, None] / s[None, :]
        return A, B1, B2, C


@dataclass(frozen=True)
class RiccatiSolution:
    """Stabilizing solution P with derived gain and spectral diagnostics."""

    P: np.ndarray                 # physical coordinates, W-self-adjoint
    P_folded: np.ndarray          # symmetric, sqrt(W) coordinates
    gain: np.ndarray              # K = B2* P
    residual_norm: float          # ||ARE residual||_F / (1 + ||P||_F^2)
    closed_loop_abscissa: float
    saddle_abscissa: float
    gamma_used: float
    sys: LinearSystem

    @property
    def K(self) -> np.ndarray:
        return self.gain

    def value_weights(self) -> np.ndarray:
        return self.sys.weights

    def lyapunov_value(self, s: np.ndarray) -> float:
        """V(s) = 1/2 <s, P s> in the quadrature inner product."""
        return 0.5 * float(s @ (self.sys.weights * (self.P @ s)))

    def worst_case_gain(self, io: IoOperators) -> np.ndarray:
        """M with w = M s realizing the saddle law gamma^-2 B1* P s."""
        B1star = adjoint(io.B1, io.w_weights, self.sys.weights)
        return (B1star @ self.P) / self.gamma_used ** 2

    @property
    def gamma(self) -> float:
        return self.gamma_used


@dataclass(frozen=True)
class HjRepresentation:
    """Feedback map G(s) = P s + G2(s); G2 stored as n symmetric slices."""

    P: np.ndarray
    G2: np.ndarray | None = None      # (n, n, n), G2(s)_i = s^T G2[i] s

    def __call__(self, s: np.ndarray) -> np.ndarray:
        g = self.P @ s
        if self.G2 is not None:
            g = g + np.einsum("ijk,j,k->i", self.G2, s, s)
        return g


@dataclass(frozen=True)
class PbhMode:
    eigenvalue: complex
    smallest_singular_value: float


@dataclass(frozen=True)
class PbhReport:
    """PBH rank test at every unstable drift eigenvalue."""

    stabilizable: bool
    detectable: bool
    stabilizability_failures: tuple[PbhMode, ...]
    detectability_failures: tuple[PbhMode, ...]
    unstable_modes: tuple[complex, ...]

    @property
    def passed(self) -> bool:
        return self.stabilizable and self.detectable


def assemble_linearization(disc: Discretization, params: ModelParams,
                           io: IoOperators, gamma: float | None = None) -> LinearSystem:
    """Build A_d = -D_s A + c2 I and bundle it with the I/O operators."""
    n = disc.n
    if io.B1.shape[0] != n or io.B2.shape[0] != n or io.C.shape[1] != n:
        raise DimensionMismatch("io operators incompatible with grid size")
    drift = -params.D_s * disc.laplacian + params.c2 * np.eye(n)
    return LinearSystem(drift=drift, B1=io.B1, B2=io.B2, C=io.C,
                        gamma=params.gamma if gamma is None else float(gamma),
                        weights=disc.quad_weights,
                        w_weights=io.w_weights, u_weights=io.u_weights,
                        y_weights=io.y_weights)


def check_stabilizability_detectability(sys: LinearSystem) -> PbhReport:
    """PBH test on every eigenvalue with Re >= -1e-12.

    Stabilizability inspects [A - lambda I, B2]; detectability inspects
    [A - lambda I; C].  A smallest singular value at or below 1e-10 marks the
    mode as uncontrollable/unobservable.
    """
    A, _, B2, C = sys.folded()
    n = sys.n
    eigs = sla.eigvals(A)
    unstable = [lam for lam in eigs if lam.real >= -PBH_EIG_TOL]
    stab_fail = []
    det_fail = []
    for lam in unstable:
        shifted = A - lam * np.eye(n)
        sv_b = sla.svdvals(np.hstack([shifted, B2.astype(complex)]))[-1] \
            if B2.size else sla.svdvals(shifted)[-1]
        if sv_b <= PBH_SV_TOL:
            stab_fail.append(PbhMode(complex(lam), float(sv_b)))
        sv_c = sla.svdvals(np.vstack([shifted, C.astype(complex)]))[-1] \
            if C.size else sla.svdvals(shifted)[-1]
        if sv_c <= PBH_SV_TOL:
            det_fail.append(PbhMode(complex(lam), float(sv_c)))
    return PbhReport(stabilizable=not stab_fail, detectable=not det_fail,
                     stabilizability_failures=tuple(stab_fail),
                     detectability_failures=tuple(det_fail),
                     unstable_modes=tuple(complex(l) for l in unstable))


def _are_residual(A, Q, G, P):
    return A.T @ P + P @ A + Q + P @ G @ P


def solve_h_infinity_riccati(sys: LinearSystem, check_pbh: bool = True) -> RiccatiSolution:
    """Stabilizing Riccati solution via the Hamiltonian stable subspace.

    Method: ordered real Schur decomposition of the 2n x 2n Hamiltonian,
    P = X2 X1^-1 from the stable invariant subspace, then up to 5 Newton
    sweeps (Lyapunov solves on the saddle closed loop) to polish the residual.

    Raises GammaInfeasible when the Hamiltonian touches the imaginary axis
    (tolerance 1e-9), the subspace is degenerate, P fails PSD, or the
    closed-loop/saddle spectra are not strictly stable.
    """
    if check_pbh:
        report = check_stabilizability_detectability(sys)
        if not report.stabilizable:
            raise NotStabilizable(
                f"PBH stabilizability failed at modes "
                f"{[m.eigenvalue for m in report.stabilizability_failures]}")
        if not report.detectable:
            raise NotDetectable(
                f"PBH detectability failed at modes "
                f"{[m.eigenvalue for m in report.detectability_failures]}")

    gamma = float(sys.gamma)
    if not gamma > 0:
        raise GammaInfeasible(f"gamma must be positive, got {gamma}")
    A, B1, B2, C = sys.folded()
    n = sys.n
    G = (B1 @ B1.T) / gamma ** 2 - B2 @ B2.T
    Q = C.T @ C

    H = np.block([[A, G], [-Q, -A.T]])
    eigs = sla.eigvals(H)
    axis_dist = np.min(np.abs(eigs.real)) if eigs.size else np.inf
    if axis_dist < AXIS_TOL:
        raise GammaInfeasible(
            f"Hamiltonian eigenvalue within {axis_dist:.2e} of the imaginary "
            f"axis at gamma={gamma:g}")

    T, Z, sdim = sla.schur(H, sort=lambda re, im: re < 0)
    if sdim != n:
        raise GammaInfeasible(
            f"stable subspace has dimension {sdim}, expected {n} "
            f"(gamma={gamma:g})")
    X1 = Z[:n, :n]
    X2 = Z[n:, :n]
    if np.linalg.cond(X1) > 1e12:
        raise GammaInfeasible(
            f"stable subspace degenerate (cond={np.linalg.cond(X1):.2e}) "
            f"at gamma={gamma:g}")
    P = sla.solve(X1.T, X2.T).T
    P = 0.5 * (P + P.T)

    # Newton polish: solve (A + G P)^T D + D (A + G P) = -residual
    for _ in range(5):
        res = _are_residual(A, Q, G, P)
        rel = np.linalg.norm(res) / (1.0 + np.linalg.norm(P) ** 2)
        if rel < 1e-14:
            break
        Asad = A + G @ P
        try:
            delta = sla.solve_sylvester(Asad.T, Asad, -res)
        except np.linalg.LinAlgError:
            break
        P = P + 0.5 * (delta + delta.T)

    res = _are_residual(A, Q, G, P)
    residual_norm = float(np.linalg.norm(res) / (1.0 + np.linalg.norm(P) ** 2))
    if not np.isfinite(residual_norm) or residual_norm > RESIDUAL_CONTRACT:
        raise GammaInfeasible(
            f"ARE residual {residual_norm:.2e} exceeds contract "
            f"{RESIDUAL_CONTRACT:g} at gamma={gamma:g}")

    evals = sla.eigvalsh(P)
    if evals.size and evals[0] < -1e-8 * max(1.0, evals[-1]):
        raise GammaInfeasible(
            f"P has negative eigenvalue {evals[0]:.3e} at gamma={gamma:g}")

    cl_abscissa = float(np.max(sla.eigvals(A - B2 @ B2.T @ P).real))
    sad_abscissa = float(np.max(sla.eigvals(A + G @ P).real))
    if cl_abscissa >= 0 or sad_abscissa >= 0:
        raise GammaInfeasible(
            f"closed loop not strictly stable (abscissa {cl_abscissa:.3e}, "
            f"saddle {sad_abscissa:.3e}) at gamma={gamma:g}")

    s = np.sqrt(sys.weights)
    P_phys = P * s[None, :] / s[:, None]
    _, u1, _ = sys.channel_weights()
    B2star = adjoint(sys.B2, u1, sys.weights)
    gain = B2star @ P_phys
    return RiccatiSolution(P=P_phys, P_folded=P, gain=gain,
                           residual_norm=residual_norm,
                           closed_loop_abscissa=cl_abscissa,
                           saddle_abscissa=sad_abscissa,
                           gamma_used=gamma, sys=sys)


def _feasible(sys: LinearSystem, gamma: float) -> bool:
    try:
        solve_h_infinity_riccati(dataclasses.replace(sys, gamma=gamma),
                                 check_pbh=False)
        return True
    except GammaInfeasible:
        return False


def minimal_gamma(sys: LinearSystem, gamma_lo: float = 1e-3,
                  gamma_hi: float = 1.0, rel_width: float = 1e-4,
                  gamma_cap: float = 1e6) -> float:
    """Smallest feasible gamma by bisection, to relative width 1e-4.

    The upper endpoint is doubled until feasible (NoFeasibleGammaFound past
    the cap); if the lower endpoint is already feasible (e.g. B1 = 0) it is
    returned directly.  The returned value is the feasible upper end of the
    final bracket.
    """
    report = check_stabilizability_detectability(sys)
    if not report.stabilizable:
        raise NotStabilizable(
            f"PBH stabilizability failed at modes "
            f"{[m.eigenvalue for m in report.stabilizability_failures]}")
    if not report.detectable:
        raise NotDetectable(
            f"PBH detectability failed at modes "
            f"{[m.eigenvalue for m in report.detectability_failures]}")

    if _feasible(sys, gamma_lo):
        return gamma_lo
    hi = gamma_hi
    while not _feasible(sys, hi):
        hi *= 2.0
        if hi > gamma_cap:
            raise NoFeasibleGammaFound(
                f"no feasible gamma found up to {gamma_cap:g}")
    lo = max(gamma_lo, hi / 2.0 if hi > gamma_hi else gamma_lo)
    while hi - lo > rel_width * hi:
        mid = 0.5 * (lo + hi)
        if _feasible(sys, mid):
            hi = mid
        else:
            lo = mid
    return hi


def feedback_gain(rs: RiccatiSolution) -> LinearFeedback:
    """Closed-over linear state feedback u(s) = -B2* P s."""
    return LinearFeedback(rs.gain)


def hj_feedback(rs: RiccatiSolution, hj: HjRepresentation,
                io: IoOperators) -> HjFeedback:
    """Nonlinear feedback u(s) = -B2*(P s + G2(s))."""
    B2star = adjoint(io.B2, io.u_weights, rs.sys.weights)
    if hj.G2 is None:
        theta = np.zeros((io.B2.shape[1], rs.sys.n, rs.sys.n))
    else:
        theta = np.einsum("mi,ijk->mjk", B2star, hj.G2)
    return HjFeedback(rs.gain, theta)


def hj_residual(disc: Discretization, params: ModelParams, io: IoOperators,
                G: HjRepresentation, s: np.ndarray) -> float:
    """Hamilton-Jacobi residual at state s for the candidate mapping G.

    <D_s A s + F(s), G(s)> - 1/(2 gamma^2) |B1* G|^2 + 1/2 |B2* G|^2
    - 1/2 |C s|^2; identically zero at s = 0, and zero to quadratic order
    whenever the linear part of G solves the Riccati equation.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (disc.n,):
        raise DimensionMismatch(f"state shape {s.shape} != ({disc.n},)")
    w = disc.quad_weights
    g = G(s)
    flow = params.D_s * (disc.laplacian @ s) - params.c2 * s \
        + nonlinear_reaction_part(params, s)
    term_flow = float(flow @ (w * g))
    B1star = adjoint(io.B1, io.w_weights, w)
    B2star = adjoint(io.B2, io.u_weights, w)
    b1g = B1star @ g
    b2g = B2star @ g
    cs = io.C @ s
    return (term_flow
            - 0.5 / params.gamma ** 2 * float(b1g @ (io.w_weights * b1g))
            + 0.5 * float(b2g @ (io.u_weights * b2g))
            - 0.5 * float(cs @ (io.y_weights * cs)))


def hj_quadratic_correction(sys: LinearSystem, params: ModelParams,
                            rs: RiccatiSolution) -> HjRepresentation:
    """Quadratic term G2 cancelling the cubic Hamilton-Jacobi residual.

    Solves <F_N(s), P s> + <[-A_d + (B2 B2* - gamma^-2 B1 B1*) P] s, G2(s)> = 0
    for all s, mode-by-mode in the eigenbasis of the saddle closed-loop drift,
    with the coefficient tensor symmetrized over index permutations.
    """
    if rs.saddle_abscissa >= 0:
        raise GammaInfeasible("saddle dynamics must be stable for the "
                              "quadratic correction")
    n = sys.n
    if params.c2 == 0.0:
        return HjRepresentation(P=rs.P, G2=np.zeros((n, n, n)))

    A, B1, B2, C = sys.folded()
    gamma = rs.gamma_used
    G = (B1 @ B1.T) / gamma ** 2 - B2 @ B2.T
    Pf = rs.P_folded
    Asad = A + G @ Pf

    lam, V = sla.eig(Asad)
    U = sla.inv(V)

    sqw = np.sqrt(sys.weights)
    # cubic source <F_N, P s> in folded coordinates: sum q_ik z_i^2 z_k
    q = (params.c2 / params.S) * Pf / sqw[:, None]
    qV = q @ V
    t = np.einsum("ia,ib,ic->abc", V, V, qV)
    t = (t + t.transpose(0, 2, 1) + t.transpose(1, 0, 2) + t.transpose(1, 2, 0)
         + t.transpose(2, 0, 1) + t.transpose(2, 1, 0)) / 6.0

    denom = lam[:, None, None] + lam[None, :, None] + lam[None, None, :]
    if np.min(np.abs(denom)) < 1e-10:
        raise ResonantModes(
            f"eigenvalue-sum denominator {np.min(np.abs(denom)):.2e} below 1e-10")
    j = t / denom

    W = np.einsum("ai,abc->ibc", U, j)
    G2_folded = 3.0 * np.einsum("bj,ibc,ck->ijk", U, W, U)
    imag_mag = float(np.max(np.abs(G2_folded.imag))) if np.iscomplexobj(G2_folded) else 0.0
    real_mag = float(np.max(np.abs(G2_folded.real))) if G2_folded.size else 0.0
    if imag_mag > 1e-8 * (1.0 + real_mag):
        raise ResonantModes(
            f"quadratic correction has imaginary residue {imag_mag:.2e}")
    G2_folded = np.ascontiguousarray(G2_folded.real)

    # unfold: G2_phys[i] = sqrt(W) G2_folded[i] sqrt(W) / sqrt(w_i)
    G2 = G2_folded * sqw[None, :, None] * sqw[None, None, :] / sqw[:, None, None]
    return HjRepresentation(P=rs.P, G2=G2)
