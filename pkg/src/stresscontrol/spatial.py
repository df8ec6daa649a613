"""Spatial discretization: grids, the Neumann diffusion operator, quadrature
inner products, and bounded input/output operators.

The domain is the interval [0, L] (1D) or the square [0, L]^2 (2D) sampled on
a uniform vertex grid.  The diffusion operator A = -laplacian is closed with
mirrored ghost nodes, which keeps it self-adjoint and positive semidefinite
with respect to the trapezoid quadrature inner product and preserves the
constant null mode exactly.

Adjoints are always taken in the weighted sense, M* = W_in^-1 M^T W_out, with
diagonal quadrature weights on the state space.  Bump/window channel spaces
are Euclidean (unit weights); in identity mode the channels are copies of the
state space and carry the state weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelOutOfDomain, DimensionMismatch, InvalidGrid


@dataclass(frozen=True)
class GridSpec:
    """Geometry request: dimension (1 or 2), extent per axis, nodes per axis."""

    dimension: int
    extent: float
    nodes_per_axis: int


@dataclass(frozen=True)
class Discretization:
    """Realized grid: coordinates, trapezoid weights, and the operator A = -lap.

    ``laplacian`` maps a flat state vector to A s; it annihilates constants and
    is self-adjoint and PSD in the ``quad_weights`` inner product.
    """

    spec: GridSpec
    spacing: float
    node_coords: np.ndarray      # (n, dimension)
    quad_weights: np.ndarray     # (n,)
    laplacian: np.ndarray        # (n, n)

    @property
    def n(self) -> int:
        return self.quad_weights.shape[0]

    @property
    def volume(self) -> float:
        return float(np.sum(self.quad_weights))


@dataclass(frozen=True)
class Channel:
    """One localized input or output site."""

    center: tuple[float, ...]
    width: float
    amplitude: float = 1.0


@dataclass(frozen=True)
class IoLayout:
    """Disturbance/actuator/sensor placement, or identity mode for oracles."""

    mode: str = "bumps"                           # "bumps" | "identity"
    disturbance_channels: tuple[Channel, ...] = ()
    actuator_channels: tuple[Channel, ...] = ()
    sensor_channels: tuple[Channel, ...] = ()


@dataclass(frozen=True)
class IoOperators:
    """Assembled B1, B2, C with the weight vectors of their channel spaces."""

    B1: np.ndarray
    B2: np.ndarray
    C: np.ndarray
    w_weights: np.ndarray   # disturbance-space weights (m1,)
    u_weights: np.ndarray   # control-space weights (m2,)
    y_weights: np.ndarray   # output-space weights (p,)


def build_grid(spec: GridSpec) -> Discretization:
    """Build the uniform grid, trapezoid weights, and Neumann operator A.

    The 1D stencil is second-order central differences; the boundary rows use
    mirrored ghost nodes so every row of A sums to zero.  The 2D operator is
    the Kronecker sum of the 1D operator with itself.

    Raises InvalidGrid if N < 2, extent <= 0, or dimension not in {1, 2}.
    """
    if spec.dimension not in (1, 2):
        raise InvalidGrid(f"dimension must be 1 or 2, got {spec.dimension}")
    if spec.nodes_per_axis < 2:
        raise InvalidGrid(f"need at least 2 nodes per axis, got {spec.nodes_per_axis}")
    if not spec.extent > 0:
        raise InvalidGrid(f"extent must be positive, got {spec.extent}")

    N = spec.nodes_per_axis
    L = float(spec.extent)
    h = L / (N - 1)

    axis = np.linspace(0.0, L, N)
    w1 = np.full(N, h)
    w1[0] = w1[-1] = h / 2.0

    lap1 = np.zeros((N, N))
    for i in range(N):
        lap1[i, i] = 2.0
        if i == 0:
            lap1[i, 1] = -2.0          # mirrored ghost: s_{-1} = s_1
        elif i == N - 1:
            lap1[i, N - 2] = -2.0
        else:
            lap1[i, i - 1] = -1.0
            lap1[i, i + 1] = -1.0
    lap1 /= h * h

    if spec.dimension == 1:
        coords = axis.reshape(-1, 1)
        weights = w1
        lap = lap1
    else:
        eye = np.eye(N)
        lap = np.kron(lap1, eye) + np.kron(eye, lap1)
        weights = np.kron(w1, w1)
        xs, ys = np.meshgrid(axis, axis, indexing="ij")
        coords = np.column_stack([xs.ravel(), ys.ravel()])

    return Discretization(spec=spec, spacing=h, node_coords=coords,
                          quad_weights=weights, laplacian=lap)


def apply_laplacian(disc: Discretization, values: np.ndarray) -> np.ndarray:
    """Apply A = -laplacian (no diffusion coefficient) to a flat field."""
    values = np.asarray(values, dtype=float)
    if values.shape != (disc.n,):
        raise DimensionMismatch(
            f"field has shape {values.shape}, expected ({disc.n},)")
    return disc.laplacian @ values


def inner_product(disc: Discretization, u: np.ndarray, v: np.ndarray) -> float:
    """Trapezoid-quadrature inner product <u, v> = sum_i w_i u_i v_i."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (disc.n,) or v.shape != (disc.n,):
        raise DimensionMismatch(
            f"operands {u.shape}, {v.shape} incompatible with n={disc.n}")
    return float(np.sum(disc.quad_weights * u * v))


def norm(disc: Discretization, u: np.ndarray) -> float:
    """Quadrature L2 norm of a field."""
    return float(np.sqrt(max(inner_product(disc, u, u), 0.0)))


def _bump_column(disc: Discretization, ch: Channel) -> np.ndarray:
    """Gaussian bump sampled at nodes, peak value = amplitude."""
    center = np.asarray(ch.center, dtype=float)
    d2 = np.sum((disc.node_coords - center[None, :]) ** 2, axis=1)
    return ch.amplitude * np.exp(-d2 / (2.0 * ch.width ** 2))


def _window_row(disc: Discretization, ch: Channel) -> np.ndarray:
    """Quadrature-weighted window average: weight * w_i / sum(w in window)."""
    center = np.asarray(ch.center, dtype=float)
    half = ch.width / 2.0
    inside = np.all(np.abs(disc.node_coords - center[None, :]) <= half + 1e-12,
                    axis=1)
    mass = float(np.sum(disc.quad_weights[inside]))
    if mass <= 0.0:
        raise ChannelOutOfDomain(
            f"sensor window at {ch.center} (width {ch.width}) contains no nodes")
    row = np.where(inside, disc.quad_weights, 0.0)
    return ch.amplitude * row / mass


def _check_channel(disc: Discretization, ch: Channel, kind: str) -> None:
    L = disc.spec.extent
    center = np.asarray(ch.center, dtype=float)
    if center.shape != (disc.spec.dimension,):
        raise ChannelOutOfDomain(
            f"{kind} center {ch.center} has wrong dimension for a "
            f"{disc.spec.dimension}D grid")
    if np.any(center < 0.0) or np.any(center > L):
        raise ChannelOutOfDomain(f"{kind} center {ch.center} outside [0, {L}]")
    if not ch.width > 0.0:
        raise ChannelOutOfDomain(f"{kind} width must be positive, got {ch.width}")


def build_io_operators(disc: Discretization, layout: IoLayout) -> IoOperators:
    """Assemble B1 (disturbance), B2 (actuation), C (sensing).

    Bumps mode: B columns are Gaussian bumps (peak = amplitude), C rows are
    window averages scaled by the channel weight; channel spaces are Euclidean.
    Identity mode: B1 = B2 = C = I on the state space and the channel spaces
    inherit the quadrature weights, so all three operators are self-adjoint.
    """
    if layout.mode == "identity":
        eye = np.eye(disc.n)
        w = disc.quad_weights.copy()
        return IoOperators(B1=eye, B2=eye.copy(), C=eye.copy(),
                           w_weights=w, u_weights=w.copy(), y_weights=w.copy())
    if layout.mode != "bumps":
        raise ChannelOutOfDomain(f"unknown io mode {layout.mode!r}")

    for kind, channels in (("disturbance", layout.disturbance_channels),
                           ("actuator", layout.actuator_channels),
                           ("sensor", layout.sensor_channels)):
        for ch in channels:
            _check_channel(disc, ch, kind)

    B1 = np.column_stack([_bump_column(disc, ch)
                          for ch in layout.disturbance_channels]) \
        if layout.disturbance_channels else np.zeros((disc.n, 0))
    B2 = np.column_stack([_bump_column(disc, ch)
                          for ch in layout.actuator_channels]) \
        if layout.actuator_channels else np.zeros((disc.n, 0))
    C = np.vstack([_window_row(disc, ch)
                   for ch in layout.sensor_channels]) \
        if layout.sensor_channels else np.zeros((0, disc.n))

    return IoOperators(B1=B1, B2=B2, C=C,
                       w_weights=np.ones(B1.shape[1]),
                       u_weights=np.ones(B2.shape[1]),
                       y_weights=np.ones(C.shape[0]))


def adjoint(M: np.ndarray, in_weights: np.ndarray, out_weights: np.ndarray) -> np.ndarray:
    """Weighted adjoint M* = W_in^-1 M^T W_out of M: (in, W_in) -> (out, W_out)."""
    return (M.T * out_weights[None, :]) / in_weights[:, None]
