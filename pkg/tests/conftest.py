import numpy as np
import pytest

import stresscontrol as sc
from stresscontrol.spatial import Discretization, GridSpec

SCALAR_P = (2.0 + np.sqrt(7.0)) / 1.5


@pytest.fixture(scope="session")
def scalar_system():
    """Hand-built 1x1 system: A=[1], B1=B2=C=[1], gamma=2, unit weight."""
    return sc.LinearSystem(drift=np.array([[1.0]]), B1=np.array([[1.0]]),
                           B2=np.array([[1.0]]), C=np.array([[1.0]]),
                           gamma=2.0, weights=np.array([1.0]))


@pytest.fixture(scope="session")
def scalar_rs(scalar_system):
    return sc.solve_h_infinity_riccati(scalar_system)


@pytest.fixture(scope="session")
def single_node():
    """Degenerate one-node discretization for scalar-system oracles."""
    disc = Discretization(spec=GridSpec(1, 1.0, 1), spacing=1.0,
                          node_coords=np.zeros((1, 1)),
                          quad_weights=np.array([1.0]),
                          laplacian=np.zeros((1, 1)))
    io = sc.build_io_operators(disc, sc.IoLayout(mode="identity"))
    params = sc.ModelParams(D_s=1e-12, c2=1.0, S=1.0, gamma=2.0)
    return disc, params, io


@pytest.fixture(scope="session")
def grid17():
    """1D identity-mode scenario on 17 nodes, used for grid-level checks."""
    disc = sc.build_grid(sc.GridSpec(1, 1.0, 17))
    io = sc.build_io_operators(disc, sc.IoLayout(mode="identity"))
    params = sc.ModelParams(D_s=0.1, c2=1.0, S=1.0, gamma=2.0)
    sys = sc.assemble_linearization(disc, params, io)
    rs = sc.solve_h_infinity_riccati(sys)
    return disc, params, io, sys, rs
