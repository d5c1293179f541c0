"""Bundled benchmark instance: the scalar constant-coefficient problem used
throughout the test suite and the demo configuration."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .model import Dimensions, ProblemSpec

SCALAR_DIMS = Dimensions(
    n=1, n_v=1,
    m1=(1, 1),
    m2=((1, 1, 1), (1, 1, 1)),
    m3=((1, 1), (1, 1), (1, 1)),
)

# terminal announced-rule parameter choices used by the demo config; the
# manager-level terminal value 1 keeps the second recursion's closure factor
# well conditioned on this instance
BENCHMARK_TERMINAL_ETA = ((5.0, 3.0, -2.0), (-1.0, 4.0, 1.0))
BENCHMARK_TERMINAL_ZETA = ((1.0, -1.0, 1.0), (1.0, 2.0, -1.0))
BENCHMARK_TERMINAL_RHO = ((1.0, 1.0, 1.0), (1.0, 1.0, 1.0))


def benchmark_spec(gamma=1.0):
    """Scalar benchmark instance (all channels one-dimensional)."""
    s = lambda v: np.array([[float(v)]])
    return ProblemSpec(
        dims=SCALAR_DIMS,
        A=s(0.8), C=s(1.0), E=s(-1.0),
        B1=[s(0.65), s(-1.0)], D1=[s(0.5), s(1.0)],
        B2=[[s(-1.0), s(0.2), s(0.5)], [s(0.2), s(-1.0), s(0.2)]],
        D2=[[s(-0.1), s(0.1), s(0.2)], [s(0.5), s(-2.0), s(0.5)]],
        B3=[[s(0.5), s(1.0)], [s(0.5), s(0.2)], [s(0.5), s(0.1)]],
        D3=[[s(0.2), s(1.0)], [s(0.2), s(0.1)], [s(0.5), s(0.1)]],
        Q1=s(1.0), Q2=[s(0.8), s(0.4)], Q3=[s(0.5), s(0.2), s(0.5)],
        R=[s(1.0), s(1.0)],
        R1=[[s(0.5), s(0.5), s(1.0)], [s(0.5), s(1.0), s(0.5)]],
        Rbar1=[[s(0.5), s(0.1)], [s(0.2), s(0.1)], [s(0.1), s(0.1)]],
        R2=[s(1.0), s(1.0)],
        R2ij=[[s(1.0), s(0.8), s(1.0)], [s(0.9), s(1.0), s(1.0)]],
        Rbar2=[[s(0.3), s(0.2)], [s(0.4), s(0.1)], [s(0.2), s(0.2)]],
        R3ij=[[s(1.0), s(0.2), s(0.3)], [s(1.0), s(1.0), s(1.0)]],
        Rbar3=[[s(1.0), s(2.0)], [s(1.0), s(1.0)], [s(0.5), s(1.0)]],
        G1=s(1.0), G2=[s(1.0), s(1.0)], G3=[s(0.5), s(0.2), s(0.5)],
        gamma=gamma, T=0.8, x0=np.array([0.5]),
    )


def benchmark_config_path():
    """Filesystem path of the bundled demo configuration."""
    return resources.files("trigame").joinpath("configs", "benchmark.json")
