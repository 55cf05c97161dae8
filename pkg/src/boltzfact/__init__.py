"""Factorized spectral Boltzmann collision operator for VHS gases."""

from .basis import (
    CoefficientField,
    SpectralConfig,
    moments,
    project,
    q_index,
    radial_eval,
    real_sph_harm,
    state_index,
    state_unpack,
)
from .quadrature import (
    GridSpec,
    Rule1D,
    gauss_laguerre_gen,
    gauss_legendre,
    grid_sizes,
    trapezoid_periodic,
)
from .angular import (
    ChannelTable,
    GauntCOO,
    build_gaunt_coo,
    complex_to_real_U,
    enumerate_channels,
    real_gaunt,
    wigner3j,
)

__version__ = "0.1.0"
