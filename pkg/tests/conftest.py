import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from boltzfact.basis import SpectralConfig
from boltzfact.contraction import build_operator


@pytest.fixture(scope="session")
def op_maxwell():
    """Maxwell-molecule operator at the standard validation truncation."""
    return build_operator(SpectralConfig(4, 6, gamma=0.0))


@pytest.fixture(scope="session")
def op_hard_sphere():
    """Hard-sphere operator at the standard validation truncation."""
    return build_operator(SpectralConfig(4, 6, gamma=1.0))


@pytest.fixture(scope="session")
def op_small():
    """Small hard-sphere operator for structural tests."""
    return build_operator(SpectralConfig(2, 2, gamma=1.0))
