"""
Shared fixtures: an in-memory ledger database and small problem instances.
"""
import numpy as np
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker

from src.dynamics import SystemKind, SystemModel
from src.ledger import Base
from src.ocp import InputBox, OcpSpec, TransformKind
from src.solver import SolverConfig


# =============================================================================
# Test Fixtures
# =============================================================================

@pytest.fixture
def db_session():
    """Create a test database session."""
    engine = create_engine("sqlite:///:memory:")
    Base.metadata.create_all(engine)
    SessionLocal = sessionmaker(bind=engine)
    session = SessionLocal()
    yield session
    session.close()


@pytest.fixture
def linear_model():
    """Scalar integrator x_dot = u."""
    return SystemModel(kind=SystemKind.LINEAR, linear_a=0.0, linear_b=1.0)


@pytest.fixture
def linear_spec():
    return OcpSpec(horizon=16, q=[1.0], r=[0.1], p=[10.0], transform=TransformKind.IDENTITY,
                   box=InputBox(lower=[-100.0], upper=[100.0]))


@pytest.fixture
def cart_pole():
    return SystemModel(kind=SystemKind.CART_POLE)


@pytest.fixture
def cart_pole_spec():
    return OcpSpec(horizon=5, q=[1.0, 0.1, 5.0, 0.1], r=[0.01], p=[1.0, 0.1, 10.0, 0.1],
                   transform=TransformKind.CART_POLE,
                   box=InputBox(lower=[-100.0], upper=[100.0]))


@pytest.fixture
def fast_solver():
    return SolverConfig(max_iterations=200, stationarity_tol=1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
