import pytest

from kooplift.data import synthetic_system

ORACLE_SEED = 7


@pytest.fixture(scope="session")
def oracle_data():
    """Default-size synthetic dataset with ground truth; generated once per
    session (RK4 at step 1e-3 makes this the priciest fixture)."""
    return synthetic_system(ORACLE_SEED)
