import pytest

from evtrap.config import build_stack, load_config


@pytest.fixture(scope="session")
def cfg():
    return load_config(None)


@pytest.fixture(scope="session")
def base_stack(cfg):
    """Calibrated dark stack: tweezer + surface only, evanescent off."""
    return build_stack(cfg)


@pytest.fixture(scope="session")
def loading_stack(cfg):
    """Stack at the published loading operating point."""
    return build_stack(cfg, saturation=2e5, detuning_mhz=250.0)
