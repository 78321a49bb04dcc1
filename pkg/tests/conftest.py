import warnings

import pytest

import wsmimo as w


@pytest.fixture(scope="session")
def fig_cfg():
    return w.default_config()


@pytest.fixture(scope="session")
def fig_ctx(fig_cfg):
    """Reference scenario: 3 tx / 10 rx circles, one target at (1100, 1100)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return w.build_context(fig_cfg)


@pytest.fixture(scope="session")
def l_shaped():
    geo = w.make_geometry("l_shaped")
    return geo, w.common_range_window(geo)
