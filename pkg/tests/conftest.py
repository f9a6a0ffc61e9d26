import json
import os

import numpy as np
import pytest

from bvplab.grid import build_domain
from bvplab.hardy import build_hardy_potential
from bvplab.spectral import build_workspace

GOLDENS_PATH = os.path.join(os.path.dirname(__file__), "data", "goldens.json")


def load_goldens() -> dict:
    with open(GOLDENS_PATH) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def ws_interval64():
    return build_workspace(build_domain("interval", 64))


@pytest.fixture(scope="session")
def ws_interval64_attracting():
    dom = build_domain("interval", 64)
    return build_workspace(dom, build_hardy_potential(dom, 0.2))


@pytest.fixture(scope="session")
def ws_interval64_repelling():
    dom = build_domain("interval", 64)
    return build_workspace(dom, build_hardy_potential(dom, -0.2))


@pytest.fixture(scope="session")
def ws_interval128():
    return build_workspace(build_domain("interval", 128))


@pytest.fixture(scope="session")
def ws_disk48():
    return build_workspace(build_domain("disk", 48))


@pytest.fixture(scope="session")
def ws_disk48_attracting():
    dom = build_domain("disk", 48)
    return build_workspace(dom, build_hardy_potential(dom, 0.2))


@pytest.fixture(scope="session")
def ws_disk48_repelling():
    dom = build_domain("disk", 48)
    return build_workspace(dom, build_hardy_potential(dom, -0.2))


@pytest.fixture(scope="session")
def ws_square64():
    return build_workspace(build_domain("square", 64))


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
