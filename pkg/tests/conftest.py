from __future__ import annotations

import numpy as np
import pytest

from cv2xsim.config import load_config
from cv2xsim.scenario import ScenarioConfig, deploy_scenario


@pytest.fixture(scope="session")
def urban_cfg():
    return load_config()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def scenario120():
    return deploy_scenario(ScenarioConfig(lambda_vehicles=20, count_mode="fixed", rng_seed=3))
