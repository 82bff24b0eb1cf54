import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def surrogate_series():
    from honu.plant import ExcitationSpec, PlantSimulator, generate_dataset

    return generate_dataset(PlantSimulator(), ExcitationSpec())


@pytest.fixture(scope="session")
def fig_cfg():
    from honu.training import LearningConfig

    return LearningConfig(mu=1.0, epochs=10, normalize=True, n_y=3, n_u=5)


@pytest.fixture(scope="session")
def dqnu_model(surrogate_series, fig_cfg):
    from honu.identification import identify

    return identify(surrogate_series, "dqnu", fig_cfg, "rtrl")


@pytest.fixture(scope="session")
def dlnu_model(surrogate_series, fig_cfg):
    from honu.identification import identify

    return identify(surrogate_series, "dlnu", fig_cfg, "rtrl")
