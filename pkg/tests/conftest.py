import numpy as np
import pytest
from hypothesis import settings

from risloc.scene import GALLERY_DIR, load, load_gallery

settings.register_profile("default", max_examples=200, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def gallery():
    return load_gallery()


@pytest.fixture(scope="session")
def rows(gallery):
    return {s.name: s for s in gallery}


@pytest.fixture(scope="session")
def experiment():
    return load(GALLERY_DIR / "experiment_60ghz.yaml")


@pytest.fixture(scope="session")
def nearfield():
    return load(GALLERY_DIR / "nearfield_28ghz.yaml")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
