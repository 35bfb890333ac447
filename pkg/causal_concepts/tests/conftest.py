import pytest

from app.datasets.corpus import Corpus, generate_corpus, save_corpus
from app.datasets.factors import build_factor_space
from app.training.config import TrainConfig

TEST_IMAGE_SIZE = 16


@pytest.fixture(scope="session")
def dsprites_space():
    return build_factor_space("dsprites_like", "mini", image_size=TEST_IMAGE_SIZE)


@pytest.fixture(scope="session")
def shapes3d_space():
    return build_factor_space("shapes3d_like", "mini", image_size=32)


@pytest.fixture(scope="session")
def dsprites_corpus(dsprites_space):
    return generate_corpus(dsprites_space)


@pytest.fixture(scope="session")
def saved_dsprites(tmp_path_factory, dsprites_corpus):
    return save_corpus(dsprites_corpus, tmp_path_factory.mktemp("data") / "dsprites_like_mini_16")


@pytest.fixture(scope="session")
def shapes3d_labels_only(shapes3d_space):
    """Shapes3D-like corpus without images, enough for labelling and task construction."""
    indices = shapes3d_space.all_indices()
    return Corpus(space=shapes3d_space, images=None, factor_indices=indices, u=shapes3d_space.normalize_all(indices))


def quick_config(**overrides):
    values = {
        "dataset": "dsprites_like",
        "image_size": TEST_IMAGE_SIZE,
        "task": "Left-sided Hearts",
        "seed": 0,
        "epochs": 2,
        "freeze_epochs": 1,
        "batch_size": 128,
        "supervision_ramp_epochs": 1,
        "checkpoint_every": 1,
        "mic_samples": 120,
        "z_dim": 8,
    }
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture
def registry_url(tmp_path):
    return f"sqlite:///{tmp_path / 'registry.db'}"


@pytest.fixture
def make_config():
    return quick_config
