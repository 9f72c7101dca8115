import numpy as np
import pytest

from idmne.data import DomainData, ShotSpec, gen_blobs_shift, split_few_shot, uniform_shift
from idmne.model import ModelSpec, init_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_params():
    """2 -> 16 -> 8 extractor, 3 prototypes."""
    return init_params(ModelSpec(d_in=2, n_classes=3, hidden=(16,), d_feat=8), seed=7)


@pytest.fixture(scope="session")
def tiny_domain():
    src, tgt = gen_blobs_shift(3, 4, uniform_shift(1.0, 4), 1.0, seed=3, sizes=(120, 120), spread=2.0)
    lab, unl, ev = split_few_shot(tgt, ShotSpec(3, seed=3))
    return DomainData(src, lab, unl, ev)


def quick_config(**kw):
    from idmne.trainer import TrainConfig

    base = dict(epochs=2, iterations_per_epoch=3, hidden=(8,), d_feat=6, batch_source=6, batch_labeled=4,
                batch_expanded=4, batch_unlabeled=8, seed=5)
    base.update(kw)
    return TrainConfig(**base)
