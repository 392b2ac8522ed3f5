import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from corpus import photo_corpus  # noqa: E402

from dctshield.perturb import PerturbSpec, SIGN, apply  # noqa: E402


@pytest.fixture(scope="session")
def corpus_default_100():
    return photo_corpus(100, seed=7, style="default")


@pytest.fixture(scope="session")
def corpus_soft_50():
    return photo_corpus(50, seed=7, style="soft")


@pytest.fixture(scope="session")
def adv_soft_50(corpus_soft_50):
    spec = PerturbSpec(kind=SIGN, eps=0.004, seed=5)
    return [apply(img, spec, i).image for i, img in enumerate(corpus_soft_50)]


@pytest.fixture()
def rng():
    return np.random.default_rng(42)
