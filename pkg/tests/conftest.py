import numpy as np
import pytest

from hoihead import build_taxonomy, compositional_embeddings


@pytest.fixture(scope="session")
def small_taxonomy():
    """12 classes over 4 verbs x 5 objects, deterministic."""
    return build_taxonomy(4, 5, 12, pairing="uniform", seed=7)


@pytest.fixture(scope="session")
def small_embeddings(small_taxonomy):
    return compositional_embeddings(small_taxonomy, dim=16, noise_scale=0.05, seed=3)


def random_sign_instance(rng, max_classes=64, magnitude=50.0):
    """One random (logits, sign labels) pair."""
    n = int(rng.integers(1, max_classes + 1))
    s = rng.uniform(-magnitude, magnitude, n)
    y = rng.choice([-1.0, 1.0], n)
    return s, y
