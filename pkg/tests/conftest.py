import numpy as np
import pytest

from hyperlora import typology


@pytest.fixture(scope="session")
def ewave():
    """Bundled attestation vectors, loaded once per session."""
    return typology.load_feature_vectors(typology.bundled_vectors_path())


def random_vector(rng, dialect_id, feature_ids):
    rates = rng.choice([0.0, 0.3, 0.6, 1.0], size=len(feature_ids))
    return typology.DialectFeatureVector(dialect_id, feature_ids, rates)


@pytest.fixture
def make_vectors():
    def _make(n, n_features=12, seed=0):
        rng = np.random.default_rng(seed)
        feature_ids = tuple(f"f{i}" for i in range(n_features))
        return [random_vector(rng, f"d{j}", feature_ids) for j in range(n)]
    return _make
