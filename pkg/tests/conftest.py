import numpy as np
import pytest

from cirkit.embedding import normalize
from cirkit.synthesis import CaptionedItem

WORDS = [
    "red", "blue", "green", "car", "dog", "tree", "house", "boat",
    "small", "big", "wooden", "metal", "striped", "round",
]


def random_unit(rng, dim):
    """Unit vector in the float32 storage format."""
    return normalize(rng.normal(size=dim))


def random_unit64(rng, dim):
    """Exact-unit float64 vector for precision-sensitive property checks."""
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def make_corpus(seed=42, n=64, dim=16):
    """Synthetic caption-embedding corpus; captions carry a unique token."""
    rng = np.random.default_rng(seed)
    items = []
    for k in range(n):
        caption = " ".join(rng.choice(WORDS, size=3)) + f" number {k}"
        items.append(
            CaptionedItem(id=f"img{k:03d}", caption=caption,
                          embedding=random_unit(rng, dim))
        )
    return items


@pytest.fixture
def rng():
    return np.random.default_rng(1337)


@pytest.fixture
def corpus64():
    return make_corpus()
