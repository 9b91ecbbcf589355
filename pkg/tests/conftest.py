import numpy as np
import pytest

from divdiff.state import MaskState, mask_token


def random_state(rng, batch, length, vocab, masked_fraction=0.5):
    """Random mask state with realized tokens at the unmasked positions."""
    masked = rng.random((batch, length)) < masked_fraction
    realized = rng.integers(0, vocab, size=(batch, length)).astype(np.int64)
    realized[masked] = mask_token(vocab)
    return MaskState(masked, realized, vocab)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
