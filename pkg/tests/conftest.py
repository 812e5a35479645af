import numpy as np
import pytest

from bgsnetd.nn import ModelConfig


@pytest.fixture
def thumbnail_config():
    """Small model with the same layer types as the full architecture."""
    return ModelConfig(patch_size=8, conv_channels=(4, 8, 16), hidden_sizes=(8, 4))


def make_separable_dataset(n=200, patch_size=8, seed=0):
    """Patch dataset where the two classes differ strongly in channel 0."""
    from bgsnetd.patches import PatchDataset

    rng = np.random.default_rng(seed)
    labels = (np.arange(n) % 2).astype(np.uint8)
    data = np.empty((n, 2, patch_size, patch_size), dtype=np.float32)
    for i, lab in enumerate(labels):
        bg_level = 0.7
        frame_level = 0.15 if lab else bg_level
        data[i, 0] = frame_level + 0.02 * rng.standard_normal((patch_size, patch_size))
        data[i, 1] = bg_level + 0.02 * rng.standard_normal((patch_size, patch_size))
    origins = np.zeros((n, 3), dtype=np.int32)
    return PatchDataset(np.clip(data, 0.0, 1.0), labels, origins)
