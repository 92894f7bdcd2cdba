import numpy as np
import pytest

from latentsearch.weights import init_random_archive, load_model


@pytest.fixture(scope="session")
def default_model():
    """Default-size engine model (N=64, M=96, Hz=64, D=512), seeded."""
    return load_model(init_random_archive(seed=20250810))


@pytest.fixture(scope="session")
def small_model():
    """Tiny model for cheap per-test pipelines."""
    return load_model(
        init_random_archive(seed=33, n_ch=16, m_ch=24, hz_ch=8, embed_dim=32, fusion_hidden=48)
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, dim):
    v = rng.normal(size=dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def make_test_images(rng, count, size=64):
    """Half random noise, half structured (gradients, checkers, blobs)."""
    images = []
    h = w = size
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    for i in range(count):
        kind = i % 4
        if kind == 0:
            img = rng.random((3, h, w))
        elif kind == 1:
            ang = rng.uniform(0, 2 * np.pi)
            g = np.cos(ang) * xx + np.sin(ang) * yy
            g = (g - g.min()) / (np.ptp(g) + 1e-9)
            img = np.stack([g * rng.uniform(0.3, 1.0) for _ in range(3)])
        elif kind == 2:
            period = int(rng.integers(4, 17))
            checker = ((yy * h // period).astype(int) + (xx * w // period).astype(int)) % 2
            img = np.stack([checker * rng.uniform(0.5, 1.0) for _ in range(3)])
        else:
            img = np.full((3, h, w), rng.uniform(0.1, 0.9))
            for _ in range(int(rng.integers(1, 5))):
                cy, cx = rng.uniform(0.2, 0.8, 2)
                r = rng.uniform(0.05, 0.25)
                blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r)))
                img += blob[None] * rng.uniform(-0.5, 0.5, (3, 1, 1))
        images.append(np.clip(img, 0, 1).astype(np.float32)[None])
    return images
