import numpy as np
import pytest

from robust_coords.core_types import Configuration, RigidMotion


def rotation_2d(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def random_orthogonal(rng, d, allow_reflection=True):
    m = rng.normal(size=(d, d))
    q, r = np.linalg.qr(m)
    q = q * np.sign(np.diag(r))
    if allow_reflection and rng.random() < 0.5:
        q[:, 0] = -q[:, 0]
    return q


def random_motion(rng, d):
    return RigidMotion(random_orthogonal(rng, d), rng.normal(size=d))


def random_config(rng, d=2, n=20, mask_prob=None):
    coords = rng.normal(size=(d, n))
    if mask_prob is None:
        return Configuration(coords)
    mask = rng.random(n) < mask_prob
    mask[rng.integers(0, n)] = True
    return Configuration(coords, mask)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
