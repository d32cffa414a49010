import numpy as np
import pytest

from grkan import ActivationTensor, GroupLayout, GroupRationalParams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_instance(rng, batch=2, seq=3, feature=8, groups=2, degrees=(5, 4), dtype=np.float64):
    """Random tensor pair plus matching params and layout."""
    m, n = degrees
    layout = GroupLayout(feature, groups)
    params = GroupRationalParams(
        rng.standard_normal((groups, m + 1)), rng.standard_normal((groups, n))
    )
    x = ActivationTensor(rng.standard_normal((batch, seq, feature)).astype(dtype))
    upstream = ActivationTensor(rng.standard_normal((batch, seq, feature)).astype(dtype))
    return x, upstream, params, layout


def rel_err(a, b, floor=1e-12):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0
