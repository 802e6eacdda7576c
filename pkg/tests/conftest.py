import numpy as np
import pytest

from tuckercomp.geometry import random_point
from tuckercomp.kernels import tucker_gather
from tuckercomp.problem import CompletionInstance
from tuckercomp.tensors import MultilinearRank, SparseTensor3


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_instance(dims, rank, n_train, n_test=0, seed=0, noise=0.0):
    """Instance whose data comes from an exact rank-`rank` ground truth."""
    rng = np.random.default_rng(seed)
    truth = random_point(dims, rank, rng)
    total = dims[0] * dims[1] * dims[2]
    flat = rng.choice(total, size=n_train + n_test, replace=False)
    i1, rest = np.divmod(flat, dims[1] * dims[2])
    i2, i3 = np.divmod(rest, dims[2])
    vals = tucker_gather(truth.core.data, truth.u1, truth.u2, truth.u3, i1, i2, i3)
    if noise:
        vals = vals + noise * rng.standard_normal(vals.shape)
    train = SparseTensor3(dims, i1[:n_train], i2[:n_train], i3[:n_train], vals[:n_train])
    test = (
        SparseTensor3(dims, i1[n_train:], i2[n_train:], i3[n_train:], vals[n_train:])
        if n_test
        else None
    )
    return CompletionInstance(dims, MultilinearRank(*rank), train, test=test)
