"""Synthetic instance generation, data splitting, and factor file formats."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import TuckerPoint
from .kernels import tucker_gather
from .linalg import polar_factor
from .problem import CompletionInstance
from .tensors import DenseTensor3, MultilinearRank, SparseTensor3

__all__ = [
    "SyntheticSpec",
    "manifold_dim",
    "generate_instance",
    "ground_truth_point",
    "split",
    "write_factor_matrix",
    "read_factor_matrix",
    "write_point",
    "read_point",
]


def manifold_dim(dims, rank) -> int:
    """Dimension of the search space of equivalence classes.

    sum_d (n_d r_d - r_d^2) + r1 r2 r3: factor parameters minus the rotation
    gauge per mode, plus the core.
    """
    try:
        rank = rank.astuple()
    except AttributeError:
        rank = tuple(rank)
    MultilinearRank(*rank).check_dims(dims)
    return int(
        sum(n * r - r * r for n, r in zip(dims, rank))
        + rank[0] * rank[1] * rank[2]
    )


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic completion instance.

    The observed-set size is os_ratio times the search-space dimension
    (rounded); the test set defaults to the same size, disjoint. ``core_kind``
    is "gaussian" or "diag_decay"; the latter builds a superdiagonal core
    whose entries decay geometrically with max/min ratio ``cn`` (requires
    equal ranks). ``noise_eps`` adds Gaussian noise scaled so its Frobenius
    norm on the observed set is noise_eps times the clean data's.
    """

    dims: tuple
    rank: tuple
    os_ratio: float
    core_kind: str = "gaussian"
    cn: Optional[float] = None
    noise_eps: float = 0.0
    seed: int = 0
    test_size: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        try:
            rank = self.rank.astuple()
        except AttributeError:
            rank = tuple(int(r) for r in self.rank)
        object.__setattr__(self, "rank", rank)
        MultilinearRank(*rank).check_dims(self.dims)
        if self.core_kind not in ("gaussian", "diag_decay"):
            raise ValueError("core_kind must be 'gaussian' or 'diag_decay'")
        if self.core_kind == "diag_decay":
            if len(set(rank)) != 1 or rank[0] < 2:
                raise ValueError("diag_decay needs equal ranks of at least 2")
            if self.cn is None or self.cn <= 1.0:
                raise ValueError("diag_decay needs a condition number cn > 1")
        if self.noise_eps < 0:
            raise ValueError("noise_eps must be nonnegative")

    @property
    def train_size(self) -> int:
        return int(round(self.os_ratio * manifold_dim(self.dims, self.rank)))


def _spawned_rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def ground_truth_point(spec: SyntheticSpec) -> TuckerPoint:
    """The deterministic ground-truth point behind :func:`generate_instance`."""
    rng = _spawned_rngs(spec.seed, 3)[0]
    us = [polar_factor(rng.standard_normal((n, r))) for n, r in zip(spec.dims, spec.rank)]
    r = spec.rank[0]
    if spec.core_kind == "gaussian":
        core = DenseTensor3(rng.standard_normal(spec.rank))
    else:
        values = spec.cn ** (-np.arange(r) / (r - 1.0))
        data = np.zeros(spec.rank)
        data[np.arange(r), np.arange(r), np.arange(r)] = values
        core = DenseTensor3(data)
    return TuckerPoint(us[0], us[1], us[2], core)


def _decode_flat(flat, dims):
    n1, n2, n3 = dims
    i1, rest = np.divmod(flat, n2 * n3)
    i2, i3 = np.divmod(rest, n3)
    return i1, i2, i3


def generate_instance(spec: SyntheticSpec) -> CompletionInstance:
    """Sample a synthetic instance: ground truth, uniform index draw, noise.

    Train and test indices are drawn uniformly without replacement and are
    disjoint by construction. With noise_eps > 0 the observed values (train
    and test alike) receive Gaussian noise with a common per-entry scale
    fixed on the train set: scale = noise_eps * ||train values|| / ||noise on
    train||, so the squared noise norm on the train set is
    noise_eps^2 * ||P(train)||^2. Deterministic per seed.
    """
    rng_truth, rng_sample, rng_noise = _spawned_rngs(spec.seed, 3)
    del rng_truth  # consumed inside ground_truth_point with the same spawn

    truth = ground_truth_point(spec)
    n_train = spec.train_size
    n_test = spec.test_size if spec.test_size is not None else n_train
    total = spec.dims[0] * spec.dims[1] * spec.dims[2]
    if n_train <= 0:
        raise ValueError("os_ratio too small: empty observed set")
    if n_train + n_test > total:
        raise ValueError(
            "os_ratio too large for dims: %d samples requested from %d entries"
            % (n_train + n_test, total)
        )
    flat = rng_sample.choice(total, size=n_train + n_test, replace=False)
    i1, i2, i3 = _decode_flat(flat, spec.dims)
    vals = tucker_gather(truth.core.data, truth.u1, truth.u2, truth.u3, i1, i2, i3)
    train_vals = vals[:n_train].copy()
    test_vals = vals[n_train:].copy()
    if spec.noise_eps > 0:
        noise = rng_noise.standard_normal(n_train + n_test)
        scale = spec.noise_eps * np.linalg.norm(train_vals) / np.linalg.norm(noise[:n_train])
        train_vals += scale * noise[:n_train]
        test_vals += scale * noise[n_train:]
    train = SparseTensor3(spec.dims, i1[:n_train], i2[:n_train], i3[:n_train], train_vals)
    test = (
        SparseTensor3(spec.dims, i1[n_train:], i2[n_train:], i3[n_train:], test_vals)
        if n_test
        else None
    )
    return CompletionInstance(spec.dims, MultilinearRank(*spec.rank), train, test)


def split(data: SparseTensor3, rank, fractions, seed=0) -> CompletionInstance:
    """Random train/validation/test partition of observed entries.

    ``fractions`` is (train, validation, test) and must sum to one. Counts
    are rounded (train first, then validation, remainder to test); a part
    with a positive fraction must end up non-empty. Deterministic per seed.
    """
    f_train, f_val, f_test = fractions
    if abs(f_train + f_val + f_test - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if min(f_train, f_val, f_test) < 0:
        raise ValueError("fractions must be nonnegative")
    k = data.nnz
    n_train = int(round(f_train * k))
    n_val = int(round(f_val * k))
    n_train = min(n_train, k)
    n_val = min(n_val, k - n_train)
    n_test = k - n_train - n_val
    for name, frac, count in (
        ("train", f_train, n_train),
        ("validation", f_val, n_val),
        ("test", f_test, n_test),
    ):
        if frac > 0 and count == 0:
            raise ValueError("%s fraction %.3g produced an empty part" % (name, frac))
    if n_train == 0:
        raise ValueError("empty train partition")
    perm = np.random.default_rng(seed).permutation(k)
    parts = (
        perm[:n_train],
        perm[n_train:n_train + n_val],
        perm[n_train + n_val:],
    )
    train = data.take(parts[0])
    val = data.take(parts[1]) if n_val else None
    test = data.take(parts[2]) if n_test else None
    try:
        rank = MultilinearRank(*rank.astuple())
    except AttributeError:
        rank = MultilinearRank(*rank)
    return CompletionInstance(data.dims, rank, train, test=test, validation=val)


# -- factor files -----------------------------------------------------------


def write_factor_matrix(path, m):
    """Row-major text: header `rows cols`, then one row of values per line."""
    m = np.asarray(m, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("%d %d\n" % m.shape)
        for row in m:
            fh.write(" ".join("%.17g" % v for v in row) + "\n")


def read_factor_matrix(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    rows, cols = (int(x) for x in lines[0].split())
    out = np.empty((rows, cols))
    for i in range(rows):
        out[i] = [float(v) for v in lines[i + 1].split()]
    return out


def _core_to_sparse(core: DenseTensor3) -> SparseTensor3:
    r1, r2, r3 = core.dims
    i1, i2, i3 = np.meshgrid(np.arange(r1), np.arange(r2), np.arange(r3), indexing="ij")
    return SparseTensor3(
        core.dims, i1.ravel(), i2.ravel(), i3.ravel(), core.data[i1.ravel(), i2.ravel(), i3.ravel()]
    )


def write_point(directory, point: TuckerPoint, prefix=""):
    """One text file per factor plus the core at full density in sparse form."""
    os.makedirs(directory, exist_ok=True)
    for d, u in enumerate(point.factors, start=1):
        write_factor_matrix(os.path.join(directory, "%su%d.txt" % (prefix, d)), u)
    _core_to_sparse(point.core).write_text(os.path.join(directory, "%score.txt" % prefix))


def read_point(directory, prefix="") -> TuckerPoint:
    us = [
        read_factor_matrix(os.path.join(directory, "%su%d.txt" % (prefix, d)))
        for d in (1, 2, 3)
    ]
    core_sparse = SparseTensor3.read_text(os.path.join(directory, "%score.txt" % prefix))
    return TuckerPoint(us[0], us[1], us[2], core_sparse.to_dense())
