"""Dense and sparse 3-order tensors and their multilinear kernels.

Unfolding convention
--------------------
``unfold(t, d)`` arranges the mode-d fibers as columns, with the remaining
indices ordered so that the smaller mode index varies fastest. More than one
ordering is in common use; this one is pinned deliberately, because it makes
the mode-1 unfolding of ``core x1 A x2 B x3 C`` equal ``A G1 (C kron B)^T``,
and the gradient and projector formulas in the rest of the package rely on
exactly that Kronecker factor order.

Dense storage is mode-1-major (first index fastest, i.e. Fortran layout), so
``unfold(t, 1)`` is a zero-copy view. All types are immutable after
construction and every operation is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = [
    "DenseTensor3",
    "SparseTensor3",
    "MultilinearRank",
    "SparseFormatError",
    "unfold",
    "fold",
    "mode_product",
    "tucker_eval_sparse",
]


class SparseFormatError(ValueError):
    """Malformed sparse tensor text, with the offending line number."""

    def __init__(self, line, message):
        super().__init__("line %d: %s" % (line, message))
        self.line = line


def _locked(arr):
    arr.setflags(write=False)
    return arr


class DenseTensor3:
    """A dense 3-order tensor.

    Parameters
    ----------
    values : array_like
        Either an (n1, n2, n3) array or a flat vector of length n1*n2*n3 in
        mode-1-major order (first index fastest), in which case ``dims`` is
        required.
    dims : tuple of int, optional
        Target dimensions when ``values`` is flat.
    """

    __slots__ = ("data",)

    def __init__(self, values, dims=None):
        arr = np.asarray(values, dtype=np.float64)
        if dims is not None:
            arr = arr.reshape(tuple(dims), order="F")
        if arr.ndim != 3:
            raise ValueError("expected a 3-order tensor, got ndim=%d" % arr.ndim)
        self.data = _locked(np.array(arr, dtype=np.float64, order="F"))

    @property
    def dims(self):
        return self.data.shape

    def ravel(self):
        """Flat mode-1-major vector of entries."""
        return self.data.ravel(order="F")

    def norm(self):
        return float(np.linalg.norm(self.data))

    def __eq__(self, other):
        return (
            isinstance(other, DenseTensor3)
            and self.dims == other.dims
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return "DenseTensor3(dims=%r)" % (self.dims,)


def unfold(t: DenseTensor3, mode: int) -> np.ndarray:
    """Mode-d unfolding of a dense tensor.

    Parameters
    ----------
    t : DenseTensor3
    mode : {1, 2, 3}

    Returns
    -------
    ndarray of shape (n_mode, product of the other two dims)
        Entry t(i1, i2, i3) sits in row i_mode; the column runs over the
        remaining indices with the smaller mode varying fastest. For mode 1
        this is a zero-copy view of the underlying storage.
    """
    if mode not in (1, 2, 3):
        raise ValueError("mode must be 1, 2 or 3")
    a = np.moveaxis(t.data, mode - 1, 0)
    return a.reshape((a.shape[0], -1), order="F")


def fold(m, mode: int, dims) -> DenseTensor3:
    """Inverse of :func:`unfold`: rebuild the tensor from its mode-d unfolding."""
    if mode not in (1, 2, 3):
        raise ValueError("mode must be 1, 2 or 3")
    n1, n2, n3 = dims
    rest = {1: (n2, n3), 2: (n1, n3), 3: (n1, n2)}[mode]
    m = np.asarray(m, dtype=np.float64)
    expected = (dims[mode - 1], rest[0] * rest[1])
    if m.shape != expected:
        raise ValueError("unfolding has shape %r, expected %r" % (m.shape, expected))
    a = m.reshape((dims[mode - 1],) + rest, order="F")
    return DenseTensor3(np.moveaxis(a, 0, mode - 1))


def mode_product(t: DenseTensor3, v, mode: int) -> DenseTensor3:
    """d-mode product of a tensor with a matrix.

    ``v`` must have as many columns as the tensor's mode-d dimension; the
    result replaces that dimension with the row count of ``v`` and equals
    ``fold(v @ unfold(t, mode), mode, new_dims)``.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 2 or v.shape[1] != t.dims[mode - 1]:
        raise ValueError(
            "matrix of shape %r cannot contract mode %d of dims %r"
            % (v.shape, mode, t.dims)
        )
    new_dims = list(t.dims)
    new_dims[mode - 1] = v.shape[0]
    return fold(v @ unfold(t, mode), mode, tuple(new_dims))


@dataclass(frozen=True)
class MultilinearRank:
    """Target multilinear rank (r1, r2, r3).

    Each r_d must not exceed the product of the other two; this is the
    condition under which the Gram matrices of the core unfoldings can be
    positive definite.
    """

    r1: int
    r2: int
    r3: int

    def __post_init__(self):
        r1, r2, r3 = self.r1, self.r2, self.r3
        if min(r1, r2, r3) < 1:
            raise ValueError("ranks must be positive")
        if r1 > r2 * r3 or r2 > r1 * r3 or r3 > r1 * r2:
            raise ValueError(
                "invalid multilinear rank %r: each r_d must satisfy "
                "r_d <= product of the others" % ((r1, r2, r3),)
            )

    def check_dims(self, dims):
        for rd, nd in zip(self.astuple(), dims):
            if rd > nd:
                raise ValueError("rank %r exceeds dims %r" % (self.astuple(), tuple(dims)))

    def astuple(self):
        return (self.r1, self.r2, self.r3)


class SparseTensor3:
    """Coordinate-format sparse 3-order tensor.

    Entries are stored 0-based in parallel arrays (i1, i2, i3, vals), sorted
    lexicographically by index triple with no duplicates; the sorted order is
    canonical. The text format is 1-based.
    """

    __slots__ = ("dims", "i1", "i2", "i3", "vals")

    def __init__(self, dims, i1, i2, i3, vals, _canonical=False):
        dims = tuple(int(d) for d in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError("dims must be three positive integers")
        i1 = np.asarray(i1, dtype=np.int64)
        i2 = np.asarray(i2, dtype=np.int64)
        i3 = np.asarray(i3, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if not (i1.shape == i2.shape == i3.shape == vals.shape) or i1.ndim != 1:
            raise ValueError("index and value arrays must be equal-length vectors")
        for ix, nd, name in ((i1, dims[0], "i1"), (i2, dims[1], "i2"), (i3, dims[2], "i3")):
            if ix.size and (ix.min() < 0 or ix.max() >= nd):
                raise ValueError("%s index out of range for dims %r" % (name, dims))
        if not _canonical and i1.size:
            order = np.lexsort((i3, i2, i1))
            i1, i2, i3, vals = i1[order], i2[order], i3[order], vals[order]
        if i1.size > 1:
            same = (np.diff(i1) == 0) & (np.diff(i2) == 0) & (np.diff(i3) == 0)
            if same.any():
                k = int(np.flatnonzero(same)[0])
                raise ValueError(
                    "duplicate index triple %r" % ((i1[k] + 1, i2[k] + 1, i3[k] + 1),)
                )
        self.dims = dims
        self.i1 = _locked(np.ascontiguousarray(i1))
        self.i2 = _locked(np.ascontiguousarray(i2))
        self.i3 = _locked(np.ascontiguousarray(i3))
        self.vals = _locked(np.ascontiguousarray(vals))

    @property
    def nnz(self):
        return self.i1.size

    def indices(self):
        """(nnz, 3) array of 0-based index triples."""
        return np.stack([self.i1, self.i2, self.i3], axis=1)

    def with_values(self, vals):
        """Same support, new values (skips re-sorting)."""
        out = object.__new__(type(self))
        out.dims = self.dims
        out.i1, out.i2, out.i3 = self.i1, self.i2, self.i3
        out.vals = _locked(np.ascontiguousarray(np.asarray(vals, dtype=np.float64)))
        if out.vals.shape != self.vals.shape:
            raise ValueError("value array has wrong length")
        return out

    def take(self, rows):
        """Sub-tensor on a subset of entries (row positions into the arrays)."""
        return SparseTensor3(
            self.dims, self.i1[rows], self.i2[rows], self.i3[rows], self.vals[rows]
        )

    def to_dense(self) -> DenseTensor3:
        full = np.zeros(self.dims, order="F")
        full[self.i1, self.i2, self.i3] = self.vals
        return DenseTensor3(full)

    def frobenius_norm(self):
        return float(np.linalg.norm(self.vals))

    def write_text(self, path):
        """Write `n1 n2 n3 nnz` then one `i1 i2 i3 value` line per entry.

        Indices are 1-based; values carry 17 significant digits so a
        read/write round trip is exact.
        """
        with open(path, "w") as fh:
            fh.write("%d %d %d %d\n" % (self.dims + (self.nnz,)))
            for a, b, c, v in zip(self.i1, self.i2, self.i3, self.vals):
                fh.write("%d %d %d %.17g\n" % (a + 1, b + 1, c + 1, v))

    @classmethod
    def read_text(cls, path):
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise SparseFormatError(1, "empty file")
        head = lines[0].split()
        if len(head) != 4:
            raise SparseFormatError(1, "expected `n1 n2 n3 nnz`")
        try:
            n1, n2, n3, nnz = (int(x) for x in head)
        except ValueError:
            raise SparseFormatError(1, "expected four integers") from None
        if nnz < 0 or len(lines) < nnz + 1:
            raise SparseFormatError(1, "nnz=%d but file has %d entry lines" % (nnz, len(lines) - 1))
        for extra in range(nnz + 1, len(lines)):
            if lines[extra].strip():
                raise SparseFormatError(extra + 1, "unexpected content after %d entries" % nnz)
        i1 = np.empty(nnz, dtype=np.int64)
        i2 = np.empty(nnz, dtype=np.int64)
        i3 = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            parts = lines[k + 1].split()
            if len(parts) != 4:
                raise SparseFormatError(k + 2, "expected `i1 i2 i3 value`")
            try:
                i1[k] = int(parts[0]) - 1
                i2[k] = int(parts[1]) - 1
                i3[k] = int(parts[2]) - 1
                vals[k] = float(parts[3])
            except ValueError:
                raise SparseFormatError(k + 2, "could not parse %r" % lines[k + 1]) from None
        try:
            return cls((n1, n2, n3), i1, i2, i3, vals)
        except ValueError as exc:
            raise SparseFormatError(1, str(exc)) from None

    def __repr__(self):
        return "SparseTensor3(dims=%r, nnz=%d)" % (self.dims, self.nnz)


def tucker_eval_sparse(x, support: SparseTensor3) -> SparseTensor3:
    """Evaluate a Tucker point on a sparse support without densifying.

    Parameters
    ----------
    x : TuckerPoint
        Factors (u1, u2, u3) with orthonormal columns and a core tensor.
    support : SparseTensor3
        Only the index set is used; values are ignored.

    Returns
    -------
    SparseTensor3
        Same support, with entry (i1, i2, i3) equal to
        sum_{a,b,c} core[a,b,c] u1[i1,a] u2[i2,b] u3[i3,c]. Cost is
        O(nnz * r1 r2 r3).
    """
    vals = kernels.tucker_gather(
        x.core.data, x.u1, x.u2, x.u3, support.i1, support.i2, support.i3
    )
    return support.with_values(vals)
