"""Small dense linear-algebra kernels used by the quotient geometry.

Everything here operates on r x r or n x r matrices with r small (tens at
most): symmetric Lyapunov solves through a cached eigendecomposition, a
generic preconditioned conjugate gradient, the coupled skew-symmetric system
behind the horizontal projector, and the polar orthogonal factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensors import DenseTensor3, mode_product, unfold

__all__ = [
    "RankDeficiencyError",
    "PcgBreakdownError",
    "PcgConvergenceError",
    "SpdGram",
    "SkewTriple",
    "sym",
    "skew",
    "lyap_spd",
    "polar_factor",
    "pcg_linear",
    "coupled_apply",
    "coupled_lyap_pcg",
    "coupled_skew_solve",
]

# eigenvalue ratio below which a Gram matrix counts as rank deficient;
# matches a 1e-12 singular-value ratio on the unfolding itself
_GRAM_RANK_RTOL = 1e-24


class RankDeficiencyError(ValueError):
    """A matrix that must have full rank is numerically rank deficient."""


class PcgBreakdownError(RuntimeError):
    """Conjugate gradient met non-positive curvature."""


class PcgConvergenceError(RuntimeError):
    """Conjugate gradient did not reach the tolerance; carries the residual."""

    def __init__(self, message, relative_residual):
        super().__init__(message)
        self.relative_residual = relative_residual


def _square(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("expected a square matrix, got shape %r" % (m.shape,))
    return m


def sym(m):
    """Symmetric part (m + m^T) / 2."""
    m = _square(m)
    return (m + m.T) / 2.0


def skew(m):
    """Skew-symmetric part (m - m^T) / 2."""
    m = _square(m)
    return (m - m.T) / 2.0


class SpdGram:
    """Eigendecomposition cache of one symmetric positive-definite Gram matrix.

    Holds G_d G_d^T for a mode d together with (Q, lam) such that
    m = Q diag(lam) Q^T, plus the explicit inverse. Construction fails with
    :class:`RankDeficiencyError` when the matrix is numerically singular;
    geometry deliberately does not regularize, callers must handle the error.
    """

    __slots__ = ("mode", "mat", "q", "lam", "inv")

    def __init__(self, mode, mat):
        mat = _square(mat)
        nrm = np.linalg.norm(mat)
        if nrm > 0 and np.linalg.norm(mat - mat.T) > 1e-13 * nrm:
            raise ValueError("gram matrix for mode %d is not symmetric" % mode)
        mat = (mat + mat.T) / 2.0
        lam, q = np.linalg.eigh(mat)
        if lam[-1] <= 0 or lam[0] <= lam[-1] * _GRAM_RANK_RTOL:
            raise RankDeficiencyError(
                "gram matrix for mode %d is numerically rank deficient "
                "(eigenvalue range [%.3e, %.3e])" % (mode, lam[0], lam[-1])
            )
        self.mode = mode
        self.mat = mat
        self.q = q
        self.lam = lam
        self.inv = (q / lam) @ q.T

    @classmethod
    def from_eig(cls, mode, q, lam):
        """Build from an existing eigendecomposition (skips the eigh)."""
        out = object.__new__(cls)
        out.mode = mode
        out.q = q
        out.lam = lam
        out.mat = (q * lam) @ q.T
        out.inv = (q / lam) @ q.T
        return out

    def affine(self, scale, shift):
        """Cache for scale * m + shift * I, reusing the eigenvectors."""
        return SpdGram.from_eig(self.mode, self.q, scale * self.lam + shift)

    def lyap(self, c):
        """Solve S m + m S = c via S = Q ((Q^T c Q) / (lam_i + lam_j)) Q^T."""
        qc = self.q.T @ c @ self.q
        qc = qc / (self.lam[:, None] + self.lam[None, :])
        return self.q @ qc @ self.q.T

    def lyap_scaled(self, c):
        """S m^{-1} for S solving S m + m S = m c m, in one stable pass.

        In the eigenbasis the result is (Q^T c Q) weighted entrywise by
        lam_i / (lam_i + lam_j); the weights are bounded by one, so no
        conditioning-driven cancellation occurs (unlike forming S and then
        multiplying by the inverse).
        """
        qc = self.q.T @ c @ self.q
        qc = qc * (self.lam[:, None] / (self.lam[:, None] + self.lam[None, :]))
        return self.q @ qc @ self.q.T


def lyap_spd(g: SpdGram, c) -> np.ndarray:
    """Solve the symmetric Lyapunov equation S (G G^T) + (G G^T) S = c.

    Uses the cached eigendecomposition; if c is symmetric the solution is
    symmetric, if c is skew-symmetric the solution is skew-symmetric.
    """
    c = _square(c)
    if c.shape != g.mat.shape:
        raise ValueError("right-hand side shape %r does not match gram %r" % (c.shape, g.mat.shape))
    return g.lyap(c)


def polar_factor(a) -> np.ndarray:
    """Orthogonal factor uf(a) = a (a^T a)^{-1/2} of a full-column-rank matrix.

    Computed from the thin SVD a = U s V^T as U V^T, which is invariant under
    right-multiplication of `a` by any symmetric positive-definite matrix.
    Raises :class:`RankDeficiencyError` when the smallest singular value is
    at most 1e-12 times the largest.
    """
    a = np.asarray(a, dtype=np.float64)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0 or s[-1] <= 1e-12 * s[0]:
        raise RankDeficiencyError(
            "matrix is numerically rank deficient (singular values in [%.3e, %.3e])"
            % (s[-1], s[0])
        )
    return u @ vt


def pcg_linear(op, precond, b, tol=1e-10, max_iter=100):
    """Preconditioned conjugate gradient on a flat vector.

    Parameters
    ----------
    op, precond : callable
        Self-adjoint positive-definite operator and preconditioner on vectors
        like ``b``. ``precond`` may be None for plain CG.
    b : ndarray
    tol : float
        Relative tolerance on the true residual, ||b - op(x)|| <= tol * ||b||.
    max_iter : int

    Raises
    ------
    PcgBreakdownError
        On non-positive curvature, naming the iteration.
    PcgConvergenceError
        When max_iter is exhausted, carrying the final relative residual.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return x
    r = b.copy()
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        ap = op(p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise PcgBreakdownError(
                "non-positive curvature (p^T A p = %.3e) at iteration %d" % (pap, it)
            )
        alpha = rz / pap
        x = x + alpha * p
        r = r - alpha * ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x
        z = precond(r) if precond is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise PcgConvergenceError(
        "no convergence within %d iterations (relative residual %.3e)"
        % (max_iter, float(np.linalg.norm(r)) / bnorm),
        float(np.linalg.norm(r)) / bnorm,
    )


@dataclass(frozen=True)
class SkewTriple:
    """Skew-symmetric matrices (one per mode) parameterizing orbit directions."""

    o1: np.ndarray
    o2: np.ndarray
    o3: np.ndarray

    def __post_init__(self):
        for om in (self.o1, self.o2, self.o3):
            nrm = np.linalg.norm(om)
            if nrm > 0 and np.linalg.norm(om + om.T) > 1e-13 * nrm:
                raise ValueError("matrix is not skew-symmetric")

    def astuple(self):
        return (self.o1, self.o2, self.o3)


def _split_sizes(ranks):
    sizes = [r * r for r in ranks]
    offsets = np.cumsum([0] + sizes)
    return sizes, offsets


def _coupled_blocks(core, core_unfoldings, amats, diag_mats, os):
    """One application of the coupled operator to skew matrices ``os``.

    Block d is M_d O_d + O_d M_d - O_d A_d + [W]_d G_d^T with
    W = core x1 O1 + core x2 O2 + core x3 O3; the output is re-projected onto
    its skew part (exact in floating point) so iterates stay skew.
    """
    w = mode_product(core, os[0], 1)
    w = DenseTensor3(w.data + mode_product(core, os[1], 2).data)
    w = DenseTensor3(w.data + mode_product(core, os[2], 3).data)
    out = []
    for d in range(3):
        m = diag_mats[d]
        block = (
            m @ os[d] + os[d] @ m - os[d] @ amats[d]
            + unfold(w, d + 1) @ core_unfoldings[d].T
        )
        out.append((block - block.T) / 2.0)
    return out


def coupled_apply(x, skews: SkewTriple) -> SkewTriple:
    """Left-hand side of the coupled skew system at a Tucker point.

    With A_d the gram matrices this evaluates
    A_d O_d + O_d A_d - (cross-mode couplings) per block; it is self-adjoint
    and positive definite on skew triples under the trace inner product.
    """
    unfoldings = tuple(unfold(x.core, d) for d in (1, 2, 3))
    amats = [g.mat for g in x.grams]
    return SkewTriple(*_coupled_blocks(x.core, unfoldings, amats, amats, skews.astuple()))


def coupled_skew_solve(core, grams, diag, rhs, tol=1e-10, max_iter=100) -> SkewTriple:
    """Solve the coupled skew-symmetric system behind the horizontal projector.

    Finds skew matrices (O1, O2, O3) with

        M_d O_d + O_d M_d - O_d A_d + [W(O)]_d G_d^T = rhs_d,   d = 1, 2, 3,

    where A_d = G_d G_d^T, M_d is the diagonal coefficient from ``diag``
    (equal to A_d for the gram-scaled metric) and W(O) is the core tensor
    contracted with each O_d along its mode. For M_d = A_d this reduces to

        A_d O_d + O_d A_d - (cross-mode couplings) = rhs_d,

    the compatibility system of the vertical space. Solved by conjugate
    gradient on the stacked skew unknowns under the trace inner product with
    the decoupled per-block solve M_d O + O M_d = residual_d as the
    (Gauss-Seidel style) preconditioner. Skewness of all iterates is kept by
    construction: every operator application is re-projected onto the skew
    part, which is exact in floating point.
    """
    ranks = tuple(g.mat.shape[0] for g in grams)
    for om, r in zip(rhs, ranks):
        if om.shape != (r, r):
            raise ValueError("rhs block shape %r does not match rank %d" % (om.shape, r))
        nrm = np.linalg.norm(om)
        if nrm > 0 and np.linalg.norm(om + om.T) > 1e-12 * nrm:
            raise ValueError("rhs blocks must be skew-symmetric")
    sizes, offs = _split_sizes(ranks)

    def pack(ms):
        return np.concatenate([m.ravel() for m in ms])

    def unpack(v):
        return [
            v[offs[d]:offs[d + 1]].reshape(ranks[d], ranks[d]) for d in range(3)
        ]

    amats = [g.mat for g in grams]
    diag_mats = [g.mat for g in diag]
    unfoldings = tuple(unfold(core, d) for d in (1, 2, 3))

    def apply_op(v):
        return pack(_coupled_blocks(core, unfoldings, amats, diag_mats, unpack(v)))

    def apply_precond(v):
        o = unpack(v)
        return pack([diag[d].lyap(o[d]) for d in range(3)])

    rhs_vec = pack([(m - m.T) / 2.0 for m in rhs])
    sol = pcg_linear(apply_op, apply_precond, rhs_vec, tol=tol, max_iter=max_iter)
    o1, o2, o3 = unpack(sol)
    return SkewTriple((o1 - o1.T) / 2.0, (o2 - o2.T) / 2.0, (o3 - o3.T) / 2.0)


def coupled_lyap_pcg(x, rhs, tol=1e-10, max_iter=100) -> SkewTriple:
    """Coupled Lyapunov solve for the gram-scaled metric at a Tucker point.

    ``x`` provides the core tensor and the gram caches; ``rhs`` is a triple of
    skew-symmetric matrices. See :func:`coupled_skew_solve`; here the diagonal
    coefficients are the gram matrices themselves, so each block reads

        A_d O_d + O_d A_d - (couplings in the other two modes) = rhs_d.

    Defaults tol=1e-10 (relative, joint Frobenius norm over the three blocks)
    and max_iter=100; the system is tiny for the ranks used here, so a tight
    tolerance is cheap.
    """
    return coupled_skew_solve(x.core, x.grams, x.grams, rhs, tol=tol, max_iter=max_iter)
