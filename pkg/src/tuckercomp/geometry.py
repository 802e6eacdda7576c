"""Quotient geometry of the Tucker search space.

A point is a triple of orthonormal-column factors plus a core tensor.
Rotating every factor by an orthogonal matrix while counter-rotating the core
leaves the represented tensor unchanged, so the optimization really happens
on equivalence classes under that action. This module supplies the matrix
machinery for working with class representatives: the metric, the projector
onto the tangent space of the product manifold, the projector onto the
horizontal complement of the orbit directions, the polar retraction, vector
transport, and seeded random points and tangents.

Two metrics are supported through :class:`Geometry`:

* ``preconditioned`` (default): the factor blocks are paired through the
  gram matrices of the core unfoldings, <xi_d, eta_d (G_d G_d^T)>. This is a
  block-diagonal Hessian approximation of the fully observed square loss and
  is what gives the solvers their preconditioning effect.
* ``euclidean``: the plain inner product on all four blocks, kept as a
  baseline. The horizontal projector is re-derived for this pairing rather
  than obtained by substituting identity grams into the scaled formulas,
  since orbit directions still involve the core.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import SkewTriple, SpdGram, coupled_skew_solve, polar_factor, skew, sym
from .tensors import DenseTensor3, mode_product, unfold

__all__ = [
    "TuckerPoint",
    "AmbientVector",
    "TangentVector",
    "RotationTuple",
    "Geometry",
    "rotate_point",
    "rotate_tangent",
    "vertical_vector",
    "random_point",
    "random_ambient",
    "random_rotations",
    "as_rng",
]


def as_rng(seed):
    """Pass through a Generator, otherwise seed a fresh one."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _locked(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


class TuckerPoint:
    """A point of the total space: factors (u1, u2, u3) and core tensor.

    Factors must have orthonormal columns. The gram caches (eigendecomposed
    G_d G_d^T for the three core unfoldings) are built on construction and
    shared by every geometric operation; the point is immutable afterwards
    and safe to use concurrently.
    """

    __slots__ = ("u1", "u2", "u3", "core", "grams", "_unfoldings")

    def __init__(self, u1, u2, u3, core):
        u1 = _locked(u1)
        u2 = _locked(u2)
        u3 = _locked(u3)
        if not isinstance(core, DenseTensor3):
            core = DenseTensor3(core)
        for d, u in enumerate((u1, u2, u3), start=1):
            if u.ndim != 2 or u.shape[1] != core.dims[d - 1]:
                raise ValueError(
                    "factor %d has shape %r, incompatible with core dims %r"
                    % (d, u.shape, core.dims)
                )
            r = u.shape[1]
            defect = np.linalg.norm(u.T @ u - np.eye(r))
            if defect > 1e-8 * max(1.0, np.sqrt(r)):
                raise ValueError(
                    "factor %d does not have orthonormal columns (defect %.3e)"
                    % (d, defect)
                )
        self.u1, self.u2, self.u3 = u1, u2, u3
        self.core = core
        self._unfoldings = tuple(unfold(core, d) for d in (1, 2, 3))
        self.grams = tuple(
            SpdGram(d + 1, g @ g.T) for d, g in enumerate(self._unfoldings)
        )

    @property
    def factors(self):
        return (self.u1, self.u2, self.u3)

    @property
    def dims(self):
        return (self.u1.shape[0], self.u2.shape[0], self.u3.shape[0])

    @property
    def rank(self):
        return self.core.dims

    def core_unfolding(self, mode):
        return self._unfoldings[mode - 1]

    def reconstruct(self) -> DenseTensor3:
        """Dense tensor core x1 u1 x2 u2 x3 u3 (small instances only)."""
        out = mode_product(self.core, self.u1, 1)
        out = mode_product(out, self.u2, 2)
        return mode_product(out, self.u3, 3)

    def __repr__(self):
        return "TuckerPoint(dims=%r, rank=%r)" % (self.dims, self.rank)


@dataclass(frozen=True)
class AmbientVector:
    """Unconstrained blocks (zu1, zu2, zu3, zcore) matching a point's shapes."""

    zu1: np.ndarray
    zu2: np.ndarray
    zu3: np.ndarray
    zcore: DenseTensor3

    def __post_init__(self):
        for name in ("zu1", "zu2", "zu3"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not isinstance(self.zcore, DenseTensor3):
            object.__setattr__(self, "zcore", DenseTensor3(self.zcore))

    @property
    def factors(self):
        return (self.zu1, self.zu2, self.zu3)

    def block(self, d):
        return self.factors[d - 1]

    def scaled(self, a):
        return type(self)(
            a * self.zu1, a * self.zu2, a * self.zu3, DenseTensor3(a * self.zcore.data)
        )

    def plus(self, other, scale=1.0):
        """self + scale * other, keeping the type of self."""
        return type(self)(
            self.zu1 + scale * other.zu1,
            self.zu2 + scale * other.zu2,
            self.zu3 + scale * other.zu3,
            DenseTensor3(self.zcore.data + scale * other.zcore.data),
        )

    def norm(self):
        """Plain Frobenius norm over all four blocks (not the metric norm)."""
        return float(
            np.sqrt(
                np.linalg.norm(self.zu1) ** 2
                + np.linalg.norm(self.zu2) ** 2
                + np.linalg.norm(self.zu3) ** 2
                + self.zcore.norm() ** 2
            )
        )


class TangentVector(AmbientVector):
    """Ambient blocks satisfying u_d^T zu_d + zu_d^T u_d = 0 at a base point.

    The constraint is a contract of the producing operation, not re-checked
    on every arithmetic combination (linear combinations at a common base
    point preserve it).
    """


@dataclass(frozen=True)
class RotationTuple:
    """Orthogonal matrices (o1, o2, o3), one per mode, acting on a point."""

    o1: np.ndarray
    o2: np.ndarray
    o3: np.ndarray

    def __post_init__(self):
        for om in (self.o1, self.o2, self.o3):
            if om.ndim != 2 or om.shape[0] != om.shape[1]:
                raise ValueError("rotations must be square")
            if np.linalg.norm(om.T @ om - np.eye(om.shape[0])) > 1e-10:
                raise ValueError("rotation block is not orthogonal")

    def astuple(self):
        return (self.o1, self.o2, self.o3)

    def transposed(self):
        return RotationTuple(self.o1.T, self.o2.T, self.o3.T)


def _counter_rotated_core(core, o: RotationTuple) -> DenseTensor3:
    out = mode_product(core, o.o1.T, 1)
    out = mode_product(out, o.o2.T, 2)
    return mode_product(out, o.o3.T, 3)


def rotate_point(x: TuckerPoint, o: RotationTuple) -> TuckerPoint:
    """Move along the orbit: (u_d o_d, core counter-rotated by the o_d)."""
    return TuckerPoint(
        x.u1 @ o.o1, x.u2 @ o.o2, x.u3 @ o.o3, _counter_rotated_core(x.core, o)
    )


def rotate_tangent(xi, o: RotationTuple):
    """Carry tangent (or ambient) blocks along the orbit rotation."""
    return type(xi)(
        xi.zu1 @ o.o1, xi.zu2 @ o.o2, xi.zu3 @ o.o3, _counter_rotated_core(xi.zcore, o)
    )


def _orbit_core_direction(core: DenseTensor3, skews: SkewTriple) -> DenseTensor3:
    out = mode_product(core, skews.o1, 1)
    out = DenseTensor3(out.data + mode_product(core, skews.o2, 2).data)
    return DenseTensor3(out.data + mode_product(core, skews.o3, 3).data)


def vertical_vector(x: TuckerPoint, skews: SkewTriple) -> TangentVector:
    """Tangent direction along the orbit parameterized by a skew triple."""
    w = _orbit_core_direction(x.core, skews)
    return TangentVector(
        x.u1 @ skews.o1,
        x.u2 @ skews.o2,
        x.u3 @ skews.o3,
        DenseTensor3(-w.data),
    )


def random_point(dims, rank, seed=None) -> TuckerPoint:
    """Random point: orthonormal factors of Gaussian matrices, Gaussian core."""
    rng = as_rng(seed)
    try:
        rank = rank.astuple()
    except AttributeError:
        rank = tuple(rank)
    us = [polar_factor(rng.standard_normal((n, r))) for n, r in zip(dims, rank)]
    core = DenseTensor3(rng.standard_normal(rank))
    return TuckerPoint(us[0], us[1], us[2], core)


def random_ambient(x: TuckerPoint, seed=None) -> AmbientVector:
    rng = as_rng(seed)
    return AmbientVector(
        rng.standard_normal(x.u1.shape),
        rng.standard_normal(x.u2.shape),
        rng.standard_normal(x.u3.shape),
        DenseTensor3(rng.standard_normal(x.rank)),
    )


def random_rotations(rank, seed=None) -> RotationTuple:
    rng = as_rng(seed)
    mats = []
    for r in rank:
        q, _ = np.linalg.qr(rng.standard_normal((r, r)))
        mats.append(q)
    return RotationTuple(*mats)


class Geometry:
    """Geometric operations for one choice of metric.

    Parameters
    ----------
    metric_mode : {"preconditioned", "euclidean"}
        Gram-scaled pairing of the factor blocks, or the plain one.
    coupled_tol, coupled_max_iter :
        Stopping controls of the inner conjugate gradient used by the
        horizontal projector.
    """

    def __init__(self, metric_mode="preconditioned", coupled_tol=1e-10, coupled_max_iter=100):
        if metric_mode not in ("preconditioned", "euclidean"):
            raise ValueError("metric_mode must be 'preconditioned' or 'euclidean'")
        self.metric_mode = metric_mode
        self.preconditioned = metric_mode == "preconditioned"
        self.coupled_tol = coupled_tol
        self.coupled_max_iter = coupled_max_iter

    # -- metric ---------------------------------------------------------

    def metric(self, x: TuckerPoint, v, w) -> float:
        """Inner product of two block vectors at x.

        Gram-scaled mode pairs the factor blocks through G_d G_d^T; the core
        blocks always pair plainly. Accepts tangent or ambient vectors.
        """
        total = float(np.vdot(v.zcore.data, w.zcore.data))
        for d in range(3):
            vb, wb = v.factors[d], w.factors[d]
            if self.preconditioned:
                total += float(np.vdot(vb, wb @ x.grams[d].mat))
            else:
                total += float(np.vdot(vb, wb))
        return total

    def norm(self, x, v) -> float:
        return float(np.sqrt(max(self.metric(x, v, v), 0.0)))

    # -- projectors ------------------------------------------------------

    def project_tangent(self, x: TuckerPoint, y) -> TangentVector:
        """Project ambient blocks onto the tangent space at x.

        Removes the metric-normal component u_d S_d A_d^{-1} per factor
        (A_d the gram matrix, identity in euclidean mode), where S_d solves
        S A + A S = A (y^T u + u^T y) A. The core block passes through.
        """
        new = []
        for d in range(3):
            u = x.factors[d]
            yb = y.factors[d]
            m = sym(u.T @ yb) * 2.0  # y^T u + u^T y
            if self.preconditioned:
                new.append(yb - u @ x.grams[d].lyap_scaled(m))
            else:
                new.append(yb - u @ (m / 2.0))
        return TangentVector(new[0], new[1], new[2], y.zcore)

    def _horizontal_skews(self, x: TuckerPoint, eta) -> SkewTriple:
        rhs = []
        for d in range(3):
            u = x.factors[d]
            gd = x.core_unfolding(d + 1)
            etg = unfold(eta.zcore, d + 1)
            if self.preconditioned:
                rhs.append(skew(u.T @ eta.factors[d] @ x.grams[d].mat) + skew(gd @ etg.T))
            else:
                rhs.append(skew(u.T @ eta.factors[d]) + skew(gd @ etg.T))
        if self.preconditioned:
            diag = x.grams
        else:
            diag = tuple(g.affine(0.5, 0.5) for g in x.grams)
        return coupled_skew_solve(
            x.core, x.grams, diag, rhs, tol=self.coupled_tol, max_iter=self.coupled_max_iter
        )

    def project_horizontal(self, x: TuckerPoint, eta: TangentVector) -> TangentVector:
        """Remove the orbit component of a tangent vector.

        Solves the coupled skew system for (O1, O2, O3) and subtracts the
        vertical direction they generate; the result satisfies the
        horizontality condition A_d zu_d^T u_d + z_{G_d} G_d^T symmetric.
        Expects a tangent input; ambient blocks must go through
        :meth:`project_tangent` first.
        """
        skews = self._horizontal_skews(x, eta)
        w = _orbit_core_direction(x.core, skews)
        return TangentVector(
            eta.zu1 - x.u1 @ skews.o1,
            eta.zu2 - x.u2 @ skews.o2,
            eta.zu3 - x.u3 @ skews.o3,
            DenseTensor3(eta.zcore.data + w.data),
        )

    # -- retraction and transport ----------------------------------------

    def retract(self, x: TuckerPoint, xi, step=1.0) -> TuckerPoint:
        """Move from x along xi: polar factor per factor block, add the core.

        First-order rigid: retract(x, xi, t) = x + t*xi + O(t^2) blockwise.
        The input is expected to be horizontal; this is a contract of the
        caller, not enforced here.
        """
        return TuckerPoint(
            polar_factor(x.u1 + step * xi.zu1),
            polar_factor(x.u2 + step * xi.zu2),
            polar_factor(x.u3 + step * xi.zu3),
            DenseTensor3(x.core.data + step * xi.zcore.data),
        )

    def transport(self, x: TuckerPoint, eta, to: TuckerPoint, xi) -> TangentVector:
        """Carry xi from x to `to` = retract(x, eta): project onto the new
        tangent space, then onto the new horizontal space.

        The destination is passed explicitly because callers already hold the
        retracted iterate; ``eta`` documents the move and is not used.
        """
        return self.project_horizontal(to, self.project_tangent(to, xi))

    # -- randomness -------------------------------------------------------

    def random_tangent(self, x: TuckerPoint, seed=None) -> TangentVector:
        """Random horizontal tangent vector of unit metric norm."""
        t = self.project_horizontal(x, self.project_tangent(x, random_ambient(x, seed)))
        nrm = self.norm(x, t)
        if nrm == 0.0:
            raise ValueError("degenerate random tangent")
        return t.scaled(1.0 / nrm)
