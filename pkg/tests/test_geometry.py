import numpy as np
import pytest

from tuckercomp.geometry import (
    AmbientVector,
    Geometry,
    RotationTuple,
    TuckerPoint,
    random_ambient,
    random_point,
    random_rotations,
    rotate_point,
    rotate_tangent,
    vertical_vector,
)
from tuckercomp.linalg import SkewTriple, skew
from tuckercomp.tensors import DenseTensor3, unfold

DIMS = (6, 5, 4)
RANK = (3, 2, 2)


@pytest.fixture(params=["preconditioned", "euclidean"])
def geom(request):
    return Geometry(request.param)


def gram_mats(geom, x):
    if geom.preconditioned:
        return [g.mat for g in x.grams]
    return [np.eye(r) for r in x.rank]


def metric_trace_oracle(geom, x, v, w):
    """Term-by-term trace formula for the inner product."""
    total = np.trace(unfold(v.zcore, 1) @ unfold(w.zcore, 1).T)
    for d, a in enumerate(gram_mats(geom, x)):
        total += np.trace(v.factors[d].T @ w.factors[d] @ a)
    return float(total)


class TestTuckerPoint:
    def test_random_point_deterministic(self):
        a = random_point(DIMS, RANK, seed=5)
        b = random_point(DIMS, RANK, seed=5)
        for u, v in zip(a.factors, b.factors):
            np.testing.assert_array_equal(u, v)
        assert a.core == b.core

    def test_invariants_across_seeds(self):
        for seed in range(100):
            x = random_point(DIMS, RANK, seed=seed)
            for d, u in enumerate(x.factors):
                assert np.linalg.norm(u.T @ u - np.eye(x.rank[d])) <= 1e-10
            for d, g in enumerate(x.grams):
                gd = x.core_unfolding(d + 1)
                ref = gd @ gd.T
                assert np.linalg.norm(g.mat - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_non_orthonormal_factors_rejected(self, rng):
        with pytest.raises(ValueError, match="orthonormal"):
            TuckerPoint(
                rng.standard_normal((6, 3)),
                np.linalg.qr(rng.standard_normal((5, 2)))[0],
                np.linalg.qr(rng.standard_normal((4, 2)))[0],
                DenseTensor3(rng.standard_normal(RANK)),
            )

    def test_immutable(self, rng):
        x = random_point(DIMS, RANK, rng)
        with pytest.raises(ValueError):
            x.u1[0, 0] = 1.0
        with pytest.raises(ValueError):
            x.core.data[0, 0, 0] = 1.0
        v = random_ambient(x, rng)
        with pytest.raises(ValueError):
            v.zu1[0, 0] = 1.0


class TestMetric:
    def test_zero_vector(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        z = random_ambient(x, rng).scaled(0.0)
        assert geom.metric(x, z, z) == 0.0

    def test_identity_gram_reduces_to_euclidean(self, rng):
        # superdiagonal core of ones makes every gram matrix the identity
        r = (2, 2, 2)
        data = np.zeros(r)
        data[np.arange(2), np.arange(2), np.arange(2)] = 1.0
        us = [np.linalg.qr(rng.standard_normal((n, 2)))[0] for n in (6, 5, 4)]
        x = TuckerPoint(us[0], us[1], us[2], DenseTensor3(data))
        v = random_ambient(x, rng)
        w = random_ambient(x, rng)
        plain = sum(np.vdot(a, b) for a, b in zip(v.factors, w.factors))
        plain += np.vdot(v.zcore.data, w.zcore.data)
        got = Geometry("preconditioned").metric(x, v, w)
        assert abs(got - plain) <= 1e-12 * abs(plain)

    def test_trace_formula_oracle(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        v = random_ambient(x, rng)
        w = random_ambient(x, rng)
        got = geom.metric(x, v, w)
        want = metric_trace_oracle(geom, x, v, w)
        assert abs(got - want) <= 1e-12 * max(1.0, abs(want))

    def test_positive_definite(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        v = geom.random_tangent(x, rng)
        assert geom.metric(x, v, v) > 0


class TestRotations:
    def test_identity_action(self, rng):
        x = random_point(DIMS, RANK, rng)
        o = RotationTuple(*[np.eye(r) for r in RANK])
        y = rotate_point(x, o)
        for u, v in zip(x.factors, y.factors):
            np.testing.assert_allclose(u, v, atol=1e-15)
        np.testing.assert_allclose(x.core.data, y.core.data, atol=1e-15)

    def test_group_inverse(self, rng):
        x = random_point(DIMS, RANK, rng)
        o = random_rotations(RANK, rng)
        y = rotate_point(rotate_point(x, o), o.transposed())
        for u, v in zip(x.factors, y.factors):
            np.testing.assert_allclose(u, v, atol=1e-12)
        np.testing.assert_allclose(x.core.data, y.core.data, atol=1e-12)

    def test_reconstruction_invariant(self, rng):
        x = random_point((5, 4, 3), (2, 2, 2), rng)
        o = random_rotations((2, 2, 2), rng)
        before = x.reconstruct().data
        after = rotate_point(x, o).reconstruct().data
        assert np.linalg.norm(before - after) <= 1e-12 * np.linalg.norm(before)

    def test_non_orthogonal_rejected(self, rng):
        with pytest.raises(ValueError, match="orthogonal"):
            RotationTuple(np.eye(3) * 1.5, np.eye(2), np.eye(2))

    def test_metric_invariance(self, rng):
        # the gram-scaled inner product does not depend on the representative
        geom = Geometry("preconditioned")
        for trial in range(20):
            x = random_point(DIMS, RANK, seed=trial)
            o = random_rotations(RANK, seed=trial + 1000)
            xi = geom.random_tangent(x, seed=trial + 2000)
            eta = geom.random_tangent(x, seed=trial + 3000)
            m0 = geom.metric(x, xi, eta)
            m1 = geom.metric(
                rotate_point(x, o), rotate_tangent(xi, o), rotate_tangent(eta, o)
            )
            assert abs(m0 - m1) <= 1e-12 * max(abs(m0), 1e-6)


class TestProjectors:
    def test_tangency_constraint(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        t = geom.project_tangent(x, random_ambient(x, rng))
        for d, u in enumerate(x.factors):
            c = u.T @ t.factors[d] + t.factors[d].T @ u
            assert np.linalg.norm(c) <= 1e-10

    def test_tangent_projector_idempotent(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        y = random_ambient(x, rng)
        t = geom.project_tangent(x, y)
        t2 = geom.project_tangent(x, t)
        assert t.plus(t2, -1.0).norm() <= 1e-10 * max(y.norm(), 1.0)

    def test_pure_normal_component_removed(self, rng):
        # u1 * symmetric * gram^{-1} lies in the normal space of block 1
        geom = Geometry("preconditioned")
        x = random_point(DIMS, RANK, rng)
        s = rng.standard_normal((RANK[0], RANK[0]))
        s = (s + s.T) / 2.0
        block1 = x.u1 @ s @ x.grams[0].inv
        zero = np.zeros
        y = AmbientVector(block1, zero((5, 2)), zero((4, 2)), DenseTensor3(zero(RANK)))
        t = geom.project_tangent(x, y)
        assert np.linalg.norm(t.zu1) <= 1e-10 * np.linalg.norm(block1)

    def test_removed_component_metric_orthogonal(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        y = random_ambient(x, rng)
        t = geom.project_tangent(x, y)
        removed = y.plus(t, -1.0)
        for k in range(20):
            probe = geom.project_tangent(x, random_ambient(x, seed=k))
            val = geom.metric(x, removed, probe)
            assert abs(val) <= 1e-10 * max(1.0, y.norm() * probe.norm())

    def test_horizontal_projector_idempotent(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        eta = geom.project_tangent(x, random_ambient(x, rng))
        h = geom.project_horizontal(x, eta)
        h2 = geom.project_horizontal(x, h)
        assert h.plus(h2, -1.0).norm() <= 1e-9 * max(eta.norm(), 1.0)

    def test_composed_projector_idempotent_on_ambient(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        y = random_ambient(x, rng)
        h = geom.project_horizontal(x, geom.project_tangent(x, y))
        h2 = geom.project_horizontal(x, geom.project_tangent(x, h))
        assert h.plus(h2, -1.0).norm() <= 1e-10 * max(y.norm(), 1.0)

    def test_vertical_vectors_are_killed(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        sk = SkewTriple(*[skew(rng.standard_normal((r, r))) for r in RANK])
        v = vertical_vector(x, sk)
        assert geom.project_horizontal(x, v).norm() <= 1e-9 * max(v.norm(), 1.0)

    def test_horizontal_orthogonal_to_verticals(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        eta = geom.project_tangent(x, random_ambient(x, rng))
        h = geom.project_horizontal(x, eta)
        for k in range(20):
            r2 = np.random.default_rng(k)
            sk = SkewTriple(*[skew(r2.standard_normal((r, r))) for r in RANK])
            v = vertical_vector(x, sk)
            assert abs(geom.metric(x, h, v)) <= 1e-9 * max(1.0, h.norm() * v.norm())

    def test_horizontality_matrix_condition(self, geom, rng):
        # A_d zu_d^T u_d + z_{G_d} G_d^T must be symmetric for each mode
        x = random_point(DIMS, RANK, rng)
        h = geom.project_horizontal(x, geom.project_tangent(x, random_ambient(x, rng)))
        for d, a in enumerate(gram_mats(geom, x)):
            m = a @ h.factors[d].T @ x.factors[d] + unfold(h.zcore, d + 1) @ x.core_unfolding(d + 1).T
            assert np.linalg.norm(m - m.T) <= 1e-9 * max(1.0, np.linalg.norm(m))

    def test_tangent_space_decomposition(self, geom, rng):
        # eta = horizontal + vertical with the two parts metric-orthogonal
        x = random_point(DIMS, RANK, rng)
        eta = geom.project_tangent(x, random_ambient(x, rng))
        h = geom.project_horizontal(x, eta)
        v = eta.plus(h, -1.0)
        # recover the skew parameters from the factor blocks and rebuild
        sk = SkewTriple(*[
            skew(x.factors[d].T @ v.factors[d]) for d in range(3)
        ])
        rebuilt = vertical_vector(x, sk)
        assert v.plus(rebuilt, -1.0).norm() <= 1e-9 * max(eta.norm(), 1.0)
        g = geom.metric(x, h, v)
        assert abs(g) <= 1e-9 * geom.metric(x, eta, eta)

    def test_projector_equivariance(self, rng):
        geom = Geometry("preconditioned")
        x = random_point(DIMS, RANK, rng)
        eta = geom.project_tangent(x, random_ambient(x, rng))
        o = random_rotations(RANK, rng)
        lhs = rotate_tangent(geom.project_horizontal(x, eta), o)
        rhs = geom.project_horizontal(rotate_point(x, o), rotate_tangent(eta, o))
        assert lhs.plus(rhs, -1.0).norm() <= 1e-9 * max(eta.norm(), 1.0)


class TestRetraction:
    def test_zero_step_returns_point(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        xi = geom.random_tangent(x, rng)
        y = geom.retract(x, xi, 0.0)
        for u, v in zip(x.factors, y.factors):
            np.testing.assert_allclose(u, v, atol=1e-13)
        np.testing.assert_allclose(x.core.data, y.core.data, atol=1e-15)

    def test_zero_factor_blocks_move_core_only(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        zero = np.zeros
        xi = AmbientVector(zero((6, 3)), zero((5, 2)), zero((4, 2)),
                           DenseTensor3(rng.standard_normal(RANK)))
        y = geom.retract(x, xi, 0.7)
        for u, v in zip(x.factors, y.factors):
            np.testing.assert_allclose(u, v, atol=1e-13)
        np.testing.assert_allclose(y.core.data, x.core.data + 0.7 * xi.zcore.data, atol=1e-15)

    def _deviation(self, geom, x, xi, t):
        y = geom.retract(x, xi, t)
        dev = 0.0
        for d in range(3):
            dev += np.linalg.norm(y.factors[d] - (x.factors[d] + t * xi.factors[d])) ** 2
        dev += np.linalg.norm(y.core.data - (x.core.data + t * xi.zcore.data)) ** 2
        return np.sqrt(dev)

    def test_first_order_slope(self, geom, rng):
        # (retract(x, xi, h) - x)/h -> xi with error shrinking like h
        x = random_point(DIMS, RANK, rng)
        xi = geom.random_tangent(x, rng)
        errs = []
        for h in (1e-3, 1e-4, 1e-5):
            y = geom.retract(x, xi, h)
            err = 0.0
            for d in range(3):
                err += np.linalg.norm((y.factors[d] - x.factors[d]) / h - xi.factors[d]) ** 2
            err += np.linalg.norm((y.core.data - x.core.data) / h - xi.zcore.data) ** 2
            errs.append(np.sqrt(err))
        assert 5.0 <= errs[0] / errs[1] <= 20.0
        assert 5.0 <= errs[1] / errs[2] <= 20.0

    def test_rigidity_halving_ratio(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        xi = geom.random_tangent(x, rng)
        for t in (1e-2, 1e-3):
            ratio = self._deviation(geom, x, xi, t) / self._deviation(geom, x, xi, t / 2)
            assert 3.5 <= ratio <= 4.5


class TestTransport:
    def test_fixed_point_at_same_base(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        xi = geom.random_tangent(x, rng)
        zero = geom.random_tangent(x, rng).scaled(0.0)
        moved = geom.transport(x, zero, x, xi)
        assert moved.plus(xi, -1.0).norm() <= 1e-9

    def test_zero_vector(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        eta = geom.random_tangent(x, rng)
        to = geom.retract(x, eta, 1.0)
        zero = eta.scaled(0.0)
        assert geom.transport(x, eta, to, zero).norm() == 0.0

    def test_output_horizontal_at_destination(self, geom, rng):
        x = random_point(DIMS, RANK, rng)
        eta = geom.random_tangent(x, rng)
        xi = geom.random_tangent(x, rng)
        to = geom.retract(x, eta, 1.0)
        moved = geom.transport(x, eta, to, xi)
        for d, a in enumerate(gram_mats(geom, to)):
            m = a @ moved.factors[d].T @ to.factors[d] + unfold(moved.zcore, d + 1) @ to.core_unfolding(d + 1).T
            assert np.linalg.norm(m - m.T) <= 1e-9 * max(1.0, np.linalg.norm(m))


class TestRandomTangent:
    def test_unit_norm(self, geom):
        x = random_point(DIMS, RANK, seed=3)
        t = geom.random_tangent(x, seed=4)
        assert abs(geom.norm(x, t) - 1.0) <= 1e-12

    def test_deterministic(self, geom):
        x = random_point(DIMS, RANK, seed=3)
        a = geom.random_tangent(x, seed=9)
        b = geom.random_tangent(x, seed=9)
        assert a.plus(b, -1.0).norm() == 0.0
