import numpy as np
import pytest

from tuckercomp.geometry import random_point
from tuckercomp.linalg import (
    PcgBreakdownError,
    PcgConvergenceError,
    RankDeficiencyError,
    SkewTriple,
    SpdGram,
    coupled_apply,
    coupled_lyap_pcg,
    lyap_spd,
    pcg_linear,
    polar_factor,
    skew,
    sym,
)
from tuckercomp.tensors import unfold


def random_spd(rng, r):
    a = rng.standard_normal((r, r))
    return a @ a.T + r * np.eye(r)


def lyap_kron_oracle(m, c):
    """Solve S m + m S = c as an r^2 x r^2 linear system."""
    r = m.shape[0]
    eye = np.eye(r)
    big = np.kron(m.T, eye) + np.kron(eye, m)
    return np.linalg.solve(big, c.ravel(order="F")).reshape((r, r), order="F")


def random_skew_triple(rng, ranks):
    return SkewTriple(*[skew(rng.standard_normal((r, r))) for r in ranks])


def skew_basis(r):
    out = []
    for i in range(r):
        for j in range(i + 1, r):
            m = np.zeros((r, r))
            m[i, j] = 1.0
            m[j, i] = -1.0
            out.append(m)
    return out


class TestSymSkew:
    def test_skew_of_symmetric_is_zero(self, rng):
        a = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(skew(a + a.T), np.zeros((4, 4)))

    def test_sym_of_identity(self):
        np.testing.assert_array_equal(sym(np.eye(3)), np.eye(3))

    def test_reconstruction_to_machine_precision(self, rng):
        # one rounding each in (m+m^T)/2 and (m-m^T)/2, so at most a few ulp
        m = rng.standard_normal((4, 4))
        err = np.abs(sym(m) + skew(m) - m)
        assert (err <= 4 * np.finfo(float).eps * np.maximum(np.abs(m), 1.0)).all()

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            sym(np.zeros((2, 3)))


class TestSpdGram:
    def test_eig_reconstruction(self, rng):
        m = random_spd(rng, 6)
        g = SpdGram(1, m)
        rebuilt = (g.q * g.lam) @ g.q.T
        assert np.linalg.norm(rebuilt - m) <= 1e-12 * np.linalg.norm(m)
        assert (g.lam > 0).all()

    def test_rank_deficient_rejected(self):
        with pytest.raises(RankDeficiencyError):
            SpdGram(2, np.diag([1.0, 1e-30, 2.0]))

    def test_asymmetric_rejected(self, rng):
        with pytest.raises(ValueError):
            SpdGram(1, rng.standard_normal((3, 3)))


class TestLyapSpd:
    def test_identity_coefficient(self, rng):
        c = rng.standard_normal((4, 4))
        g = SpdGram(1, np.eye(4))
        np.testing.assert_allclose(lyap_spd(g, c), c / 2.0, atol=1e-15)

    def test_zero_rhs(self, rng):
        g = SpdGram(1, random_spd(rng, 3))
        np.testing.assert_array_equal(lyap_spd(g, np.zeros((3, 3))), np.zeros((3, 3)))

    def test_matches_kron_oracle(self, rng):
        m = random_spd(rng, 5)
        c = sym(rng.standard_normal((5, 5)))
        s = lyap_spd(SpdGram(1, m), c)
        np.testing.assert_allclose(s, lyap_kron_oracle(m, c), atol=1e-11)
        resid = np.linalg.norm(s @ m + m @ s - c)
        assert resid <= 1e-10 * np.linalg.norm(c)
        assert np.linalg.norm(s - s.T) <= 1e-12 * np.linalg.norm(s)

    def test_skew_rhs_gives_skew_solution(self, rng):
        m = random_spd(rng, 4)
        c = skew(rng.standard_normal((4, 4)))
        s = lyap_spd(SpdGram(1, m), c)
        assert np.linalg.norm(s + s.T) <= 1e-13 * np.linalg.norm(s)

    def test_residual_sweep_1000(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            r = int(rng.integers(1, 11))
            m = random_spd(rng, r)
            c = sym(rng.standard_normal((r, r)))
            s = lyap_spd(SpdGram(1, m), c)
            resid = np.linalg.norm(s @ m + m @ s - c)
            assert resid <= 1e-10 * max(np.linalg.norm(c), 1e-300)

    def test_size_mismatch(self, rng):
        g = SpdGram(1, random_spd(rng, 3))
        with pytest.raises(ValueError):
            lyap_spd(g, np.zeros((4, 4)))


class TestPolarFactor:
    def test_orthonormal_fixed_point(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
        np.testing.assert_allclose(polar_factor(q), q, atol=1e-13)

    def test_spd_right_factor_invariance(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 3)))
        d = np.diag([2.0, 0.5, 3.0])
        np.testing.assert_allclose(polar_factor(q @ d), q, atol=1e-12)

    def test_matrix_function_oracle(self, rng):
        a = rng.standard_normal((7, 3))
        lam, v = np.linalg.eigh(a.T @ a)
        inv_sqrt = (v / np.sqrt(lam)) @ v.T
        np.testing.assert_allclose(polar_factor(a), a @ inv_sqrt, atol=1e-11)

    def test_orthonormality_and_factorization(self, rng):
        a = rng.standard_normal((9, 4))
        q = polar_factor(a)
        assert np.linalg.norm(q.T @ q - np.eye(4)) <= 1e-12
        lam, v = np.linalg.eigh(a.T @ a)
        sqrt = (v * np.sqrt(lam)) @ v.T
        assert np.linalg.norm(a - q @ sqrt) <= 1e-10 * np.linalg.norm(a)

    def test_rank_deficient_rejected(self, rng):
        a = rng.standard_normal((5, 2))
        a = np.hstack([a, a[:, :1]])  # exactly dependent column
        with pytest.raises(RankDeficiencyError):
            polar_factor(a)


class TestPcgLinear:
    def test_identity_converges_in_one_iteration(self, rng):
        calls = []

        def op(v):
            calls.append(1)
            return v

        b = rng.standard_normal(8)
        x = pcg_linear(op, None, b, tol=1e-12)
        np.testing.assert_allclose(x, b, atol=1e-14)
        assert len(calls) == 1

    def test_zero_rhs(self):
        x = pcg_linear(lambda v: v, None, np.zeros(5))
        np.testing.assert_array_equal(x, np.zeros(5))

    def test_random_spd_matches_direct(self, rng):
        a = random_spd(rng, 10)
        b = rng.standard_normal(10)
        x = pcg_linear(lambda v: a @ v, None, b, tol=1e-12, max_iter=50)
        np.testing.assert_allclose(x, np.linalg.solve(a, b), atol=1e-8)

    def test_preconditioner_accelerates(self, rng):
        d = np.linspace(1, 1e4, 30)
        a = np.diag(d)
        b = rng.standard_normal(30)
        with pytest.raises(PcgConvergenceError):
            pcg_linear(lambda v: a @ v, None, b, tol=1e-12, max_iter=8)
        x = pcg_linear(lambda v: a @ v, lambda v: v / d, b, tol=1e-12, max_iter=8)
        np.testing.assert_allclose(x, b / d, atol=1e-10)

    def test_breakdown_names_iteration(self, rng):
        a = -np.eye(4)
        with pytest.raises(PcgBreakdownError, match="iteration 1"):
            pcg_linear(lambda v: a @ v, None, np.ones(4))

    def test_nonconvergence_carries_residual(self, rng):
        a = random_spd(rng, 20)
        err = None
        try:
            pcg_linear(lambda v: a @ v, None, rng.standard_normal(20), tol=1e-14, max_iter=2)
        except PcgConvergenceError as exc:
            err = exc
        assert err is not None and err.relative_residual > 0


class TestCoupledLyap:
    def test_zero_rhs(self, rng):
        x = random_point((6, 5, 4), (3, 2, 2), rng)
        out = coupled_lyap_pcg(x, [np.zeros((3, 3)), np.zeros((2, 2)), np.zeros((2, 2))])
        for o in out.astuple():
            np.testing.assert_array_equal(o, np.zeros_like(o))

    def test_rank_one_is_trivial(self, rng):
        x = random_point((5, 4, 3), (1, 1, 1), rng)
        out = coupled_lyap_pcg(x, [np.zeros((1, 1))] * 3)
        for o in out.astuple():
            assert o.shape == (1, 1) and o[0, 0] == 0.0

    def test_matches_dense_skew_basis_oracle(self, rng):
        x = random_point((7, 6, 5), (3, 3, 3), rng)
        ranks = x.rank
        rhs = random_skew_triple(rng, ranks).astuple()
        out = coupled_lyap_pcg(x, rhs, tol=1e-12)

        # dense solve over the skew basis
        bases = [skew_basis(r) for r in ranks]
        nb = sum(len(b) for b in bases)

        def to_vec(triple):
            coeffs = []
            for d in range(3):
                for b in bases[d]:
                    coeffs.append(np.vdot(b, triple[d]) / 2.0)
            return np.array(coeffs)

        def from_vec(v):
            out_ = []
            k = 0
            for d in range(3):
                m = np.zeros((ranks[d], ranks[d]))
                for b in bases[d]:
                    m = m + v[k] * b
                    k += 1
                out_.append(m)
            return out_

        mat = np.zeros((nb, nb))
        eye = np.eye(nb)
        for j in range(nb):
            triple = from_vec(eye[j])
            mat[:, j] = to_vec(coupled_apply(x, SkewTriple(*triple)).astuple())
        ref = from_vec(np.linalg.solve(mat, to_vec(rhs)))
        for got, want in zip(out.astuple(), ref):
            np.testing.assert_allclose(got, want, atol=1e-9)

        # per-block residual of the coupled equations, built with explicit
        # Kronecker products (independent of the operator implementation)
        g1, g2, g3 = (unfold(x.core, d) for d in (1, 2, 3))
        a = [g.mat for g in x.grams]
        o1, o2, o3 = out.astuple()
        r1, r2, r3 = ranks
        lhs1 = a[0] @ o1 + o1 @ a[0] - g1 @ np.kron(np.eye(r3), o2) @ g1.T - g1 @ np.kron(o3, np.eye(r2)) @ g1.T
        lhs2 = a[1] @ o2 + o2 @ a[1] - g2 @ np.kron(np.eye(r3), o1) @ g2.T - g2 @ np.kron(o3, np.eye(r1)) @ g2.T
        lhs3 = a[2] @ o3 + o3 @ a[2] - g3 @ np.kron(np.eye(r2), o1) @ g3.T - g3 @ np.kron(o2, np.eye(r1)) @ g3.T
        joint = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rhs))
        for lhs, want in zip((lhs1, lhs2, lhs3), rhs):
            assert np.linalg.norm(lhs - want) <= 1e-9 * joint

    def test_output_skewness_exact(self, rng):
        x = random_point((6, 5, 4), (3, 2, 2), rng)
        rhs = random_skew_triple(rng, x.rank).astuple()
        out = coupled_lyap_pcg(x, rhs)
        for o in out.astuple():
            np.testing.assert_array_equal(o + o.T, np.zeros_like(o))

    def test_self_adjoint_on_skew_triples(self, rng):
        x = random_point((6, 5, 4), (3, 2, 2), rng)
        for _ in range(10):
            a = random_skew_triple(rng, x.rank)
            b = random_skew_triple(rng, x.rank)
            la = coupled_apply(x, a).astuple()
            lb = coupled_apply(x, b).astuple()
            lhs = sum(np.vdot(p, q) for p, q in zip(la, b.astuple()))
            rhs = sum(np.vdot(p, q) for p, q in zip(a.astuple(), lb))
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs))

    def test_nonconvergence_error_carries_residual(self, rng):
        x = random_point((6, 5, 4), (3, 3, 3), rng)
        rhs = random_skew_triple(rng, x.rank).astuple()
        with pytest.raises(PcgConvergenceError) as info:
            coupled_lyap_pcg(x, rhs, tol=1e-16, max_iter=1)
        assert info.value.relative_residual > 0

    def test_non_skew_rhs_rejected(self, rng):
        x = random_point((6, 5, 4), (3, 2, 2), rng)
        bad = [np.eye(3), np.zeros((2, 2)), np.zeros((2, 2))]
        with pytest.raises(ValueError):
            coupled_lyap_pcg(x, bad)
