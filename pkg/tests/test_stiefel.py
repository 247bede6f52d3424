import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from madesdr.made import subspace_distance
from madesdr.stiefel import (
    ObjectiveHandle,
    canonical_gradient,
    cg_optimize,
    geodesic_frame,
    geodesic_step,
    line_search,
    orthonormalize,
    parallel_transport,
    project_tangent,
    tangent_norm_sq,
)

E1 = np.array([[1.0], [0.0]])


def random_point(p, d, rng):
    return orthonormalize(rng.normal(size=(p, d)))


def random_tangent(B, rng):
    return project_tangent(B, rng.normal(size=B.shape))


def rayleigh(C):
    return ObjectiveHandle(value=lambda B: float(np.trace(B.T @ C @ B)),
                           gradient=lambda B: 2 * C @ B)


def procrustes(C):
    return ObjectiveHandle(value=lambda B: float(np.sum(B * C)), gradient=lambda B: C)


def random_symmetric(p, rng):
    M = rng.normal(size=(p, p))
    return (M + M.T) / 2


class TestCanonicalGradient:
    def test_examples(self):
        B = orthonormalize(np.random.default_rng(0).normal(size=(4, 2)))
        np.testing.assert_allclose(canonical_gradient(B, B), 0.0, atol=1e-15)
        G = canonical_gradient(np.array([[3.0], [-2.0]]), E1)
        np.testing.assert_array_equal(G, [[0.0], [-2.0]])

    def test_skew(self):
        rng = np.random.default_rng(1)
        B = random_point(6, 3, rng)
        G = canonical_gradient(rng.normal(size=(6, 3)), B)
        S = B.T @ G
        np.testing.assert_allclose(S + S.T, 0.0, atol=1e-12)


class TestTangentNorm:
    def test_examples(self):
        B = random_point(5, 2, np.random.default_rng(2))
        assert tangent_norm_sq(B, np.zeros((5, 2))) == 0.0
        H = (np.eye(5) - B @ B.T) @ np.random.default_rng(3).normal(size=(5, 2))
        assert tangent_norm_sq(B, H) == pytest.approx(np.sum(H * H), rel=1e-12)
        assert tangent_norm_sq(E1, np.array([[0.0], [2.0]])) == pytest.approx(4.0)

    def test_nonnegative(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            B = random_point(5, 3, rng)
            assert tangent_norm_sq(B, random_tangent(B, rng)) >= 0


class TestGeodesic:
    def test_zero_step(self):
        rng = np.random.default_rng(5)
        B = random_point(5, 2, rng)
        A, Q, R = geodesic_frame(B, random_tangent(B, rng))
        Bt, M, N = geodesic_step(B, A, Q, R, 0.0)
        np.testing.assert_allclose(M, np.eye(2), atol=1e-15)
        np.testing.assert_allclose(N, 0.0, atol=1e-15)
        np.testing.assert_allclose(Bt, B, atol=1e-15)

    @pytest.mark.parametrize("t", [0.0, 0.3, 1.0, 2.5, -0.7])
    def test_plane_rotation(self, t):
        A, Q, R = geodesic_frame(E1, np.array([[0.0], [1.0]]))
        Bt, _, _ = geodesic_step(E1, A, Q, R, t)
        np.testing.assert_allclose(Bt[:, 0], [math.cos(t), math.sin(t)], atol=1e-15)

    def test_rotation_matches_matrix_exponential(self):
        from scipy.linalg import expm
        rng = np.random.default_rng(6)
        B = random_point(5, 1, rng)
        A, Q, R = geodesic_frame(B, random_tangent(B, rng))
        t = 0.8
        E = expm(t * np.block([[A, -R.T], [R, np.zeros((1, 1))]]))
        Bt, M, N = geodesic_step(B, A, Q, R, t)
        np.testing.assert_allclose(M, E[:1, :1], atol=1e-14)
        np.testing.assert_allclose(N, E[1:, :1], atol=1e-14)

    def test_composition_one_dimensional(self):
        rng = np.random.default_rng(7)
        B = random_point(4, 1, rng)
        H = random_tangent(B, rng)
        A, Q, R = geodesic_frame(B, H)
        B1, M, N = geodesic_step(B, A, Q, R, 0.4)
        tH = parallel_transport(H, B, R, M, N)
        A2, Q2, R2 = geodesic_frame(B1, tH)
        B2, _, _ = geodesic_step(B1, A2, Q2, R2, 0.6)
        direct, _, _ = geodesic_step(B, A, Q, R, 1.0)
        np.testing.assert_allclose(B2, direct, atol=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_stays_on_manifold(self, d):
        rng = np.random.default_rng(8 + d)
        B = random_point(6, d, rng)
        A, Q, R = geodesic_frame(B, 3 * random_tangent(B, rng))
        for t in (0.1, 1.0, 7.0):
            Bt, _, _ = geodesic_step(B, A, Q, R, t)
            assert np.linalg.norm(Bt.T @ Bt - np.eye(d)) < 1e-10


class TestTransport:
    def test_zero_step_identity(self):
        rng = np.random.default_rng(9)
        B = random_point(5, 2, rng)
        H = random_tangent(B, rng)
        A, Q, R = geodesic_frame(B, H)
        _, M, N = geodesic_step(B, A, Q, R, 0.0)
        np.testing.assert_allclose(parallel_transport(H, B, R, M, N), H, atol=1e-14)

    def test_circle_isometry(self):
        H = np.array([[0.0], [1.0]])
        A, Q, R = geodesic_frame(E1, H)
        _, M, N = geodesic_step(E1, A, Q, R, 1.1)
        assert np.linalg.norm(parallel_transport(H, E1, R, M, N)) == pytest.approx(1.0, rel=1e-14)

    @pytest.mark.parametrize("d", [1, 2])
    def test_tangency(self, d):
        rng = np.random.default_rng(10 + d)
        B = random_point(5, d, rng)
        H = random_tangent(B, rng)
        A, Q, R = geodesic_frame(B, H)
        Bn, M, N = geodesic_step(B, A, Q, R, 0.5)
        tH = parallel_transport(H, B, R, M, N)
        S = Bn.T @ tH
        assert np.linalg.norm(S + S.T) < 1e-8


class TestLineSearch:
    def test_trigonometric_maximizer(self):
        c1, c2, c12 = 1.0, 3.0, 0.8
        C = np.array([[c1, c12], [c12, c2]])
        F = lambda B: -float((B.T @ C @ B)[0, 0])  # noqa: E731
        H = np.array([[0.0], [1.0]])
        A, Q, R = geodesic_frame(E1, H)
        t, ft, stalled = line_search(F, E1, H, A, Q, R, window=1.5)
        t_star = 0.5 * math.atan2(2 * c12, c1 - c2) % math.pi
        assert not stalled
        assert abs(t - t_star) < 1e-4
        assert ft <= F(E1)

    def test_constant_objective_stalls(self):
        H = np.array([[0.0], [1.0]])
        A, Q, R = geodesic_frame(E1, H)
        t, ft, stalled = line_search(lambda B: 2.0, E1, H, A, Q, R, window=1.0)
        assert stalled and t == 0.0 and ft == 2.0

    def test_shrinks_window_for_narrow_dip(self):
        # improvement only for t < 1e-3; a unit window must shrink to find it
        def F(B):
            t = math.atan2(B[1, 0], B[0, 0])
            return -1.0 if 0 < t < 1e-3 else 0.0
        H = np.array([[0.0], [1.0]])
        A, Q, R = geodesic_frame(E1, H)
        t, ft, stalled = line_search(F, E1, H, A, Q, R, window=1.0)
        assert not stalled and 0 < t < 1e-3 and ft == -1.0


class TestCG:
    def test_rayleigh_top_two(self):
        rng = np.random.default_rng(12)
        C = random_symmetric(5, rng)
        evals, evecs = np.linalg.eigh(C)
        res = cg_optimize(rayleigh(C), random_point(5, 2, rng), tol=1e-20, max_iter=500,
                          record_orthogonality=True)
        assert subspace_distance(evecs[:, -2:], res.B) < 1e-6
        assert res.value == pytest.approx(evals[-2:].sum(), rel=1e-12)
        assert max(res.orthogonality) < 1e-10

    def test_rayleigh_top_one(self):
        rng = np.random.default_rng(13)
        C = random_symmetric(6, rng)
        res = cg_optimize(rayleigh(C), random_point(6, 1, rng), tol=1e-20, max_iter=500)
        assert subspace_distance(np.linalg.eigh(C)[1][:, -1:], res.B) < 1e-6

    def test_procrustes(self):
        rng = np.random.default_rng(14)
        C = rng.normal(size=(5, 3))
        U, _, Vt = np.linalg.svd(C, full_matrices=False)
        res = cg_optimize(procrustes(C), random_point(5, 3, rng), tol=1e-22, max_iter=500)
        np.testing.assert_allclose(res.B, U @ Vt, atol=1e-8)

    def test_monotone_trace(self):
        rng = np.random.default_rng(15)
        C = random_symmetric(7, rng)
        res = cg_optimize(rayleigh(C), random_point(7, 3, rng), tol=1e-16)
        vals = [r["objective"] for r in res.trace]
        assert np.all(np.diff(vals) > 0)

    def test_stationary_start(self):
        C = np.diag([5.0, 4.0, 1.0, 0.5])
        res = cg_optimize(rayleigh(C), np.eye(4)[:, :2], tol=1e-12)
        assert res.converged and res.iterations == 0
        np.testing.assert_array_equal(res.B, np.eye(4)[:, :2])

    def test_write_trace(self, tmp_path):
        rng = np.random.default_rng(16)
        res = cg_optimize(rayleigh(random_symmetric(4, rng)), random_point(4, 1, rng))
        path = tmp_path / "trace.csv"
        res.write_trace(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,objective,gradient_norm"
        assert len(lines) == len(res.trace) + 1


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), p=st.integers(2, 6), data=st.data())
    def test_invariants_along_runs(self, seed, p, data):
        d = data.draw(st.integers(1, p - 1)) if p > 1 else 1
        rng = np.random.default_rng(seed)
        C = random_symmetric(p, rng)
        res = cg_optimize(rayleigh(C), random_point(p, d, rng), tol=1e-14,
                          record_orthogonality=True)
        assert max(res.orthogonality) < 1e-10
        vals = [r["objective"] for r in res.trace]
        assert np.all(np.diff(vals) >= 0)
        assert res.value <= np.linalg.eigvalsh(C)[-d:].sum() + 1e-10
