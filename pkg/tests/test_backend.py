import numpy as np
import pytest

import sparsecuts as sc
from sparsecuts import backend as be
from sparsecuts.relaxation import (
    ConicProblem,
    LinearRow,
    PsdBlock,
    build_shor_sdp,
    mccormick_rows,
)
from sparsecuts.separation import separate_epsd

from conftest import usable_boxqcqp

SEVEN_PAIR_E = [(0, 0), (2, 0), (0, 2), (1, 1), (2, 1), (1, 2), (2, 2)]


def lp_min_x_geq_3():
    return ConicProblem(
        num_coords=1,
        obj_indices=(0,),
        obj_coeffs=(1.0,),
        rows=(LinearRow((0,), (1.0,), ">=", 3.0),),
    )


def sdp_min_t():
    # min t s.t. [[t, 1], [1, t]] psd  ->  t = 1
    return ConicProblem(
        num_coords=2,
        obj_indices=(0,),
        obj_coeffs=(1.0,),
        rows=(LinearRow((1,), (1.0,), "==", 1.0),),
        psd_blocks=(PsdBlock(2, {(0, 0): 0, (0, 1): 1, (1, 1): 0}),),
    )


class TestSolveConic:
    def test_lp_simple(self):
        res = be.solve_conic(lp_min_x_geq_3())
        assert res.is_optimal
        assert res.objective == pytest.approx(3.0, abs=1e-9)
        assert res.primal[0] == pytest.approx(3.0, abs=1e-9)

    def test_lp_infeasible(self):
        prob = lp_min_x_geq_3().with_extra_rows([LinearRow((0,), (1.0,), "<=", 2.0)])
        assert be.solve_conic(prob).status == be.INFEASIBLE

    def test_lp_unbounded(self):
        prob = ConicProblem(1, (0,), (1.0,), rows=())
        assert be.solve_conic(prob).status == be.UNBOUNDED

    def test_sdp_eigenvalue_bound(self):
        for backend in ("clarabel", "auto"):
            res = be.solve_conic(sdp_min_t(), backend=backend)
            assert res.is_optimal
            assert res.objective == pytest.approx(1.0, abs=1e-7)

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            be.solve_conic(lp_min_x_geq_3(), backend="nope")

    def test_highs_rejects_psd(self):
        with pytest.raises(ValueError):
            be.solve_conic(sdp_min_t(), backend="highs")

    def test_determinism(self):
        inst = usable_boxqcqp(4, 0.5, 1, 1)[0]
        prob = build_shor_sdp(inst, mccormick="E")
        a = be.solve_conic(prob)
        b = be.solve_conic(prob)
        assert a.status == b.status
        assert a.objective == pytest.approx(b.objective, abs=1e-9)

    def test_bounds_respected(self):
        prob = ConicProblem(
            1, (0,), (1.0,), rows=(), lower=np.array([-2.0]), upper=np.array([5.0])
        )
        res = be.solve_conic(prob)
        assert res.objective == pytest.approx(-2.0, abs=1e-9)

    def test_lp_duals_present(self):
        res = be.solve_conic(lp_min_x_geq_3())
        assert res.dual is not None and len(res.dual) == 1


class TestEigendecomp:
    def test_identity(self):
        pairs = be.eigendecomp(sc.SymMatrix(np.eye(4)))
        assert [l for l, _ in pairs] == [1.0, 1.0, 1.0, 1.0]

    def test_all_ones_spectrum(self):
        pairs = be.eigendecomp(sc.SymMatrix(np.ones((3, 3))))
        vals = np.array([l for l, _ in pairs])
        assert np.allclose(vals, [3.0, 0.0, 0.0], atol=1e-12)

    def test_zero_filled_pattern_spectrum(self):
        Zbar = sc.SymMatrix(np.array([[1.0, 0, 1], [0, 1, 1], [1, 1, 1]]))
        vals = np.array([l for l, _ in be.eigendecomp(Zbar)])
        assert np.allclose(vals, [1 + np.sqrt(2), 1.0, 1 - np.sqrt(2)], atol=1e-12)

    def test_reconstruction(self, rng):
        a = rng.normal(size=(6, 6))
        M = sc.SymMatrix(a + a.T)
        pairs = be.eigendecomp(M)
        rebuilt = sum(l * np.outer(v, v) for l, v in pairs)
        scale = np.abs(M.to_array()).max()
        assert np.abs(rebuilt - M.to_array()).max() <= 1e-8 * scale

    def test_descending_and_orthonormal(self, rng):
        a = rng.normal(size=(5, 5))
        pairs = be.eigendecomp(sc.SymMatrix(a + a.T))
        vals = [l for l, _ in pairs]
        assert vals == sorted(vals, reverse=True)
        V = np.column_stack([v for _, v in pairs])
        assert np.allclose(V.T @ V, np.eye(5), atol=1e-12)


class TestCompleteToPsd:
    def test_seven_pair_projection_completes(self):
        E = sc.SupportSet(3, SEVEN_PAIR_E)
        Z = sc.project_to_E(sc.SymMatrix(np.ones((3, 3))), E)
        Y = be.complete_to_psd(Z)
        assert Y is not None
        assert np.linalg.eigvalsh(Y.to_array()).min() >= -1e-7
        assert np.allclose(Y.to_array()[E.rows, E.cols], Z.values, atol=1e-7)

    def test_negative_diagonal_has_no_completion(self):
        E = sc.SupportSet(2, [(0, 0), (0, 1), (1, 1)])
        Z = sc.EVector(E, np.array([1.0, 0.0, -1.0]))
        assert be.complete_to_psd(Z) is None

    def test_agrees_with_separation(self, rng):
        # completion exists iff the projection SDP finds no violated cut
        for _ in range(25):
            dim = int(rng.integers(2, 6))
            pairs = {(0, j) for j in range(dim)} | {(j, j) for j in range(dim)}
            for i in range(1, dim):
                for j in range(i + 1, dim):
                    if rng.random() < 0.5:
                        pairs.add((i, j))
            E = sc.SupportSet(dim, pairs)
            if rng.random() < 0.5:
                a = rng.normal(size=(dim, dim))
                Z = sc.project_to_E(sc.SymMatrix(a @ a.T / dim), E)
            else:
                Z = sc.EVector(E, rng.normal(size=len(E)))
            cut = separate_epsd(Z, tol_violation=1e-7)
            completion = be.complete_to_psd(Z)
            if cut is not None and cut.violation < -1e-7:
                assert completion is None
            if completion is not None:
                assert cut is None or cut.violation >= -1e-7


class TestCrossBackend:
    def test_shor_sdp_matches_independent_model(self):
        cvxpy = pytest.importorskip("cvxpy")
        inst = usable_boxqcqp(5, 0.5, 2, 1)[0]
        ours = be.solve_conic(build_shor_sdp(inst, mccormick="E"))
        assert ours.is_optimal

        # independent reimplementation of the lifted model, straight from
        # the instance data
        n = inst.n
        Y = cvxpy.Variable((n + 1, n + 1), symmetric=True)
        cons = [Y >> 0, Y[0, 0] == 1]
        for i in range(n):
            cons += [Y[0, i + 1] >= inst.lower[i], Y[0, i + 1] <= inst.upper[i]]
        def q_expr(k):
            expr = inst.d[k] + sum(inst.c[k][i] * Y[0, i + 1] for i in range(n))
            for (i, j), v in inst.Q[k].items():
                expr = expr + v * Y[i + 1, j + 1] * (1.0 if i == j else 2.0)
            return expr
        for k in range(1, inst.m + 1):
            cons.append(q_expr(k) <= 0)
        E = sc.build_support_set(inst)
        for (i, j) in E.pairs:
            if i >= 1:
                mc = mccormick_rows(i, j, inst.lower, inst.upper)
                for ai, aj, aij, sense, rhs in mc.inequalities:
                    lhs = ai * Y[0, i] + aj * Y[0, j] + aij * Y[i, j]
                    cons.append(lhs <= rhs if sense == "<=" else lhs >= rhs)
        prob = cvxpy.Problem(cvxpy.Minimize(q_expr(0)), cons)
        prob.solve(solver=cvxpy.SCS, eps=1e-8, max_iters=200_000)
        assert prob.status in ("optimal", "optimal_inaccurate")
        assert ours.objective == pytest.approx(prob.value, abs=1e-6, rel=1e-6)

    def test_registering_a_backend(self):
        def stub(problem, limits):
            return be.SolveResult(be.NUMERICAL_ERROR, None, None, None, 0.0, "stub")

        be.register_backend("stub", stub)
        try:
            assert "stub" in be.available_backends()
            assert be.solve_conic(lp_min_x_geq_3(), backend="stub").status == be.NUMERICAL_ERROR
        finally:
            be._BACKENDS.pop("stub", None)
