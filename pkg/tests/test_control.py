"""Inexact Newton Riccati solver, feedback, metrics, closed-loop simulation."""

import numpy as np
import pytest
import scipy.sparse as sp

from bandlq.control import (LqProblem, NewtonConfig, feedback, frechet_apply,
                            metric_e, newton_step_matrices, riccati_residual,
                            simulate_closed_loop, solve_riccati)
from bandlq.lyap_lsq import CglsConfig
from bandlq.oracle import dense_riccati, pencil_eigs
from bandlq.pattern import PatternConfig
from bandlq.sparsecore import canonicalize, frobenius, identity
from conftest import full_pattern, heat_problem, random_banded, scalar_problem

SQRT2M1 = np.sqrt(2.0) - 1.0


def _csr(M):
    return canonicalize(sp.csr_matrix(np.asarray(M, dtype=np.float64)))


class TestRiccatiResidual:
    def test_zero_argument(self):
        model, prob = heat_problem((4, 4))
        R = riccati_residual(canonicalize(sp.csr_matrix((16, 16))), prob)
        assert (R != prob.ctqc()).nnz == 0

    def test_scalar_root(self):
        _model, prob = scalar_problem()
        Z = _csr([[SQRT2M1]])
        assert frobenius(riccati_residual(Z, prob)) <= 1e-12

    def test_dense_oracle_solution_has_small_residual(self):
        model, prob = heat_problem((5, 4))
        Zex = dense_riccati(prob)
        R = riccati_residual(_csr(Zex), prob)
        assert frobenius(R) <= 1e-8

    def test_asymmetric_input_rejected(self):
        _model, prob = scalar_problem()
        model, prob2 = heat_problem((3, 3))
        bad = _csr(np.triu(np.ones((9, 9))))
        with pytest.raises(ValueError):
            riccati_residual(bad, prob2)


class TestFrechet:
    def test_zero_direction(self):
        model, prob = heat_problem((3, 3))
        out = frechet_apply(identity(9), canonicalize(sp.csr_matrix((9, 9))),
                            prob)
        assert out.nnz == 0

    def test_linearization_order(self):
        model, prob = heat_problem((3, 3), seed=1)
        rng = np.random.default_rng(0)
        Z0 = random_banded(9, 2, rng)
        Z = _csr(Z0 + Z0.T)
        Y0 = random_banded(9, 2, rng)
        Y = _csr(Y0 + Y0.T)

        def defect(h):
            lhs = riccati_residual(canonicalize(Z + h * Y), prob).toarray()
            base = riccati_residual(Z, prob).toarray()
            lin = frechet_apply(Z, Y, prob).toarray()
            return np.linalg.norm(lhs - base - h * lin)

        ratio = defect(1e-3) / defect(1e-4)
        assert 100.0 / 3.0 <= ratio <= 300.0

    def test_newton_equation_identity(self):
        # the Newton step E^T Z Abar + Abar^T Z E = P is the rearranged
        # linearization D[Z_prev] + D'_{Z_prev}[Z - Z_prev] = 0
        rng = np.random.default_rng(5)
        model, prob = heat_problem((4, 2), seed=2)
        n = model.n
        Zp0 = random_banded(n, 2, rng)
        Z_prev = _csr(Zp0 + Zp0.T + 10.0 * np.eye(n))
        Zn0 = random_banded(n, 2, rng)
        Z_new = _csr(Zn0 + Zn0.T)
        _F, Abar, P = newton_step_matrices(Z_prev, prob)
        lhs = (model.E.T @ Z_new @ Abar + Abar.T @ Z_new @ model.E).toarray()
        E, A, B = model.E.toarray(), model.A.toarray(), model.B.toarray()
        Zp, Zn = Z_prev.toarray(), Z_new.toarray()
        Rinv = np.diag(1.0 / prob.R)
        ctqc = prob.ctqc().toarray()
        DZ = ctqc + E.T @ Zp @ A + A.T @ Zp @ E \
            - E.T @ Zp @ B @ Rinv @ B.T @ Zp @ E
        G = E.T @ Zp @ B @ Rinv @ B.T @ (Zn - Zp) @ E
        Dprime = E.T @ (Zn - Zp) @ A + A.T @ (Zn - Zp) @ E - G - G.T
        np.testing.assert_allclose(lhs - P.toarray(), DZ + Dprime, atol=1e-10)


class TestSolveRiccati:
    def test_scalar_converges_to_root(self):
        _model, prob = scalar_problem()
        Z, reports = solve_riccati(
            prob, cfg=NewtonConfig(N_max=20, residual_tol=1e-12),
            cgls_cfg=CglsConfig(tol=1e-12))
        assert abs(Z.toarray()[0, 0] - SQRT2M1) <= 1e-6

    def test_full_pattern_matches_dense_oracle(self):
        model, prob = heat_problem((5, 5))
        Z, _reports = solve_riccati(
            prob,
            cfg=NewtonConfig(N_max=25, residual_tol=1e-10),
            cgls_cfg=CglsConfig(tol=1e-10),
            pattern_override=full_pattern(model.n))
        Zex = dense_riccati(prob)
        assert metric_e(Z, sp.csr_matrix(Zex)) <= 1e-5

    def test_feedback_matches_oracle_feedback(self):
        model, prob = heat_problem((5, 5))
        Z, _reports = solve_riccati(
            prob,
            cfg=NewtonConfig(N_max=25, residual_tol=1e-10),
            cgls_cfg=CglsConfig(tol=1e-10),
            pattern_override=full_pattern(model.n))
        F = feedback(Z, prob)
        Zex = dense_riccati(prob)
        Fex = np.diag(1.0 / prob.R) @ model.B.toarray().T @ Zex \
            @ model.E.toarray()
        err = np.linalg.norm(F.toarray() - Fex)
        assert err <= 1e-4 * max(np.linalg.norm(Fex), 1.0)

    def test_pattern_solution_containment(self):
        model, prob = heat_problem((6, 6), discretization="fd-5point")
        cfg = NewtonConfig(N_max=6, residual_tol=1e-9,
                           pattern=PatternConfig(w=1))
        Z, reports = solve_riccati(prob, cfg=cfg)
        assert frobenius(Z - Z.T) <= 1e-10 * max(frobenius(Z), 1.0)
        assert len(reports) <= 6

    def test_feedback_sparsity_fraction_w0(self):
        # actuator-row selection of a banded Z keeps the feedback sparse
        model, prob = heat_problem((13, 13), discretization="fd-5point")
        cfg = NewtonConfig(N_max=8, residual_tol=1e-9,
                           pattern=PatternConfig(w=0))
        Z, reports = solve_riccati(prob, cfg=cfg)
        F = feedback(Z, prob)
        frac = F.nnz / float(F.shape[0] * F.shape[1])
        print(f"feedback fill at w=0: {100.0 * frac:.2f}%")
        assert frac < 0.15


class TestFeedbackAndMetric:
    def test_zero_gives_zero(self):
        _model, prob = scalar_problem()
        assert feedback(canonicalize(sp.csr_matrix((1, 1))), prob).nnz == 0

    def test_scalar_feedback(self):
        _model, prob = scalar_problem()
        F = feedback(_csr([[SQRT2M1]]), prob)
        assert F.toarray()[0, 0] == pytest.approx(SQRT2M1)

    def test_metric_trivial_cases(self, rng):
        Z = _csr(random_banded(6, 2, rng) + np.eye(6))
        assert metric_e(Z, Z) == 0.0
        assert metric_e(canonicalize(sp.csr_matrix((6, 6))), Z) == 1.0
        assert metric_e(canonicalize(1.1 * Z), Z) == pytest.approx(0.1,
                                                                   abs=1e-14)

    def test_metric_zero_reference_rejected(self):
        with pytest.raises(ZeroDivisionError):
            metric_e(identity(3), canonicalize(sp.csr_matrix((3, 3))))


class TestSimulateClosedLoop:
    def test_oracle_feedback_decays(self):
        model, prob = heat_problem((10, 10))
        Zex = dense_riccati(prob)
        F = _csr(np.diag(1.0 / prob.R) @ model.B.toarray().T @ Zex
                 @ model.E.toarray())
        lam = pencil_eigs(canonicalize(model.A - model.B @ F), model.E)
        assert lam.real.max() < 0
        x0 = np.ones(model.n)
        traj = simulate_closed_loop(prob, F, x0, dt=0.01, steps=2000)
        assert traj.state_norms[-1] < 1e-3 * np.linalg.norm(x0)

    def test_lq_cost_beats_zero_feedback(self):
        model, prob = heat_problem((7, 7))
        Zex = dense_riccati(prob)
        F = _csr(np.diag(1.0 / prob.R) @ model.B.toarray().T @ Zex
                 @ model.E.toarray())
        F0 = canonicalize(sp.csr_matrix((model.m, model.n)))
        rng = np.random.default_rng(17)
        for _ in range(3):
            x0 = rng.standard_normal(model.n)
            c_lq = simulate_closed_loop(prob, F, x0, dt=1e-3, steps=5000).cost
            c_open = simulate_closed_loop(prob, F0, x0, dt=1e-3,
                                          steps=5000).cost
            assert c_lq <= c_open * (1.0 + 1e-9)

    def test_invalid_dt(self):
        model, prob = heat_problem((3, 3))
        F = canonicalize(sp.csr_matrix((model.m, model.n)))
        with pytest.raises(ValueError):
            simulate_closed_loop(prob, F, np.ones(9), dt=0.0, steps=10)

    def test_trajectory_downsampling(self):
        model, prob = heat_problem((3, 3))
        F = canonicalize(sp.csr_matrix((model.m, model.n)))
        traj = simulate_closed_loop(prob, F, np.ones(9), dt=1e-3, steps=5000,
                                    max_rows=100)
        assert len(traj.times) <= 102


class TestLqProblemValidation:
    def test_negative_r_rejected(self):
        model, _prob = heat_problem((3, 3))
        with pytest.raises(ValueError):
            LqProblem(model, Q=np.ones(model.r), R=-np.ones(model.m))

    def test_negative_q_rejected(self):
        model, _prob = heat_problem((3, 3))
        with pytest.raises(ValueError):
            LqProblem(model, Q=-np.ones(model.r), R=np.ones(model.m))

    def test_wrong_lengths_rejected(self):
        model, _prob = heat_problem((3, 3))
        with pytest.raises(ValueError):
            LqProblem(model, Q=np.ones(model.r + 1), R=np.ones(model.m))
