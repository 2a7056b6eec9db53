"""Inexact Newton for the generalized Riccati equation and LQ feedback.

Each Newton step rewrites the linearized Riccati equation as a GL
equation E^T Z Abar + Abar^T Z E = P with
Abar = A - B F, P = -C^T Q C - F^T R F, F = R^{-1} B^T Z_prev E,
solved approximately on a frozen a priori pattern by Method 1 or 2.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .lyap_gp import FaberConfig, GpConfig, initial_guess, solve_lyap_gp
from .lyap_lsq import CglsConfig, solve_lyap_lsq
from .modelgen import DescriptorModel
from .pattern import PatternConfig, apriori_pattern
from .sparsecore import (ShapeMismatchError, binarize, canonicalize,
                         frobenius, identity, project)


@dataclass(frozen=True)
class LqProblem:
    model: DescriptorModel
    Q: np.ndarray     # diagonal of the output weight (length r)
    R: np.ndarray     # diagonal of the input weight (length m)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        if Q.size != self.model.r or R.size != self.model.m:
            raise ValueError("Q/R diagonal lengths must match C rows / B cols")
        if np.any(R <= 0):
            raise ValueError("R must be positive definite")
        if np.any(Q < 0):
            raise ValueError("Q must be positive semidefinite")

    def ctqc(self):
        C = self.model.C
        return canonicalize(C.T @ sp.diags(self.Q) @ C)

    def r_inv_bt(self):
        return canonicalize(sp.diags(1.0 / self.R) @ self.model.B.T)


@dataclass(frozen=True)
class NewtonConfig:
    Z0_scale: float = 10.0
    N_max: int = 20
    lyap_method: str = "lsq"          # "lsq" | "gp"
    residual_tol: float = 1e-6        # relative to v_1
    pattern: PatternConfig = field(default_factory=PatternConfig)


@dataclass
class NewtonIterationReport:
    k: int
    v_k: float              # Riccati residual Frobenius norm
    lyap_residual: float    # inner-solve residual (the Newton inexactness)
    nnz_Z: int
    nnz_F: int
    wall_ms: float


class RiccatiDivergence(RuntimeError):
    def __init__(self, reports):
        super().__init__("Riccati residual grew for 3 consecutive iterations")
        self.reports = reports


def _symmetrize_checked(Z, tol=1e-10):
    Z = canonicalize(Z)
    asym = frobenius(Z - Z.T)
    scale = max(frobenius(Z), 1.0)
    if asym > tol * scale:
        raise ValueError(f"matrix is not symmetric: ||Z - Z^T||_F = {asym:.3e}")
    return canonicalize(0.5 * (Z + Z.T))


def riccati_residual(Z, prob):
    """D[Z] = C^T Q C + E^T Z A + A^T Z E - E^T Z B R^{-1} B^T Z E."""
    E, A = prob.model.E, prob.model.A
    if Z.shape != A.shape:
        raise ShapeMismatchError("riccati_residual", Z.shape, A.shape)
    Z = _symmetrize_checked(Z)
    S = canonicalize(E.T @ Z @ A)
    K = canonicalize(E.T @ Z @ prob.model.B)      # n x m
    W = canonicalize(K @ sp.diags(1.0 / prob.R) @ K.T)
    return canonicalize(prob.ctqc() + S + S.T - W)


def frechet_apply(Z, Y, prob):
    """Directional derivative of the Riccati operator at Z applied to Y."""
    E, A, B = prob.model.E, prob.model.A, prob.model.B
    if Z.shape != Y.shape:
        raise ShapeMismatchError("frechet_apply", Z.shape, Y.shape)
    Rinv = sp.diags(1.0 / prob.R)
    S = canonicalize(E.T @ Y @ A)
    G = canonicalize(E.T @ Z @ B @ Rinv @ B.T @ Y @ E)
    return canonicalize(S + S.T - G - G.T)


def feedback(Z, prob):
    """LQ feedback matrix F = R^{-1} B^T Z E."""
    Z = _symmetrize_checked(Z)
    return canonicalize(prob.r_inv_bt() @ Z @ prob.model.E)


def newton_step_matrices(Z_prev, prob):
    """(F, Abar, P) defining the GL equation of one Newton step."""
    F = feedback(Z_prev, prob)
    Abar = canonicalize(prob.model.A - prob.model.B @ F)
    P = canonicalize(-prob.ctqc() - F.T @ sp.diags(prob.R) @ F)
    return F, Abar, P


def solve_riccati(prob, cfg=NewtonConfig(), cgls_cfg=CglsConfig(),
                  gp_cfg=GpConfig(), faber_cfg=FaberConfig(),
                  pattern_override=None):
    """Inexact Newton loop; returns (Z_hat, list of per-iteration reports).

    The a priori pattern is recomputed for the first
    ``cfg.pattern.freeze_after_newton_iter`` iterations and then frozen.
    ``pattern_override`` replaces the computed pattern (e.g. a full
    pattern for oracle-equivalence runs).
    """
    n = prob.model.n
    Z = canonicalize(cfg.Z0_scale * identity(n))
    reports = []
    pat = None
    v1 = None
    growth_streak = 0
    for k in range(1, cfg.N_max + 1):
        t0 = time.perf_counter()
        F, Abar, P = newton_step_matrices(Z, prob)
        if pattern_override is not None:
            pat = binarize(pattern_override)
        elif pat is None or k <= cfg.pattern.freeze_after_newton_iter:
            pat = apriori_pattern(Abar, prob.model.E, P, cfg.pattern)
        if cfg.lyap_method == "lsq":
            Z_new, lrep = solve_lyap_lsq(Abar, prob.model.E, P, pat,
                                         cfg=cgls_cfg, w=cfg.pattern.w)
            lyap_res = lrep.extra["lsq_residual_2norm"]
        elif cfg.lyap_method == "gp":
            if k == 1:
                X0, _info = initial_guess(Abar, prob.model.E, P,
                                          cfg=gp_cfg, fcfg=faber_cfg)
            else:
                X0 = project(Z, pat)
            Z_new, lrep = solve_lyap_gp(Abar, prob.model.E, P, pat, X0,
                                        cfg=gp_cfg, w=cfg.pattern.w)
            lyap_res = lrep.final_residual
        else:
            raise ValueError(f"unknown lyap_method {cfg.lyap_method!r}")
        Z = canonicalize(0.5 * (Z_new + Z_new.T))
        v_k = frobenius(riccati_residual(Z, prob))
        reports.append(NewtonIterationReport(
            k=k, v_k=v_k, lyap_residual=lyap_res, nnz_Z=Z.nnz,
            nnz_F=feedback(Z, prob).nnz,
            wall_ms=1e3 * (time.perf_counter() - t0)))
        if v1 is None:
            v1 = v_k
        if v_k <= cfg.residual_tol * v1:
            break
        growth_streak = growth_streak + 1 if v_k > 10.0 * v1 else 0
        if growth_streak >= 3:
            raise RiccatiDivergence(reports)
    return Z, reports


def metric_e(Zhat, Zexact):
    """Relative Frobenius error ||Zhat - Zexact||_F / ||Zexact||_F."""
    Zhat = sp.csr_matrix(Zhat)
    Zexact = sp.csr_matrix(Zexact)
    if Zhat.shape != Zexact.shape:
        raise ShapeMismatchError("metric_e", Zhat.shape, Zexact.shape)
    denom = frobenius(Zexact)
    if denom == 0.0:
        raise ZeroDivisionError("metric_e: reference solution has zero norm")
    return frobenius(canonicalize(Zhat - Zexact)) / denom


@dataclass
class Trajectory:
    steps: np.ndarray       # recorded step indices
    times: np.ndarray
    state_norms: np.ndarray
    inst_cost: np.ndarray
    cost: float


def simulate_closed_loop(prob, F, x0, dt, steps, max_rows=1000):
    """Implicit-Euler simulation of E x' = (A - B F) x with LQ running cost.

    cost accumulates dt * (y^T Q y + u^T R u) per step with y = C x and
    u = -F x; the trajectory is downsampled to at most ``max_rows`` rows.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    model = prob.model
    Abar = canonicalize(model.A - model.B @ F)
    S = canonicalize(model.E - dt * Abar).tocsc()
    try:
        lu = spla.splu(S)
    except RuntimeError as exc:
        raise RuntimeError(f"singular step matrix at dt={dt}") from exc
    E = model.E.tocsr()
    x = np.asarray(x0, dtype=np.float64).ravel().copy()
    stride = max(1, steps // max_rows)
    rec_steps, rec_t, rec_norm, rec_cost = [], [], [], []
    cost = 0.0
    for i in range(steps):
        y = model.C @ x
        u = -(F @ x)
        inst = float(y @ (prob.Q * y) + u @ (prob.R * u))
        cost += dt * inst
        if i % stride == 0:
            rec_steps.append(i)
            rec_t.append(i * dt)
            rec_norm.append(float(np.linalg.norm(x)))
            rec_cost.append(inst)
        x = lu.solve(E @ x)
    rec_steps.append(steps)
    rec_t.append(steps * dt)
    rec_norm.append(float(np.linalg.norm(x)))
    y = model.C @ x
    u = -(F @ x)
    rec_cost.append(float(y @ (prob.Q * y) + u @ (prob.R * u)))
    return Trajectory(steps=np.array(rec_steps), times=np.array(rec_t),
                      state_norms=np.array(rec_norm),
                      inst_cost=np.array(rec_cost), cost=cost)
