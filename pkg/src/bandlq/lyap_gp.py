"""Method 2: gradient projection solve of the pattern-constrained GL equation.

The iteration minimizes J[Z] = ||P - E^T Z Abar - Abar^T Z E||_F^2 over
matrices supported on the a priori pattern, with Armijo backtracking along
the projection arc. It is initialized from a quadrature of matrix
exponentials: a sparse approximate inverse of E turns the GL equation into
a non-generalized one, a sinh-based quadrature discretizes its integral
representation, and each matrix exponential is expanded in sparsified
Faber/Chebyshev polynomials.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .pattern import inverse_pattern
from .report import SolveReport
from .sparsecore import (ShapeMismatchError, binarize, canonicalize,
                         fro_inner, frobenius, identity, pattern_power_sum,
                         project)

_DENSE_EIG_LIMIT = 2000


class UnstableMatrixError(RuntimeError):
    """The quadrature requires all eigenvalue real parts to be negative."""


@dataclass(frozen=True)
class SpectrumBounds:
    lambda_RS: float     # smallest real part
    lambda_RL: float     # largest real part
    lambda_IL: float     # largest |imaginary part|

    def __post_init__(self):
        if self.lambda_RS > self.lambda_RL + 1e-12:
            raise ValueError("lambda_RS must not exceed lambda_RL")
        if self.lambda_IL < 0:
            raise ValueError("lambda_IL must be nonnegative")

    def scaled(self, t):
        if t <= 0:
            raise ValueError("time scale must be positive")
        return SpectrumBounds(t * self.lambda_RS, t * self.lambda_RL,
                              t * self.lambda_IL)


@dataclass(frozen=True)
class FaberConfig:
    p: int = 30          # truncation order of the expansion
    W: int = 2048        # DFT length for the coefficients
    k2: int = 1          # sparsification pattern order for the recurrence

    def __post_init__(self):
        if self.p < 0 or self.k2 < 0:
            raise ValueError("p and k2 must be >= 0")
        if self.W <= 4 * self.p:
            raise ValueError("W must exceed 4p to keep aliasing negligible")


@dataclass(frozen=True)
class GpConfig:
    delta_bar: float | None = None   # None -> 1 / (8 ||E||_F^2 ||Abar||_F^2)
    zeta: float = 0.5
    sigma: float = 1e-4
    max_iter: int = 4000
    q: int = 40                      # quadrature half-width
    k1: int = 3                      # SPAI pattern order
    stagnation_window: int = 20      # 0 disables the stagnation stop
    stagnation_rtol: float = 1e-12

    def __post_init__(self):
        if self.delta_bar is not None and self.delta_bar <= 0:
            raise ValueError("delta_bar must be positive")
        if not (0.0 < self.zeta < 1.0):
            raise ValueError("zeta must lie in (0, 1)")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


def spai(E, pat):
    """Sparse approximate inverse of E on the given pattern.

    Minimizes ||I - E X||_F column by column over the pattern's support,
    also solves the row form ||I - X E||_F, and returns whichever matrix
    has the smaller residual together with that residual.
    """
    n = E.shape[0]
    if E.shape != (n, n) or pat.shape != (n, n):
        raise ShapeMismatchError("spai", E.shape, pat.shape)
    Ec = canonicalize(E)
    right = _spai_one_sided(Ec, binarize(pat))
    left = _spai_one_sided(Ec.T.tocsr(), binarize(pat).T.tocsr()).T.tocsr()
    r_right = frobenius(identity(n) - Ec @ right)
    r_left = frobenius(identity(n) - left @ Ec)
    if r_right <= r_left:
        return canonicalize(right), r_right
    return canonicalize(left), r_left


def _spai_one_sided(E, pat):
    """min ||I - E X||_F with X supported on pat, solved per column."""
    n = E.shape[0]
    Ecsc = E.tocsc()
    patc = pat.tocsc()
    cols = []
    for j in range(n):
        support = patc.indices[patc.indptr[j]:patc.indptr[j + 1]]
        if support.size == 0:
            cols.append((np.empty(0, dtype=np.int64), np.empty(0)))
            continue
        sub = Ecsc[:, support]
        rows = np.unique(sub.tocoo().row)
        A_sub = np.asarray(sub[rows, :].todense())
        b = (rows == j).astype(np.float64)
        x, *_ = np.linalg.lstsq(A_sub, b, rcond=None)
        cols.append((support, x))
    data = np.concatenate([c[1] for c in cols])
    indices = np.concatenate([c[0] for c in cols])
    indptr = np.cumsum([0] + [c[0].size for c in cols])
    X = sp.csc_matrix((data, indices, indptr), shape=(n, n))
    return canonicalize(X)


def spectrum_bounds(A1, dense_limit=_DENSE_EIG_LIMIT, inflation=0.05):
    """Extreme real parts and largest |imaginary part| of eig(A1).

    Uses the dense eigensolver at desk scale; above ``dense_limit`` falls
    back to ARPACK extreme-eigenvalue estimates inflated by 5% in modulus
    to keep the spectral ellipse enclosing.
    """
    n = A1.shape[0]
    if n <= dense_limit:
        lam = np.linalg.eigvals(np.asarray(sp.csr_matrix(A1).todense()))
        return SpectrumBounds(float(lam.real.min()), float(lam.real.max()),
                              float(np.abs(lam.imag).max()))
    A1 = sp.csr_matrix(A1)
    try:
        lam_lr = spla.eigs(A1, k=4, which="LR", return_eigenvectors=False)
        lam_sr = spla.eigs(A1, k=4, which="SR", return_eigenvectors=False)
        lam_li = spla.eigs(A1, k=4, which="LI", return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise RuntimeError(f"extreme eigenvalue estimation failed: {exc}") from exc
    rs = float(min(lam_sr.real.min(), lam_lr.real.min())) * (1 + inflation)
    rl = float(lam_lr.real.max())
    rl = rl * (1 - inflation) if rl < 0 else rl * (1 + inflation)
    il = float(np.abs(lam_li.imag).max()) * (1 + inflation)
    return SpectrumBounds(rs, rl, il)


def quadrature_nodes(q, bounds):
    """Sinh-quadrature nodes and weights for the Lyapunov integral.

    psi = 3 / (2 |lambda_RL|); for j = -q..q,
    omega_j = (q + q exp(-2 j / sqrt(q)))^(-1/2) and
    t_j = log(exp(j / sqrt(q)) + sqrt(1 + exp(2 j / sqrt(q)))); the scaled
    abscissae are t~_j = psi t_j.
    """
    if q < 1:
        raise ValueError("quadrature half-width q must be >= 1")
    if bounds.lambda_RL >= 0:
        raise UnstableMatrixError(
            f"largest eigenvalue real part {bounds.lambda_RL} is not negative")
    psi = 3.0 / (2.0 * abs(bounds.lambda_RL))
    js = np.arange(-q, q + 1)
    e = np.exp(js / np.sqrt(q))
    omega = 1.0 / np.sqrt(q + q * np.exp(-2.0 * js / np.sqrt(q)))
    t = np.log(e + np.sqrt(1.0 + e * e))
    return psi, list(zip(psi * t, omega))


def faber_coefficients(c2, c3, c4, W=2048, p=30):
    """First p+1 Faber coefficients of exp on the elliptic spectral region.

    Samples g_k = exp(s_k) on the Bernstein ellipse boundary
    s_k = (c2 + c3/(4 c2)) cos(2 pi k / W) + c4
          + i (c2 - c3/(4 c2)) sin(2 pi k / W)
    and returns the real parts of the leading inverse-DFT coefficients.
    """
    if c2 <= 0:
        raise ValueError("c2 must be positive")
    theta = 2.0 * np.pi * np.arange(W) / W
    s = (c2 + c3 / (4.0 * c2)) * np.cos(theta) + c4 \
        + 1j * (c2 - c3 / (4.0 * c2)) * np.sin(theta)
    g = np.exp(s)
    a = np.fft.fft(g) / W
    return a.real[:p + 1].copy()


def _faber_constants(bounds):
    """Ellipse constants (c1..c4) for the scaled spectrum bounds."""
    c1 = 0.5 * (bounds.lambda_RL - bounds.lambda_RS)
    c4 = 0.5 * (bounds.lambda_RL + bounds.lambda_RS)
    il = bounds.lambda_IL
    if il == 0.0:
        # removable singularity of the general formulas at lambda_IL = 0
        return c1, 0.5 * c1, c1 * c1, c4
    c2 = 0.5 * (c1 ** (2.0 / 3.0) * np.sqrt(c1 ** (2.0 / 3.0) + il ** (2.0 / 3.0))
                + np.sqrt((c1 * il * il) ** (2.0 / 3.0) + il * il))
    c3 = (c1 ** (2.0 / 3.0) + il ** (2.0 / 3.0)) \
        * (c1 ** (4.0 / 3.0) - il ** (4.0 / 3.0))
    return c1, c2, c3, c4


def faber_expm(A1, t_scaled, bounds, cfg=FaberConfig(), proj_pattern=None):
    """Sparse banded approximation of exp(t_scaled * A1).

    Chebyshev three-term recurrence in the shifted variable
    A2 = (t A1 - c4 I)/sqrt(c3), projected after each step onto the
    pattern of I + A2 + ... + A2^k2 (or a caller-supplied pattern), summed
    with the Faber coefficients.
    """
    n = A1.shape[0]
    sb = bounds.scaled(t_scaled)
    c1, c2, c3, c4 = _faber_constants(sb)
    if c1 <= 1e-14 and sb.lambda_IL <= 1e-14:
        # spectrum collapses to the single point c4
        return canonicalize(np.exp(c4) * identity(n))
    if c3 <= 0:
        raise ValueError(
            f"invalid spectral ellipse (c3 = {c3:.3e}); bounds {sb}")
    A2 = canonicalize((t_scaled * sp.csr_matrix(A1) - c4 * identity(n))
                      / np.sqrt(c3))
    if proj_pattern is None and cfg.k2 < n:
        proj_pattern = pattern_power_sum(binarize(A2), cfg.k2)
    a = faber_coefficients(c2, c3, c4, W=cfg.W, p=cfg.p)
    scale = np.sqrt(c3) / (2.0 * c2)

    K = a[0] * identity(n)
    T_prev = identity(n)
    T_cur = A2
    if cfg.p >= 1:
        K = canonicalize(K + a[1] * 2.0 * scale * T_cur)
    pw = scale
    for l in range(2, cfg.p + 1):
        T_next = 2.0 * (A2 @ T_cur) - T_prev
        if proj_pattern is not None:
            T_next = project(T_next, proj_pattern)
        else:
            T_next = canonicalize(T_next)
        T_prev, T_cur = T_cur, T_next
        pw *= scale
        K = canonicalize(K + a[l] * 2.0 * pw * T_cur)
    return K


def transformed_problem(Abar, E, P, k1):
    """SPAI-based reduction of the GL equation to non-generalized form.

    Returns (A1, P1, spai_residual) with A1 = Einv^T Abar^T and
    P1 = Einv^T P Einv, where Einv approximates E^{-1} on the pattern
    I + E + ... + E^{k1}.
    """
    pat = inverse_pattern(E, k1)
    Einv, residual = spai(E, pat)
    A1 = canonicalize(Einv.T @ sp.csr_matrix(Abar).T)
    P1 = canonicalize(Einv.T @ sp.csr_matrix(P) @ Einv)
    return A1, P1, residual


def initial_guess(Abar, E, P, cfg=GpConfig(), fcfg=FaberConfig()):
    """Quadrature-of-exponentials initial guess for the gradient iteration.

    X3 = -sum_j psi omega_j K~_j P1 K~_j^T over the sinh-quadrature nodes,
    with each K~_j a sparsified Faber approximation of exp(t~_j A1).
    """
    A1, P1, spai_residual = transformed_problem(Abar, E, P, cfg.k1)
    bounds = spectrum_bounds(A1)
    psi, nodes = quadrature_nodes(cfg.q, bounds)
    n = A1.shape[0]
    X3 = sp.csr_matrix((n, n))
    peak_nnz = 0
    for t_j, omega_j in nodes:
        K = faber_expm(A1, t_j, bounds, fcfg)
        X3 = canonicalize(X3 - psi * omega_j * (K @ P1 @ K.T))
        peak_nnz = max(peak_nnz, K.nnz, X3.nnz)
    X3 = canonicalize(0.5 * (X3 + X3.T))
    info = {
        "spai_residual": spai_residual,
        "fill": X3.nnz / float(n * n),
        "peak_nnz": max(peak_nnz, P1.nnz),
        "bounds": bounds,
    }
    return X3, info


def default_delta_bar(Abar, E):
    """Safe upper-bound step for the quadratic objective."""
    return 1.0 / (8.0 * frobenius(E) ** 2 * frobenius(Abar) ** 2)


@dataclass
class GpHistory:
    J: list = field(default_factory=list)
    stalled: bool = False
    peak_nnz: int = 0


def solve_lyap_gp(Abar, E, P, Zpat, X0, cfg=GpConfig(), w=-1):
    """Gradient projection iteration on the pattern-constrained objective.

    Z^{i+1} = project(Z^i - delta^i N^i) with the Armijo step
    delta^i = zeta^g delta_bar, N = -2 E R Abar^T - 2 Abar R E^T and
    R = P - E^T Z Abar - Abar^T Z E.
    """
    t0 = time.perf_counter()
    Ec = canonicalize(E)
    Ac = canonicalize(Abar)
    Pc = canonicalize(P)
    pat = binarize(Zpat)
    Z = project(X0, pat)
    delta_bar = cfg.delta_bar if cfg.delta_bar is not None \
        else default_delta_bar(Ac, Ec)

    def residual_of(Zm):
        return canonicalize(Pc - Ec.T @ Zm @ Ac - Ac.T @ Zm @ Ec)

    hist = GpHistory()
    R = residual_of(Z)
    J = frobenius(R) ** 2
    hist.J.append(J)
    converged = True
    for _ in range(cfg.max_iter):
        # the iterate moves only inside the pattern, so the gradient enters
        # both the step and the Armijo inner product through its projection
        N = project(-2.0 * (Ec @ R @ Ac.T) - 2.0 * (Ac @ R @ Ec.T), pat)
        hist.peak_nnz = max(hist.peak_nnz, N.nnz, Z.nnz, R.nnz)
        accepted = False
        delta = delta_bar
        for _g in range(61):
            Z_try = project(Z - delta * N, pat)
            R_try = residual_of(Z_try)
            J_try = frobenius(R_try) ** 2
            if J - J_try >= cfg.sigma * fro_inner(N, Z - Z_try):
                accepted = True
                break
            delta *= cfg.zeta
        if not accepted:
            hist.stalled = True
            break
        Z, R, J = Z_try, R_try, J_try
        hist.J.append(J)
        win = cfg.stagnation_window
        if win and len(hist.J) > win:
            ref = hist.J[-win - 1]
            if ref <= 0.0 or (ref - J) / ref < cfg.stagnation_rtol:
                break
    report = SolveReport(
        method="gp", n=Z.shape[0], w=w, nnz_pattern=pat.nnz,
        iterations=len(hist.J) - 1, final_residual=float(np.sqrt(hist.J[-1])),
        wall_ms=1e3 * (time.perf_counter() - t0),
        converged=converged and not hist.stalled,
        extra={"J_history": hist.J, "stalled": hist.stalled,
               "peak_nnz": hist.peak_nnz},
    )
    return canonicalize(Z), report
