"""A priori sparsity pattern of the generalized Lyapunov solution.

The pattern is built from the recursion

    G_1     = E P Abar^T + Abar P E^T
    G_{i+1} = E (E^T G_i Abar + Abar^T G_i E) Abar^T
            + Abar (E^T G_i Abar + Abar^T G_i E) E^T,   i = 1..w

and the result is the support of I + G_1 + ... + G_{w+1}. With safeguards
on (the default) all inputs are replaced by their elementwise absolute
values and each G_i is binarized before the next step, so accidental
numeric cancellation, overflow, or underflow cannot delete structurally
present entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import scipy.sparse as sp

from .sparsecore import ShapeMismatchError, binarize, canonicalize, identity, pattern_power_sum


@dataclass(frozen=True)
class PatternConfig:
    w: int = 1
    binarize_each_step: bool = True
    use_absolute_values: bool = True
    freeze_after_newton_iter: int = 1

    def __post_init__(self):
        if self.w < 0:
            raise ValueError("pattern order w must be >= 0")
        if self.freeze_after_newton_iter < 1:
            raise ValueError("freeze_after_newton_iter must be >= 1")


def _abs(A):
    B = canonicalize(A).copy()
    B.data = abs(B.data)
    return B


def apriori_pattern(Abar, E, P, cfg=PatternConfig()):
    """A priori pattern of the solution of E^T Z Abar + Abar^T Z E = P.

    Returns the (symmetrized) support of I + sum of the G_i recursion
    terms as a binary CSR pattern.
    """
    n = Abar.shape[0]
    for M in (Abar, E, P):
        if M.shape != (n, n):
            raise ShapeMismatchError("apriori_pattern", (n, n), M.shape)
    A = _abs(Abar) if cfg.use_absolute_values else canonicalize(Abar)
    Em = _abs(E) if cfg.use_absolute_values else canonicalize(E)
    Pm = _abs(P) if cfg.use_absolute_values else canonicalize(P)

    G = A @ Pm @ Em.T + Em @ Pm @ A.T
    if cfg.binarize_each_step:
        G = binarize(G)
    acc = binarize(identity(n) + binarize(G))
    for _ in range(cfg.w):
        H = Em.T @ G @ A + A.T @ G @ Em
        G = Em @ H @ A.T + A @ H @ Em.T
        if cfg.binarize_each_step:
            G = binarize(G)
        acc = binarize(acc + binarize(G))
    # exact Lyapunov solutions are symmetric; keep the pattern symmetric too
    return binarize(acc + acc.T)


def inverse_pattern(E, k1):
    """Pattern estimate of E^{-1}: support of I + E + ... + E^{k1}."""
    return pattern_power_sum(binarize(E), k1)


def pattern_density(X):
    X = sp.csr_matrix(X)
    return X.nnz / float(X.shape[0] * X.shape[1])
