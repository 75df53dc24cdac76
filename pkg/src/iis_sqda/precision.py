"""Class covariances and sparse precision estimation by graphical lasso.

The solver is a primal block coordinate ascent on

    log det(Omega) - trace(S Omega) - rho * sum_{j != l} |Omega_jl|

with only off-diagonal entries penalized. Each column update solves a small
lasso exactly and keeps both ``Omega`` and its inverse ``W`` in sync, so the
iterate stays positive definite and the objective never decreases.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .datamodel import DataError, LabeledDataset


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CovarianceSummary:
    means: tuple[np.ndarray, np.ndarray]
    covariances: tuple[np.ndarray, np.ndarray]
    counts: tuple[int, int]

    @property
    def prior(self) -> float:
        n1, n2 = self.counts
        return n1 / (n1 + n2)


@dataclass(frozen=True)
class PrecisionEstimate:
    matrix: np.ndarray
    penalty: float
    converged: bool = True
    kkt_residual: float = 0.0
    n_iter: int = 0
    objective_path: tuple[float, ...] = field(default=(), repr=False)

    @property
    def max_row_nonzeros(self) -> int:
        return int(np.max(np.sum(self.matrix != 0, axis=1)))

    @property
    def max_abs_entry(self) -> float:
        return float(np.max(np.abs(self.matrix)))

    @property
    def p(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix, penalty: float = 0.0) -> "PrecisionEstimate":
        """Wrap a known precision matrix (e.g. the population one)."""
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("precision matrix must be square")
        if not np.allclose(M, M.T, atol=1e-12):
            raise ValueError("precision matrix must be symmetric")
        np.linalg.cholesky(M)
        return cls(M, penalty)


def class_covariances(data: LabeledDataset) -> CovarianceSummary:
    """Within-class means and covariances (denominator ``n_k - 1``)."""
    means, covs, counts = [], [], []
    for k in (1, 2):
        Xk = data.class_features(k)
        if Xk.shape[0] < 2:
            raise DataError(f"class {k} has fewer than 2 samples")
        means.append(Xk.mean(axis=0))
        covs.append(np.atleast_2d(np.cov(Xk, rowvar=False)))
        counts.append(Xk.shape[0])
    return CovarianceSummary(tuple(means), tuple(covs), tuple(counts))


def _objective(S, Theta, rho):
    L = np.linalg.cholesky(Theta)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    off = np.abs(Theta).sum() - np.abs(np.diag(Theta)).sum()
    return logdet - np.sum(S * Theta) - rho * off


def kkt_residual(S, Theta, W, rho) -> float:
    """Largest violation of the stationarity conditions at ``Theta``.

    ``W`` must be the inverse of ``Theta``.
    """
    G = W - S
    R = np.where(Theta != 0, np.abs(G - rho * np.sign(Theta)),
                 np.maximum(np.abs(G) - rho, 0.0))
    np.fill_diagonal(R, np.abs(np.diag(G)))
    return float(R.max())


@njit(cache=True)
def _column_lasso(W, S, Theta, j, rho, u, tol, max_sweeps):
    # Solves min 0.5 t' (s22 A) t + s12' t + rho |t|_1 over t = Theta[-j, j],
    # where A = W11 - w12 w12' / w22 is the inverse of Theta with row/col j removed.
    p = W.shape[0]
    s22 = S[j, j]
    wjj = W[j, j]
    # u = A t
    for i in range(p):
        u[i] = 0.0
    for k in range(p):
        if k == j or Theta[k, j] == 0.0:
            continue
        t = Theta[k, j]
        c = W[k, j] / wjj
        for i in range(p):
            u[i] += t * (W[i, k] - W[i, j] * c)
    u[j] = 0.0

    active_only = False
    for _ in range(max_sweeps):
        max_delta = 0.0
        for k in range(p):
            if k == j:
                continue
            old = Theta[k, j]
            if active_only and old == 0.0:
                continue
            akk = W[k, k] - W[k, j] * W[k, j] / wjj
            q = s22 * akk
            g = s22 * (u[k] - akk * old) + S[k, j]
            if g > rho:
                new = -(g - rho) / q
            elif g < -rho:
                new = -(g + rho) / q
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                c = W[k, j] / wjj
                for i in range(p):
                    u[i] += d * (W[i, k] - W[i, j] * c)
                u[j] = 0.0
                Theta[k, j] = new
                ad = abs(d) * np.sqrt(q)
                if ad > max_delta:
                    max_delta = ad
        if max_delta < tol:
            if active_only:
                active_only = False
            else:
                break
        else:
            active_only = True


@njit(cache=True)
def _glasso_sweep(W, S, Theta, rho, tol, max_sweeps):
    p = W.shape[0]
    u = np.empty(p)
    for j in range(p):
        _column_lasso(W, S, Theta, j, rho, u, tol, max_sweeps)
        s22 = S[j, j]
        wjj = W[j, j]
        tu = 0.0
        for k in range(p):
            if k != j:
                Theta[j, k] = Theta[k, j]
                tu += Theta[k, j] * u[k]
        Theta[j, j] = 1.0 / s22 + tu
        # W11 <- A + s22 u u', w12 <- -s22 u, w22 <- s22
        for i in range(p):
            if i == j:
                continue
            ci = W[i, j] / wjj
            for k in range(p):
                if k == j:
                    continue
                W[i, k] = W[i, k] - ci * W[k, j] + s22 * u[i] * u[k]
        for i in range(p):
            if i != j:
                W[i, j] = -s22 * u[i]
                W[j, i] = W[i, j]
        W[j, j] = s22


def _repair_psd(S):
    p = S.shape[0]
    if np.linalg.eigvalsh(S)[0] < 1e-10:
        S = S + (1e-8 * np.trace(S) / p) * np.eye(p)
    return S


def graphical_lasso(S, rho: float, tol: float = 1e-6, max_iter: int = 200,
                    init: np.ndarray | None = None) -> PrecisionEstimate:
    """Sparse precision estimate with an off-diagonal l1 penalty `rho`.

    Iterates until the KKT residual is at most `tol`. If `max_iter` sweeps
    are exhausted first, a :class:`ConvergenceWarning` is issued and the
    returned estimate has ``converged=False``.
    """
    S = np.array(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be square")
    if not np.allclose(S, S.T, atol=1e-10):
        raise ValueError("S must be symmetric")
    if rho <= 0:
        raise ValueError("rho must be positive")
    S = 0.5 * (S + S.T)
    if np.any(np.diag(S) <= 0):
        raise ValueError("S must have a strictly positive diagonal")
    S = _repair_psd(S)
    p = S.shape[0]

    if init is None:
        Theta = np.diag(1.0 / np.diag(S))
        W = np.diag(np.diag(S)).astype(float)
    else:
        Theta = np.array(init, dtype=float)
        W = np.linalg.inv(Theta)
        W = 0.5 * (W + W.T)
    inner_tol = min(tol, 1e-6) * 1e-3

    objs = [_objective(S, Theta, rho)]
    resid = kkt_residual(S, Theta, W, rho)
    it = 0
    while resid > tol and it < max_iter:
        _glasso_sweep(W, S, Theta, rho, inner_tol, 10_000)
        it += 1
        objs.append(_objective(S, Theta, rho))
        resid = kkt_residual(S, Theta, W, rho)
        if it % 10 == 0:
            # limit drift of the incrementally updated inverse
            W = np.linalg.inv(Theta)
            W = 0.5 * (W + W.T)
            resid = kkt_residual(S, Theta, W, rho)

    W = np.linalg.inv(Theta)
    resid = kkt_residual(S, Theta, 0.5 * (W + W.T), rho)
    converged = resid <= tol
    if not converged:
        warnings.warn(f"graphical lasso stopped after {it} sweeps with KKT residual "
                      f"{resid:.3g} > tol={tol:g}", ConvergenceWarning, stacklevel=2)
    Theta = 0.5 * (Theta + Theta.T)
    return PrecisionEstimate(Theta, float(rho), converged, resid, it, tuple(objs))


def penalty_grid(S, num: int = 6, ratio: float = 0.1) -> np.ndarray:
    """Log-spaced penalties from the smallest fully diagonal one downwards."""
    S = np.asarray(S, dtype=float)
    off = np.abs(S - np.diag(np.diag(S)))
    rho_max = float(off.max()) if S.shape[0] > 1 else 1.0
    if rho_max <= 0:
        rho_max = 1.0
    return np.geomspace(rho_max, ratio * rho_max, num)


def _gaussian_loglik(S_test, Theta):
    sign, logdet = np.linalg.slogdet(Theta)
    return logdet - np.sum(S_test * Theta)


def select_penalty_cv(X, grid=None, folds: int = 5, seed=0, tol: float = 1e-4,
                      max_iter: int = 200) -> float:
    """Penalty from `grid` maximizing held-out Gaussian log-likelihood.

    `X` holds the observations of a single class. Ties go to the larger
    penalty.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if folds < 2:
        raise ValueError("folds must be at least 2")
    if grid is None:
        grid = penalty_grid(np.cov(X, rowvar=False))
    grid = np.sort(np.atleast_1d(np.asarray(grid, dtype=float)))[::-1]
    if grid.size == 0:
        raise ValueError("penalty grid is empty")
    if grid.size == 1:
        return float(grid[0])
    if n < 2 * folds:
        raise DataError(f"{n} observations cannot be split into {folds} folds of size >= 2")

    rng = np.random.default_rng(seed)
    assign = rng.permutation(np.arange(n) % folds)
    scores = np.zeros(grid.size)
    for f in range(folds):
        train, test = X[assign != f], X[assign == f]
        S_train = np.atleast_2d(np.cov(train, rowvar=False))
        S_test = np.atleast_2d(np.cov(test, rowvar=False, bias=True))
        init = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for g, rho in enumerate(grid):
                est = graphical_lasso(S_train, rho, tol=tol, max_iter=max_iter, init=init)
                init = est.matrix
                scores[g] += _gaussian_loglik(S_test, est.matrix) / folds
    # grid is descending, so argmax returns the largest penalty among ties
    best = np.flatnonzero(scores >= scores.max() - 1e-12)[0]
    return float(grid[best])


def estimate_precision(X, penalty: float | None = None, grid=None, folds: int = 5,
                       seed=0, tol: float = 1e-6, max_iter: int = 200) -> PrecisionEstimate:
    """Graphical lasso on the sample covariance of `X`, tuning by CV if needed."""
    X = np.asarray(X, dtype=float)
    S = np.atleast_2d(np.cov(X, rowvar=False))
    if penalty is None:
        penalty = select_penalty_cv(X, grid=grid, folds=folds, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return graphical_lasso(S, penalty, tol=tol, max_iter=max_iter)


@dataclass(frozen=True)
class AcceptabilityReport:
    max_abs_error: float
    max_row_nonzeros: int
    bound_ratio: float


def acceptability_report(est: PrecisionEstimate, truth, Kp: int, n: int) -> AcceptabilityReport:
    """Entrywise error of `est` relative to the ``K_p^2 sqrt(log p / n)`` rate."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != est.matrix.shape:
        raise ValueError("estimate and truth dimensions differ")
    err = float(np.max(np.abs(est.matrix - truth)))
    p = truth.shape[0]
    rate = Kp ** 2 * np.sqrt(np.log(p) / n)
    ratio = err / rate if rate > 0 else (0.0 if err == 0 else np.inf)
    return AcceptabilityReport(err, est.max_row_nonzeros, float(ratio))
