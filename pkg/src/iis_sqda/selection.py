"""Elastic-net penalized logistic regression on the augmented design.

Fits minimize

    (1/n) sum_i [log(1 + exp(x_i' theta)) - delta_i x_i' theta]
        + lambda1 ||theta||_1 + lambda2 ||theta||_2^2

with the intercept unpenalized and ``theta`` restricted to the columns of a
:class:`ReducedIndexSet`. Columns are standardized before penalization and
coefficients are reported on the original scale.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .datamodel import AugmentedIndexMap, DataError, LabeledDataset, ReducedIndexSet, augmented_design
from .precision import ConvergenceWarning

LAMBDA2_RATIOS = (0.0, 0.01, 0.1, 1.0)


@dataclass(frozen=True)
class ElasticNetConfig:
    lambda1: float = 0.0
    lambda2: float = 0.0
    tol: float = 1e-7
    max_iter: int = 100
    standardize: bool = True
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    lambda2_ratios: tuple[float, ...] = LAMBDA2_RATIOS
    folds: int = 5
    criterion: str = "deviance"
    cv_tol: float = 1e-4

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("penalties must be nonnegative")
        if self.n_lambda < 1 or not self.lambda2_ratios:
            raise ValueError("lambda grids must be nonempty")
        if self.criterion not in ("deviance", "misclassification"):
            raise ValueError(f"unknown CV criterion {self.criterion!r}")


@dataclass
class QuadraticClassifier:
    """Coefficients over the augmented basis; class 1 iff ``x' theta > 0``."""

    p: int
    theta: np.ndarray
    provenance: str = "penalized"
    tuning: dict = field(default_factory=dict)
    kkt_residual: float | None = None
    ridge_fallback: bool = False

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (AugmentedIndexMap(self.p).p_tilde,):
            raise ValueError("theta length must be (p+1)(p+2)/2")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.theta)

    @property
    def index_map(self) -> AugmentedIndexMap:
        return AugmentedIndexMap(self.p)

    def main_effects(self) -> list[int]:
        act = self.active_set
        return [int(i - 1) for i in act if 1 <= i <= self.p]

    def interactions(self) -> list[tuple[int, int]]:
        amap = self.index_map
        return [amap.kind(int(i))[1:] for i in self.active_set if i > self.p]

    def decision_function(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.p:
            raise ValueError(f"expected {self.p} features, got {Z.shape[1]}")
        act = self.active_set
        if act.size == 0:
            return np.zeros(Z.shape[0])
        return augmented_design(Z, act) @ self.theta[act]

    def predict(self, Z) -> np.ndarray:
        return np.where(self.decision_function(Z) > 0, 1, 2)

    def to_dict(self) -> dict:
        amap = self.index_map
        records = []
        for i in self.active_set:
            kind = amap.kind(int(i))
            rec = {"kind": kind[0], "j": None, "l": None, "value": float(self.theta[i])}
            if kind[0] == "main":
                rec["j"] = kind[1]
            elif kind[0] == "inter":
                rec["j"], rec["l"] = kind[1], kind[2]
            records.append(rec)
        return {"p": self.p, "activeSet": records, "provenance": self.provenance,
                "tuning": self.tuning, "ridgeFallback": self.ridge_fallback}

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticClassifier":
        p = int(d["p"])
        amap = AugmentedIndexMap(p)
        theta = np.zeros(amap.p_tilde)
        for rec in d["activeSet"]:
            if rec["kind"] == "intercept":
                idx = 0
            elif rec["kind"] == "main":
                idx = amap.main_index(int(rec["j"]))
            else:
                idx = amap.inter_index(int(rec["j"]), int(rec["l"]))
            theta[idx] = float(rec["value"])
        return cls(p, theta, d.get("provenance", "penalized"), d.get("tuning", {}),
                   ridge_fallback=bool(d.get("ridgeFallback", False)))


# ---------------------------------------------------------------------------
# numerical kernels (standardized design, intercept handled separately)


@njit(cache=True)
def _cd_weighted(X, w, r, beta, xsq, lam1, lam2, tol, max_sweeps):
    """Coordinate descent for weighted least squares with elastic-net penalty.

    Minimizes (1/2n) sum w_i (r_i)^2 + lam1 |beta|_1 + lam2 |beta|^2 where
    ``r`` is the current residual (updated in place, includes the intercept
    shift). Returns the total intercept shift applied to ``r``.
    """
    n, m = X.shape
    sw = 0.0
    for i in range(n):
        sw += w[i]
    shift = 0.0
    active_only = False
    for _ in range(max_sweeps):
        max_delta = 0.0
        # intercept
        s = 0.0
        for i in range(n):
            s += w[i] * r[i]
        d0 = s / sw
        if d0 != 0.0:
            for i in range(n):
                r[i] -= d0
            shift += d0
            if abs(d0) * math.sqrt(sw / n) > max_delta:
                max_delta = abs(d0) * math.sqrt(sw / n)
        for j in range(m):
            old = beta[j]
            if active_only and old == 0.0:
                continue
            if xsq[j] == 0.0:
                continue
            g = 0.0
            for i in range(n):
                g += w[i] * X[i, j] * r[i]
            g = g / n + xsq[j] * old
            if g > lam1:
                new = (g - lam1) / (xsq[j] + 2.0 * lam2)
            elif g < -lam1:
                new = (g + lam1) / (xsq[j] + 2.0 * lam2)
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                for i in range(n):
                    r[i] -= d * X[i, j]
                beta[j] = new
                ad = abs(d) * math.sqrt(xsq[j])
                if ad > max_delta:
                    max_delta = ad
        if max_delta < tol:
            if active_only:
                active_only = False
            else:
                break
        else:
            active_only = True
    return shift


@njit(cache=True)
def _logistic_objective(eta, y, beta, lam1, lam2):
    n = eta.shape[0]
    s = 0.0
    for i in range(n):
        e = eta[i]
        if e > 0:
            s += e + math.log1p(math.exp(-e)) - y[i] * e
        else:
            s += math.log1p(math.exp(e)) - y[i] * e
    pen = 0.0
    for j in range(beta.shape[0]):
        pen += lam1 * abs(beta[j]) + lam2 * beta[j] * beta[j]
    return s / n + pen


@njit(cache=True)
def _sigmoid(eta):
    out = np.empty_like(eta)
    for i in range(eta.shape[0]):
        e = eta[i]
        if e >= 0:
            out[i] = 1.0 / (1.0 + math.exp(-e))
        else:
            t = math.exp(e)
            out[i] = t / (1.0 + t)
    return out


@njit(cache=True)
def _kkt(X, y, prob, beta, lam1, lam2, usable):
    n, m = X.shape
    g0 = 0.0
    for i in range(n):
        g0 += prob[i] - y[i]
    worst = abs(g0 / n)
    for j in range(m):
        if not usable[j]:
            continue
        g = 0.0
        for i in range(n):
            g += X[i, j] * (prob[i] - y[i])
        g = g / n + 2.0 * lam2 * beta[j]
        if beta[j] > 0:
            v = abs(g + lam1)
        elif beta[j] < 0:
            v = abs(g - lam1)
        else:
            v = max(abs(g) - lam1, 0.0)
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def _logit_enet(X, y, lam1, lam2, beta, b0, tol, max_newton):
    """Proximal Newton for the standardized problem; updates ``beta`` in place.

    Returns (intercept, kkt residual, newton iterations).
    """
    n, m = X.shape
    usable = np.empty(m, dtype=np.bool_)
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        usable[j] = s > 0.0
    eta = X @ beta + b0
    xsq = np.empty(m)
    w = np.empty(n)
    r = np.empty(n)
    kkt = np.inf
    it = 0
    for it in range(max_newton):
        prob = _sigmoid(eta)
        kkt = _kkt(X, y, prob, beta, lam1, lam2, usable)
        if kkt <= tol:
            return b0, kkt, it
        for i in range(n):
            w[i] = max(prob[i] * (1.0 - prob[i]), 1e-6)
            r[i] = (y[i] - prob[i]) / w[i]
        for j in range(m):
            s = 0.0
            for i in range(n):
                s += w[i] * X[i, j] * X[i, j]
            xsq[j] = s / n
        new_beta = beta.copy()
        inner_tol = min(1e-3, 0.1 * kkt) * 1e-2
        shift = _cd_weighted(X, w, r, new_beta, xsq, lam1, lam2, max(inner_tol, 1e-13), 10000)
        d_beta = new_beta - beta
        d_eta = X @ d_beta + shift
        f0 = _logistic_objective(eta, y, beta, lam1, lam2)
        t = 1.0
        accepted = False
        for _ in range(40):
            cand = beta + t * d_beta
            f1 = _logistic_objective(eta + t * d_eta, y, cand, lam1, lam2)
            if f1 <= f0 + 1e-15 * abs(f0):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        beta[:] = beta + t * d_beta
        # keep exact zeros from the CD solution when the full step is taken
        if t == 1.0:
            for j in range(m):
                if new_beta[j] == 0.0:
                    beta[j] = 0.0
        b0 += t * shift
        eta = eta + t * d_eta
    prob = _sigmoid(eta)
    kkt = _kkt(X, y, prob, beta, lam1, lam2, usable)
    return b0, kkt, it + 1


@njit(cache=True)
def _lasso_ls(X, y, lam1, beta, b0, tol):
    """Least-squares lasso (1/2n)||y - b0 - X beta||^2 + lam1 |beta|_1."""
    n, m = X.shape
    w = np.ones(n)
    r = y - X @ beta - b0
    xsq = np.empty(m)
    for j in range(m):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        xsq[j] = s / n
    shift = _cd_weighted(X, w, r, beta, xsq, lam1, 0.0, tol, 100000)
    return b0 + shift


# ---------------------------------------------------------------------------
# standardized design handling


class _Standardizer:
    def __init__(self, X, standardize=True):
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.constant = sd <= 1e-12 * np.maximum(1.0, np.abs(self.mean))
        if standardize:
            self.scale = np.where(self.constant, 1.0, sd)
        else:
            self.scale = np.ones(X.shape[1])

    def transform(self, X):
        Xs = (X - self.mean) / self.scale
        Xs[:, self.constant] = 0.0
        return np.ascontiguousarray(Xs)

    def back(self, beta, b0):
        coef = beta / self.scale
        return b0 - float(np.dot(coef, self.mean)), coef


def logistic_loss(theta, X, y) -> float:
    """Mean logistic loss ``n^-1 sum [log(1 + e^eta) - y eta]`` with ``eta = X theta``."""
    eta = np.asarray(X, dtype=float) @ np.asarray(theta, dtype=float)
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def logistic_gradient(theta, X, y) -> np.ndarray:
    """Gradient of :func:`logistic_loss` with respect to `theta`."""
    X = np.asarray(X, dtype=float)
    eta = X @ np.asarray(theta, dtype=float)
    prob = 0.5 * (1.0 + np.tanh(0.5 * eta))
    return X.T @ (prob - y) / X.shape[0]


def lambda1_max(Xs, y) -> float:
    """Smallest lambda1 at which only the intercept is nonzero."""
    n = Xs.shape[0]
    if Xs.shape[1] == 0:
        return 1.0
    return float(np.max(np.abs(Xs.T @ (y - y.mean()))) / n)


def _deviance(Xs, y, beta, b0):
    eta = Xs @ beta + b0
    return float(2.0 * np.mean(np.logaddexp(0.0, eta) - y * eta))


def _fit_path(Xs, y, lam1s, lam2s, tol, max_iter, early_stop=False):
    """Warm-started fits along paired (lambda1, lambda2) values.

    With `early_stop`, the path is truncated once the training deviance is
    below 0.1% of the null deviance or improves by less than 1e-5
    (relative); remaining entries repeat the last fit.
    """
    m = Xs.shape[1]
    beta = np.zeros(m)
    ybar = float(np.clip(y.mean(), 1e-10, 1 - 1e-10))
    b0 = math.log(ybar / (1 - ybar))
    null_dev = -2.0 * (ybar * math.log(ybar) + (1 - ybar) * math.log(1 - ybar))
    betas, b0s, kkts = [], [], []
    prev_dev = null_dev
    for l1, l2 in zip(lam1s, lam2s):
        if early_stop and betas and (prev_dev < 1e-3 * null_dev or stalled):
            betas.append(betas[-1])
            b0s.append(b0s[-1])
            kkts.append(np.nan)
            continue
        b0, kkt, _ = _logit_enet(Xs, y, float(l1), float(l2), beta, b0, tol, max_iter)
        betas.append(beta.copy())
        b0s.append(b0)
        kkts.append(kkt)
        dev = _deviance(Xs, y, beta, b0)
        stalled = np.any(beta != 0) and (prev_dev - dev) < 1e-5 * prev_dev
        prev_dev = dev
    return betas, b0s, kkts


def fit_logistic_enet(X, y, lambda1, lambda2, tol=1e-7, max_iter=100, standardize=True):
    """Fit on an explicit design without intercept column.

    Returns ``(intercept, coefficients, kkt_residual)`` on the original scale.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.all(y == y[0]):
        raise DataError("all observations belong to one class")
    st = _Standardizer(X, standardize)
    Xs = st.transform(X)
    betas, b0s, kkts = _fit_path(Xs, y, [lambda1], [lambda2], tol, max_iter)
    if kkts[0] > tol:
        warnings.warn(f"elastic-net fit stopped with KKT residual {kkts[0]:.3g} > tol={tol:g}",
                      ConvergenceWarning, stacklevel=2)
    b0, coef = st.back(betas[0], b0s[0])
    return b0, coef, kkts[0]


def _design(data: LabeledDataset, reduced: ReducedIndexSet):
    if reduced.p != data.p:
        raise ValueError(f"reduced set built for p={reduced.p}, data has p={data.p}")
    cols = reduced.active_columns[1:]  # drop intercept
    return cols, augmented_design(data.features, cols)


def fit_elastic_net_logistic(data: LabeledDataset, reduced: ReducedIndexSet,
                             cfg: ElasticNetConfig) -> QuadraticClassifier:
    cols, X = _design(data, reduced)
    b0, coef, kkt = fit_logistic_enet(X, data.delta, cfg.lambda1, cfg.lambda2,
                                      cfg.tol, cfg.max_iter, cfg.standardize)
    theta = np.zeros(AugmentedIndexMap(data.p).p_tilde)
    theta[0] = b0
    theta[cols] = coef
    return QuadraticClassifier(data.p, theta, "penalized",
                               {"lambda1": cfg.lambda1, "lambda2": cfg.lambda2}, kkt)


def stratified_folds(labels, folds: int, rng) -> np.ndarray:
    labels = np.asarray(labels)
    assign = np.empty(labels.shape[0], dtype=int)
    for k in np.unique(labels):
        idx = np.flatnonzero(labels == k)
        if idx.size < folds:
            raise DataError(f"class {k} has {idx.size} samples, fewer than {folds} folds")
        assign[rng.permutation(idx)] = np.arange(idx.size) % folds
    return assign


def _heldout_score(Xs_test, y_test, beta, b0, criterion):
    eta = Xs_test @ beta + b0
    if criterion == "misclassification":
        return float(np.mean((eta > 0) != (y_test == 1)))
    # per-observation loss log(1 + e^eta) - y eta, capped as if probabilities
    # were clipped to [1e-15, 1 - 1e-15]
    loss = np.minimum(np.logaddexp(0.0, eta) - y_test * eta, -np.log(1e-15))
    return float(2.0 * np.mean(loss))


def cv_tune(data: LabeledDataset, reduced: ReducedIndexSet, grid1=None, grid2=None,
            folds: int = 5, seed=0, cfg: ElasticNetConfig | None = None) -> ElasticNetConfig:
    """Choose ``(lambda1, lambda2)`` by stratified K-fold cross-validation.

    `grid1` defaults to a log-spaced path below ``lambda1_max``; `grid2`
    holds lambda2/lambda1 ratios. Ties favour the larger lambda1, then the
    larger ratio.
    """
    cfg = cfg or ElasticNetConfig(folds=folds)
    if folds < 2:
        raise ValueError("folds must be at least 2")
    cols, X = _design(data, reduced)
    y = data.delta
    if grid1 is None:
        Xs = _Standardizer(X, cfg.standardize).transform(X)
        lmax = lambda1_max(Xs, y)
        grid1 = np.geomspace(lmax, cfg.lambda_min_ratio * lmax, cfg.n_lambda)
    grid1 = np.sort(np.atleast_1d(np.asarray(grid1, dtype=float)))[::-1]
    ratios = np.sort(np.atleast_1d(np.asarray(grid2 if grid2 is not None else cfg.lambda2_ratios,
                                              dtype=float)))[::-1]
    if grid1.size == 0 or ratios.size == 0:
        raise ValueError("grids must be nonempty")
    if grid1.size == 1 and ratios.size == 1:
        return _with(cfg, grid1[0], ratios[0] * grid1[0])

    rng = np.random.default_rng(seed)
    assign = stratified_folds(data.labels, folds, rng)
    scores = np.zeros((ratios.size, grid1.size))
    for f in range(folds):
        tr, te = assign != f, assign == f
        st = _Standardizer(X[tr], cfg.standardize)
        Xtr, Xte = st.transform(X[tr]), st.transform(X[te])
        for a, r in enumerate(ratios):
            betas, b0s, _ = _fit_path(Xtr, y[tr], grid1, r * grid1, cfg.cv_tol, cfg.max_iter,
                                      early_stop=True)
            for b, (beta, b0) in enumerate(zip(betas, b0s)):
                scores[a, b] += _heldout_score(Xte, y[te], beta, b0, cfg.criterion) / folds
    best = scores.min()
    # grid1 and ratios are descending, so the first near-minimum in
    # (lambda1, ratio) order is the sparsest tie
    cand = [(b, a) for b in range(grid1.size) for a in range(ratios.size)
            if scores[a, b] <= best + 1e-12]
    b, a = cand[0]
    return _with(cfg, grid1[b], ratios[a] * grid1[b])


def _with(cfg, l1, l2):
    return ElasticNetConfig(float(l1), float(l2), cfg.tol, cfg.max_iter, cfg.standardize,
                            cfg.n_lambda, cfg.lambda_min_ratio, cfg.lambda2_ratios, cfg.folds,
                            cfg.criterion, cfg.cv_tol)


def _newton_mle(Xs, y, ridge, max_iter=100, tol=1e-10):
    n, m = Xs.shape
    A = np.column_stack([np.ones(n), Xs])
    theta = np.zeros(m + 1)
    pen = np.full(m + 1, 2.0 * ridge)
    pen[0] = 0.0

    def obj(t):
        eta = A @ t
        return float(np.mean(np.logaddexp(0, eta) - y * eta) + ridge * np.sum(t[1:] ** 2))

    f = obj(theta)
    for it in range(max_iter):
        eta = A @ theta
        prob = 0.5 * (1.0 + np.tanh(0.5 * eta))
        g = A.T @ (prob - y) / n + pen * theta
        if np.max(np.abs(g)) < tol:
            return theta, True
        H = (A * (prob * (1 - prob))[:, None]).T @ A / n + np.diag(pen)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return theta, False
        t = 1.0
        while t > 1e-10:
            cand = theta - t * step
            fc = obj(cand)
            if fc <= f:
                break
            t *= 0.5
        theta, f = cand, fc
        if np.max(np.abs(theta)) > 1e4:
            return theta, False
    return theta, False


def refit_unpenalized(data: LabeledDataset, support) -> QuadraticClassifier:
    """Unpenalized logistic MLE restricted to the augmented columns `support`.

    If the classes are (quasi-)separable on the support the MLE does not
    exist; a ridge fit with lambda2 = 1e-4 is returned instead and flagged
    via ``ridge_fallback``.
    """
    support = np.unique(np.asarray(support, dtype=np.int64))
    if support.size == 0 or support[0] != 0:
        raise ValueError("support must include the intercept (index 0)")
    if support.size >= data.n:
        raise DataError(f"support of size {support.size} is not smaller than n={data.n}")
    cols = support[1:]
    X = augmented_design(data.features, cols)
    y = data.delta
    st = _Standardizer(X, True)
    if np.any(st.constant):
        raise DataError("singular design: constant column on the support")
    Xs = st.transform(X)
    if cols.size and np.linalg.matrix_rank(np.column_stack([np.ones(data.n), Xs])) < cols.size + 1:
        raise DataError("singular design on the support")
    theta_s, ok = _newton_mle(Xs, y, 0.0)
    fallback = False
    if ok:
        eta = np.column_stack([np.ones(data.n), Xs]) @ theta_s
        separated = np.all((eta > 0) == (y == 1)) and np.min(np.abs(eta)) > 5
        ok = not separated and np.max(np.abs(theta_s)) < 1e3
    if not ok:
        theta_s, _ = _newton_mle(Xs, y, 1e-4, max_iter=500)
        fallback = True
    b0, coef = st.back(theta_s[1:], theta_s[0])
    theta = np.zeros(AugmentedIndexMap(data.p).p_tilde)
    theta[0] = b0
    theta[cols] = coef
    return QuadraticClassifier(data.p, theta, "refit", {"support_size": int(support.size)},
                               ridge_fallback=fallback)
