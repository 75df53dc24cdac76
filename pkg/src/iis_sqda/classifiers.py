"""Decision rules: population Bayes rule, plug-in LDA/QDA, penalized baselines,
the oracle QDA and the two-stage screening + selection classifier."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .datamodel import AugmentedIndexMap, DataError, LabeledDataset, ReducedIndexSet, augmented_design
from .precision import PrecisionEstimate, estimate_precision
from .screening import ScreeningResult, screen, stepwise_screen
from .selection import (
    ElasticNetConfig,
    QuadraticClassifier,
    _lasso_ls,
    _Standardizer,
    cv_tune,
    fit_elastic_net_logistic,
    refit_unpenalized,
    stratified_folds,
)


def _spd_inverse(M, what="matrix"):
    M = np.asarray(M, dtype=float)
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{what} is not symmetric positive definite") from None
    Linv = np.linalg.inv(L)
    inv = Linv.T @ Linv
    return 0.5 * (inv + inv.T), 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True)
class GaussianScenario:
    """Two Gaussian classes ``N(mu1, Sigma1)`` (prior `prior`) and ``N(0, Sigma2)``."""

    name: str
    prior: float
    mu1: np.ndarray
    Omega1: np.ndarray
    Omega2: np.ndarray
    Sigma1: np.ndarray = field(init=False, repr=False)
    Sigma2: np.ndarray = field(init=False, repr=False)
    support_tol: float = 1e-12

    def __post_init__(self):
        if not 0 < self.prior < 1:
            raise ValueError("prior must lie in (0, 1)")
        O1 = np.array(self.Omega1, dtype=float)
        O2 = np.array(self.Omega2, dtype=float)
        mu1 = np.array(self.mu1, dtype=float)
        for M, nm in ((O1, "Omega1"), (O2, "Omega2")):
            if not np.allclose(M, M.T, atol=1e-14):
                raise ValueError(f"{nm} must be symmetric")
        S1, _ = _spd_inverse(O1, "Omega1")
        S2, _ = _spd_inverse(O2, "Omega2")
        for nm, v in (("mu1", mu1), ("Omega1", O1), ("Omega2", O2), ("Sigma1", S1), ("Sigma2", S2)):
            v.setflags(write=False)
            object.__setattr__(self, nm, v)

    @property
    def p(self) -> int:
        return self.mu1.shape[0]

    @property
    def mu2(self) -> np.ndarray:
        return np.zeros(self.p)

    @property
    def Omega(self) -> np.ndarray:
        return self.Omega2 - self.Omega1

    @property
    def delta(self) -> np.ndarray:
        return self.Omega1 @ self.mu1

    @property
    def true_main_support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(np.abs(self.delta) > self.support_tol))

    @property
    def true_interaction_support(self) -> tuple[tuple[int, int], ...]:
        Om = self.Omega
        j, l = np.triu_indices(self.p)
        keep = np.abs(Om[j, l]) > self.support_tol
        return tuple((int(a), int(b)) for a, b in zip(j[keep], l[keep]))

    @property
    def interaction_variables(self) -> tuple[int, ...]:
        rows = np.any(np.abs(self.Omega) > self.support_tol, axis=1)
        return tuple(int(j) for j in np.flatnonzero(rows))


@dataclass(frozen=True)
class BayesRule:
    """Quadratic score ``Q(z) = z' Omega z / 2 + delta' z + zeta``."""

    Omega: np.ndarray
    delta: np.ndarray
    zeta: float
    name: str = "bayes"

    @property
    def p(self) -> int:
        return self.delta.shape[0]

    def decision_function(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.p:
            raise ValueError(f"expected {self.p} features, got {Z.shape[1]}")
        quad = 0.5 * np.einsum("ij,jk,ik->i", Z, self.Omega, Z) if np.any(self.Omega) else 0.0
        return quad + Z @ self.delta + self.zeta

    def predict(self, Z) -> np.ndarray:
        return np.where(self.decision_function(Z) > 0, 1, 2)

    def to_classifier(self, provenance: str | None = None) -> QuadraticClassifier:
        """Same rule expressed on the augmented basis."""
        p = self.p
        amap = AugmentedIndexMap(p)
        theta = np.zeros(amap.p_tilde)
        theta[0] = self.zeta
        theta[1:p + 1] = self.delta
        j, l = amap.pairs()
        theta[p + 1:] = np.where(j == l, 0.5, 1.0) * 0.5 * (self.Omega[j, l] + self.Omega[l, j])
        return QuadraticClassifier(p, theta, provenance or self.name)


def bayes_rule(scenario: GaussianScenario) -> BayesRule:
    """Population Bayes rule; class 1 iff ``Q(z) > 0``."""
    pi = scenario.prior
    _, logdet1 = _spd_inverse(scenario.Sigma1, "Sigma1")
    _, logdet2 = _spd_inverse(scenario.Sigma2, "Sigma2")
    mu1 = scenario.mu1
    zeta = (math.log(pi / (1 - pi)) + 0.5 * (logdet2 - logdet1)
            - 0.5 * float(mu1 @ scenario.Omega1 @ mu1))
    return BayesRule(scenario.Omega.copy(), scenario.delta.copy(), zeta, "bayes")


def classify(rule, z):
    """Class label(s) in {1, 2}; a score of exactly 0 goes to class 2."""
    z = np.asarray(z, dtype=float)
    labels = rule.predict(np.atleast_2d(z))
    return int(labels[0]) if z.ndim == 1 else labels


def misclassification_rate(rule, testset: LabeledDataset) -> float:
    if testset.n == 0:
        raise ValueError("empty test set")
    return float(np.mean(rule.predict(testset.features) != testset.labels))


# ---------------------------------------------------------------------------
# plug-in discriminants


def _check_invertible(S, what):
    cond = np.linalg.cond(S)
    if not np.isfinite(cond) or cond > 1e12:
        raise DataError(f"{what} is singular; use a sparse method when p is close to or exceeds n")


def lda_plugin(data: LabeledDataset) -> BayesRule:
    n1, n2, n, p = data.n1, data.n2, data.n, data.p
    if n - 2 < p:
        raise DataError(f"pooled covariance is singular for p={p} >= n-1={n - 1}; "
                        "use a sparse method when p exceeds n")
    X1, X2 = data.class_features(1), data.class_features(2)
    m1, m2 = X1.mean(axis=0), X2.mean(axis=0)
    S = ((X1 - m1).T @ (X1 - m1) + (X2 - m2).T @ (X2 - m2)) / (n - 2)
    _check_invertible(S, "pooled covariance")
    d = np.linalg.solve(S, m1 - m2)
    zeta = math.log(n1 / n2) - 0.5 * float((m1 + m2) @ d)
    return BayesRule(np.zeros((p, p)), d, zeta, "lda")


def _qda_parts(X1, X2, prior):
    m1, m2 = X1.mean(axis=0), X2.mean(axis=0)
    S1 = np.atleast_2d(np.cov(X1, rowvar=False))
    S2 = np.atleast_2d(np.cov(X2, rowvar=False))
    _check_invertible(S1, "class 1 covariance")
    _check_invertible(S2, "class 2 covariance")
    P1, ld1 = _spd_inverse(S1, "class 1 covariance")
    P2, ld2 = _spd_inverse(S2, "class 2 covariance")
    Omega = P2 - P1
    delta = P1 @ m1 - P2 @ m2
    zeta = (math.log(prior / (1 - prior)) + 0.5 * (ld2 - ld1)
            - 0.5 * float(m1 @ P1 @ m1) + 0.5 * float(m2 @ P2 @ m2))
    return Omega, delta, zeta


def qda_plugin(data: LabeledDataset) -> BayesRule:
    if min(data.n1, data.n2) <= data.p:
        raise DataError(f"class covariances are singular for p={data.p} >= n_k; "
                        "use a sparse method when p exceeds n")
    Omega, delta, zeta = _qda_parts(data.class_features(1), data.class_features(2),
                                    data.n1 / data.n)
    return BayesRule(Omega, delta, zeta, "qda")


def oracle_classifier(scenario: GaussianScenario, data: LabeledDataset,
                      project: bool = True) -> QuadraticClassifier:
    """Plug-in QDA on the true main-effect and interaction variables only.

    With `project`, coefficients of terms outside the true sparse model
    (known to be zero) are dropped from the fitted rule.
    """
    if scenario.p != data.p:
        raise ValueError("scenario and data dimensions differ")
    keep = sorted(set(scenario.true_main_support) | set(scenario.interaction_variables))
    p = data.p
    prior = data.n1 / data.n
    Omega = np.zeros((p, p))
    delta = np.zeros(p)
    if keep:
        if len(keep) >= min(data.n1, data.n2):
            raise DataError(f"oracle support of {len(keep)} variables is too large for the sample")
        X = data.features[:, keep]
        O, d, zeta = _qda_parts(X[data.labels == 1], X[data.labels == 2], prior)
        Omega[np.ix_(keep, keep)] = O
        delta[keep] = d
    else:
        zeta = math.log(prior / (1 - prior))
    clf = BayesRule(Omega, delta, zeta, "oracle").to_classifier("oracle")
    if project:
        amap = clf.index_map
        keep_cols = [0] + [amap.main_index(j) for j in scenario.true_main_support]
        keep_cols += [amap.inter_index(j, l) for j, l in scenario.true_interaction_support]
        theta = np.zeros_like(clf.theta)
        theta[keep_cols] = clf.theta[keep_cols]
        clf.theta = theta
    return clf


# ---------------------------------------------------------------------------
# penalized baselines


def _select_and_refit(data, reduced, cfg, seed, l2_ratios):
    tuned = cv_tune(data, reduced, grid2=l2_ratios, folds=cfg.folds, seed=seed, cfg=cfg)
    pen = fit_elastic_net_logistic(data, reduced, tuned)
    support = pen.active_set
    if support.size == 0 or support[0] != 0:
        support = np.concatenate(([0], support))
    try:
        clf = refit_unpenalized(data, support)
    except DataError:
        clf = pen
    clf.tuning = {"lambda1": tuned.lambda1, "lambda2": tuned.lambda2,
                  "penalized_support": int(pen.active_set.size)}
    return clf


def plr_baseline(data: LabeledDataset, interactions: str = "none", cfg: ElasticNetConfig | None = None,
                 seed=0, max_terms: int = 25_000) -> QuadraticClassifier:
    """Lasso logistic regression on main effects (``"none"``) or the full basis (``"all"``)."""
    cfg = cfg or ElasticNetConfig()
    if interactions == "none":
        reduced = ReducedIndexSet(data.p, ())
    elif interactions == "all":
        p_tilde = AugmentedIndexMap(data.p).p_tilde
        if p_tilde > max_terms:
            raise MemoryError(f"full interaction basis has {p_tilde} columns, above the "
                              f"limit of {max_terms}; raise max_terms to override")
        reduced = ReducedIndexSet.full(data.p)
    else:
        raise ValueError("interactions must be 'none' or 'all'")
    return _select_and_refit(data, reduced, cfg, seed, (0.0,))


# residual fraction of the training sum of squares below which a lasso path stops
_SATURATION = 1e-2


def dsda_baseline(data: LabeledDataset, folds: int = 5, seed=0, n_lambda: int = 50,
                  lambda_min_ratio: float = 1e-3) -> BayesRule:
    """Sparse linear discriminant from a lasso regression on coded labels.

    Class 1 is coded ``-n/n1`` and class 2 ``n/n2``. The penalty is chosen by
    stratified CV on held-out squared error (ties go to the larger penalty),
    the selected support is refit by least squares, and the cutoff places
    the boundary at the midpoint of the class score means, shifted by the
    log prior ratio.
    """
    X = data.features
    n, n1, n2 = data.n, data.n1, data.n2
    y = np.where(data.labels == 1, -n / n1, n / n2)

    st = _Standardizer(X)
    Xs = st.transform(X)
    lmax = float(np.max(np.abs(Xs.T @ (y - y.mean()))) / n)
    grid = np.geomspace(lmax, lambda_min_ratio * lmax, n_lambda) if lmax > 0 else np.array([1.0])

    tol = 1e-7 * float(y.std())
    rng = np.random.default_rng(seed)
    assign = stratified_folds(data.labels, folds, rng)
    err = np.zeros(grid.size)
    for f in range(folds):
        tr, te = assign != f, assign == f
        sf = _Standardizer(X[tr])
        Xtr, Xte = sf.transform(X[tr]), sf.transform(X[te])
        ytr = y[tr]
        tss = float(np.sum((ytr - ytr.mean()) ** 2))
        beta = np.zeros(X.shape[1])
        b0 = float(ytr.mean())
        for g, lam in enumerate(grid):
            b0 = _lasso_ls(Xtr, ytr, lam, beta, b0, tol)
            e = np.mean((y[te] - Xte @ beta - b0) ** 2)
            err[g] += e / folds
            # saturated fit: smaller penalties only interpolate further, so
            # carry the last error forward (ties go to the larger penalty)
            if np.sum((ytr - Xtr @ beta - b0) ** 2) <= _SATURATION * tss:
                err[g + 1:] += e / folds
                break
    best = int(np.flatnonzero(err <= err.min() + 1e-12)[0])

    beta = np.zeros(X.shape[1])
    b0 = float(y.mean())
    for lam in grid[:best + 1]:
        b0 = _lasso_ls(Xs, y, lam, beta, b0, tol)
    support = np.flatnonzero(beta)
    coef = np.zeros(X.shape[1])
    if support.size:
        if support.size < n - 1:
            A = np.column_stack([np.ones(n), X[:, support]])
            sol, *_ = np.linalg.lstsq(A, y, rcond=None)
            coef[support] = sol[1:]
        else:
            _, c = st.back(beta, b0)
            coef = c

    logit_prior = math.log(n1 / n2)
    s = X @ coef
    s1, s2 = s[data.labels == 1], s[data.labels == 2]
    var = (np.sum((s1 - s1.mean()) ** 2) + np.sum((s2 - s2.mean()) ** 2)) / (n - 2)
    if not support.size or var <= 0:
        return BayesRule(np.zeros((data.p, data.p)), np.zeros(data.p), logit_prior, "dsda")
    gap = (s1.mean() - s2.mean()) / var
    delta = coef * gap
    zeta = logit_prior - 0.5 * (s1.mean() + s2.mean()) * gap
    return BayesRule(np.zeros((data.p, data.p)), delta, float(zeta), "dsda")


# ---------------------------------------------------------------------------
# two-stage procedure


def _method_seed(seed, label):
    return int(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]).generate_state(1)[0])


def estimate_class_precisions(data: LabeledDataset, seed=0, folds: int = 5):
    """CV-tuned graphical lasso estimates for class 1 and class 2."""
    return tuple(
        estimate_precision(data.class_features(k), folds=folds, seed=_method_seed(seed, f"glasso{k}"))
        for k in (1, 2)
    )


def iis_sqda(data: LabeledDataset, precisions=None, mode: str = "stepwise", alpha: float = 0.05,
             threshold: float | None = None, cfg: ElasticNetConfig | None = None, seed=0,
             refit: bool = True) -> tuple[QuadraticClassifier, ScreeningResult]:
    """Screen interaction variables, then select and fit a sparse quadratic rule.

    `precisions` is an ``(Omega1, Omega2)`` pair (arrays or
    :class:`PrecisionEstimate`); when omitted both are estimated by
    CV-tuned graphical lasso on the respective class.
    """
    cfg = cfg or ElasticNetConfig()
    if precisions is None:
        precisions = estimate_class_precisions(data, seed)
    om1, om2 = precisions
    if mode == "stepwise":
        res = stepwise_screen(data, om1, om2, alpha, alpha, threshold=threshold)
    elif mode == "threshold":
        res = screen(data, om1, om2, threshold=threshold, alpha=alpha)
    else:
        raise ValueError(f"unknown screening mode {mode!r}")
    reduced = ReducedIndexSet(data.p, res.selected)
    sel_seed = _method_seed(seed, "selection")
    if refit:
        clf = _select_and_refit(data, reduced, cfg, sel_seed, cfg.lambda2_ratios)
    else:
        tuned = cv_tune(data, reduced, folds=cfg.folds, seed=sel_seed, cfg=cfg)
        clf = fit_elastic_net_logistic(data, reduced, tuned)
    clf.tuning = {**clf.tuning, "screened": list(res.selected), "screening_mode": res.mode}
    return clf, res
