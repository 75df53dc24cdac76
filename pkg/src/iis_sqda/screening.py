"""Innovated interaction screening.

Each observation is multiplied by an estimated class precision matrix and
every transformed coordinate is tested for a variance difference between
the two classes with

    D_j = log(pooled variance) - sum_k (n_k / n) log(class-k variance)

where class variances use the ML denominator ``n_k`` and the pooled variance
is their ``n_k / n`` weighted average. With these conventions ``n * D_j`` is
the Gaussian likelihood-ratio statistic for equal variances, so the default
threshold is a Bonferroni-corrected chi-square(1) quantile divided by ``n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .datamodel import DataError, LabeledDataset
from .precision import PrecisionEstimate


@dataclass(frozen=True)
class ScreeningResult:
    stats_omega1: np.ndarray
    stats_omega2: np.ndarray
    threshold: float
    A1: tuple[int, ...]
    A2: tuple[int, ...]
    mode: str = "threshold"

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.A1) | set(self.A2)))

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "threshold": self.threshold,
            "A1": list(self.A1),
            "A2": list(self.A2),
            "I": list(self.selected),
            "stats_omega1": self.stats_omega1.tolist(),
            "stats_omega2": self.stats_omega2.tolist(),
        }


def _as_matrix(omega) -> np.ndarray:
    if isinstance(omega, PrecisionEstimate):
        return omega.matrix
    return np.asarray(omega, dtype=float)


def innovated_transform(Z, omega) -> np.ndarray:
    """Rows ``Omega @ z_i`` for every row ``z_i`` of `Z`."""
    Z = np.asarray(Z, dtype=float)
    M = _as_matrix(omega)
    if Z.ndim != 2 or M.shape != (Z.shape[1], Z.shape[1]):
        raise ValueError(f"cannot transform {Z.shape} data with a {M.shape} matrix")
    # Omega is symmetric, so Z @ Omega has rows Omega @ z_i
    return Z @ M


def _class_ml_variances(T, labels):
    v = []
    for k in (1, 2):
        Tk = T[labels == k]
        v.append(Tk.var(axis=0))
    return v


def _statistic(v1, v2, n1, n2):
    n = n1 + n2
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise DataError("degenerate transformed feature: zero within-class variance")
    pooled = (n1 * v1 + n2 * v2) / n
    D = np.log(pooled) - (n1 / n) * np.log(v1) - (n2 / n) * np.log(v2)
    # exact zero when the class variances coincide; clip rounding noise
    return np.maximum(D, 0.0)


def variance_statistic(column, labels, n1: int | None = None, n2: int | None = None) -> float:
    """Variance-difference statistic for one transformed feature."""
    column = np.asarray(column, dtype=float)
    labels = np.asarray(labels)
    if n1 is None:
        n1 = int(np.sum(labels == 1))
    if n2 is None:
        n2 = int(np.sum(labels == 2))
    v1, v2 = _class_ml_variances(column[:, None], labels)
    return float(_statistic(v1, v2, n1, n2)[0])


def variance_statistics(T, labels) -> np.ndarray:
    """:func:`variance_statistic` for every column of `T`."""
    labels = np.asarray(labels)
    n1, n2 = int(np.sum(labels == 1)), int(np.sum(labels == 2))
    v1, v2 = _class_ml_variances(np.asarray(T, dtype=float), labels)
    return _statistic(v1, v2, n1, n2)


def default_threshold(n: int, p: int, alpha: float = 0.05) -> float:
    """``chi2_1`` quantile at level ``1 - alpha / p``, divided by `n`."""
    if n <= 2 or p < 1 or not 0 < alpha < 1:
        raise ValueError("need n > 2, p >= 1 and 0 < alpha < 1")
    return float(stats.chi2.isf(alpha / p, df=1) / n)


def screen(data: LabeledDataset, omega1, omega2, threshold: float | None = None,
           alpha: float = 0.05) -> ScreeningResult:
    """Threshold the statistics of both innovated transforms.

    ``A_k`` holds the features whose statistic under the class-k transform
    exceeds `threshold`; the screened set is their union.
    """
    if threshold is None:
        threshold = default_threshold(data.n, data.p, alpha)
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    d1 = variance_statistics(innovated_transform(data.features, omega1), data.labels)
    d2 = variance_statistics(innovated_transform(data.features, omega2), data.labels)
    A1 = tuple(int(j) for j in np.flatnonzero(d1 > threshold))
    A2 = tuple(int(j) for j in np.flatnonzero(d2 > threshold))
    return ScreeningResult(d1, d2, float(threshold), A1, A2, "threshold")


def _conditional_statistics(T, labels, current):
    """Statistics of every column given ``T[:, current]``.

    Each column is regressed on the current set with class-specific
    intercepts. Under the null the slope and the residual variance are
    shared by both classes; under the alternative both are class-specific.
    The returned value is the log ratio of the null to the alternative
    residual variances, so ``n`` times it is the likelihood-ratio statistic
    on ``1 + len(current)`` degrees of freedom. With an empty set this is
    the marginal statistic.
    """
    labels = np.asarray(labels)
    n1, n2 = int(np.sum(labels == 1)), int(np.sum(labels == 2))
    n = n1 + n2
    centered = [T[labels == k] - T[labels == k].mean(axis=0) for k in (1, 2)]

    def residual_ms(A):
        if not current:
            return np.mean(A ** 2, axis=0)
        C = A[:, current]
        coef, *_ = np.linalg.lstsq(C, A, rcond=None)
        return np.mean((A - C @ coef) ** 2, axis=0)

    v1, v2 = (residual_ms(A) for A in centered)
    pooled = residual_ms(np.vstack(centered))
    ok = np.ones(T.shape[1], dtype=bool)
    ok[current] = False
    tiny = np.finfo(float).tiny
    # perfectly explained by the current set: nothing left to detect
    v1, v2, pooled = (np.maximum(v[ok], tiny) for v in (v1, v2, pooled))
    out = np.full(T.shape[1], np.nan)
    out[ok] = np.maximum(np.log(pooled) - (n1 / n) * np.log(v1) - (n2 / n) * np.log(v2), 0.0)
    return out


def _leave_one_out_statistic(T, labels, current, j):
    rest = [i for i in current if i != j]
    sub = T[:, rest + [j]]
    return _conditional_statistics(sub, labels, list(range(len(rest))))[-1]


def _chi2_threshold(n, df, level):
    return float(stats.chi2.isf(level, df=df) / n)


def _stepwise_one(T, labels, start, enter, stay, max_sweeps):
    """`enter` and `stay` map the conditioning-set size to a threshold."""
    current = sorted(start)
    banned: set[int] = set()
    p = T.shape[1]
    for _ in range(max_sweeps):
        changed = False
        if len(current) < min(p, len(labels) // 2 - 2):
            cond = _conditional_statistics(T, labels, current)
            for b in banned:
                cond[b] = np.nan
            if np.any(~np.isnan(cond)):
                j = int(np.nanargmax(cond))
                if cond[j] > enter(len(current)):
                    current = sorted(current + [j])
                    changed = True
        for j in list(current):
            if len(current) > 1 and _leave_one_out_statistic(T, labels, current, j) < stay(len(current) - 1):
                current.remove(j)
                banned.add(j)
                changed = True
        if not changed:
            break
    return tuple(current)


def stepwise_screen(data: LabeledDataset, omega1, omega2, alpha_enter: float = 0.05,
                    alpha_stay: float = 0.05, threshold: float | None = None) -> ScreeningResult:
    """Forward/backward refinement of the threshold-mode screen.

    Starting from the threshold result, each sweep adds the feature with the
    largest statistic conditional on the current set if it beats the entry
    threshold, then drops members whose leave-one-out conditional statistic
    falls below the stay threshold. Conditioning on ``k`` features gives a
    likelihood-ratio test on ``k + 1`` degrees of freedom (see
    :func:`_conditional_statistics`). The entry threshold is
    Bonferroni-corrected over the ``p`` candidates, the stay threshold is a
    single-test quantile, and an explicit `threshold` replaces both.
    Dropped features cannot re-enter, and at most ``p`` sweeps run.
    """
    base = screen(data, omega1, omega2, threshold=threshold, alpha=alpha_enter)
    n, p = data.n, data.p
    if threshold is not None:
        enter = stay = lambda k: base.threshold
    else:
        if not 0 < alpha_stay < 1:
            raise ValueError("alpha_stay must lie in (0, 1)")
        enter = lambda k: _chi2_threshold(n, k + 1, alpha_enter / p)
        stay = lambda k: _chi2_threshold(n, k + 1, alpha_stay)
    sets = []
    for omega, start in ((omega1, base.A1), (omega2, base.A2)):
        T = innovated_transform(data.features, omega)
        sets.append(_stepwise_one(T, data.labels, start, enter, stay, p))
    return ScreeningResult(base.stats_omega1, base.stats_omega2, float(enter(0)),
                           sets[0], sets[1], "stepwise")


def population_interaction_set(scenario, tol: float = 1e-10):
    """Population sets ``(A1, A2, I)`` from the transformed covariance differences.

    These are the nonzero diagonal entries of the between-class covariance
    difference of the transformed features: ``Omega1 Sigma2 Omega1 - Omega1``
    for ``A1`` and ``Omega2 - Omega2 Sigma1 Omega2`` for ``A2``.
    """
    O1 = scenario.Omega1
    S1 = scenario.Sigma1
    S2 = scenario.Sigma2
    O2 = scenario.Omega2
    d1 = np.diag(O1 @ S2 @ O1 - O1)
    d2 = np.diag(O2 - O2 @ S1 @ O2)
    A1 = tuple(int(j) for j in np.flatnonzero(np.abs(d1) > tol))
    A2 = tuple(int(j) for j in np.flatnonzero(np.abs(d2) > tol))
    return A1, A2, tuple(sorted(set(A1) | set(A2)))
