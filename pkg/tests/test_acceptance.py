"""Acceptance suite: one recorded PASS/FAIL line per criterion.

The simulation criteria run desk-scale replications and take several
minutes in total on one core. Lines are printed in the ``acceptance
criteria`` section of the pytest terminal summary.
"""
import math

import numpy as np
import pytest
from scipy import stats

from conftest import random_spd
from iis_sqda.classifiers import GaussianScenario, bayes_rule
from iis_sqda.precision import graphical_lasso
from iis_sqda.screening import population_interaction_set, variance_statistic
from iis_sqda.selection import fit_logistic_enet, logistic_gradient, logistic_loss
from iis_sqda.simbench import BenchConfig, make_scenario, run_replications


def _fmt(ok):
    return "ok" if ok else "MISS"


@pytest.fixture(scope="module")
def model2_report():
    cfg = BenchConfig(model="m2", p=50, n1=100, n2=100, reps=20, methods=("Oracle", "IIS-SQDA"))
    return run_replications(cfg)


def test_c1_bayes_constant(criterion):
    zeta = bayes_rule(make_scenario("example1", 200)).zeta
    ok = abs(zeta - 1.74913) <= 1e-4
    criterion("C1 Bayes constant", ok, f"zeta={zeta:.6f} (target 1.74913 +/- 1e-4)")
    assert ok


def test_c2_linear_failure(criterion):
    cfg = BenchConfig(model="example1", p=200, n1=100, n2=100, reps=10,
                      methods=("PLR", "DSDA", "IIS-SQDA"))
    rep = run_replications(cfg)
    mr = {m: 100 * rep.mean(m, "MR") for m in cfg.methods}
    checks = {
        "PLR in [48,52]": 48 <= mr["PLR"] <= 52,
        "DSDA in [48,52]": 48 <= mr["DSDA"] <= 52,
        "IIS-SQDA <= 30": mr["IIS-SQDA"] <= 30,
    }
    ok = all(checks.values())
    detail = (f"MR PLR={mr['PLR']:.2f}% DSDA={mr['DSDA']:.2f}% IIS-SQDA={mr['IIS-SQDA']:.2f}%; "
              + ", ".join(f"{k} {_fmt(v)}" for k, v in checks.items()))
    criterion("C2 linear failure (example1, p=200, 10 reps)", ok, detail)
    assert ok, detail


def test_c3_model2_table(criterion, model2_report):
    rep = model2_report
    oracle = 100 * rep.mean("Oracle", "MR")
    mr = 100 * rep.mean("IIS-SQDA", "MR")
    fp, fn = rep.mean("IIS-SQDA", "FP.inter"), rep.mean("IIS-SQDA", "FN.inter")
    checks = {
        "Oracle 19.86+/-1.5": abs(oracle - 19.86) <= 1.5,
        "IIS-SQDA MR in [20,24]": 20 <= mr <= 24,
        "FP.inter <= 3": fp <= 3,
        "FN.inter <= 0.5": fn <= 0.5,
    }
    ok = all(checks.values())
    detail = (f"Oracle MR={oracle:.2f}% IIS-SQDA MR={mr:.2f}% FP.inter={fp:.2f} FN.inter={fn:.2f}; "
              + ", ".join(f"{k} {_fmt(v)}" for k, v in checks.items()))
    criterion("C3 Model 2 table (p=50, 20 reps)", ok, detail)
    assert ok, detail


def test_c4a_screening_estimated(criterion, model2_report):
    fn = model2_report.mean("IIS-SQDA", "screen.FN")
    fp = model2_report.mean("IIS-SQDA", "screen.FP")
    ok = fn <= 0.1 and fp <= 3
    criterion("C4a screening, Model 2 estimated precisions", ok,
              f"screen FN={fn:.2f} (<=0.1) FP={fp:.2f} (<=3)")
    assert ok


def test_c4b_screening_oracle(criterion):
    cfg = BenchConfig.from_dict({"model": "m1", "p": 200, "reps": 20, "methods": ["IIS-SQDA"],
                                 "screening": {"precision": "oracle"}})
    rep = run_replications(cfg)
    fn, fp = rep.mean("IIS-SQDA", "screen.FN"), rep.mean("IIS-SQDA", "screen.FP")
    ok = fn <= 0.5 and fp <= 3
    criterion("C4b screening, Model 1 p=200 oracle precisions", ok,
              f"screen FN={fn:.2f} (<=0.5) FP={fp:.2f} (<=3)")
    assert ok


def test_c5a_statistic_properties(criterion):
    rng = np.random.default_rng(101)
    bad = 0
    for _ in range(1000):
        n1, n2 = (int(v) for v in rng.integers(3, 60, 2))
        labels = np.r_[np.ones(n1, int), np.full(n2, 2)]
        col = rng.standard_normal(n1 + n2) * np.where(labels == 1, rng.uniform(0.2, 5), 1.0)
        d = variance_statistic(col, labels)
        # equal ML variances by construction: rescale class 2 to match class 1
        eq = col.copy()
        c2 = eq[labels == 2]
        eq[labels == 2] = (c2 - c2.mean()) * col[labels == 1].std() / c2.std()
        scale = rng.uniform(1e-3, 1e3)
        if not (d >= 0
                and variance_statistic(eq, labels) <= 1e-12
                and math.isclose(variance_statistic(scale * col, labels), d, rel_tol=1e-9, abs_tol=1e-12)
                and (d > 0 or math.isclose(col[labels == 1].var(), col[labels == 2].var(), rel_tol=1e-9))):
            bad += 1
    ok = bad == 0
    criterion("C5a statistic >=0 / zero iff equal / scale invariant", ok, f"{1000 - bad}/1000 cases hold")
    assert ok


def _random_sparse_scenario(rng, p):
    A = np.triu((rng.random((p, p)) < 0.25) * rng.uniform(-0.4, 0.4, (p, p)), 1)
    O1 = A + A.T
    O1 += (np.abs(np.linalg.eigvalsh(O1)).max() + rng.uniform(0.3, 1.0)) * np.eye(p)
    E = np.zeros((p, p))
    idx = rng.choice(p, rng.integers(0, p + 1), replace=False)
    for a in idx:
        E[a, a] = rng.choice([-1, 1]) * rng.uniform(0.1, 0.5)
        for b in idx:
            if a < b and rng.random() < 0.5:
                E[a, b] = E[b, a] = rng.uniform(-0.3, 0.3)
    shift = np.linalg.eigvalsh(O1 + E).min()
    if shift <= 0.05:
        O1 = O1 + (0.1 - shift) * np.eye(p)
    return GaussianScenario("random", 0.5, rng.standard_normal(p), O1, O1 + E)


def test_c5b_population_set(criterion):
    rng = np.random.default_rng(202)
    hits = 0
    for _ in range(200):
        sc = _random_sparse_scenario(rng, int(rng.integers(1, 13)))
        Om = sc.Omega
        scan = tuple(j for j in range(sc.p) if any(Om[j, l] != 0 for l in range(sc.p)))
        hits += population_interaction_set(sc)[2] == scan
    ok = hits == 200
    criterion("C5b population set = support of Omega", ok, f"{hits}/200 scenarios agree")
    assert ok


def _kkt(X, y, b0, beta, lam1, lam2):
    # subgradient optimality computed from an independent gradient evaluation
    A = np.column_stack([np.ones(len(y)), X])
    prob = 1.0 / (1.0 + np.exp(-(A @ np.concatenate([[b0], beta]))))
    g = A.T @ (prob - y) / len(y)
    viol = [abs(g[0])]
    for gj, bj in zip(g[1:], beta):
        gj = gj + 2 * lam2 * bj
        viol.append(abs(gj + lam1 * np.sign(bj)) if bj != 0 else max(abs(gj) - lam1, 0.0))
    return max(viol)


def test_c5c_enet_kkt_and_gradient(criterion):
    rng = np.random.default_rng(303)
    worst_kkt, worst_fd = 0.0, 0.0
    for _ in range(100):
        n, m = int(rng.integers(30, 120)), int(rng.integers(2, 15))
        X = rng.standard_normal((n, m)) * rng.uniform(0.1, 10, m)
        y = (rng.random(n) < 1 / (1 + np.exp(-(X @ rng.standard_normal(m) / 3)))).astype(float)
        y[:2] = (0.0, 1.0)
        lam1 = float(rng.uniform(1e-3, 0.2))
        lam2 = lam1 * float(rng.choice([0.0, 0.01, 0.1, 1.0]))
        standardize = bool(rng.integers(2))
        b0, coef, _ = fit_logistic_enet(X, y, lam1, lam2, tol=1e-9, standardize=standardize)
        if standardize:
            mean, sd = X.mean(axis=0), X.std(axis=0)
            worst_kkt = max(worst_kkt, _kkt((X - mean) / sd, y, b0 + coef @ mean, coef * sd, lam1, lam2))
        else:
            worst_kkt = max(worst_kkt, _kkt(X, y, b0, coef, lam1, lam2))
        A = np.column_stack([np.ones(n), X[:, :4]])
        theta = rng.standard_normal(A.shape[1]) * 0.3
        g = logistic_gradient(theta, A, y)
        h = 1e-6
        fd = np.array([(logistic_loss(theta + h * e, A, y) - logistic_loss(theta - h * e, A, y)) / (2 * h)
                       for e in np.eye(A.shape[1])])
        worst_fd = max(worst_fd, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-3))
    ok = worst_kkt <= 1e-6 and worst_fd < 1e-5
    criterion("C5c elastic-net KKT and gradient", ok,
              f"max KKT residual {worst_kkt:.2e} (<=1e-6), max FD rel err {worst_fd:.2e} (<1e-5)")
    assert ok


def test_c5d_glasso_properties(criterion):
    rng = np.random.default_rng(404)
    diag_ok = perm_ok = mono_ok = True
    for _ in range(50):
        p = int(rng.integers(2, 9))
        D = np.diag(rng.uniform(0.2, 5.0, p))
        diag_ok &= np.allclose(graphical_lasso(D, float(rng.uniform(1e-3, 2))).matrix,
                               np.diag(1 / np.diag(D)), rtol=0, atol=1e-13)
        S = np.cov(rng.standard_normal((2 * p, p)), rowvar=False)
        perm = rng.permutation(p)
        rho = float(rng.uniform(0.01, 0.3))
        a = graphical_lasso(S, rho, tol=1e-10)
        b = graphical_lasso(S[np.ix_(perm, perm)], rho, tol=1e-10).matrix
        perm_ok &= np.allclose(b, a.matrix[np.ix_(perm, perm)], rtol=0, atol=1e-7)
        path = np.array(a.objective_path)
        mono_ok &= bool(np.all(np.diff(path) >= -1e-10 * np.maximum(1.0, np.abs(path[1:]))))
    ok = diag_ok and perm_ok and mono_ok
    criterion("C5d graphical lasso properties", ok,
              f"diagonal exact {_fmt(diag_ok)}, permutation {_fmt(perm_ok)}, monotone {_fmt(mono_ok)} (50 cases)")
    assert ok


def test_c5e_bayes_rule_density_ratio(criterion):
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(20):
        p = int(rng.integers(1, 11))
        O1, O2 = np.linalg.inv(random_spd(rng, p, 5.0)), np.linalg.inv(random_spd(rng, p, 5.0))
        sc = GaussianScenario("random", float(rng.uniform(0.2, 0.8)), rng.standard_normal(p),
                              0.5 * (O1 + O1.T), 0.5 * (O2 + O2.T))
        Z = rng.standard_normal((1000, p)) * 2
        ref = (math.log(sc.prior / (1 - sc.prior))
               + stats.multivariate_normal(sc.mu1, sc.Sigma1).logpdf(Z)
               - stats.multivariate_normal(np.zeros(p), sc.Sigma2).logpdf(Z))
        worst = max(worst, float(np.max(np.abs(bayes_rule(sc).decision_function(Z) - ref))))
    ok = worst < 1e-8
    criterion("C5e Bayes rule vs log density ratio", ok, f"max |diff| {worst:.2e} over 20x1000 points")
    assert ok


def test_c6_not_reproducible_at_desk_scale(criterion):
    criterion("C6 full-scale tables", None,
              "not run by design: 100-rep p=500 tables and the real-data table are out of scope")
    pytest.skip("full-scale tables are out of scope for the desk-scale suite")
