"""Simulation scenarios, performance measures and replication harness."""
from __future__ import annotations

import csv
import json
import math
import time
import traceback
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classifiers import (
    BayesRule,
    GaussianScenario,
    bayes_rule,
    dsda_baseline,
    iis_sqda,
    lda_plugin,
    misclassification_rate,
    oracle_classifier,
    plr_baseline,
    qda_plugin,
)
from .datamodel import LabeledDataset
from .selection import ElasticNetConfig, QuadraticClassifier

MODELS = ("example1", "m1", "m2", "m3", "m4", "m5")
METHODS = ("LDA", "QDA", "PLR", "PLR2", "DSDA", "IIS-SQDA", "Oracle", "Bayes")
LINEAR_METHODS = {"LDA", "PLR", "DSDA"}
MEASURES = ("MR", "FP.main", "FP.inter", "FN.main", "FN.inter", "screen.FP", "screen.FN")

_MIN_P = {"example1": 50, "m1": 45, "m2": 50, "m3": 50, "m4": 45, "m5": 50}


def _sym_offsets(p, entries):
    """Symmetric matrix from 1-based ``{(i, j): value}`` entries."""
    M = np.zeros((p, p))
    for (i, j), v in entries.items():
        M[i - 1, j - 1] = M[j - 1, i - 1] = v
    return M


def _m1_parts(p):
    idx = np.arange(p)
    O1 = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    Om = _sym_offsets(p, {(5, 5): -0.29, (25, 25): -0.29, (45, 45): -0.29,
                          (5, 25): -0.15, (5, 45): -0.15, (25, 45): -0.15})
    return O1, Om


def _m2_parts(p):
    Om = _sym_offsets(p, {(10, 10): -0.6, (30, 30): -0.6, (50, 50): -0.6,
                          (10, 30): -0.15, (10, 50): -0.15, (30, 50): -0.15})
    return np.eye(p), Om


def make_scenario(model: str, p: int, seed: int = 0) -> GaussianScenario:
    """Population for one of the simulation designs.

    ``seed`` only matters for ``m5``, whose four nonzero discriminant
    coefficients are drawn once from Uniform[0.3, 0.7].
    """
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {MODELS}")
    if p < _MIN_P[model]:
        raise ValueError(f"model {model} needs p >= {_MIN_P[model]}, got {p}")
    delta = np.zeros(p)
    delta[:2] = (0.6, 0.8)
    if model in ("m1", "m4"):
        O1, Om = _m1_parts(p)
    elif model in ("m2", "example1"):
        O1, Om = _m2_parts(p)
        if model == "example1":
            delta[:] = 0.0
    elif model == "m3":
        O1 = np.eye(p) + 0.3 * (np.eye(p, k=1) + np.eye(p, k=-1))
        Om = _sym_offsets(p, {(10, 10): -0.3785, (10, 30): 0.0616, (10, 50): 0.2037,
                              (30, 30): -0.5482, (30, 50): 0.0286, (50, 50): -0.4614})
    else:  # m5
        O1 = np.eye(p)
        for b in range(0, p - 1, 2):
            O1[b, b + 1] = O1[b + 1, b] = 0.4
        Om = _sym_offsets(p, {(3, 3): -0.2, (6, 6): -0.2, (9, 9): -0.2, (12, 12): -0.2,
                              (3, 6): 0.4, (9, 12): 0.4, (3, 9): -0.4, (3, 12): -0.4,
                              (6, 9): -0.4, (6, 12): -0.4})
        delta[:] = 0.0
        rng = np.random.default_rng(seed)
        delta[[2, 5, 8, 11]] = rng.uniform(0.3, 0.7, size=4)
    O2 = O1 + Om
    if np.linalg.eigvalsh(O2)[0] <= 0:
        raise ValueError(f"model {model} at p={p} gives a non positive definite Omega2")
    sigma1 = np.linalg.inv(O1)
    mu1 = 0.5 * (sigma1 + sigma1.T) @ delta
    return GaussianScenario(model, 0.5, mu1, O1, O2)


def sample(scenario: GaussianScenario, n1: int, n2: int, seed) -> LabeledDataset:
    """``n1`` class-1 rows followed by ``n2`` class-2 rows, drawn via Cholesky factors."""
    if n1 < 2 or n2 < 2:
        raise ValueError("need at least 2 observations per class")
    rng = np.random.default_rng(seed)
    p = scenario.p
    L1 = np.linalg.cholesky(scenario.Sigma1)
    L2 = np.linalg.cholesky(scenario.Sigma2)
    X1 = scenario.mu1 + rng.standard_normal((n1, p)) @ L1.T
    X2 = rng.standard_normal((n2, p)) @ L2.T
    return LabeledDataset(np.vstack([X1, X2]), np.repeat([1, 2], [n1, n2]))


def _as_classifier(rule) -> QuadraticClassifier:
    return rule.to_classifier() if isinstance(rule, BayesRule) else rule


def score_selection(classifier, scenario: GaussianScenario, tol: float = 0.0) -> dict:
    """False positive / negative counts of main effects and interaction terms."""
    clf = _as_classifier(classifier)
    if clf.p != scenario.p:
        raise ValueError("classifier and scenario dimensions differ")
    mains = {j for j in clf.main_effects() if abs(clf.theta[1 + j]) > tol}
    amap = clf.index_map
    inters = {pair for pair in clf.interactions()
              if abs(clf.theta[amap.inter_index(*pair)]) > tol}
    true_main = set(scenario.true_main_support)
    true_inter = set(scenario.true_interaction_support)
    return {
        "FP.main": len(mains - true_main),
        "FP.inter": len(inters - true_inter),
        "FN.main": len(true_main - mains),
        "FN.inter": len(true_inter - inters),
    }


@dataclass
class BenchConfig:
    """Options for :func:`run_replications`; mirrors the JSON benchmark schema."""

    model: str = "m2"
    p: int = 50
    n1: int = 100
    n2: int = 100
    reps: int = 20
    test_size: int = 10_000
    methods: tuple[str, ...] = ("PLR", "DSDA", "IIS-SQDA", "Oracle")
    seed: int = 0
    scenario_seed: int = 0
    screening: dict = field(default_factory=lambda: {"alpha": 0.05, "mode": "stepwise",
                                                     "precision": "glasso", "omega": None})
    selection: dict = field(default_factory=lambda: {"folds": 5, "n_lambda": 50,
                                                     "lambda2_ratios": [0.0, 0.01, 0.1, 1.0],
                                                     "criterion": "deviance",
                                                     "standardize": True})
    workers: int = 1
    plr2_max_terms: int = 25_000

    KEYS = ("model", "p", "n1", "n2", "reps", "test_size", "methods", "seed", "scenario_seed",
            "screening", "selection", "workers", "plr2_max_terms")

    @classmethod
    def from_dict(cls, d: dict) -> "BenchConfig":
        alias = {"testSize": "test_size", "scenarioSeed": "scenario_seed",
                 "plr2MaxTerms": "plr2_max_terms"}
        d = {alias.get(k, k): v for k, v in d.items()}
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for k, v in d.items():
            if k in ("screening", "selection"):
                base = dict(getattr(cfg, k))
                extra = set(v) - set(base)
                if extra:
                    raise ValueError(f"unknown {k} keys: {sorted(extra)}")
                base.update(v)
                v = base
            setattr(cfg, k, v)
        cfg.methods = tuple(cfg.methods)
        cfg.validate()
        return cfg

    def validate(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.reps < 1 or self.test_size < 2 or self.n1 < 2 or self.n2 < 2:
            raise ValueError("reps >= 1, test_size >= 2 and n1, n2 >= 2 are required")
        if self.screening.get("mode") not in ("stepwise", "threshold"):
            raise ValueError("screening.mode must be 'stepwise' or 'threshold'")
        if self.screening.get("precision") not in ("glasso", "oracle"):
            raise ValueError("screening.precision must be 'glasso' or 'oracle'")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.KEYS}
        d["methods"] = list(self.methods)
        return d

    def enet(self) -> ElasticNetConfig:
        s = self.selection
        return ElasticNetConfig(folds=int(s["folds"]), n_lambda=int(s["n_lambda"]),
                                lambda2_ratios=tuple(float(r) for r in s["lambda2_ratios"]),
                                criterion=s["criterion"], standardize=bool(s["standardize"]))


def replication_seeds(master: int, rep: int) -> dict:
    """Position-derived seeds for replication `rep` (independent of run order)."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(rep),))
    train, test, methods = ss.generate_state(3)
    return {"train": int(train), "test": int(test), "methods": int(methods)}


def _method_seed(base: int, method: str) -> int:
    return int(np.random.SeedSequence([base, zlib.crc32(method.encode())]).generate_state(1)[0])


def _run_method(method, scenario, train, cfg, seed):
    """Return (classifier-like rule, extra measures)."""
    extra = {}
    if method == "LDA":
        return lda_plugin(train), extra
    if method == "QDA":
        return qda_plugin(train), extra
    if method == "PLR":
        return plr_baseline(train, "none", cfg.enet(), seed), extra
    if method == "PLR2":
        return plr_baseline(train, "all", cfg.enet(), seed, max_terms=cfg.plr2_max_terms), extra
    if method == "DSDA":
        return dsda_baseline(train, folds=cfg.enet().folds, seed=seed), extra
    if method == "Oracle":
        return oracle_classifier(scenario, train), extra
    if method == "Bayes":
        return bayes_rule(scenario), extra
    if method == "IIS-SQDA":
        sc = cfg.screening
        precisions = None
        if sc.get("precision") == "oracle":
            precisions = (scenario.Omega1, scenario.Omega2)
        clf, res = iis_sqda(train, precisions, mode=sc.get("mode", "stepwise"),
                            alpha=float(sc.get("alpha", 0.05)), threshold=sc.get("omega"),
                            cfg=cfg.enet(), seed=seed)
        truth = set(scenario.interaction_variables)
        sel = set(res.selected)
        extra = {"screen.FP": len(sel - truth), "screen.FN": len(truth - sel)}
        return clf, extra
    raise ValueError(f"unknown method {method!r}")


def run_one_replication(args) -> list[dict]:
    cfg, scenario, rep = args
    seeds = replication_seeds(cfg.seed, rep)
    train = sample(scenario, cfg.n1, cfg.n2, seeds["train"])
    nt1 = cfg.test_size // 2
    test = sample(scenario, nt1, cfg.test_size - nt1, seeds["test"])
    records = []
    for method in cfg.methods:
        rec = {"rep": rep, "method": method, "seeds": seeds, "error": None}
        t0 = time.perf_counter()
        try:
            rule, extra = _run_method(method, scenario, train, cfg,
                                      _method_seed(seeds["methods"], method))
            rec["MR"] = misclassification_rate(rule, test)
            sel = score_selection(rule, scenario)
            if method in LINEAR_METHODS:
                sel["FP.inter"] = sel["FN.inter"] = None
            rec.update(sel)
            rec.update(extra)
        except Exception as exc:  # recorded, not fatal to the run
            rec["error"] = f"{type(exc).__name__}: {exc}"
            rec["traceback"] = traceback.format_exc(limit=3)
        rec["seconds"] = time.perf_counter() - t0
        records.append(rec)
    return records


@dataclass
class PerformanceReport:
    scenario: str
    p: int
    reps: int
    config: dict
    records: list[dict]
    seconds: float = 0.0
    notes: tuple[str, ...] = ("training sizes n1 = n2 = 100 are assumed for the simulation models",)

    def summary(self) -> dict:
        """``{method: {measure: {"mean", "se", "count"}}}`` over successful replications."""
        out = {}
        methods = list(dict.fromkeys(r["method"] for r in self.records))
        for m in methods:
            rows = [r for r in self.records if r["method"] == m and r["error"] is None]
            stats = {"failures": sum(1 for r in self.records if r["method"] == m and r["error"])}
            for meas in MEASURES:
                vals = [r[meas] for r in rows if r.get(meas) is not None]
                if not vals:
                    continue
                v = np.asarray(vals, dtype=float)
                se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
                stats[meas] = {"mean": float(v.mean()), "se": se, "count": int(v.size)}
            out[m] = stats
        return out

    def mean(self, method: str, measure: str) -> float:
        return self.summary()[method][measure]["mean"]

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "p": self.p, "reps": self.reps,
                "config": self.config, "seconds": self.seconds, "notes": list(self.notes),
                "summary": self.summary(), "records": self.records}

    def write(self, outdir) -> tuple[Path, Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        jpath = outdir / "report.json"
        cpath = outdir / "report.csv"
        jpath.write_text(json.dumps(self.to_json(), indent=2, default=_json_default))
        summ = self.summary()
        with cpath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", *MEASURES])
            for m, st in summ.items():
                row = [m]
                for meas in MEASURES:
                    if meas not in st:
                        row.append("--")
                        continue
                    mean, se = st[meas]["mean"], st[meas]["se"]
                    if meas == "MR":
                        mean, se = 100 * mean, (None if se is None else 100 * se)
                    row.append(f"{mean:.2f} ({se:.2f})" if se is not None else f"{mean:.2f}")
                w.writerow(row)
        return jpath, cpath


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def run_replications(cfg: BenchConfig, scenario: GaussianScenario | None = None) -> PerformanceReport:
    """Run every method on `cfg.reps` independent train/test draws."""
    cfg.validate()
    if scenario is None:
        scenario = make_scenario(cfg.model, cfg.p, cfg.scenario_seed)
    t0 = time.perf_counter()
    jobs = [(cfg, scenario, r) for r in range(cfg.reps)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            chunks = list(ex.map(run_one_replication, jobs))
    else:
        chunks = [run_one_replication(j) for j in jobs]
    records = [r for ch in chunks for r in ch]
    return PerformanceReport(scenario.name, scenario.p, cfg.reps, cfg.to_dict(), records,
                             time.perf_counter() - t0)
