"""Command-line interface: ``iis-sqda {simulate,screen,fit,predict,benchmark}``.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are the
subcommand's long option names with dashes replaced by underscores) and
``--seed``. Values given on the command line win over the config file, which
wins over built-in defaults. The resolved settings are written next to the
outputs as ``config.json`` so a run can be replayed with ``--config``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .classifiers import estimate_class_precisions, iis_sqda
from .datamodel import DataError, LabeledDataset, load_csv, read_table, save_csv
from .screening import screen, stepwise_screen
from .selection import ElasticNetConfig, QuadraticClassifier
from .simbench import METHODS, MODELS, BenchConfig, make_scenario, run_replications, sample

DEFAULTS = {
    "simulate": {"model": "m2", "p": 50, "n1": 100, "n2": 100, "seed": 0, "scenario_seed": 0,
                 "out": "sim"},
    "screen": {"data": None, "label_column": "class", "precision": "glasso", "alpha": 0.05,
               "omega": None, "mode": "threshold", "seed": 0, "out": "screen"},
    "fit": {"data": None, "label_column": "class", "precision": "glasso", "alpha": 0.05,
            "omega": None, "mode": "stepwise", "folds": 5, "criterion": "deviance",
            "refit": True, "seed": 0, "out": "model.json"},
    "predict": {"model": None, "data": None, "label_column": "class", "seed": 0,
                "out": "predictions.csv"},
}
REQUIRED = {"screen": ("data",), "fit": ("data",), "predict": ("model", "data")}


class UsageError(Exception):
    pass


def _common(sp):
    sp.add_argument("--config", help="JSON file with option values")
    sp.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iis-sqda",
                                 description="Interaction screening and sparse quadratic discriminant analysis.")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="draw a labeled sample from a simulation model")
    _common(sp)
    sp.add_argument("--model", choices=MODELS)
    sp.add_argument("--p", type=int)
    sp.add_argument("--n1", type=int)
    sp.add_argument("--n2", type=int)
    sp.add_argument("--scenario-seed", type=int, help="seed for randomly drawn model parameters")
    sp.add_argument("--out", help="output directory")

    for name, hlp in (("screen", "screen interaction variables"),
                      ("fit", "fit a sparse quadratic classifier")):
        sp = sub.add_parser(name, help=hlp)
        _common(sp)
        sp.add_argument("--data", help="training CSV")
        sp.add_argument("--label-column")
        sp.add_argument("--precision", choices=("glasso", "identity"))
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--omega", type=float, help="screening threshold (overrides --alpha)")
        sp.add_argument("--mode", choices=("threshold", "stepwise"))
        sp.add_argument("--out", help="output directory" if name == "screen" else "model JSON path")
        if name == "fit":
            sp.add_argument("--folds", type=int)
            sp.add_argument("--criterion", choices=("deviance", "misclassification"))
            sp.add_argument("--refit", action=argparse.BooleanOptionalAction, default=None)

    sp = sub.add_parser("predict", help="classify observations with a fitted model")
    _common(sp)
    sp.add_argument("--model", help="model JSON written by fit")
    sp.add_argument("--data", help="CSV of observations (label column optional)")
    sp.add_argument("--label-column")
    sp.add_argument("--out", help="labels CSV path")

    sp = sub.add_parser("benchmark", help="run a simulation study")
    _common(sp)
    sp.add_argument("--model", choices=MODELS)
    sp.add_argument("--p", type=int)
    sp.add_argument("--n1", type=int)
    sp.add_argument("--n2", type=int)
    sp.add_argument("--reps", type=int)
    sp.add_argument("--test-size", type=int)
    sp.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--out", default=None, help="output directory (default: bench)")
    return ap


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config file must hold a JSON object")
    return cfg


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags for a non-benchmark subcommand."""
    settings = dict(DEFAULTS[command])
    filecfg = _load_config(args.config)
    unknown = set(filecfg) - set(settings)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    settings.update(filecfg)
    for k in settings:
        v = getattr(args, k, None)
        if v is not None:
            settings[k] = v
    missing = [k for k in REQUIRED.get(command, ()) if settings.get(k) is None]
    if missing:
        raise UsageError(f"{command} requires " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return settings


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _precisions(data: LabeledDataset, how: str, seed: int):
    if how == "identity":
        eye = np.eye(data.p)
        return eye, eye
    if how != "glasso":
        raise ValueError(f"unknown precision estimator {how!r}; use 'glasso' or 'identity'")
    return estimate_class_precisions(data, seed)


def cmd_simulate(s: dict) -> int:
    scenario = make_scenario(s["model"], int(s["p"]), seed=int(s["scenario_seed"]))
    data = sample(scenario, int(s["n1"]), int(s["n2"]), int(s["seed"]))
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_csv(data, out / "data.csv")
    _write_json(out / "scenario.json", {
        "name": scenario.name, "p": scenario.p, "prior": scenario.prior,
        "mu1": scenario.mu1.tolist(), "Omega1": scenario.Omega1.tolist(),
        "Omega2": scenario.Omega2.tolist(),
        "trueMainSupport": list(scenario.true_main_support),
        "trueInteractionSupport": [list(t) for t in scenario.true_interaction_support],
    })
    _write_json(out / "config.json", s)
    return 0


def cmd_screen(s: dict) -> int:
    data = load_csv(s["data"], s["label_column"])
    om1, om2 = _precisions(data, s["precision"], int(s["seed"]))
    if s["mode"] == "stepwise":
        res = stepwise_screen(data, om1, om2, s["alpha"], s["alpha"], threshold=s["omega"])
    else:
        res = screen(data, om1, om2, threshold=s["omega"], alpha=s["alpha"])
    out = Path(s["out"])
    out.mkdir(parents=True, exist_ok=True)
    names = data.feature_names
    with (out / "screen.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "D1", "D2", "selected"])
        chosen = set(res.selected)
        for j in range(data.p):
            w.writerow([names[j], repr(float(res.stats_omega1[j])), repr(float(res.stats_omega2[j])),
                        int(j in chosen)])
    payload = res.to_dict()
    payload["selectedNames"] = [names[j] for j in res.selected]
    _write_json(out / "screen.json", payload)
    _write_json(out / "config.json", s)
    return 0


def cmd_fit(s: dict) -> int:
    data = load_csv(s["data"], s["label_column"])
    cfg = ElasticNetConfig(folds=int(s["folds"]), criterion=s["criterion"])
    prec = _precisions(data, s["precision"], int(s["seed"]))
    clf, res = iis_sqda(data, precisions=prec, mode=s["mode"], alpha=s["alpha"],
                        threshold=s["omega"], cfg=cfg, seed=int(s["seed"]), refit=bool(s["refit"]))
    model = clf.to_dict()
    model["featureNames"] = list(data.feature_names)
    model["labelValues"] = list(data.label_values)
    out = Path(s["out"])
    _write_json(out, model)
    _write_json(out.with_name(out.stem + ".config.json"), s)
    return 0


def cmd_predict(s: dict) -> int:
    try:
        model = json.loads(Path(s["model"]).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model {s['model']}: {exc.strerror}") from None
    clf = QuadraticClassifier.from_dict(model)
    X, names, raw = read_table(s["data"], s["label_column"], require_labels=False)
    if X.shape[1] != clf.p:
        raise DataError(f"model expects {clf.p} features, data has {X.shape[1]}")
    trained = model.get("featureNames")
    if trained and list(names) != list(trained):
        raise DataError("feature columns do not match the model's training columns")
    labels = clf.predict(X)
    values = model.get("labelValues") or ["1", "2"]
    out = Path(s["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "score", "predicted"])
        for i, (sc, lab) in enumerate(zip(clf.decision_function(X), labels)):
            w.writerow([i, repr(float(sc)), values[int(lab) - 1]])
    if raw is not None:
        err = float(np.mean([values[int(lab) - 1] != r for lab, r in zip(labels, raw)]))
        print(f"misclassification rate: {err:.4f}")
    return 0


def cmd_benchmark(args: argparse.Namespace) -> int:
    d = _load_config(args.config)
    flags = {"model": args.model, "p": args.p, "n1": args.n1, "n2": args.n2, "reps": args.reps,
             "test_size": args.test_size, "workers": args.workers, "seed": args.seed}
    if args.methods is not None:
        flags["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    d.update({k: v for k, v in flags.items() if v is not None})
    try:
        cfg = BenchConfig.from_dict(d)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    report = run_replications(cfg)
    out = Path(args.out or "bench")
    report.write(out)
    _write_json(out / "config.json", cfg.to_dict())
    for method, row in report.summary().items():
        mr = row.get("MR")
        text = f"{100 * mr['mean']:.2f}% (se {100 * mr['se']:.2f})" if mr and mr["count"] else "n/a"
        print(f"{method:10s} MR {text}  failures {row['failures']}")
    errors = [r for r in report.records if r.get("error")]
    for r in errors:
        print(f"error: rep {r['rep']} {r['method']}: {r['error']}", file=sys.stderr)
    return 1 if errors else 0


COMMANDS = {"simulate": cmd_simulate, "screen": cmd_screen, "fit": cmd_fit, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "benchmark":
            return cmd_benchmark(args)
        settings = resolve(args.command, args)
        return COMMANDS[args.command](settings)
    except UsageError as exc:
        parser.error(str(exc))
    except (DataError, ValueError, OSError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
