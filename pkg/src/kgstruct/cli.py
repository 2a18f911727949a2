"""``kgstruct`` command-line interface.

Every subcommand reads its options from (lowest to highest precedence) the
built-in defaults, an optional JSON ``--config`` file, and explicit flags.
Artifacts go under ``--out``, which defaults to ``$KGSTRUCT_OUT`` or
``./kgstruct-out``.

Exit status: 0 success, 1 usage error, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import datasets
from .evaluation import FilterIndex, TIE_POLICIES, evaluate
from .exceptions import KGStructError, TrainingDivergedError, ValidationError
from .features import FEATURE_NAMES, ablation_suite, featurize
from .graph import GraphIndex
from .kgem import KGEModel, KgemConfig, enumerate_grid, run_grid
from .kgem.losses import LOSS_KINDS
from .kgem.sampling import SAMPLER_KINDS
from .kgem.scoring import SCORING_KINDS
from .results import (
    RESULTS_FILE,
    ResultsWriter,
    config_hash,
    read_results,
    render_report,
    summarise,
)
from .twig import (
    MODES,
    KgemRun,
    TwigModel,
    build_records,
    per_kg_r2,
    read_records,
    split_protocols,
    write_records,
)
from .twigi import TwigI, random_scorer

logger = logging.getLogger("kgstruct")

OUT_ENV = "KGSTRUCT_OUT"
EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


KGEM_DEFAULTS = {k: v for k, v in KgemConfig().to_dict().items() if k != "seed"}
TWIGI_DEFAULTS = {"npp": 30, "lr": 5e-3, "batch_size": 128, "margin": 0.1, "epochs": 20,
                  "hidden": [24, 8], "dropout": 0.01, "drop": []}
TWIG_DEFAULTS = {"phase1_epochs": 5, "phase2_epochs": 10, "lr": 5e-3, "mode": "holdout",
                 "kg": None, "pct": 10.0}

DEFAULTS = {
    "features": {"split": "train"},
    "train-kgem": {**KGEM_DEFAULTS, "eval_split": "valid"},
    "grid": {"scoring": "DistMult", "epochs": 100, "base": {}, "axes": {}},
    "evaluate": {"split": "valid", "tie_policy": "realistic", "checkpoint": None, "scorer": None},
    "train-twigi": dict(TWIGI_DEFAULTS),
    "finetune": {"epochs": 10, "lr": None, "npp": None, "batch_size": None},
    "ablate": {**TWIGI_DEFAULTS, "masks": None, "split": "test"},
    "simulate": dict(TWIG_DEFAULTS),
    "report": {},
}


def _add_kgem_flags(p):
    p.add_argument("--scoring", choices=SCORING_KINDS)
    p.add_argument("--dim", type=int)
    p.add_argument("--loss", choices=LOSS_KINDS)
    p.add_argument("--margin", type=float)
    p.add_argument("--sampler", choices=SAMPLER_KINDS)
    p.add_argument("--npp", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--reg", type=float)
    p.add_argument("--p-norm", dest="p_norm", type=int, choices=(1, 2))
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)


def _add_twigi_flags(p):
    p.add_argument("--npp", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--margin", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int, nargs="+")
    p.add_argument("--dropout", type=float)
    p.add_argument("--drop", nargs="+", metavar="FEATURE", help="feature names to ablate")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--threads", type=int, help="worker processes for grid runs (default 1)")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./kgstruct-out)")
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="kgstruct", description="Structural link prediction toolkit.",
                     argument_default=argparse.SUPPRESS, parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common], argument_default=argparse.SUPPRESS)

    p = add("features", "write the structural features of a split as CSV")
    p.add_argument("--dataset", help="bundled name or directory")
    p.add_argument("--split", choices=("train", "valid", "test"))

    p = add("train-kgem", "train one KGEM and save a checkpoint")
    p.add_argument("--dataset")
    _add_kgem_flags(p)
    p.add_argument("--eval-split", dest="eval_split", choices=("valid", "test"))
    p.add_argument("--checkpoint", help="output checkpoint path")

    p = add("grid", "run a KGEM hyperparameter grid and write experiment records")
    p.add_argument("--dataset")
    p.add_argument("--spec", help="JSON grid spec: {scoring, epochs, base: {...}, axes: {axis: [values]}}")
    p.add_argument("--scoring", choices=SCORING_KINDS)
    p.add_argument("--epochs", type=int)

    p = add("evaluate", "rank a split with a checkpoint or a reference scorer")
    p.add_argument("--dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--scorer", choices=("oracle", "random"))
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.add_argument("--tie-policy", dest="tie_policy", choices=TIE_POLICIES)

    p = add("train-twigi", "train the structural link predictor")
    p.add_argument("--dataset")
    _add_twigi_flags(p)
    p.add_argument("--checkpoint", help="output checkpoint path")

    p = add("finetune", "continue training a structural predictor on another graph")
    p.add_argument("--dataset")
    p.add_argument("--checkpoint", help="pretrained checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--npp", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--save", help="output checkpoint path")

    p = add("ablate", "train one structural predictor per feature mask")
    p.add_argument("--dataset")
    _add_twigi_flags(p)
    p.add_argument("--masks", nargs="+", help=f"mask labels from: {', '.join(ablation_suite())}")
    p.add_argument("--split", choices=("valid", "test"))

    p = add("simulate", "train the KGEM simulator on experiment records and score it")
    p.add_argument("--records", help="JSON-lines file or directory")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--kg", help="held-out graph for zero-/few-shot")
    p.add_argument("--pct", type=float)
    p.add_argument("--phase1-epochs", dest="phase1_epochs", type=int)
    p.add_argument("--phase2-epochs", dest="phase2_epochs", type=int)
    p.add_argument("--lr", type=float)

    p = add("report", "summarise results rows into per-dataset tables")
    p.add_argument("--results", help="results directory (default: --out)")
    parser.option_names = {
        name: {a.dest for a in sp._actions if a.dest != "help"} for name, sp in sub.choices.items()
    }
    return parser


REQUIRED = {"features": ("dataset",), "train-kgem": ("dataset",), "grid": ("dataset",),
            "evaluate": ("dataset",), "train-twigi": ("dataset",),
            "finetune": ("dataset", "checkpoint"), "ablate": ("dataset",),
            "simulate": ("records",), "report": ()}


def _options(command: str, ns: argparse.Namespace, allowed: set) -> dict:
    opts = dict(DEFAULTS[command])
    config_path = getattr(ns, "config", None)
    if config_path:
        path = Path(config_path)
        if not path.is_file():
            raise FileNotFoundError(f"config file {path} not found")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(loaded, dict):
            raise ValidationError(f"{path}: top level must be an object")
        section = loaded.get(command)
        section = section if isinstance(section, dict) else loaded
        unknown = set(section) - allowed - set(DEFAULTS[command]) - {"config", "verbose"}
        if unknown:
            raise ValidationError(f"{path}: unknown {command} options {sorted(unknown)}")
        opts.update(section)
    cli = {k.replace("-", "_"): v for k, v in vars(ns).items() if k not in ("config", "command")}
    opts.update(cli)
    opts.setdefault("seed", 0)
    opts.setdefault("threads", 1)
    opts.setdefault("out", os.environ.get(OUT_ENV) or "kgstruct-out")
    missing = [k for k in REQUIRED[command] if not opts.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k for k in missing))
    return opts


def _kgem_config(opts) -> KgemConfig:
    fields = {k: opts[k] for k in KGEM_DEFAULTS}
    if fields["loss"] != "MRL":
        fields["margin"] = None
    elif fields["margin"] is None:
        fields["margin"] = 1.0
    return KgemConfig(seed=opts["seed"], **fields)


def _twigi(opts) -> TwigI:
    return TwigI(npp=opts["npp"], lr=opts["lr"], batch_size=opts["batch_size"],
                 margin=opts["margin"], epochs=opts["epochs"], hidden=tuple(opts["hidden"]),
                 dropout=opts["dropout"], ablation=tuple(opts["drop"] or ()), seed=opts["seed"])


def _twigi_config(model: TwigI) -> dict:
    params = model.get_params()
    params["hidden"] = list(params["hidden"])
    params["ablation"] = sorted(params["ablation"])
    return params


def cmd_features(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    index = GraphIndex.from_kg(kg)
    triples = kg.split(opts["split"])
    feats = featurize(index, triples)
    cfg = {"dataset": kg.name, "split": opts["split"]}
    h = config_hash(cfg)
    path = out / f"features-{kg.name}-{opts['split']}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# seed={opts['seed']} config_hash={h}\n")
        w = csv.writer(fh)
        w.writerow(["subject", "predicate", "object", *FEATURE_NAMES])
        for (s, p, o), row in zip(triples.tolist(), feats):
            w.writerow([kg.entities.label(s), kg.predicates.label(p), kg.entities.label(o),
                        *(_fmt(x) for x in row)])
    writer.write("features", kg.name, cfg, opts["seed"], {"n_triples": len(triples)})
    print(path)


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def cmd_train_kgem(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    config = _kgem_config(opts)
    model = KGEModel.from_config(config).fit(kg)
    cfg = {"dataset": kg.name, **config.to_dict()}
    h = config_hash(cfg)
    path = Path(opts.get("checkpoint") or out / f"kgem-{kg.name}-{h}.ckpt")
    ckpt.save_kgem(model, path, kg)
    metrics = {"final_loss": model.loss_history_[-1]}
    if len(kg.split(opts["eval_split"])):
        report = model.evaluate(kg, opts["eval_split"])
        metrics.update({f"{opts['eval_split']}_{k}": v for k, v in report.as_row().items()})
    writer.write("train-kgem", kg.name, cfg, opts["seed"], metrics)
    print(json.dumps({"checkpoint": str(path), "config_hash": h, **metrics}, sort_keys=True))


def _grid_configs(opts):
    spec = {"scoring": opts["scoring"], "epochs": opts["epochs"],
            "base": dict(opts.get("base") or {}), "axes": dict(opts.get("axes") or {})}
    if opts.get("spec"):
        path = Path(opts["spec"])
        if not path.is_file():
            raise FileNotFoundError(f"grid spec {path} not found")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
        for key in ("base", "axes"):
            spec[key].update(loaded.get(key, {}))
        for key in ("scoring", "epochs"):
            if key in loaded:
                spec[key] = loaded[key]
        # explicit flags still beat the spec file
        for key in ("scoring", "epochs"):
            if key in opts.get("_cli", ()):
                spec[key] = opts[key]
    base = KgemConfig.from_dict({**spec["base"], "scoring": spec["scoring"], "epochs": spec["epochs"],
                                 "seed": opts["seed"]})
    axes = {k: (v if isinstance(v, list) else [v]) for k, v in spec["axes"].items()}
    return enumerate_grid(base=base, **axes), spec


def cmd_grid(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    configs, spec = _grid_configs(opts)
    if len(kg.valid) == 0:
        raise ValidationError(f"{kg.name} has no validation split to rank")
    results = run_grid(kg, configs, seed=opts["seed"], n_jobs=opts["threads"])
    records = build_records(kg, [KgemRun(r.config, r.ranks, r.config.seed) for r in results])
    path = out / f"records-{kg.name}.jsonl"
    write_records(path, records)
    for r in results:
        writer.write("grid", kg.name, {"dataset": kg.name, **r.config.to_dict()}, r.config.seed,
                     {f"valid_{k}": v for k, v in r.metrics.items()})
    print(json.dumps({"records": str(path), "n_records": len(records),
                      "spec_hash": config_hash(spec)}, sort_keys=True))


def oracle_scorer(kg):
    """Scores 1 for every known triple of any split and 0 otherwise."""
    known = {tuple(t) for t in kg.all_triples().tolist()}

    def score(triples):
        return np.array([1.0 if tuple(t) in known else 0.0 for t in np.asarray(triples).tolist()])

    return score


def cmd_evaluate(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    if bool(opts.get("checkpoint")) == bool(opts.get("scorer")):
        raise UsageError("evaluate needs exactly one of --checkpoint or --scorer")
    cfg = {"dataset": kg.name, "split": opts["split"], "tie_policy": opts["tie_policy"]}
    if opts.get("scorer"):
        scorer = oracle_scorer(kg) if opts["scorer"] == "oracle" else random_scorer(opts["seed"])
        cfg["scorer"] = opts["scorer"]
    else:
        header, _ = ckpt.read_checkpoint(opts["checkpoint"])
        if header["kind"] == "kgem":
            model = ckpt.load_kgem(opts["checkpoint"])
            stored = model.labels_.get("entities")
            if model.entity_embeddings_.shape[0] != kg.n_entities or (
                    stored is not None and stored != kg.entities.labels):
                raise ValidationError("checkpoint vocabulary does not match the dataset")
            scorer = model.decision_function
        elif header["kind"] == "twigi":
            model = ckpt.load_twigi(opts["checkpoint"])
            scorer = model.scorer_for(kg)
        else:
            raise ValidationError(f"cannot evaluate a {header['kind']} checkpoint")
        cfg["checkpoint"] = header["meta"].get("config") or header["meta"].get("params")
    report = evaluate(scorer, kg.split(opts["split"]), kg.n_entities, FilterIndex.from_kg(kg),
                      opts["tie_policy"])
    metrics = {f"{opts['split']}_{k}": v for k, v in report.as_row().items()}
    writer.write("evaluate", kg.name, cfg, opts["seed"], metrics)
    print(json.dumps(metrics, sort_keys=True))


def _twigi_metrics(model: TwigI, kg) -> dict:
    metrics = {"final_loss": model.loss_history_[-1] if model.loss_history_ else float("nan")}
    for split in ("valid", "test"):
        if len(kg.split(split)):
            metrics.update({f"{split}_{k}": v for k, v in model.evaluate(kg, split).as_row().items()})
    return metrics


def cmd_train_twigi(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    model = _twigi(opts).fit(kg)
    cfg = {"dataset": kg.name, **_twigi_config(model)}
    h = config_hash(cfg)
    path = Path(opts.get("checkpoint") or out / f"twigi-{kg.name}-{h}.ckpt")
    ckpt.save_twigi(model, path)
    metrics = _twigi_metrics(model, kg)
    writer.write("train-twigi", kg.name, cfg, opts["seed"], metrics)
    print(json.dumps({"checkpoint": str(path), "config_hash": h, **metrics}, sort_keys=True))


def cmd_finetune(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    model = ckpt.load_twigi(opts["checkpoint"])
    source = model.kg_name_
    model.finetune(kg, epochs=opts["epochs"], lr=opts["lr"], npp=opts["npp"],
                   batch_size=opts["batch_size"])
    cfg = {"dataset": kg.name, "source": source, "finetune_epochs": opts["epochs"],
           **_twigi_config(model)}
    h = config_hash(cfg)
    path = Path(opts.get("save") or out / f"twigi-{source}-to-{kg.name}-{h}.ckpt")
    ckpt.save_twigi(model, path)
    metrics = _twigi_metrics(model, kg)
    writer.write("finetune", kg.name, cfg, opts["seed"], metrics)
    print(json.dumps({"checkpoint": str(path), "config_hash": h, **metrics}, sort_keys=True))


def cmd_ablate(opts, out: Path, writer: ResultsWriter) -> None:
    kg = datasets.load(opts["dataset"])
    suite = ablation_suite()
    labels = opts["masks"] or list(suite)
    unknown = [m for m in labels if m not in suite]
    if unknown:
        raise ValidationError(f"unknown mask labels {unknown}; choose from {list(suite)}")
    split = opts["split"]
    rows = []
    for label in labels:
        model = _twigi({**opts, "drop": sorted(suite[label])}).fit(kg)
        report = model.evaluate(kg, split)
        cfg = {"dataset": kg.name, "mask": label, **_twigi_config(model)}
        writer.write("ablate", kg.name, cfg, opts["seed"],
                     {f"{split}_{k}": v for k, v in report.as_row().items()})
        rows.append((label, len(model.feature_names_), report.mrr, report.hits[1], report.hits[10]))
    path = out / f"ablation-{kg.name}.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# seed={opts['seed']} config_hash={config_hash({'dataset': kg.name, 'masks': labels})}\n")
        w = csv.writer(fh)
        w.writerow(["mask", "n_features", f"{split}_mrr", f"{split}_hits@1", f"{split}_hits@10"])
        w.writerows(rows)
    print(path)


def cmd_simulate(opts, out: Path, writer: ResultsWriter) -> None:
    path = Path(opts["records"])
    if not path.exists():
        raise FileNotFoundError(f"records {path} not found")
    records = read_records(path)
    if not records:
        raise ValidationError(f"no records in {path}")
    train, test = split_protocols(records, opts["mode"], opts["kg"], opts["pct"], opts["seed"])
    if not test:
        raise ValidationError("the protocol left no test records")
    model = TwigModel(phase1_epochs=opts["phase1_epochs"], phase2_epochs=opts["phase2_epochs"],
                      lr=opts["lr"], seed=opts["seed"]).fit(train)
    cfg = {"records": sorted({r.kg_name for r in records}), "mode": opts["mode"], "kg": opts["kg"],
           "pct": opts["pct"], **model.get_params()}
    h = config_hash(cfg)
    ckpt.save_twig(model, out / f"twig-{h}.ckpt")
    table = per_kg_r2(model, test)
    with open(out / f"simulate-r2-{h}.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# seed={opts['seed']} config_hash={h}\n")
        w = csv.writer(fh)
        w.writerow(["kg", "n_test", "r2"])
        for name, row in table.items():
            w.writerow([name, row["n"], row["r2"]])
    with open(out / f"simulate-scatter-{h}.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# seed={opts['seed']} config_hash={h}\n")
        w = csv.writer(fh)
        w.writerow(["kg", "predicted_mrr", "true_mrr"])
        for name, row in table.items():
            for p, a in zip(row["predicted"], row["actual"]):
                w.writerow([name, p, a])
    for name, row in table.items():
        writer.write("simulate", name, cfg, opts["seed"], {"r2": row["r2"], "n_test": row["n"]})
    print(json.dumps({k: v["r2"] for k, v in table.items()}, sort_keys=True))


def cmd_report(opts, out: Path, writer: ResultsWriter) -> None:
    root = Path(opts.get("results") or out)
    rows = read_results(root / RESULTS_FILE)
    if not rows:
        raise ValidationError(f"no results rows under {root}")
    tables = summarise(rows)
    text = render_report(tables)
    (root / "summary.txt").write_text(text, encoding="utf-8")
    with open(root / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "config_hash", "command", "metric", "value"])
        for dataset, entries in tables.items():
            for entry in entries:
                for metric, value in entry["metrics"].items():
                    w.writerow([dataset, entry["config_hash"], entry["command"], metric, value])
    print(text, end="")


COMMANDS = {
    "features": cmd_features,
    "train-kgem": cmd_train_kgem,
    "grid": cmd_grid,
    "evaluate": cmd_evaluate,
    "train-twigi": cmd_train_twigi,
    "finetune": cmd_finetune,
    "ablate": cmd_ablate,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _options(ns.command, ns, parser.option_names[ns.command])
        opts["_cli"] = set(vars(ns))
        out = Path(opts["out"])
        out.mkdir(parents=True, exist_ok=True)
        writer = ResultsWriter(out / RESULTS_FILE)
        COMMANDS[ns.command](opts, out, writer)
    except UsageError as exc:
        print(f"kgstruct {ns.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDivergedError as exc:
        print(f"kgstruct {ns.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (KGStructError, ValueError, LookupError, FileNotFoundError) as exc:
        print(f"kgstruct {ns.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # pragma: no cover - last-resort diagnostic
        print(f"kgstruct {ns.command}: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
