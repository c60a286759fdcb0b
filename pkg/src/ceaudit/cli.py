"""``ceaudit`` command line.

Exit codes: 0 success, 1 config/validation error, 2 degenerate classifier
labels, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import report as reporting
from .ce_search import SearchConfig, dice_generate, mad_of, make_request, wachter_generate
from .classifier import DegenerateLabelsError, TrainConfig, fit, load_model, save_model
from .harness import (
    SCALES,
    ExperimentConfig,
    conflict_summary,
    load_structure,
    run_experiment,
    select_units,
    unit_seed,
)
from .pcm import DEFAULT_EPS, validate_ce
from .sampler import read_dataset, sample_dataset, write_dataset
from .scm import load_scm, save_scm, validate

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("ceaudit")


def _fmt(v: float) -> str:
    return repr(float(v))


def cmd_generate(args) -> int:
    if args.scm:
        label, scm = "scm", load_scm(args.scm)
    else:
        label, scm = load_structure(args.structure)
    problems = validate(scm)
    if problems:
        log.error("invalid SCM: %s", "; ".join(problems))
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = sample_dataset(scm, args.n, args.seed)
    write_dataset(ds, out / "data.csv")
    save_scm(scm, out / "scm.json")
    log.info("wrote %d %s units to %s (threshold %.6f)", len(ds), label, out, ds.threshold)
    return EXIT_OK


def cmd_train(args) -> int:
    ds = read_dataset(args.data)
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        max_epochs=args.max_epochs,
        convergence_tol=args.tol,
        l2_penalty=args.l2,
    )
    model = fit(ds, cfg)
    save_model(model, args.out)
    return EXIT_OK


CE_HEADER_TAIL = ["predicted_class", "objective", "converged"]


def cmd_explain(args) -> int:
    model = load_model(args.model)
    ds = read_dataset(args.data)
    if args.method == "wachter" and args.k != 1:
        log.error("wachter produces a single CE per unit; use --k 1")
        return EXIT_CONFIG
    mad = mad_of(ds)
    search = SearchConfig(restarts=args.restarts, max_iter=args.max_iter, step=args.step)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["unit_id", "ce_id", *model.feature_order, *CE_HEADER_TAIL])
        for i in select_units(model, ds, args.units):
            request = make_request(
                ds.unit(i), ds, k=args.k, lam=args.lam, lambda1=args.lambda1, lambda2=args.lambda2
            )
            seed = unit_seed(args.seed, i)
            if args.method == "wachter":
                ces = [wachter_generate(model, request, mad, seed, search)]
            else:
                ces = dice_generate(model, request, mad, seed, search)
            for j, ce in enumerate(ces):
                w.writerow(
                    [
                        i,
                        j,
                        *(_fmt(ce.values[f]) for f in model.feature_order),
                        ce.predicted_class,
                        _fmt(ce.objective),
                        int(ce.converged),
                    ]
                )
    return EXIT_OK


VERDICT_HEADER = [
    "unit_id",
    "ce_id",
    "intervened_features",
    "factual_y",
    "factual_class",
    "ce_class",
    "pcm_y",
    "pcm_class",
    "conflict",
]


def cmd_validate(args) -> int:
    scm = load_scm(args.scm)
    problems = validate(scm)
    if problems:
        log.error("invalid SCM: %s", "; ".join(problems))
        return EXIT_CONFIG
    ds = read_dataset(args.data)
    with open(args.ces, newline="") as fh:
        rows = list(csv.DictReader(fh))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VERDICT_HEADER)
        for r in rows:
            unit = ds.unit(int(r["unit_id"]))
            ce = {f: float(r[f]) for f in ds.features}
            v = validate_ce(scm, unit, ce, ds.threshold, args.eps, ce_class=int(r["predicted_class"]))
            changed = ";".join(f for f in ds.features if f in v.interventions)
            w.writerow(
                [
                    r["unit_id"],
                    r["ce_id"],
                    changed,
                    _fmt(v.factual_y),
                    v.factual_class,
                    v.ce_class,
                    _fmt(v.pcm_y),
                    v.pcm_class,
                    int(v.conflict),
                ]
            )
    return EXIT_OK


def cmd_experiment(args) -> int:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text())
    if args.scale:
        data = {**data, **SCALES[args.scale]}
    for key in ("structure", "seed", "output_dir", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    structures = data.pop("structures", None)
    try:
        configs = (
            [ExperimentConfig.from_dict({**data, "structure": s}) for s in structures]
            if structures
            else [ExperimentConfig.from_dict(data)]
        )
    except (TypeError, ValueError) as exc:
        log.error("bad experiment config: %s", exc)
        return EXIT_CONFIG

    reports = []
    for cfg in configs:
        rep = run_experiment(cfg)
        reports.append(rep)
        out = Path(cfg.output_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        for fmt in reporting.FORMATS:
            reporting.emit_report(rep, fmt, out)
    summary = conflict_summary(reports)
    if configs[0].output_dir:
        Path(configs[0].output_dir, "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    rep = reporting.read_report(args.input)
    text = reporting.render(rep, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ceaudit", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a dataset from an SCM")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--structure", choices=["chain", "fork", "collider"])
    src.add_argument("--scm", help="SCM JSON file")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit the logistic classifier")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    t.add_argument("--max-epochs", type=int, default=TrainConfig.max_epochs)
    t.add_argument("--tol", type=float, default=TrainConfig.convergence_tol)
    t.add_argument("--l2", type=float, default=TrainConfig.l2_penalty)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("explain", help="generate counterfactuals for the first correctly classified units")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--units", type=int, default=5)
    e.add_argument("--k", type=int, default=2)
    e.add_argument("--method", choices=["dice", "wachter"], default="dice")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--lam", type=float, default=0.5)
    e.add_argument("--lambda1", type=float, default=0.5)
    e.add_argument("--lambda2", type=float, default=1.0)
    e.add_argument("--restarts", type=int, default=SearchConfig.restarts)
    e.add_argument("--max-iter", type=int, default=SearchConfig.max_iter)
    e.add_argument("--step", type=float, default=SearchConfig.step)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_explain)

    v = sub.add_parser("validate", help="audit counterfactuals against the SCM")
    v.add_argument("--scm", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--ces", required=True)
    v.add_argument("--eps", type=float, default=DEFAULT_EPS)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_validate)

    x = sub.add_parser("experiment", help="run the full pipeline from a JSON config")
    x.add_argument("--config")
    x.add_argument("--scale", choices=sorted(SCALES))
    x.add_argument("--structure")
    x.add_argument("--seed", type=int)
    x.add_argument("--out", dest="output_dir")
    x.add_argument("--workers", type=int)
    x.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="re-render a report file")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--format", choices=reporting.FORMATS, required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except DegenerateLabelsError as exc:
        log.error("%s", exc)
        return EXIT_DEGENERATE
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
