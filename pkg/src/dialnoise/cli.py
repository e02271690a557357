"""Batch command line: inject, sweep, audit, clean, calibrate, denoise, split-ood, eval, stats.

All randomness flows from --seed, so any subcommand run twice with the same
flags writes byte-identical artifacts.  A JSON config file can pre-set any
long flag; flags typed on the command line win.  Exit codes: 0 success,
1 validation/usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import calibration, corpus as corpus_mod, denoiser, metrics, ontology, taxonomy
from .injector import (
    DEFAULT_RATE,
    FilePerturber,
    InjectionError,
    NoiseSpec,
    ServicePerturber,
    build_transition_matrix,
    inject_annotator_noise,
    inject_breakdown_noise,
    inject_class_noise,
    inject_discourse_noise,
    inject_instance_noise,
    inject_ontology_variants,
    leave_one_out,
    load_embeddings,
    make_ood_split,
    sweep,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="dialnoise", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config", help="JSON file pre-setting any long flag")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add_common(p, rate=True):
        p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
        if rate:
            p.add_argument("--rate", type=float, default=DEFAULT_RATE,
                           help=f"corruption rate (default {DEFAULT_RATE})")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker count; output is invariant to it")

    p = sub.add_parser("stats", help="corpus summary counts")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("audit", help="aggregate audit tallies into prevalence rates")
    p.add_argument("--tallies", required=True, help="JSON array of per-dataset tallies")
    p.add_argument("--format", choices=["text_table", "json"], default="text_table")

    p = sub.add_parser("inject", help="corrupt a corpus with one noise category")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", required=True, help="line-delimited JSON injection ledger")
    p.add_argument("--category", required=True, help="slash path, e.g. training/labeling/instance")
    add_common(p)
    p.add_argument("--mode", choices=["uniform", "structured"], default=None,
                   help="class noise fallback when the category names no leaf")
    p.add_argument("--target", choices=["class_labels", "dialog_acts"],
                   default="class_labels", help="label field for class/spam noise")
    p.add_argument("--embeddings", help="GloVe-style text embeddings for structured mode")
    p.add_argument("--window-size", type=int, default=3,
                   help="recent-label pool size for instance noise")
    p.add_argument("--spam-target", choices=["class", "generation"], default="class")
    p.add_argument("--phrases", help="JSON list overriding shipped phrase tables")
    p.add_argument("--schema", help="ontology schema for variant noise (default shipped)")
    p.add_argument("--variant-tables", help="JSON variant tables (default shipped)")
    p.add_argument("--confusion-table", help="JSON ASR confusion table (default shipped)")
    p.add_argument("--perturber", help="paraphrase source: file:PATH or an http(s) URL")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=2)

    p = sub.add_parser("sweep", help="inject one corpus per noise level")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--category", required=True)
    p.add_argument("--levels", required=True, help="comma list, e.g. 0,0.1,0.2")
    add_common(p, rate=False)
    p.add_argument("--window-size", type=int, default=3)
    p.add_argument("--target", choices=["class_labels", "dialog_acts"], default="class_labels")
    p.add_argument("--mode", choices=["uniform", "structured"], default=None)
    p.add_argument("--embeddings")
    p.add_argument("--schema")

    p = sub.add_parser("clean", help="drop slot values that break the ontology's format rules")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--schema", help="schema file (default: shipped MultiWOZ-style rules)")
    p.add_argument("--policy", choices=["drop_example", "drop_value", "normalize_first"],
                   default="drop_example")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("calibrate", help="fit a softmax temperature on gold-labeled logits")
    p.add_argument("--dev", required=True, help="line-delimited JSON logit records")
    p.add_argument("--grid", default="1.3,1.5,1.7,1.9")
    p.add_argument("--bins", type=int, default=10, help="ECE bin count")
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("denoise", help="ontology clean + disagreement filter + pseudo-label")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", default="ontology,filter,coteach",
                   help="comma subset of ontology,filter,coteach")
    p.add_argument("--pred-a", help="filter predictions: JSONL file or service URL")
    p.add_argument("--pred-b", help="pseudo-label predictions: JSONL file or service URL")
    p.add_argument("--threshold", type=float, default=denoiser.DEFAULT_THRESHOLD)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="calibration temperature for pseudo-labeling (default 1.0)")
    p.add_argument("--schema")
    p.add_argument("--match-mode", choices=["exact_state", "per_slot"], default="exact_state")
    p.add_argument("--policy", choices=["drop_example", "drop_value", "normalize_first"],
                   default="drop_example")
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--retries", type=int, default=2)
    p.add_argument("--format", choices=["text", "json"], default="text")

    p = sub.add_parser("split-ood", help="hold out domains from training")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--holdout", help="comma list of domains to exclude from train")
    p.add_argument("--out-train")
    p.add_argument("--out-test")
    p.add_argument("--leave-one-out", action="store_true",
                   help="write one split per observed domain")
    p.add_argument("--out-dir")

    p = sub.add_parser("eval", help="score predictions against corpus gold labels")
    p.add_argument("--metric", choices=["jga", "acc", "bleu"], required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--pred", required=True,
                   help="prediction JSONL; for bleu: rows of {example_id, text}")
    p.add_argument("--format", choices=["text", "json"], default="text")

    return parser


_STEP_ALIASES = {"ontology": "ontology_clean", "filter": "filter_disagree",
                 "coteach": "coteach_pseudo",
                 "ontology_clean": "ontology_clean", "filter_disagree": "filter_disagree",
                 "coteach_pseudo": "coteach_pseudo"}


def _apply_config(args: argparse.Namespace, argv: list[str]) -> None:
    if not args.config:
        return
    with open(args.config, encoding="utf-8") as fh:
        config = json.load(fh)
    typed = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
             for a in argv if a.startswith("--")}
    for key, value in config.items():
        attr = key.replace("-", "_")
        if attr in typed or not hasattr(args, attr):
            continue
        setattr(args, attr, value)


def _emit(doc: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(doc, ensure_ascii=False, indent=2))
    else:
        for key, value in doc.items():
            print(f"{key}: {value}")


def _load_schema_arg(path: str | None) -> ontology.OntologySchema:
    return ontology.load_schema(path) if path else ontology.default_schema()


# ---------------------------------------------------------------------------
# Subcommand bodies
# ---------------------------------------------------------------------------


def _cmd_stats(args) -> int:
    report = corpus_mod.corpus_stats(corpus_mod.load_corpus(args.input))
    if args.format == "json":
        print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
    else:
        doc = report.to_dict()
        print(f"dialogues: {doc['dialogue_count']}")
        print(f"turns: {doc['turn_count']}")
        for key, value in doc["label_counts"].items():
            print(f"{key}: {value}")
        for dom, value in doc["domain_counts"].items():
            print(f"domain {dom}: {value}")
    return 0


def _cmd_audit(args) -> int:
    tallies = taxonomy.load_tallies(args.tallies)
    report = taxonomy.aggregate_prevalence(tallies)
    sys.stdout.write(taxonomy.render_report(report, format=args.format))
    return 0


def _select_injector(args, crp):
    """Map a category path onto an injection operation and its parameters."""
    category = taxonomy.parse_category(args.category, require_leaf=False)
    path = category.path
    params: dict = {}

    if path[:3] == ("training", "labeling", "class"):
        mode = path[3] if len(path) > 3 else (args.mode or "uniform")
        params["mode"] = mode
        if mode == "structured":
            if not args.embeddings:
                raise InjectionError("structured class noise needs --embeddings")
            table = load_embeddings(args.embeddings)
            observed = sorted({label for _, t in crp.iter_turns()
                               for label in getattr(t.labels, args.target)})
            params["matrix"] = build_transition_matrix(observed, table)
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_class_noise(crp, spec, target=args.target, jobs=args.jobs)

    if path[:3] == ("training", "labeling", "instance"):
        if len(path) > 3:
            raise InjectionError(
                "instance sub-categories are drawn uniformly per example; "
                "use --category training/labeling/instance")
        params["window_size"] = args.window_size
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_instance_noise(crp, spec, jobs=args.jobs)

    if path[:3] == ("training", "labeling", "annotator"):
        leaf = path[3] if len(path) > 3 else None
        if leaf == "adversarial":
            params["kind"] = "spam_class" if args.spam_target == "class" else "spam_generation"
            if args.phrases:
                params["generic_phrases"] = json.loads(Path(args.phrases).read_text("utf-8"))
        elif leaf == "formatting":
            params["kind"] = "formatting"
        else:
            raise InjectionError(f"no injector for {category}; pick adversarial or formatting")
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_annotator_noise(crp, spec, jobs=args.jobs)

    if path[:2] == ("training", "ontology"):
        if len(path) > 2:
            if path[2] == "general":
                raise InjectionError("no surface-form injector for training/ontology/general")
            params["kinds"] = [path[2]]
        if args.variant_tables:
            from .injector.variants import VariantTables
            params["variant_tables"] = VariantTables(
                families=json.loads(Path(args.variant_tables).read_text("utf-8")))
        schema = _load_schema_arg(args.schema)
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_ontology_variants(crp, spec, schema=schema, jobs=args.jobs)

    if path[:2] == ("training", "discourse"):
        leaf = path[2] if len(path) > 2 else None
        if leaf not in ("incoherent", "disfluent", "unnatural"):
            raise InjectionError(f"no injector for {category}; pick incoherent, "
                                 "disfluent or unnatural")
        params["kind"] = leaf
        if leaf == "unnatural" and args.phrases:
            params["unnatural_phrases"] = json.loads(Path(args.phrases).read_text("utf-8"))
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_discourse_noise(crp, spec, jobs=args.jobs)

    if path[:3] == ("inference", "breakdown", "perturbation"):
        leaf = path[3] if len(path) > 3 else None
        if leaf not in ("typo", "asr", "disfluency"):
            raise InjectionError(f"pick a perturbation leaf under {category}")
        params["kind"] = leaf
        if leaf == "asr" and args.confusion_table:
            params["confusion_table"] = json.loads(Path(args.confusion_table).read_text("utf-8"))
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_breakdown_noise(crp, spec, jobs=args.jobs)

    if path[:3] == ("inference", "breakdown", "paraphrase") or \
            path == ("inference", "breakdown"):
        params["kind"] = "paraphrase"
        if not args.perturber:
            raise InjectionError("paraphrase noise needs --perturber file:PATH or a URL")
        if args.perturber.startswith("file:"):
            params["perturber"] = FilePerturber(args.perturber[len("file:"):])
        elif args.perturber.startswith(("http://", "https://")):
            params["perturber"] = ServicePerturber(args.perturber, timeout=args.timeout,
                                                   retries=args.retries)
        else:
            raise InjectionError(f"perturber must be file:PATH or a URL, got {args.perturber!r}")
        spec = NoiseSpec(category, args.rate, args.seed, params)
        return lambda: inject_breakdown_noise(crp, spec, jobs=args.jobs)

    if path[:2] == ("inference", "ood"):
        raise InjectionError("out-of-distribution noise is a split, not an injection; "
                             "use the split-ood subcommand")
    raise InjectionError(f"no injector for category {category}")


def _cmd_inject(args) -> int:
    crp = corpus_mod.load_corpus(args.input)
    run = _select_injector(args, crp)
    noisy, log = run()
    corpus_mod.save_corpus(noisy, args.out)
    log.save(args.log)
    print(f"corrupted {len(log)} examples ({len(log.skipped)} skipped); "
          f"corpus -> {args.out}, log -> {args.log}")
    return 0


def _cmd_sweep(args) -> int:
    crp = corpus_mod.load_corpus(args.input)
    levels = [float(x) for x in args.levels.split(",") if x.strip() != ""]
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    category = taxonomy.parse_category(args.category, require_leaf=False)
    base = NoiseSpec(category, rate=DEFAULT_RATE, seed=args.seed,
                     params={"window_size": args.window_size})

    def inject(c, spec):
        shim = argparse.Namespace(**vars(args))
        shim.rate = spec.rate
        shim.seed = spec.seed
        for attr, default in (("phrases", None), ("variant_tables", None),
                              ("confusion_table", None), ("perturber", None),
                              ("spam_target", "class"), ("timeout", 10.0), ("retries", 2)):
            if not hasattr(shim, attr):
                setattr(shim, attr, default)
        return _select_injector(shim, c)()

    results = sweep(crp, base, levels, inject)
    for level, noisy, log in results:
        tag = f"{level:g}".replace(".", "p")
        corpus_mod.save_corpus(noisy, out_dir / f"noise_{tag}.json")
        log.save(out_dir / f"noise_{tag}.log.jsonl")
        print(f"level {level:g}: {len(log)} corrupted -> noise_{tag}.json")
    return 0


def _cmd_clean(args) -> int:
    crp = corpus_mod.load_corpus(args.input)
    schema = _load_schema_arg(args.schema)
    outcome = ontology.clean_ontology(crp, schema, policy=args.policy)
    corpus_mod.save_corpus(outcome.clean_corpus, args.out)
    _emit({
        "policy": args.policy,
        "dropped_values": len(outcome.dropped_values),
        "removed_examples": len(outcome.removed_examples),
        "normalized_values": len(outcome.normalized_values),
        "out": args.out,
    }, args.format == "json")
    return 0


def _cmd_calibrate(args) -> int:
    records = calibration.load_logit_records(args.dev)
    grid = [float(x) for x in args.grid.split(",") if x.strip()]
    fit = calibration.fit_temperature(records, grid=grid)
    ece = calibration.expected_calibration_error(records, fit.temperature, bins=args.bins)
    if args.format == "json":
        print(json.dumps({
            "temperature": fit.temperature,
            "nll_by_temperature": {f"{k:g}": v for k, v in sorted(fit.nll_by_temperature.items())},
            "ece_at_fit": ece,
        }, indent=2))
    else:
        print(f"{'lambda':>8}  {'mean NLL':>12}")
        for lam, nll, chosen in fit.report_rows():
            marker = "  <- selected" if chosen else (
                "  (baseline)" if lam == 1.0 and lam != fit.temperature else "")
            print(f"{lam:>8g}  {nll:>12.6f}{marker}")
        print(f"ECE at lambda={fit.temperature:g} with {args.bins} bins: {ece:.6f}")
    return 0


def _load_predictions_arg(value: str, crp, timeout: float, retries: int):
    if value.startswith(("http://", "https://")):
        ids = [(did, t.turn_id) for did, t in crp.iter_turns()]
        return denoiser.fetch_predictions(value, crp, ids, timeout=timeout, retries=retries)
    return denoiser.load_predictions(value)


def _cmd_denoise(args) -> int:
    crp = corpus_mod.load_corpus(args.input)
    steps = []
    for token in args.steps.split(","):
        token = token.strip()
        if not token:
            continue
        if token not in _STEP_ALIASES:
            raise denoiser.DenoiseError(f"unknown step {token!r}; "
                                        f"choose from ontology, filter, coteach")
        steps.append(_STEP_ALIASES[token])

    schema = _load_schema_arg(args.schema) if ("ontology_clean" in steps or
                                               args.match_mode == "per_slot") else None
    predictions_a = _load_predictions_arg(args.pred_a, crp, args.timeout, args.retries) \
        if args.pred_a else None
    predictions_b = _load_predictions_arg(args.pred_b, crp, args.timeout, args.retries) \
        if args.pred_b else None

    config = denoiser.DenoiseConfig(steps=tuple(steps), threshold=args.threshold,
                                    lam=args.lam, schema=schema,
                                    match_mode=args.match_mode,
                                    ontology_policy=args.policy)
    result = denoiser.run_pipeline(crp, config, predictions_a, predictions_b)
    corpus_mod.save_corpus(result.clean_corpus, args.out)
    _emit({
        "ablation": result.ablation_name,
        **result.counts.to_dict(),
        "output_turns": result.clean_corpus.turn_count(),
        "out": args.out,
    }, args.format == "json")
    return 0


def _cmd_split_ood(args) -> int:
    crp = corpus_mod.load_corpus(args.input)
    if args.leave_one_out:
        if not args.out_dir:
            raise InjectionError("--leave-one-out needs --out-dir")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for domain, split in leave_one_out(crp):
            corpus_mod.save_corpus(split["train"], out_dir / f"train_wo_{domain}.json")
            corpus_mod.save_corpus(split["test"], out_dir / f"test_{domain}.json")
            print(f"holdout {domain}: train={split['train'].turn_count()} turns")
        return 0
    if not (args.holdout and args.out_train and args.out_test):
        raise InjectionError("split-ood needs --holdout with --out-train/--out-test, "
                             "or --leave-one-out with --out-dir")
    holdout = {d.strip() for d in args.holdout.split(",") if d.strip()}
    split = make_ood_split(crp, holdout)
    corpus_mod.save_corpus(split["train"], args.out_train)
    corpus_mod.save_corpus(split["test"], args.out_test)
    print(f"train={split['train'].turn_count()} turns, test={split['test'].turn_count()} turns")
    return 0


def _cmd_eval(args) -> int:
    crp = corpus_mod.load_corpus(args.input)
    if args.metric == "jga":
        records = denoiser.load_predictions(args.pred)
        gold = {(did, t.turn_id): t.labels.belief_state for did, t in crp.iter_turns()}
        pred = {r.example_id: [sv for sv, _ in r.state] for r in records if r.kind == "dst"}
        score = metrics.joint_goal_accuracy(pred, gold)
        _emit({"metric": "jga", "score": score}, args.format == "json")
    elif args.metric == "acc":
        records = denoiser.load_predictions(args.pred)
        gold = {(did, t.turn_id): t.labels.class_labels[0]
                for did, t in crp.iter_turns() if t.labels.class_labels}
        pred = {r.example_id: r.argmax_label() for r in records
                if r.kind == "classification" and r.example_id in gold}
        score = metrics.classification_accuracy(pred, gold)
        _emit({"metric": "acc", "score": score}, args.format == "json")
    else:  # bleu
        hyps = {}
        with open(args.pred, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    doc = json.loads(line)
                    hyps[(doc["example_id"][0], doc["example_id"][1])] = doc["text"]
        refs = {(did, t.turn_id): t.labels.reference_response
                for did, t in crp.iter_turns() if t.labels.reference_response}
        scored = [metrics.bleu(hyps[ex], [refs[ex]]) for ex in sorted(refs) if ex in hyps]
        if not scored:
            raise ValueError("no overlapping examples with reference responses")
        _emit({"metric": "bleu", "score": sum(scored) / len(scored),
               "examples": len(scored)}, args.format == "json")
    return 0


_COMMANDS = {
    "stats": _cmd_stats,
    "audit": _cmd_audit,
    "inject": _cmd_inject,
    "sweep": _cmd_sweep,
    "clean": _cmd_clean,
    "calibrate": _cmd_calibrate,
    "denoise": _cmd_denoise,
    "split-ood": _cmd_split_ood,
    "eval": _cmd_eval,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        _apply_config(args, argv)
        return _COMMANDS[args.command](args)
    except OSError as exc:
        print(f"dialnoise: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError) as exc:
        print(f"dialnoise: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
