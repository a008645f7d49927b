"""Command-line entry point for the probing pipeline.

Subcommands mirror the pipeline stages (validate, extract-tasks,
train-lm, dump-reps, train-probe, baseline, run-experiment, report,
compare) so representations from external models can enter at the
dump-reps boundary as WREP1 files.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical failure. Diagnostics go to stderr; data artifacts go to
files under --out-dir; a machine-readable run summary is printed to
stdout when --json is given.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from . import __version__
from . import baselines as bl
from . import experiment as ex
from . import probe as pr
from . import repstore as rs
from . import tasks as tk
from . import toylm as lm
from .treebank import Corpus, TreebankError, leaves, parse_conllu, parse_ptb

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the CLI contract says 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_path(args, name):
    path = name if os.path.isabs(name) else os.path.join(args.out_dir, name)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    return path


def _write_manifest(args, inputs, outputs, seeds):
    manifest = {
        "argv": sys.argv[1:],
        "version": __version__,
        "seeds": seeds,
        "inputs": {p: _sha256(p) for p in inputs if p and os.path.exists(p)},
        "outputs": outputs,
    }
    path = _out_path(args, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _emit(args, summary):
    if args.json:
        print(json.dumps(summary, sort_keys=True))


def _read(path):
    with open(path, encoding="utf-8") as f:
        return f.read()


def _load_text_corpus(paths):
    """One-sentence-per-line, whitespace-tokenized; ids are path:index."""
    sentences, ids = [], []
    for path in paths:
        for i, line in enumerate(_read(path).splitlines()):
            tokens = line.split()
            if tokens:
                sentences.append(tokens)
                ids.append(f"{path}:{i}")
    return sentences, ids


# --- subcommands ------------------------------------------------------------


def cmd_validate(args):
    summary = {"ptb": [], "conllu": []}
    for path in args.ptb or []:
        trees = parse_ptb(_read(path), source=path)
        summary["ptb"].append({
            "file": path,
            "sentences": len(trees),
            "tokens": sum(len(leaves(t)) for t in trees),
        })
    for path in args.conllu or []:
        sentences, rejections = parse_conllu(_read(path), source=path)
        for r in rejections:
            print(f"rejected: {r}", file=sys.stderr)
        summary["conllu"].append({
            "file": path,
            "sentences": len(sentences),
            "tokens": sum(len(s.tokens) for s in sentences),
            "rejections": len(rejections),
        })
    if not summary["ptb"] and not summary["conllu"]:
        print("error: nothing to validate; pass --ptb and/or --conllu", file=sys.stderr)
        return EXIT_USAGE
    for entry in summary["ptb"] + summary["conllu"]:
        print(f"{entry['file']}: {entry['sentences']} sentences, {entry['tokens']} tokens",
              file=sys.stderr)
    _emit(args, summary)
    return EXIT_OK


def cmd_extract_tasks(args):
    outputs = []
    if args.ptb:
        corpus = Corpus(parse_ptb(_read(args.ptb), source=args.ptb))
        task = tk.extract_word_labels(corpus, args.level)
        out = _out_path(args, args.out or f"task_level{args.level}.tsv")
        tk.write_word_task(task, out)
        outputs.append(out)
        summary = {"examples": len(task.examples), "out": out, "level": args.level}
    elif args.conllu:
        sentences, rejections = parse_conllu(_read(args.conllu), source=args.conllu)
        for r in rejections:
            print(f"rejected: {r}", file=sys.stderr)
        task = tk.generate_arc_pairs(Corpus(sentences), seed=args.seed)
        out = _out_path(args, args.out or "task_arc.tsv")
        tk.write_arc_task(task, out)
        outputs.append(out)
        summary = {"examples": len(task.examples), "out": out,
                   "skipped_tokens": task.skipped_tokens, "seed": args.seed}
    else:
        print("error: pass --ptb with --level, or --conllu for arc pairs", file=sys.stderr)
        return EXIT_USAGE
    _write_manifest(args, [args.ptb or args.conllu], outputs, {"seed": args.seed})
    _emit(args, summary)
    return EXIT_OK


def cmd_train_lm(args):
    sentences, _ = _load_text_corpus(args.corpus)
    directions = ["forward", "backward"] if args.direction == "both" else [args.direction]
    outputs = []
    summary = {"perplexity": {}}
    for direction in directions:
        config = lm.LstmLmConfig(
            num_layers=args.layers, dim=args.dim, direction=direction,
            seed=args.seed, learning_rate=args.learning_rate, epochs=args.epochs,
        )
        model, ppl_log = lm.train_lm(sentences, config)
        ckpt = _out_path(args, f"lm_{direction}.npz")
        lm.save_lm(model, ckpt)
        log_path = _out_path(args, f"lm_{direction}_ppl.csv")
        with open(log_path, "w", encoding="utf-8") as f:
            f.write("epoch,perplexity\n")
            for epoch, ppl in enumerate(ppl_log):
                f.write(f"{epoch},{ppl:.6f}\n")
        outputs += [ckpt, log_path]
        summary["perplexity"][direction] = ppl_log[-1]
        print(f"{direction}: final perplexity {ppl_log[-1]:.4f} -> {ckpt}", file=sys.stderr)
    _write_manifest(args, args.corpus, outputs, {"seed": args.seed})
    _emit(args, summary)
    return EXIT_OK


def _dump_input_sentences(args):
    if args.corpus:
        return _load_text_corpus(args.corpus)
    sentences, ids = [], []
    for path in args.ptb or []:
        for tree in parse_ptb(_read(path), source=path):
            sentences.append([t for t, _ in leaves(tree)])
            ids.append(tree.sentence_id)
    for path in args.conllu or []:
        parsed, rejections = parse_conllu(_read(path), source=path)
        for r in rejections:
            print(f"rejected: {r}", file=sys.stderr)
        for s in parsed:
            sentences.append(list(s.tokens))
            ids.append(s.sentence_id)
    return sentences, ids


def cmd_dump_reps(args):
    model_fwd = lm.load_lm(args.fwd)
    model_bwd = lm.load_lm(args.bwd)
    sentences, ids = _dump_input_sentences(args)
    if not sentences:
        print("error: no input sentences; pass --corpus, --ptb, or --conllu", file=sys.stderr)
        return EXIT_USAGE
    reps = lm.dump_representations(model_fwd, model_bwd, sentences, ids)
    out = _out_path(args, args.out)
    rs.write_wrep(reps, out)
    inputs = (args.corpus or []) + (args.ptb or []) + (args.conllu or []) + [args.fwd, args.bwd]
    _write_manifest(args, inputs, [out], {})
    _emit(args, {"out": out, "sentences": len(sentences), "layer_dims": reps.layer_dims})
    return EXIT_OK


def _train_config_from(args, seed):
    return pr.TrainConfig(
        learning_rate=args.learning_rate, batch_size=args.batch_size,
        max_epochs=args.max_epochs, patience=args.patience, seed=seed,
        holdout_fraction=args.holdout_fraction, hidden_dim=args.hidden_dim,
    )


def cmd_train_probe(args):
    reps = rs.read_wrep(args.reps)
    if args.kind == "word":
        task = tk.read_word_task(args.task_file, level=args.level)
        vocab = tk.build_vocabulary(task)
    else:
        task = tk.read_arc_task(args.task_file)
        vocab = tk.LabelVocabulary(
            labels=ex.ARC_LABELS, index={l: i for i, l in enumerate(ex.ARC_LABELS)}
        )
    data = rs.align(reps, task, vocab, args.layer)
    log_path = _out_path(args, f"probe_{task.name}_layer{args.layer}.csv")
    model, holdout_acc = pr.train(data, vocab, _train_config_from(args, args.seed), log_path)
    ckpt = _out_path(args, args.out or f"probe_{task.name}_layer{args.layer}.ckpt")
    pr.save_checkpoint(model, ckpt)
    summary = {"holdout_accuracy": holdout_acc, "checkpoint": ckpt, "layer": args.layer}
    if args.eval_task_file:
        if args.kind == "word":
            eval_task = tk.read_word_task(args.eval_task_file, level=args.level)
        else:
            eval_task = tk.read_arc_task(args.eval_task_file)
        eval_data = rs.align(reps, eval_task, vocab, args.layer)
        summary["eval_accuracy"] = pr.evaluate(model, eval_data)
    _write_manifest(args, [args.reps, args.task_file, args.eval_task_file],
                    [ckpt, log_path], {"seed": args.seed})
    print(f"holdout accuracy {holdout_acc:.4f} -> {ckpt}", file=sys.stderr)
    _emit(args, summary)
    return EXIT_OK


def cmd_baseline(args):
    train_corpus = Corpus(parse_ptb(_read(args.train), source=args.train), split_tag="train")
    eval_corpus = Corpus(parse_ptb(_read(args.eval), source=args.eval), split_tag="eval")
    train_task = tk.extract_word_labels(train_corpus, args.level)
    eval_task = tk.extract_word_labels(eval_corpus, args.level)
    table = bl.fit_majority(train_task, train_corpus)
    acc = bl.evaluate_majority(table, eval_task, eval_corpus)
    out = _out_path(args, args.out or f"majority_level{args.level}.tsv")
    bl.write_majority_table(table, out)
    _write_manifest(args, [args.train, args.eval], [out], {})
    print(f"majority accuracy (level {args.level}): {acc:.4f}", file=sys.stderr)
    _emit(args, {"accuracy": acc, "level": args.level, "table": out})
    return EXIT_OK


_CONFIG_KEYS = {
    "reps": str, "const_train": str, "const_eval": str,
    "dep_train": str, "dep_eval": str, "tasks": str, "layers": str,
    "seed": int, "jobs": int, "learning_rate": float, "batch_size": int,
    "max_epochs": int, "patience": int, "holdout_fraction": float, "hidden_dim": int,
}


def _parse_config_file(path):
    values = {}
    for lineno, line in enumerate(_read(path).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip().strip('"')
        if not sep or key not in _CONFIG_KEYS:
            raise ValueError(f"{path}: line {lineno}: unknown or malformed entry {line!r}")
        values[key] = _CONFIG_KEYS[key](value)
    return values


def _build_plan(args):
    config = _parse_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return config.get(key, default)

    tasks = pick(args.tasks, "tasks")
    layers = pick(args.layers, "layers")
    reps = pick(args.reps, "reps")
    missing = [name for name, value in
               [("reps", reps), ("tasks", tasks), ("layers", layers)] if value is None]
    if missing:
        raise ValueError(f"missing required settings: {', '.join(missing)}")
    train = pr.TrainConfig(
        learning_rate=pick(args.learning_rate, "learning_rate", 1e-3),
        batch_size=pick(args.batch_size, "batch_size", 64),
        max_epochs=pick(args.max_epochs, "max_epochs", 50),
        patience=pick(args.patience, "patience", 5),
        holdout_fraction=pick(args.holdout_fraction, "holdout_fraction", 0.1),
        hidden_dim=pick(args.hidden_dim, "hidden_dim", 300),
        seed=0,
    )
    return ex.ExperimentPlan(
        reps_path=reps,
        tasks=[t.strip() for t in tasks.split(",") if t.strip()],
        layers=[int(l) for l in layers.split(",") if l.strip()],
        out_dir=args.out_dir,
        seed=pick(args.seed, "seed", 0),
        constituency_train=pick(args.const_train, "const_train"),
        constituency_eval=pick(args.const_eval, "const_eval"),
        dependency_train=pick(args.dep_train, "dep_train"),
        dependency_eval=pick(args.dep_eval, "dep_eval"),
        train=train,
        jobs=pick(args.jobs, "jobs", 1),
    )


def _emit_report_files(args, report):
    report_path = _out_path(args, "report.json")
    with open(report_path, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    table_path = _out_path(args, "table.tsv")
    ex.emit_table(report, table_path)
    curves_csv = _out_path(args, "curves.csv")
    curves_svg = _out_path(args, "curves.svg")
    ex.emit_layer_curves(report, curves_csv, curves_svg)
    return [report_path, table_path, curves_csv, curves_svg]


def cmd_run_experiment(args):
    plan = _build_plan(args)
    plan.validate()
    report = ex.run_experiment(plan, run_dir=args.out_dir)
    outputs = _emit_report_files(args, report)
    inputs = [plan.reps_path, plan.constituency_train, plan.constituency_eval,
              plan.dependency_train, plan.dependency_eval, args.config]
    _write_manifest(args, inputs, outputs, {"seed": plan.seed})
    for task in report.tasks:
        print(f"{task}: best layer {report.best_layer[task]} "
              f"({report.cells[task][report.best_layer[task]]:.4f}), "
              f"baseline {report.baselines[task]:.4f}", file=sys.stderr)
    _emit(args, json.loads(report.to_json()))
    return EXIT_OK


def cmd_report(args):
    report = ex.ExperimentReport.from_json(_read(args.report))
    outputs = _emit_report_files(args, report)
    _write_manifest(args, [args.report], outputs, {"seed": report.seed})
    _emit(args, {"outputs": outputs})
    return EXIT_OK


def cmd_compare(args):
    a = ex.ExperimentReport.from_json(_read(args.a))
    b = ex.ExperimentReport.from_json(_read(args.b))
    out = _out_path(args, args.out or "compare.csv")
    ex.compare_reports(a, b, out)
    _write_manifest(args, [args.a, args.b], [out], {})
    _emit(args, {"out": out})
    return EXIT_OK


# --- argument wiring ---------------------------------------------------------


def build_parser():
    parser = _Parser(prog="syntaxprobe", description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default=".", help="directory for all output files")
    parser.add_argument("--seed", type=int, default=None, help="global random seed")
    parser.add_argument("--json", action="store_true", help="print a JSON run summary to stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate treebank files")
    p.add_argument("--ptb", action="append")
    p.add_argument("--conllu", action="append")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("extract-tasks", help="build task files from treebanks")
    p.add_argument("--ptb")
    p.add_argument("--level", type=int, default=0, choices=(0, 1, 2, 3))
    p.add_argument("--conllu")
    p.add_argument("--out")
    p.set_defaults(func=cmd_extract_tasks)

    p = sub.add_parser("train-lm", help="train the toy LSTM language model")
    p.add_argument("--corpus", action="append", required=True)
    p.add_argument("--direction", choices=("forward", "backward", "both"), default="both")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.set_defaults(func=cmd_train_lm)

    p = sub.add_parser("dump-reps", help="dump WREP1 representations from LM checkpoints")
    p.add_argument("--fwd", required=True)
    p.add_argument("--bwd", required=True)
    p.add_argument("--corpus", action="append")
    p.add_argument("--ptb", action="append")
    p.add_argument("--conllu", action="append")
    p.add_argument("--out", default="reps.wrep")
    p.set_defaults(func=cmd_dump_reps)

    p = sub.add_parser("train-probe", help="train one diagnostic probe")
    p.add_argument("--reps", required=True)
    p.add_argument("--task-file", required=True)
    p.add_argument("--kind", choices=("word", "arc"), default="word")
    p.add_argument("--level", type=int, default=0, choices=(0, 1, 2, 3))
    p.add_argument("--layer", type=int, required=True)
    p.add_argument("--eval-task-file")
    p.add_argument("--out")
    _add_train_flags(p, with_defaults=True)
    p.set_defaults(func=cmd_train_probe)

    p = sub.add_parser("baseline", help="fit and score the per-word majority baseline")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--level", type=int, default=0, choices=(0, 1, 2, 3))
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("run-experiment", help="full layer sweep over tasks")
    p.add_argument("--reps")
    p.add_argument("--const-train")
    p.add_argument("--const-eval")
    p.add_argument("--dep-train")
    p.add_argument("--dep-eval")
    p.add_argument("--tasks", help="comma-separated subset of pos,parent,grandparent,greatgrandparent,arc")
    p.add_argument("--layers", help="comma-separated layer indices")
    p.add_argument("--config", help="key=value plan file; flags override it")
    p.add_argument("--jobs", type=int, default=None)
    _add_train_flags(p, with_defaults=False)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("report", help="re-emit tables and curves from a report JSON")
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="per-cell deltas between two reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    return parser


def _add_train_flags(p, with_defaults):
    d = (lambda v: v) if with_defaults else (lambda v: None)
    p.add_argument("--learning-rate", type=float, default=d(1e-3))
    p.add_argument("--batch-size", type=int, default=d(64))
    p.add_argument("--max-epochs", type=int, default=d(50))
    p.add_argument("--patience", type=int, default=d(5))
    p.add_argument("--holdout-fraction", type=float, default=d(0.1))
    p.add_argument("--hidden-dim", type=int, default=d(300))


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = 0 if args.command != "run-experiment" else None
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        return args.func(args)
    except (pr.NumericalError, lm.NumericalError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TreebankError, rs.RepFormatError, rs.AlignmentError, ValueError,
            RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
