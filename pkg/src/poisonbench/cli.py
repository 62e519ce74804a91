"""Command-line front end.

Subcommands compose through files: ``generate`` writes a graph directory,
``attack`` a perturbation JSON, ``train`` a model directory, and the rest read
them back.  Exit status is 0 on success, 1 for invalid input and 2 when a
valid request fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import attacks as atk
from .bench import emit_report, featurize, load_config, load_report, run_experiment
from .certify import SmoothingConfig, certify_set
from .defense import PurifyConfig, purify
from .errors import BudgetError, ConfigError, ParseError, PoisonBenchError, ValidationError
from .metrics import accuracy, embedding_metrics
from .tagraph import (
    NodeSplit,
    SbmParams,
    generate_synthetic_tag,
    load_graph_dir,
    save_graph,
    split_nodes,
)
from .victims import GnnArch, TrainConfig, load_model, predict, save_model, train_gnn

SPLIT_FILE = "split.json"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _sbm_overrides(pairs):
    aliases = {"N": "num_nodes", "C": "num_classes", "p_in": "intra_edge_prob",
               "p_out": "inter_edge_prob", "V": "vocab_size", "L": "words_per_node",
               "skew": "class_word_skew"}
    types = {f.name: f.type for f in fields(SbmParams)}
    out = {}
    for item in pairs:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--sbm expects KEY=VALUE, got {item!r}")
        key = aliases.get(key, key)
        if key not in types:
            raise ConfigError(f"unknown SBM parameter {key!r}")
        try:
            out[key] = int(val) if types[key] in (int, "int") else float(val)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None
    return out


def _load_data(args):
    graph = load_graph_dir(args.data)
    split_path = Path(args.data) / SPLIT_FILE
    if split_path.exists():
        split = NodeSplit.from_dict(json.loads(split_path.read_text()))
        split.check(graph.num_nodes)
    else:
        split = split_nodes(graph, 0.1, 0.1, 0)
    return graph, split


def _embedding_spec(value):
    if value in ("bow", "tfidf"):
        return {"kind": value}
    return {"kind": "external", "path": value}


def _poisoned(args, graph):
    if getattr(args, "perturbation", None):
        return atk.apply_perturbation(graph, atk.PerturbationSet.load(args.perturbation))
    return graph


def _write_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    params = SbmParams(**{"seed": args.seed, **_sbm_overrides(args.sbm or [])})
    graph = generate_synthetic_tag(params)
    out = save_graph(graph, args.out)
    split = split_nodes(graph, args.train_frac, args.val_frac, args.split_seed)
    (out / SPLIT_FILE).write_text(json.dumps(split.to_dict(), sort_keys=True) + "\n")
    print(f"wrote {graph.num_nodes} nodes, {graph.num_edges} edges to {out}")


def cmd_attack(args):
    graph, split = _load_data(args)
    features = featurize(graph, _embedding_spec(args.embedding))
    name = args.name
    edits = args.edits if args.edits is not None else 0
    if name in atk.TEXTUAL_ATTACKS:
        pset = atk.textual_attack(name, graph, split, edits or 3, args.seed)
    elif name in ("targeted", "random_target"):
        if args.per_target is None:
            raise ConfigError(f"{name} needs --per-target")
        targets = atk.select_targets(graph, split, args.min_degree, args.sample_rate, args.seed)
        pset = atk.structural_attack(name, graph, features, split,
                                     atk.BudgetSpec.targeted(args.per_target), args.seed,
                                     targets=targets)
    elif name in atk.STRUCTURAL_ATTACKS:
        if args.rate is None:
            raise ConfigError(f"{name} needs --rate")
        budget = atk.BudgetSpec.rate(args.rate)
        if args.text_attack:
            pset = atk.combined_attack(graph, features, split, (name, budget),
                                       (args.text_attack, edits or 3), args.seed)
        else:
            pset = atk.structural_attack(name, graph, features, split, budget, args.seed,
                                         oracle_labels=args.oracle_labels)
    else:
        raise ConfigError(f"unknown attack {name!r}")
    if args.out:
        pset.save(args.out)
    else:
        sys.stdout.write(pset.to_json())
    if args.poisoned_out:
        save_graph(atk.apply_perturbation(graph, pset), args.poisoned_out)
        (Path(args.poisoned_out) / SPLIT_FILE).write_text(
            json.dumps(split.to_dict(), sort_keys=True) + "\n")


def cmd_train(args):
    graph, split = _load_data(args)
    graph = _poisoned(args, graph)
    features = featurize(graph, _embedding_spec(args.embedding))
    cfg = TrainConfig(seed=args.seed, epochs=args.epochs, learning_rate=args.lr)
    model = train_gnn(GnnArch(kind=args.arch, hidden=args.hidden), graph, features, split, cfg)
    save_model(model, args.out)
    pred, _ = predict(model, graph, features)
    print(f"{args.arch} seed={args.seed} val_acc={100 * model.val_accuracy:.2f} "
          f"test_acc={accuracy(pred, graph.labels, split.test):.2f} -> {args.out}")


def cmd_eval(args):
    graph, split = _load_data(args)
    graph = _poisoned(args, graph)
    features = featurize(graph, _embedding_spec(args.embedding))
    model = load_model(args.model)
    if model.in_dim != features.dim:
        raise ValidationError(f"model expects {model.in_dim} features, data has {features.dim}; "
                              "evaluate on the graph the model was trained on")
    pred, _ = predict(model, graph, features)
    out = {"acc_test": accuracy(pred, graph.labels, split.test)}
    if args.metrics:
        out.update((k, v) for k, v in embedding_metrics(features, graph, seed=args.seed).to_dict().items()
                   if v is not None)
    _write_json(out, args.out)


def cmd_purify(args):
    graph, _ = _load_data(args)
    graph = _poisoned(args, graph)
    features = featurize(graph, _embedding_spec(args.embedding))
    if args.quantile is not None:
        pcfg = PurifyConfig(mode="quantile", quantile=args.quantile)
    else:
        pcfg = PurifyConfig(mode="fixed_threshold", threshold=args.threshold)
    cleaned = purify(graph, features, pcfg)
    save_graph(cleaned, args.out)
    src = Path(args.data) / SPLIT_FILE
    if src.exists():
        (Path(args.out) / SPLIT_FILE).write_text(src.read_text())
    print(f"kept {cleaned.num_edges} of {graph.num_edges} edges -> {args.out}")


def cmd_certify(args):
    graph, split = _load_data(args)
    graph = _poisoned(args, graph)
    features = featurize(graph, _embedding_spec(args.embedding))
    model = load_model(args.model)
    cfg = SmoothingConfig(p_del=args.p_del, num_samples=args.samples, alpha=args.alpha, seed=args.seed)
    nodes = np.asarray(split.test)
    if args.max_nodes is not None and len(nodes) > args.max_nodes:
        nodes = nodes[: args.max_nodes]
    res = certify_set(model, graph, features, nodes, cfg=cfg,
                      correct_by="base" if args.base_correctness else "smoothed",
                      graph_label=str(args.perturbation or args.data))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "certification.csv")
    res.write_json(out / "certification.json")
    print(f"CA={res.certified_accuracy:.2f} MCR={res.mean_certified_radius:.3f} -> {out}")


def cmd_run(args):
    cfg = load_config(args.config)
    out = args.out or cfg.output_dir
    print(f"seeds: {list(cfg.seeds)}")
    report = run_experiment(cfg)
    for p in emit_report(report, out):
        print(p)
    failed = [r for r in report.rows if r.error]
    for r in failed:
        print(f"row failed: {r.arch} {r.attack} seed={r.seed}: {r.error}", file=sys.stderr)
    print(f"content hash {report.content_hash()}")


def cmd_report(args):
    report = load_report(args.input)
    if args.out:
        for p in emit_report(report, args.out, formats=tuple(args.format)):
            print(p)
        return
    groups = {}
    for r in report.attack_rows():
        if r.rda is not None:
            groups.setdefault((r.arch, r.attack, r.budget), []).append(r.rda)
    print("arch\tattack\tbudget\tmean_rda\tstd_rda\truns")
    for (arch, attack, budget), vals in sorted(groups.items()):
        print(f"{arch}\t{attack}\t{budget:g}\t{np.mean(vals):.2f}\t{np.std(vals):.2f}\t{len(vals)}")


def build_parser():
    p = _Parser(prog="poisonbench", description="Poisoning robustness benchmark for text-attributed graphs.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_args(sp, model=False):
        sp.add_argument("--data", default="data", help="graph directory written by 'generate'")
        sp.add_argument("--perturbation", help="perturbation JSON to apply before use")
        sp.add_argument("--embedding", default="bow", help="bow, tfidf, or an embedding file")
        if model:
            sp.add_argument("--model", required=True, help="model directory written by 'train'")

    g = sub.add_parser("generate", help="sample a synthetic SBM text-attributed graph")
    g.add_argument("--sbm", nargs="*", metavar="KEY=VALUE")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--train-frac", type=float, default=0.1)
    g.add_argument("--val-frac", type=float, default=0.1)
    g.add_argument("--split-seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("attack", help="compute a perturbation set on a clean graph")
    a.add_argument("--data", default="data")
    a.add_argument("--embedding", default="bow")
    a.add_argument("--name", required=True)
    a.add_argument("--rate", type=float)
    a.add_argument("--per-target", type=int)
    a.add_argument("--edits", type=int)
    a.add_argument("--text-attack", choices=atk.TEXTUAL_ATTACKS)
    a.add_argument("--min-degree", type=int, default=10)
    a.add_argument("--sample-rate", type=float, default=1.0)
    a.add_argument("--oracle-labels", action="store_true")
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--out")
    a.add_argument("--poisoned-out", help="also write the poisoned graph directory")
    a.set_defaults(func=cmd_attack)

    t = sub.add_parser("train", help="train a victim GNN")
    data_args(t)
    t.add_argument("--arch", choices=("gcn", "gat", "sage"), default="gcn")
    t.add_argument("--hidden", type=int, default=256)
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--lr", type=float, default=0.001)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a trained victim and the embedding")
    data_args(e, model=True)
    e.add_argument("--metrics", action="store_true")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    pu = sub.add_parser("purify", help="drop dissimilar edges")
    data_args(pu)
    grp = pu.add_mutually_exclusive_group()
    grp.add_argument("--threshold", type=float, default=0.1)
    grp.add_argument("--quantile", type=float)
    pu.add_argument("--out", required=True)
    pu.set_defaults(func=cmd_purify)

    c = sub.add_parser("certify", help="randomized-smoothing certificates for test nodes")
    data_args(c, model=True)
    c.add_argument("--p-del", type=float, default=0.4)
    c.add_argument("--samples", type=int, default=10_000)
    c.add_argument("--alpha", type=float, default=0.05)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--max-nodes", type=int)
    c.add_argument("--base-correctness", action="store_true")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("run", help="full pipeline from one JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="summarize or re-emit a report JSON")
    rep.add_argument("--input", required=True)
    rep.add_argument("--format", nargs="+", default=["csv", "json"], choices=("csv", "json"))
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return p


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ValidationError, ParseError, BudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (PoisonBenchError, OSError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(cli_main())
