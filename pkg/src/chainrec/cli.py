"""Command-line entry points: train, evaluate, inspect-patterns, synth.

Every RunConfig key is exposed as a same-named flag (dashes for
underscores); a flag wins over the config file. Exit codes: 0 success,
1 usage/config error, 2 runtime abort.
"""

import argparse
import json
import os
import sys
from dataclasses import fields

from . import backend
from .checkpoint import (CheckpointError, compatibility_diff, load_checkpoint,
                         save_checkpoint)
from .chains import enumerate_chains
from .config import (ConfigError, RunConfig, make_config, parse_config_text,
                     save_config)
from .evaluation import sparsity_groups
from .graph import (ParseError, SchemaError, load_interactions, make_schema,
                    split_train_test, training_graph)
from .model import DualChannelModel, TrainingAbort
from .patterns import build_all_bbps, pattern_count_matrix
from .synth import write_synthetic
from .training import evaluate_model
from .training import train as run_training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


def _add_common_flags(parser):
    parser.add_argument("--config", metavar="FILE",
                        help="flat key=value config file")
    for f in fields(RunConfig):
        parser.add_argument("--" + f.name.replace("_", "-"),
                            dest=f"cfg_{f.name}", metavar="VALUE",
                            help=f"override config key '{f.name}'")


def _overrides(args) -> dict:
    out = {}
    for f in fields(RunConfig):
        value = getattr(args, f"cfg_{f.name}", None)
        if value is not None:
            out[f.name] = value
    return out


def _make_config(args, base_values=None) -> RunConfig:
    return make_config(args.config, _overrides(args), base_values=base_values)


def _load_graph(cfg: RunConfig):
    if not cfg.data:
        raise UsageError("no dataset: set 'data' in the config or pass --data")
    if not os.path.exists(cfg.data):
        raise UsageError(f"dataset file not found: {cfg.data}")
    schema = make_schema(cfg.relations, cfg.target, cfg.schema_order)
    return load_interactions(cfg.data, schema,
                             attributes_path=cfg.attributes or None)


def _config_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(x) for x in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def _checkpoint_meta(cfg: RunConfig, graph, extra=None) -> dict:
    meta = {"dim": cfg.dim, "relations": list(cfg.relations),
            "target": cfg.target, "num_users": graph.num_users,
            "num_items": graph.num_items}
    meta.update(extra or {})
    return meta


def _write_metrics_csv(history, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,metric,k,value,group\n")
        for rec in history:
            if rec.get("type") != "eval":
                continue
            epoch = rec["epoch"]
            for metric in ("recall", "ndcg"):
                for k, value in rec[metric].items():
                    fh.write(f"{epoch},{metric},{k},{value},\n")
            for label, entry in rec.get("groups", {}).items():
                if entry["recall"] is None:
                    continue
                fh.write(f"{epoch},recall,10,{entry['recall']},{label}\n")
                fh.write(f"{epoch},ndcg,10,{entry['ndcg']},{label}\n")


def cmd_train(args) -> int:
    cfg = _make_config(args)
    graph = _load_graph(cfg)
    split = split_train_test(graph, cfg.ratio, cfg.seed)
    out_dir = cfg.out_dir()
    os.makedirs(out_dir, exist_ok=True)
    save_config(cfg, os.path.join(out_dir, "config.txt"))

    params = state = rng_state = None
    start_epoch = 0
    if cfg.resume:
        ckpt = load_checkpoint(cfg.resume)
        diff = compatibility_diff(ckpt["meta"], _checkpoint_meta(cfg, graph))
        if diff:
            raise UsageError("checkpoint does not match this run:\n  " +
                             "\n  ".join(diff))
        params, state = ckpt["params"], ckpt["state"]
        rng_state = ckpt["rng"]
        start_epoch = int(ckpt["meta"].get("epoch", 0))

    metrics_path = os.path.join(out_dir, "metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as log_fh:
        def sink(record):
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")
            log_fh.flush()

        result = run_training(graph, split, cfg, record_sink=sink,
                              params=params, state=state,
                              start_epoch=start_epoch,
                              sampler_rng_state=rng_state)

    cfg_text = _config_text(cfg)
    meta = _checkpoint_meta(cfg, graph, {"epoch": result.last_epoch,
                                         "best_epoch": result.best_epoch})
    save_checkpoint(os.path.join(out_dir, "checkpoint.npz"), result.params,
                    result.state, cfg_text, meta, result.rng_state)
    save_checkpoint(os.path.join(out_dir, "best.npz"), result.best_params,
                    result.state, cfg_text,
                    _checkpoint_meta(cfg, graph, {"epoch": result.best_epoch,
                                                  "best_epoch": result.best_epoch}),
                    result.rng_state)
    if cfg.csv:
        _write_metrics_csv(result.history, os.path.join(out_dir, "metrics.csv"))
    print(f"trained {result.last_epoch} epochs; best R@10-equivalent "
          f"{result.best_metric:.4f} at epoch {result.best_epoch}; "
          f"run directory: {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    # structural keys come from the checkpoint's embedded config; the
    # current file/flags override evaluation-side keys (ks, csv, data, out)
    pre = _make_config(args)
    if not pre.checkpoint:
        raise UsageError("evaluate needs --checkpoint")
    ckpt = load_checkpoint(pre.checkpoint)
    base_values = parse_config_text(ckpt["config_text"], origin="<checkpoint>")
    cfg = _make_config(args, base_values=base_values)
    graph = _load_graph(cfg)
    diff = compatibility_diff(ckpt["meta"], _checkpoint_meta(cfg, graph))
    if diff:
        sys.stderr.write("checkpoint/config mismatch:\n  " + "\n  ".join(diff) + "\n")
        return EXIT_USAGE
    split = split_train_test(graph, cfg.ratio, cfg.seed)

    backend.set_workers(cfg.workers)
    model = DualChannelModel(training_graph(graph, split), cfg)
    result = evaluate_model(model, ckpt["params"], graph, split, cfg.ks)
    groups = sparsity_groups(result, model.graph, split)

    for k in result.ks:
        print(f"R@{k} {result.recall(k):.6f}")
    for k in result.ks:
        print(f"N@{k} {result.ndcg(k):.6f}")
    print("group,users,recall@10,ndcg@10")
    for label, entry in groups.items():
        r = "" if entry["recall"] is None else f"{entry['recall']:.6f}"
        n = "" if entry["ndcg"] is None else f"{entry['ndcg']:.6f}"
        print(f"{label},{entry['users']},{r},{n}")
    if cfg.csv:
        out_dir = cfg.out_dir()
        os.makedirs(out_dir, exist_ok=True)
        rec = {"type": "eval", "epoch": ckpt["meta"].get("epoch", 0),
               "recall": {str(k): result.recall(k) for k in result.ks},
               "ndcg": {str(k): result.ndcg(k) for k in result.ks},
               "groups": groups}
        _write_metrics_csv([rec], os.path.join(out_dir, "metrics.csv"))
    return EXIT_OK


def cmd_inspect_patterns(args) -> int:
    cfg = _make_config(args)
    graph = _load_graph(cfg)
    bbps = build_all_bbps(graph)
    counts = pattern_count_matrix(bbps)
    print("mask_bits,edge_count,b_column_sum")
    for p, bbp in enumerate(bbps):
        bits = "".join(str(b) for b in bbp.mask.bits)
        print(f"{bits},{bbp.edge_count},{int(counts[:, p].sum())}")
    print()
    print("chain_index,relations")
    order = cfg.chain_order if cfg.chain_order else None
    for i, chain in enumerate(enumerate_chains(graph.schema, order)):
        print(f"{i},{chain.label()}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _make_config(args)
    data_path = cfg.data
    if not data_path:
        out_dir = cfg.out_dir()
        os.makedirs(out_dir, exist_ok=True)
        data_path = os.path.join(out_dir, "synthetic.tsv")
    manifest = write_synthetic(cfg, data_path)
    print(f"wrote {data_path} (manifest: {manifest})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainrec",
        description="Multi-behavior recommender over multiplex bipartite graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, doc in (
            ("train", cmd_train, "train a model and write metrics + checkpoints"),
            ("evaluate", cmd_evaluate, "rank the catalog with a trained checkpoint"),
            ("inspect-patterns", cmd_inspect_patterns,
             "emit behavior-pattern edge counts and the chain listing"),
            ("synth", cmd_synth, "generate a planted-cascade synthetic dataset")):
        p = sub.add_parser(name, help=doc)
        _add_common_flags(p)
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (UsageError, ConfigError, SchemaError, ParseError, CheckpointError,
            FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except TrainingAbort as exc:
        sys.stderr.write(f"aborted: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
