"""Command-line entry points: split, train, evaluate, analyze.

All outputs are CSV files or the binary checkpoint; every command is
deterministic given its inputs and seed flags.  Exit codes: 0 success,
1 I/O or format problem, 2 usage error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import (ConfigError, build_train_config, config_snapshot, merge_config,
                     parse_config_file)
from .diffusion import DiffusionParams, build_schedule, default_extract_steps
from .encoder import EncoderParams, encode
from .evaluation import distance_histogram, evaluate, psi_statistic_multi
from .graphio import (GraphFormatError, load_graph, load_split, save_split, split_edges,
                      training_subgraph)
from .rng import RandomSource
from .tensor import ParamStore
from .training import TrainingDivergedError, train

_NUM = ".12g"


def _fmt(x: float) -> str:
    return format(float(x), _NUM)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr-encoder", type=float, dest="lr_encoder")
    p.add_argument("--lr-diffusion", type=float, dest="lr_diffusion")
    p.add_argument("--inner-steps", type=int, dest="inner_steps")
    p.add_argument("--neighbor-cap", type=int, dest="neighbor_cap")
    p.add_argument("--weights", help="comma-separated generated-negative weights")
    p.add_argument("--extract-steps", dest="extract_steps",
                   help="comma-separated extraction steps")
    p.add_argument("--T", type=int, dest="t_max", help="diffusion step count")
    p.add_argument("--schedule", choices=["linear", "cosine", "sigmoid"])
    p.add_argument("--beta-start", type=float, dest="beta_start")
    p.add_argument("--beta-end", type=float, dest="beta_end")
    p.add_argument("--hidden-dim", type=int, dest="hidden_dim")
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--film-layers", type=int, dest="film_layers")
    p.add_argument("--dropout", type=float)
    p.add_argument("--sampler", choices=["uniform", "pns", "dns"])
    p.add_argument("--dns-candidates", type=int, dest="dns_candidates")
    p.add_argument("--pns-exponent", type=float, dest="pns_exponent")
    p.add_argument("--ablation",
                   help="comma list: unconditional, unweighted, single-step:<t>, "
                        "no-generated, no-heuristic")
    p.add_argument("--patience", type=int)
    p.add_argument("--optimizer", choices=["adam", "sgd"])
    p.add_argument("--timing", choices=["wall", "none"],
                   help="wall writes per-epoch seconds; none writes zeros")


def _collect_overrides(args: argparse.Namespace) -> dict[str, str]:
    keys = ("seed", "epochs", "batch_size", "lr_encoder", "lr_diffusion", "inner_steps",
            "neighbor_cap", "weights", "extract_steps", "t_max", "schedule", "beta_start",
            "beta_end", "hidden_dim", "embed_dim", "film_layers", "dropout", "sampler",
            "dns_candidates", "pns_exponent", "ablation", "patience", "optimizer", "timing")
    out = {}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = str(value)
    return out


def _resolved_values(args: argparse.Namespace) -> dict[str, str]:
    file_values = parse_config_file(args.config) if args.config else None
    return merge_config(file_values, _collect_overrides(args))


def _checkpoint_tensors(enc: EncoderParams, diff: DiffusionParams) -> dict[str, np.ndarray]:
    tensors: dict[str, np.ndarray] = {}
    for name, t in enc.store.items():
        tensors[f"encoder/{name}"] = t.data
    for name, t in diff.store.items():
        tensors[f"diffusion/{name}"] = t.data
    return tensors


def models_from_checkpoint(ckpt: Checkpoint) -> tuple[EncoderParams, DiffusionParams]:
    enc_store, diff_store = ParamStore(), ParamStore()
    for name, value in ckpt.tensors.items():
        scope, _, local = name.partition("/")
        if scope == "encoder":
            enc_store.add(local, value)
        elif scope == "diffusion":
            diff_store.add(local, value)
        else:
            raise CheckpointError(f"unknown tensor scope in {name!r}")
    cfg = ckpt.config
    enc = EncoderParams(enc_store, dropout=float(cfg.get("dropout", "0.1")))
    conditional = "unconditional" not in cfg.get("ablation", "")
    diff = DiffusionParams(diff_store, dim=enc_store["w2"].shape[1],
                           film_layers=int(cfg.get("film_layers", "2")),
                           conditional=conditional)
    return enc, diff


def schedule_from_checkpoint(ckpt: Checkpoint):
    s = ckpt.schedule
    return build_schedule(int(s["t_max"]), s["policy"],
                          float(s["beta_start"]), float(s["beta_end"]))


def cmd_split(args) -> int:
    graph = load_graph(args.graph)
    split = split_edges(graph, args.seed)
    save_split(split, args.out)
    print(f"wrote {args.out}: train={len(split.train_edges)} "
          f"val={len(split.val_edges)} test={len(split.test_edges)}")
    return 0


def cmd_train(args) -> int:
    values = _resolved_values(args)
    graph_path = args.graph or values.get("graph")
    split_path = args.split or values.get("split")
    out_dir = args.out or values.get("out")
    if not (graph_path and split_path and out_dir):
        raise ConfigError("train needs --graph, --split, and --out (flags or config file)")
    config = build_train_config(values)
    graph = load_graph(graph_path)
    split = load_split(split_path)
    result = train(graph, split, config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    snapshot = config_snapshot(values)
    schedule_desc = {"policy": config.schedule_policy, "t_max": str(config.t_max),
                     "beta_start": repr(config.beta_start), "beta_end": repr(config.beta_end)}
    save_checkpoint(out / "checkpoint.bin",
                    _checkpoint_tensors(result.encoder, result.diffusion),
                    snapshot, schedule_desc)
    log_path = out / "train_log.csv"
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(f"{k}={v}" for k, v in sorted(snapshot.items())) + "\n")
        fh.write("epoch,diffusion_loss,link_loss,val_map,val_ndcg,wall_seconds\n")
        for row in result.log:
            fh.write(f"{row.epoch},{_fmt(row.diffusion_loss)},{_fmt(row.link_loss)},"
                     f"{_fmt(row.val_map)},{_fmt(row.val_ndcg)},{row.wall_seconds:.6f}\n")
    last = result.log[-1].val_map if result.log else result.init_val_map
    print(f"wrote {out / 'checkpoint.bin'} and {log_path} "
          f"(best epoch {result.best_epoch}, final val MAP {last:.4f})")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    graph = load_graph(args.graph)
    split = load_split(args.split)
    enc, _ = models_from_checkpoint(ckpt)
    emb = encode(training_subgraph(graph, split), enc, training=False).data
    edges = split.val_edges if args.part == "val" else split.test_edges
    rows = []
    for i in range(args.runs):
        seed = args.seed + i
        m, n = evaluate(edges, emb, graph, seed)
        rows.append((seed, m, n))
    maps = np.array([r[1] for r in rows])
    ndcgs = np.array([r[2] for r in rows])
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("run_seed,split,map,ndcg\n")
        for seed, m, n in rows:
            fh.write(f"{seed},{args.part},{_fmt(m)},{_fmt(n)}\n")
        fh.write(f"mean,{args.part},{_fmt(maps.mean())},{_fmt(ndcgs.mean())}\n")
        fh.write(f"std,{args.part},{_fmt(maps.std())},{_fmt(ndcgs.std())}\n")
    print(f"wrote {args.out}: {args.part} MAP {maps.mean():.4f} +/- {maps.std():.4f} "
          f"over {args.runs} runs")
    return 0


def _sample_queries(subgraph, count: int, source: RandomSource) -> list[int]:
    eligible = np.flatnonzero(subgraph.degrees() > 0)
    if len(eligible) == 0:
        raise ValueError("no query node has a training neighbor")
    perm = source.permutation(len(eligible))
    return [int(v) for v in eligible[perm[:count]]]


def cmd_analyze(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    graph = load_graph(args.graph)
    split = load_split(args.split)
    enc, diff = models_from_checkpoint(ckpt)
    schedule = schedule_from_checkpoint(ckpt)
    subgraph = training_subgraph(graph, split)
    emb = encode(subgraph, enc, training=False).data
    source = RandomSource(args.seed)
    steps = ([int(s) for s in args.steps.split(",")] if args.steps
             else default_extract_steps(schedule.t_max))
    queries = _sample_queries(subgraph, args.queries, source.child("queries"))
    if args.mode == "psi":
        per_step: dict[int, list[np.ndarray]] = {t: [] for t in sorted(set(steps))}
        for i, v in enumerate(queries):
            reports = psi_statistic_multi(emb[v], steps, args.samples, diff, schedule,
                                          source.child("psi", i), query=v)
            for rep in reports:
                per_step[rep.t].append(rep.psi_values)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("t,samples,queries,fraction_nonneg,mean_psi\n")
            for t in sorted(per_step):
                pooled = np.concatenate(per_step[t])
                fh.write(f"{t},{args.samples},{len(queries)},"
                         f"{_fmt((pooled >= 0.0).mean())},{_fmt(pooled.mean())}\n")
        print(f"wrote {args.out}")
        return 0
    rows = distance_histogram(queries, emb, diff, schedule, steps, subgraph,
                              source.child("dist"))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("query,set_label,distance\n")
        for v, label, d in rows:
            fh.write(f"{v},{label},{_fmt(d)}\n")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffneg",
        description="Train and evaluate a link predictor with diffusion-generated negatives")
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", help="shuffle edges into train/val/test parts")
    p_split.add_argument("--graph", required=True)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--out", required=True)
    p_split.set_defaults(func=cmd_split)

    p_train = sub.add_parser("train", help="run the alternating training loop")
    p_train.add_argument("--graph")
    p_train.add_argument("--split")
    p_train.add_argument("--out")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="rank held-out edges with a checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--graph", required=True)
    p_eval.add_argument("--split", required=True)
    p_eval.add_argument("--part", choices=["val", "test"], default="test")
    p_eval.add_argument("--runs", type=int, default=5)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", required=True)
    p_eval.set_defaults(func=cmd_evaluate)

    p_an = sub.add_parser("analyze", help="sub-linearity statistics or distance profiles")
    p_an.add_argument("--checkpoint", required=True)
    p_an.add_argument("--graph", required=True)
    p_an.add_argument("--split", required=True)
    p_an.add_argument("--mode", choices=["psi", "distances"], required=True)
    p_an.add_argument("--queries", type=int, default=200)
    p_an.add_argument("--samples", type=int, default=2000)
    p_an.add_argument("--steps", help="comma-separated extraction steps")
    p_an.add_argument("--seed", type=int, default=0)
    p_an.add_argument("--out", required=True)
    p_an.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    except (GraphFormatError, CheckpointError, ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
