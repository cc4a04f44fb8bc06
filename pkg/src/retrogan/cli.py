"""Command-line interface.

Subcommands: train, postspecialize, evaluate, neighbors, ook, ablate,
gen-synthetic.  Machine-readable output goes to files in --output-dir (or to
standard output for evaluate/neighbors); diagnostics go to standard error.
Exit codes: 0 success, 2 usage or input-data problem, 1 unexpected internal
failure.
"""

import argparse
import os
import sys

from .config import (
    PRESET_NAMES,
    apply_overrides,
    load_run_config,
    preset,
    write_effective_config,
)
from .embeddings import (
    align_pairs,
    load_table,
    nearest_neighbors,
    post_specialize,
    preprocess,
    save_table,
)
from .errors import ConfigError, DataError, RetroGanError
from .evaluation import (
    FORMATS,
    ablation_harness,
    evaluate_similarity,
    heldout_cosine_recovery,
    load_constraint_vocab,
    load_similarity_dataset,
    ook_harness,
    split_disjoint_full,
    synthesize_paired_corpus,
)
from .reporting import (
    plot_ablation,
    plot_eval_curves,
    plot_loss_curves,
    plot_ook_grid,
    parse_train_log,
    write_ablation_table,
    write_eval_reports,
    write_ook_grid,
)
from .trainer import load_checkpoint, save_checkpoint, train


def _add_config_flags(p):
    p.add_argument("--preset", choices=PRESET_NAMES, default="default",
                   help="named base configuration")
    p.add_argument("--config", help="JSON run-config file merged over the preset")
    p.add_argument("--seed", type=int, default=None, help="run seed")
    p.add_argument("--g-lr", type=float, default=None, help="generator learning rate")
    p.add_argument("--d-lr", type=float, default=None, help="discriminator learning rate")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--total-batches", type=int, default=None)
    p.add_argument("--dis-train-amount", type=int, default=None,
                   help="discriminator updates per generator step")
    p.add_argument("--eval-every", type=int, default=None,
                   help="steps between evaluation snapshots")
    p.add_argument("--dim", type=int, default=None, help="embedding width")
    p.add_argument("--generator-size", type=int, default=None)
    p.add_argument("--discriminator-size", type=int, default=None)
    p.add_argument("--generator-hidden-layers", type=int, default=None)
    p.add_argument("--discriminator-hidden-layers", type=int, default=None)
    p.add_argument("--disable", action="append", default=[], metavar="TOGGLE",
                   choices=["adversarial", "one_way_mm", "cycle_mm", "cycle_dis",
                            "id_loss", "cycle_loss"],
                   help="turn one loss term off (repeatable)")


def _resolve_config(args):
    cfg = preset(args.preset)
    if args.config:
        cfg = load_run_config(args.config, base=cfg)
    cfg = apply_overrides(
        cfg,
        seed=args.seed,
        g_lr=args.g_lr,
        d_lr=args.d_lr,
        batch_size=args.batch_size,
        total_batches=args.total_batches,
        dis_train_amount=args.dis_train_amount,
        eval_every=args.eval_every,
        dim=args.dim,
        generator_size=args.generator_size,
        discriminator_size=args.discriminator_size,
        generator_hidden_layers=args.generator_hidden_layers,
        discriminator_hidden_layers=args.discriminator_hidden_layers,
    )
    for name in args.disable:
        setattr(cfg.toggles, name, False)
    return cfg


def _add_synthetic_flags(p):
    p.add_argument("--synthetic", action="store_true",
                   help="use a generated corpus instead of embedding files")
    p.add_argument("--synthetic-vocab", type=int, default=2000)
    p.add_argument("--synthetic-clusters", type=int, default=50)
    p.add_argument("--synthetic-collapse", type=float, default=0.8)
    p.add_argument("--synthetic-antonyms", type=float, default=0.1)
    p.add_argument("--synthetic-noise", type=float, default=0.25)
    p.add_argument("--synthetic-coverage", type=float, default=0.8,
                   help="fraction of words covered by constraints")


def _add_data_flags(p):
    p.add_argument("--x-embeddings", help="distributional embedding file (domain X)")
    p.add_argument("--y-embeddings", help="retrofitted embedding file (domain Y)")
    p.add_argument("--constraints", help="constraint-pair file; training pairs are "
                                         "restricted to its vocabulary")
    p.add_argument("--benchmark", action="append", default=[], metavar="FORMAT:PATH",
                   help="similarity benchmark (formats: %s); repeatable"
                        % ", ".join(sorted(FORMATS)))
    p.add_argument("--no-normalize", action="store_true",
                   help="skip row-L2 normalization of loaded tables")


def _parse_benchmarks(specs):
    datasets = []
    for item in specs:
        if ":" not in item:
            raise ConfigError(f"--benchmark wants FORMAT:PATH, got {item!r}")
        fmt, path = item.split(":", 1)
        name = os.path.splitext(os.path.basename(path))[0]
        datasets.append(load_similarity_dataset(path, fmt, name=name))
    return datasets


def _load_data(args, cfg):
    """Resolve (corpus, x_table, datasets, synth) from either data source."""
    if args.synthetic:
        synth = synthesize_paired_corpus(
            seed=cfg.seed,
            vocab_size=args.synthetic_vocab,
            dim=cfg.arch.dim,
            n_clusters=args.synthetic_clusters,
            collapse_strength=args.synthetic_collapse,
            antonym_fraction=args.synthetic_antonyms,
            noise_scale=args.synthetic_noise,
            constraint_coverage=args.synthetic_coverage,
        )
        return synth.training_pairs(), synth.x_table, [synth.dataset], synth
    if not args.x_embeddings or not args.y_embeddings:
        raise ConfigError("need --x-embeddings and --y-embeddings (or --synthetic)")
    x_table = load_table(args.x_embeddings)
    y_table = load_table(args.y_embeddings)
    if not args.no_normalize:
        x_table = preprocess(x_table)
        y_table = preprocess(y_table)
    corpus = align_pairs(x_table, y_table)
    if args.constraints:
        vocab = load_constraint_vocab(args.constraints)
        corpus = corpus.subset(sorted(vocab))
        if len(corpus) == 0:
            raise DataError("constraint vocabulary shares no words with the tables")
    datasets = _parse_benchmarks(args.benchmark)
    return corpus, x_table, datasets, None


def _make_eval_fn(x_table, datasets, synth):
    if not datasets:
        return None

    def eval_fn(model, step):
        specialized = post_specialize(x_table, model)
        metrics = {}
        for ds in datasets:
            try:
                metrics[ds.name] = evaluate_similarity(specialized, ds).rho
            except RetroGanError:
                continue
        if synth is not None:
            mapped, base = heldout_cosine_recovery(synth, model)
            metrics["heldout_cosine"] = mapped
            metrics["heldout_margin"] = mapped - base
            if "synthetic" in metrics:
                metrics["score"] = metrics["synthetic"]
        return metrics

    return eval_fn


def cmd_train(args):
    cfg = _resolve_config(args)
    corpus, x_table, datasets, synth = _load_data(args, cfg)
    os.makedirs(args.output_dir, exist_ok=True)
    write_effective_config(cfg, os.path.join(args.output_dir, "effective_config.json"))
    log_path = os.path.join(args.output_dir, "train_log.txt")
    if os.path.exists(log_path):
        os.remove(log_path)

    eval_fn = _make_eval_fn(x_table, datasets, synth)
    result = train(corpus, cfg, eval_fn=eval_fn, log_path=log_path)

    save_checkpoint(result.model, result.optimizers, cfg,
                    os.path.join(args.output_dir, "checkpoint_final.ckpt"),
                    cfg.total_batches)
    if result.best_model is not None:
        # selection checkpoint for deployment; exact resume uses checkpoint_final
        save_checkpoint(result.best_model, result.optimizers, cfg,
                        os.path.join(args.output_dir, "checkpoint_best.ckpt"),
                        result.best_step + 1)

    steps, series, evals = parse_train_log(log_path)
    if steps:
        plot_loss_curves(steps, series, os.path.join(args.output_dir, "loss_curves.png"),
                         smooth=max(1, len(steps) // 200))
    if evals:
        plot_eval_curves(evals, os.path.join(args.output_dir, "eval_curves.png"))

    if datasets:
        specialized = post_specialize(x_table, result.model)
        reports = [evaluate_similarity(specialized, ds) for ds in datasets]
        write_eval_reports(reports, os.path.join(args.output_dir, "eval_report.tsv"))
        for rep in reports:
            print(rep.to_line())
    print(f"trained {cfg.total_batches} batches; outputs in {args.output_dir}",
          file=sys.stderr)
    return 0


def cmd_postspecialize(args):
    model, _, _, _ = load_checkpoint(args.checkpoint)
    table = load_table(args.input)
    if not args.no_normalize:
        table = preprocess(table)
    out = post_specialize(table, model, batch_size=args.batch_size)
    save_table(out, args.output)
    print(f"wrote {len(out)} post-specialized vectors to {args.output}", file=sys.stderr)
    return 0


def cmd_evaluate(args):
    table = load_table(args.table)
    if not args.no_normalize:
        table = preprocess(table)
    datasets = _parse_benchmarks(args.benchmark)
    if not datasets:
        raise ConfigError("need at least one --benchmark")
    constraints = load_constraint_vocab(args.constraints) if args.constraints else set()
    reports = []
    for ds in datasets:
        if args.mode == "all":
            reports.append(evaluate_similarity(table, ds, args.missing_policy, mode="all"))
        else:
            split = split_disjoint_full(ds, constraints)
            part = split.disjoint if args.mode == "disjoint" else split.full
            reports.append(
                evaluate_similarity(table, part, args.missing_policy, mode=args.mode)
            )
    print(reports[0].HEADER)
    for rep in reports:
        print(rep.to_line())
    return 0


def cmd_neighbors(args):
    table = load_table(args.table)
    if not args.no_normalize:
        table = preprocess(table)
    for word, sim in nearest_neighbors(table, args.word, k=args.k):
        print(f"{word}\t{sim:.6f}")
    return 0


def cmd_ook(args):
    cfg = _resolve_config(args)
    _, x_table, datasets, synth = _load_data(args, cfg)
    if synth is not None:
        x_table, y_table = synth.x_table, synth.y_table
    else:
        y_table = load_table(args.y_embeddings)
        if not args.no_normalize:
            y_table = preprocess(y_table)
    if not datasets:
        raise ConfigError("need at least one benchmark (or --synthetic)")
    fractions = [float(v) for v in args.fractions.split(",")]

    def train_fn(sub_corpus, fraction):
        return train(sub_corpus, cfg).model

    grid = ook_harness(x_table, y_table, datasets, fractions, train_fn, seed=cfg.seed)
    os.makedirs(args.output_dir, exist_ok=True)
    write_effective_config(cfg, os.path.join(args.output_dir, "effective_config.json"))
    grid_path = os.path.join(args.output_dir, "ook_grid.tsv")
    write_ook_grid(grid, grid_path)
    plot_ook_grid(grid, os.path.join(args.output_dir, "ook_grid.png"))
    with open(grid_path, "r", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_ablate(args):
    cfg = _resolve_config(args)
    corpus, x_table, datasets, synth = _load_data(args, cfg)
    eval_fn = _make_eval_fn(x_table, datasets, synth)
    results = ablation_harness(corpus, cfg, mode=args.mode, eval_fn=eval_fn)
    os.makedirs(args.output_dir, exist_ok=True)
    write_effective_config(cfg, os.path.join(args.output_dir, "effective_config.json"))
    write_ablation_table(results, os.path.join(args.output_dir, "ablation_total.tsv"),
                         fieldname="total")
    for fieldname in ("cyc", "total"):
        plot_ablation(results, os.path.join(args.output_dir, f"ablation_{fieldname}.png"),
                      fieldname=fieldname)
    for label, res in results.items():
        if res.log.evals:
            plot_eval_curves(res.log.evals,
                             os.path.join(args.output_dir, f"ablation_evals_{label}.png"),
                             title=f"eval snapshots ({label})")
    with open(os.path.join(args.output_dir, "ablation_total.tsv"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return 0


def cmd_gen_synthetic(args):
    synth = synthesize_paired_corpus(
        seed=args.seed,
        vocab_size=args.vocab_size,
        dim=args.dim,
        n_clusters=args.clusters,
        collapse_strength=args.collapse_strength,
        antonym_fraction=args.antonym_fraction,
        noise_scale=args.noise_scale,
        constraint_coverage=args.coverage,
    )
    os.makedirs(args.output_dir, exist_ok=True)
    save_table(synth.x_table, os.path.join(args.output_dir, "x_embeddings.txt"))
    save_table(synth.y_table, os.path.join(args.output_dir, "y_embeddings.txt"))
    with open(os.path.join(args.output_dir, "benchmark.tsv"), "w", encoding="utf-8") as fh:
        for w1, w2, score in synth.dataset.rows:
            fh.write(f"{w1}\t{w2}\t{score:.6f}\n")
    with open(os.path.join(args.output_dir, "constraints.txt"), "w", encoding="utf-8") as fh:
        for word in sorted(synth.constraint_vocab):
            fh.write(word + "\n")
    print(
        f"synthetic corpus: {len(synth.x_table)} words, dim {synth.x_table.dim}, "
        f"{len(synth.dataset)} benchmark pairs, "
        f"{len(synth.constraint_vocab)} constrained words -> {args.output_dir}",
        file=sys.stderr,
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="retrogan",
        description="Cyclic adversarial post-specialization of word embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the paired generators")
    _add_config_flags(p)
    _add_data_flags(p)
    _add_synthetic_flags(p)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("postspecialize", help="map a table through a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="embedding file to map")
    p.add_argument("--output", required=True)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(fn=cmd_postspecialize)

    p = sub.add_parser("evaluate", help="Spearman evaluation of a table")
    p.add_argument("--table", required=True, help="embedding file to score")
    p.add_argument("--benchmark", action="append", default=[], metavar="FORMAT:PATH")
    p.add_argument("--constraints", help="constraint file for the split modes")
    p.add_argument("--mode", choices=["all", "disjoint", "full"], default="all")
    p.add_argument("--missing-policy", choices=["skip", "zero"], default="skip")
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("neighbors", help="nearest vocabulary words by cosine")
    p.add_argument("--table", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--no-normalize", action="store_true")
    p.set_defaults(fn=cmd_neighbors)

    p = sub.add_parser("ook", help="constraint-coverage scalability grid")
    _add_config_flags(p)
    _add_data_flags(p)
    _add_synthetic_flags(p)
    p.add_argument("--fractions", default="0.05,0.10,0.25,0.50,0.75,1.00")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(fn=cmd_ook)

    p = sub.add_parser("ablate", help="loss-ablation comparison runs")
    _add_config_flags(p)
    _add_data_flags(p)
    _add_synthetic_flags(p)
    p.add_argument("--mode", choices=["toggle", "one_by_one"], default="toggle")
    p.add_argument("--output-dir", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus to disk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--clusters", type=int, default=50)
    p.add_argument("--collapse-strength", type=float, default=0.8)
    p.add_argument("--antonym-fraction", type=float, default=0.1)
    p.add_argument("--noise-scale", type=float, default=0.25)
    p.add_argument("--coverage", type=float, default=0.8)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(fn=cmd_gen_synthetic)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (RetroGanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
