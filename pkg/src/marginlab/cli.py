"""Experiment runner.

Subcommands: train, compare, analyze, gradcheck, dimstudy. Every run is
fully determined by its config file and seed; re-running a command with the
same inputs reproduces the CSV artifacts byte for byte.

Exit codes: 0 success, 2 config error, 3 diverged loss, 4 insufficient
data, 5 gradient check failure.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import hardness, losses, metrics, reports
from .config import ExperimentConfig, load_config, variant_token_to_loss
from .data import evaluation_split
from .errors import (
    ConfigParseError,
    DivergedLoss,
    EmptyPartition,
    InfeasiblePairCount,
    InsufficientPairs,
    InsufficientSamples,
    MarginLabError,
)
from .model import EmbeddingNet, ModelSpec, init_class_weights
from .seeds import derive_seed, named_rng
from .train import end_to_end_check, full_set_cosines, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INSUFFICIENT = 4
EXIT_GRADCHECK = 5

GRADCHECK_THRESHOLD = 1e-5


def final_metrics(result, experiment: ExperimentConfig) -> dict:
    """Verification + identification metrics on the held-out split."""
    ev = experiment.eval
    split = evaluation_split(experiment.dataset, ev.samples_per_class,
                             ev.n_distractors, experiment.eval_seed)
    embeddings, _ = result.model.forward(split.inputs)
    pairs = metrics.build_pairs(split.labels, ev.n_positive_pairs,
                                ev.n_negative_pairs, experiment.pairs_seed)
    scores = metrics.pair_scores(embeddings, pairs)
    curve = metrics.roc(scores, pairs.is_same)
    tars = {f"{t:g}": metrics.tar_at_far(curve, t) for t in ev.far_targets}
    pair_acc = metrics.kfold_threshold_accuracy(scores, pairs.is_same,
                                                ev.kfold, experiment.folds_seed)
    if split.distractor_inputs.shape[0]:
        distractor_emb, _ = result.model.forward(split.distractor_inputs)
    else:
        distractor_emb = np.zeros((0, embeddings.shape[1]))
    ident = metrics.rank1_identification(
        embeddings[split.probe_idx], split.labels[split.probe_idx],
        embeddings[split.gallery_idx], split.labels[split.gallery_idx],
        distractor_emb,
    )

    last = result.log.epochs[-1] if result.log.epochs else None
    return {
        "tar_at_far": tars,
        "rank1_accuracy": ident.rank1_accuracy,
        "pair_accuracy": pair_acc,
        "final_mean_loss": last.mean_loss if last else None,
        "train_accuracy": last.train_accuracy if last else None,
        "pearson_r": last.hardness_report.pearson_r if last and last.hardness_report else None,
        "overlap_rate": last.overlap.overlap_rate if last and last.overlap else None,
    }


def _prepare_out_dir(experiment, out_override):
    out_dir = out_override or experiment.output_dir
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigParseError(f"output dir {out_dir!r} not writable: {exc}")
    return out_dir


def _apply_overrides(experiment, args):
    """Re-derive sub-seeds that the config did not pin explicitly."""
    seed = getattr(args, "seed", None)
    if seed is not None:
        experiment = replace(experiment, seed=seed)
        if "dataset.seed" not in experiment.explicit_keys:
            experiment = replace(experiment, dataset=replace(
                experiment.dataset, seed=derive_seed(seed, "dataset")))
        if "model.seed" not in experiment.explicit_keys:
            experiment = replace(experiment, model=replace(
                experiment.model, seed=derive_seed(seed, "model")))
    return experiment


def cmd_train(args) -> int:
    experiment = load_config(args.config)
    experiment = _apply_overrides(experiment, args)
    out_dir = _prepare_out_dir(experiment, args.out)
    started = time.monotonic()

    diverged = False
    try:
        result = train(experiment)
        log = result.log
    except DivergedLoss as exc:
        diverged = True
        log = exc.log
        print(f"error: {exc}", file=sys.stderr)

    reports.write_loss_csv(os.path.join(out_dir, "loss.csv"), log)
    reports.write_diagnostics_csv(os.path.join(out_dir, "diagnostics.csv"), log)
    payload = reports.summary_payload(experiment, "train")
    payload["diverged"] = diverged
    payload["iterations"] = len(log.iterations)

    if not diverged:
        reports.save_checkpoint(os.path.join(out_dir, "checkpoint.txt"),
                                result.model, result.class_weights, experiment,
                                experiment.schedule.total_epochs)
        payload["final_metrics"] = final_metrics(result, experiment)
        payload["epochs"] = [reports.diagnostics_row(d) for d in log.epochs]
    payload["elapsed_seconds"] = round(time.monotonic() - started, 3)
    reports.write_summary_json(os.path.join(out_dir, "summary.json"), payload)

    if diverged:
        return EXIT_DIVERGED
    print(f"train: {len(log.iterations)} iterations, artifacts in {out_dir}")
    for key, value in payload["final_metrics"]["tar_at_far"].items():
        print(f"  tar@far={key}: {value:.4f}")
    return EXIT_OK


def cmd_compare(args) -> int:
    experiment = load_config(args.config)
    experiment = _apply_overrides(experiment, args)
    tokens = [t.strip() for t in args.variants.split(",") if t.strip()]
    if len(tokens) < 2:
        raise ConfigParseError("compare needs at least two variants")
    out_dir = _prepare_out_dir(experiment, args.out)
    started = time.monotonic()

    rows = []
    for token in tokens:
        loss_config = variant_token_to_loss(token, experiment)
        variant_experiment = experiment.with_loss(loss_config)
        result = train(variant_experiment)
        rows.append((token, final_metrics(result, variant_experiment)))
        print(f"compare: finished {token}")

    reports.write_compare_csv(os.path.join(out_dir, "comparison.csv"),
                              experiment.eval.far_targets, rows)
    payload = reports.summary_payload(experiment, "compare")
    payload["variants"] = {token: m for token, m in rows}
    payload["elapsed_seconds"] = round(time.monotonic() - started, 3)
    reports.write_summary_json(os.path.join(out_dir, "compare_summary.json"), payload)
    print(f"compare: table in {out_dir}/comparison.csv")
    return EXIT_OK


def cmd_analyze(args) -> int:
    experiment, model, class_weights, epochs_trained = reports.load_checkpoint(args.checkpoint)
    if args.config:
        experiment = load_config(args.config)
    out_dir = _prepare_out_dir(experiment, args.out)
    m0 = experiment.loss.m0 if args.m0 is None else args.m0

    from .data import generate_dataset

    inputs, labels = generate_dataset(experiment.dataset)
    if experiment.dataset.input_dim != model.spec.input_dim:
        raise ConfigParseError(
            f"dataset input_dim {experiment.dataset.input_dim} does not fit the "
            f"checkpoint model ({model.spec.input_dim})")
    cosines = full_set_cosines(model, class_weights, inputs)
    mask = hardness.compute_mask(cosines, labels, m0)
    report = hardness.hardness_correlation(cosines, labels, mask)
    overlap = hardness.similarity_distributions(cosines, labels, mask, n_bins=args.bins)

    reports.write_correlation_csv(
        os.path.join(out_dir, "correlation.csv"),
        [(epochs_trained, report.pearson_r, report.n_misclassified)],
    )
    reports.write_histogram_csv(
        os.path.join(out_dir, "histogram.csv"),
        overlap.bin_edges, overlap.histogram_mis, overlap.histogram_well,
    )
    payload = reports.summary_payload(experiment, "analyze")
    payload["epochs_trained"] = epochs_trained
    payload["m0"] = m0
    payload["pearson_r"] = report.pearson_r
    payload["n_misclassified"] = report.n_misclassified
    payload["mean_pos_distance"] = report.mean_pos_distance
    payload["mean_neg_distance"] = report.mean_neg_distance
    payload["overlap_rate"] = overlap.overlap_rate
    reports.write_summary_json(os.path.join(out_dir, "analyze_summary.json"), payload)
    print(f"analyze: pearson_r={report.pearson_r:.4f} over "
          f"{report.n_misclassified} mis-classified samples, "
          f"overlap_rate={overlap.overlap_rate:.4f}")
    return EXIT_OK


def _parse_shape(text):
    shape = {"n": 4, "c": 8, "d": 6, "input": 6, "hidden": 5}
    if text:
        for item in text.split(","):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in shape:
                raise ConfigParseError(f"bad shape item {item!r}; keys: n,c,d,input,hidden")
            shape[key] = int(value)
    return shape


def cmd_gradcheck(args) -> int:
    variant = variant_token_to_loss(args.variant, _default_experiment())
    overridden = {item.partition("=")[0].strip()
                  for item in args.variant.partition(":")[2].split(";") if item}
    if "s" not in overridden:
        # default re-scaling 64 saturates double-precision finite differences
        # (loss differences underflow); check at a numerically informative s
        variant = replace(variant, s=args.scale)
    shape = _parse_shape(args.shape)
    spec = ModelSpec(
        layer_widths=(shape["input"], shape["hidden"], shape["d"]),
        activation=args.activation, init_scale=1.0,
        seed=args.seed,
    )
    model = EmbeddingNet(spec)
    rng = named_rng(args.seed, "gradcheck")
    inputs = rng.standard_normal((shape["n"], shape["input"]))
    labels = rng.integers(0, shape["c"], size=shape["n"])
    class_weights = init_class_weights(shape["c"], shape["d"], 1.0, args.seed)

    err, worst = end_to_end_check(
        model, class_weights, inputs, labels, variant, epsilon=args.epsilon,
        corrupt_first_gradient=1e-3 if args.corrupt else 0.0,
    )
    status = "PASS" if err < args.threshold else "FAIL"
    print(f"gradcheck {args.variant}: max relative error {err:.3e} at {worst} [{status}]")
    if err >= args.threshold:
        print(f"worst coordinate: {worst}", file=sys.stderr)
        return EXIT_GRADCHECK
    return EXIT_OK


def _default_experiment() -> ExperimentConfig:
    from .config import build_config

    return build_config({})


def cmd_dimstudy(args) -> int:
    experiment = load_config(args.config)
    experiment = _apply_overrides(experiment, args)
    dims = [int(v) for v in args.dims.split(",") if v.strip()]
    if len(dims) < 2:
        raise ConfigParseError("dimstudy needs at least two embedding dimensions")
    out_dir = _prepare_out_dir(experiment, args.out)
    started = time.monotonic()

    from .data import generate_dataset

    blocks = []
    for dim in dims:
        widths = (*experiment.model.layer_widths[:-1], dim)
        variant_experiment = replace(
            experiment, model=replace(experiment.model, layer_widths=widths))
        result = train(variant_experiment)
        inputs, labels = generate_dataset(variant_experiment.dataset)
        cosines = full_set_cosines(result.model, result.class_weights, inputs)
        mask = hardness.compute_mask(cosines, labels, experiment.loss.m0)
        edges, density = hardness.nearest_negative_histogram(cosines, labels, mask)
        blocks.append((dim, edges, density))
        print(f"dimstudy: finished d={dim}")

    reports.write_dimstudy_csv(os.path.join(out_dir, "dimstudy.csv"), blocks)
    payload = reports.summary_payload(experiment, "dimstudy")
    payload["dims"] = dims
    payload["pairwise_intersection"] = {
        f"{a}:{b}": float(np.minimum(da, db).sum())
        for i, (a, _, da) in enumerate(blocks)
        for b, _, db in blocks[i + 1:]
    }
    payload["elapsed_seconds"] = round(time.monotonic() - started, 3)
    reports.write_summary_json(os.path.join(out_dir, "dimstudy_summary.json"), payload)
    print(f"dimstudy: histograms in {out_dir}/dimstudy.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marginlab",
        description="Margin-softmax loss laboratory: synthetic training, "
                    "evaluation and hardness analyses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one experiment from a config file")
    p_train.add_argument("--config", required=True)
    p_train.add_argument("--out", default=None, help="override output_dir")
    p_train.add_argument("--seed", type=int, default=None, help="override the top-level seed")
    p_train.set_defaults(func=cmd_train)

    p_cmp = sub.add_parser("compare", help="train several loss variants on identical data")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--variants", required=True,
                       help="comma list of tokens, e.g. 'arcface,npcface:t=1;alpha=0'")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.set_defaults(func=cmd_compare)

    p_an = sub.add_parser("analyze", help="hardness correlation and overlap of a checkpoint")
    p_an.add_argument("--checkpoint", required=True)
    p_an.add_argument("--config", default=None,
                      help="analyze a different dataset config than the embedded one")
    p_an.add_argument("--m0", type=float, default=None,
                      help="mask margin override (0 = plain mis-classification)")
    p_an.add_argument("--bins", type=int, default=50)
    p_an.add_argument("--out", default=None)
    p_an.set_defaults(func=cmd_analyze)

    p_gc = sub.add_parser("gradcheck", help="finite-difference check through the model")
    p_gc.add_argument("--variant", required=True,
                      help="loss variant token, e.g. 'npcface' or 'arcface:m=0.3'")
    p_gc.add_argument("--shape", default=None, help="e.g. 'n=4,c=8,d=6,input=6,hidden=5'")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--epsilon", type=float, default=1e-5)
    p_gc.add_argument("--scale", type=float, default=12.0,
                      help="re-scaling s used when the token does not set one")
    p_gc.add_argument("--threshold", type=float, default=GRADCHECK_THRESHOLD)
    p_gc.add_argument("--activation", choices=("relu", "tanh"), default="tanh")
    p_gc.add_argument("--corrupt", action="store_true",
                      help="negative control: corrupt one analytic gradient")
    p_gc.set_defaults(func=cmd_gradcheck)

    p_dim = sub.add_parser("dimstudy", help="hard-negative histograms across embedding dims")
    p_dim.add_argument("--config", required=True)
    p_dim.add_argument("--dims", required=True, help="comma list, e.g. '8,16,32,64'")
    p_dim.add_argument("--out", default=None)
    p_dim.add_argument("--seed", type=int, default=None)
    p_dim.set_defaults(func=cmd_dimstudy)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergedLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InsufficientSamples, EmptyPartition, InfeasiblePairCount, InsufficientPairs) as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except MarginLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
