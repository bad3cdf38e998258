"""Artifact serialization: CSVs, the JSON run summary, and checkpoints.

All files are UTF-8 with '\\n' line endings and floats written as their
shortest round-trip repr, so identical runs produce byte-identical CSVs and
checkpoints. The JSON summary additionally records elapsed wall time, which
is the one field exempt from byte-identity.
"""

import csv
import json

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ExperimentConfig, parse_config_text
from .errors import ConfigParseError
from .model import EmbeddingNet, ModelSpec

CHECKPOINT_MAGIC = "marginlab-checkpoint"


def fmt(value) -> str:
    """Shortest exact decimal form of a float (empty string for None)."""
    if value is None:
        return ""
    return repr(float(value))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_loss_csv(path, log) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["iteration", "epoch", "loss"])
        for iteration, epoch, loss in log.iterations:
            w.writerow([iteration, epoch, fmt(loss)])


DIAGNOSTIC_COLUMNS = [
    "epoch", "mean_loss", "lr", "train_accuracy", "n_misclassified",
    "pearson_r", "mean_pos_distance", "mean_neg_distance", "overlap_rate",
]


def diagnostics_row(diag) -> dict:
    hr, ov = diag.hardness_report, diag.overlap
    return {
        "epoch": diag.epoch,
        "mean_loss": diag.mean_loss,
        "lr": diag.lr,
        "train_accuracy": diag.train_accuracy,
        "n_misclassified": hr.n_misclassified if hr else 0,
        "pearson_r": hr.pearson_r if hr else None,
        "mean_pos_distance": hr.mean_pos_distance if hr else None,
        "mean_neg_distance": hr.mean_neg_distance if hr else None,
        "overlap_rate": ov.overlap_rate if ov else None,
    }


def write_diagnostics_csv(path, log) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for diag in log.epochs:
            row = diagnostics_row(diag)
            w.writerow([
                row["epoch"], fmt(row["mean_loss"]), fmt(row["lr"]),
                fmt(row["train_accuracy"]), row["n_misclassified"],
                fmt(row["pearson_r"]), fmt(row["mean_pos_distance"]),
                fmt(row["mean_neg_distance"]), fmt(row["overlap_rate"]),
            ])


def write_correlation_csv(path, rows) -> None:
    """rows: iterable of (epoch, pearson_r, n_misclassified)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["epoch", "pearson_r", "n_misclassified"])
        for epoch, r, n in rows:
            w.writerow([epoch, fmt(r), n])


def write_histogram_csv(path, edges, h_mis, h_well) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["bin_left", "bin_right", "h_mis", "h_well"])
        for i in range(len(h_mis)):
            w.writerow([fmt(edges[i]), fmt(edges[i + 1]), fmt(h_mis[i]), fmt(h_well[i])])


def write_dimstudy_csv(path, blocks) -> None:
    """blocks: iterable of (dim, edges, density) sharing identical edges."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(["dim", "bin_left", "bin_right", "density"])
        for dim, edges, density in blocks:
            for i in range(len(density)):
                w.writerow([dim, fmt(edges[i]), fmt(edges[i + 1]), fmt(density[i])])


def compare_columns(far_targets) -> list:
    cols = ["variant"]
    cols += [f"tar_at_far_{t:g}" for t in far_targets]
    cols += ["rank1_accuracy", "pair_accuracy", "final_mean_loss",
             "train_accuracy", "pearson_r", "overlap_rate"]
    return cols


def write_compare_csv(path, far_targets, rows) -> None:
    """rows: (variant_token, metrics dict from cli.final_metrics)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = _writer(fh)
        w.writerow(compare_columns(far_targets))
        for token, metrics in rows:
            cells = [token]
            cells += [fmt(metrics["tar_at_far"][f"{t:g}"]) for t in far_targets]
            cells += [
                fmt(metrics["rank1_accuracy"]), fmt(metrics["pair_accuracy"]),
                fmt(metrics["final_mean_loss"]), fmt(metrics["train_accuracy"]),
                fmt(metrics["pearson_r"]), fmt(metrics["overlap_rate"]),
            ]
            w.writerow(cells)


def summary_payload(experiment: ExperimentConfig, command: str) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "command": command,
        "seed": experiment.seed,
        "config_echo": experiment.raw_text,
        "config_effective": {k: _jsonable(v) for k, v in experiment.flat_values().items()},
    }


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def write_summary_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _write_tensor(fh, name, array) -> None:
    array = np.asarray(array, dtype=np.float64)
    dims = " ".join(str(d) for d in array.shape)
    fh.write(f"tensor {name} {dims}\n")
    rows = array.reshape(1, -1) if array.ndim == 1 else array
    for row in rows:
        fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def save_checkpoint(path, model: EmbeddingNet, class_weights, experiment: ExperimentConfig,
                    epochs_trained: int) -> None:
    """Versioned text checkpoint with the full config embedded in the header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {SCHEMA_VERSION}\n")
        fh.write(f"epochs_trained {epochs_trained}\n")
        fh.write(f"config {json.dumps(experiment.raw_text)}\n")
        for key, value in experiment.flat_values().items():
            fh.write(f"field {key} = {value}\n")
        for i in range(model.n_layers):
            _write_tensor(fh, f"layer{i}.weight", model.weights[i])
            _write_tensor(fh, f"layer{i}.bias", model.biases[i])
        _write_tensor(fh, "class_weights", class_weights)
        fh.write("end\n")


def _read_tensor(header, lines):
    parts = header.split()
    name = parts[1]
    shape = tuple(int(d) for d in parts[2:])
    n_rows = 1 if len(shape) == 1 else shape[0]
    values = []
    for _ in range(n_rows):
        values.append([float(v) for v in next(lines).split()])
    array = np.array(values, dtype=np.float64).reshape(shape)
    return name, array


def load_checkpoint(path):
    """Returns (experiment_config, model, class_weights, epochs_trained).

    The config is re-parsed from the embedded echo, so a checkpoint is
    sufficient to reproduce its run.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = iter(fh.read().splitlines())
    magic = next(lines, "")
    if not magic.startswith(CHECKPOINT_MAGIC):
        raise ConfigParseError(f"{path} is not a marginlab checkpoint")
    epochs_trained = int(next(lines).split()[1])
    config_line = next(lines)
    raw_text = json.loads(config_line.split(" ", 1)[1])
    experiment = parse_config_text(raw_text)

    tensors = {}
    for line in lines:
        if line.startswith("tensor "):
            name, array = _read_tensor(line, lines)
            tensors[name] = array
        elif line == "end":
            break

    model = EmbeddingNet(experiment.model)
    for i in range(model.n_layers):
        model.weights[i] = tensors[f"layer{i}.weight"]
        model.biases[i] = tensors[f"layer{i}.bias"]
    class_weights = tensors["class_weights"]
    return experiment, model, class_weights, epochs_trained
