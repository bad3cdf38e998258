"""Desk-scale training loop: synthetic batches through the embedding net,
normalized-softmax margin loss, SGD with momentum on every parameter
including the classifier rows.

Each iteration re-mines the hard mask and the collaborative margins from the
current cosines, then treats them as constants for the backward pass. Class
weights are stored raw and normalized only inside the cosine computation.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import hardness, losses
from .data import SyntheticDatasetSpec, generate_dataset
from .errors import DivergedLoss, EmptyPartition, InsufficientSamples, DegenerateVariance
from .geometry import cosine_matrix, normalize_rows
from .model import EmbeddingNet, ModelSpec, init_class_weights
from .optim import OptimizerState, TrainingSchedule, sgd_step
from .seeds import named_rng


@dataclass
class EpochDiagnostics:
    epoch: int
    lr: float
    mean_loss: float
    train_accuracy: float
    hardness_report: hardness.HardnessReport | None = None
    hardness_note: str | None = None
    overlap: hardness.DistributionOverlap | None = None
    overlap_note: str | None = None


@dataclass
class TrainingLog:
    """Every iteration's loss plus one diagnostics row per epoch."""

    iterations: list = field(default_factory=list)  # (iteration, epoch, loss)
    epochs: list = field(default_factory=list)      # EpochDiagnostics

    def losses(self) -> np.ndarray:
        return np.array([row[2] for row in self.iterations])

    def epoch_mean_loss(self, epoch: int) -> float:
        vals = [row[2] for row in self.iterations if row[1] == epoch]
        return float(np.mean(vals))


@dataclass
class TrainResult:
    model: EmbeddingNet
    class_weights: np.ndarray
    log: TrainingLog


def _batch_slices(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def full_set_cosines(model: EmbeddingNet, class_weights, inputs):
    emb, _ = model.forward(inputs)
    return cosine_matrix(normalize_rows(emb), normalize_rows(class_weights))


def epoch_diagnostics(epoch, lr, mean_loss, cosines, labels, m0) -> EpochDiagnostics:
    """Hardness and overlap reports on the full training set; degenerate
    stages (nothing mis-classified, constant series) are recorded as notes
    instead of aborting the run."""
    labels = np.asarray(labels)
    mask = hardness.compute_mask(cosines, labels, m0)
    preds = cosines.argmax(axis=1)
    acc = float(np.mean(preds == labels))
    diag = EpochDiagnostics(epoch=epoch, lr=lr, mean_loss=mean_loss, train_accuracy=acc)
    try:
        diag.hardness_report = hardness.hardness_correlation(cosines, labels, mask)
    except (InsufficientSamples, DegenerateVariance) as exc:
        diag.hardness_note = str(exc)
    try:
        diag.overlap = hardness.similarity_distributions(cosines, labels, mask)
    except EmptyPartition as exc:
        diag.overlap_note = str(exc)
    return diag


def train(experiment) -> TrainResult:
    """Run the full schedule described by an ExperimentConfig.

    Deterministic given the config seeds. Raises DivergedLoss (with the
    partial log attached) the moment a non-finite loss appears.
    """
    dataset_spec: SyntheticDatasetSpec = experiment.dataset
    model_spec: ModelSpec = experiment.model
    config: losses.LossConfig = experiment.loss
    schedule: TrainingSchedule = experiment.schedule

    inputs, labels = generate_dataset(dataset_spec)
    model = EmbeddingNet(model_spec)
    class_weights = init_class_weights(
        experiment.n_classes, model_spec.embedding_dim, model_spec.init_scale,
        experiment.classifier_seed,
    )
    params = model.params + [class_weights]
    state = OptimizerState.for_params(
        params, lr=schedule.lr_initial,
        momentum=experiment.momentum, weight_decay=experiment.weight_decay,
    )

    log = TrainingLog()
    iteration = 0
    for epoch in range(1, schedule.total_epochs + 1):
        state.lr = schedule.lr_at(epoch)
        order = named_rng(experiment.shuffle_seed, "shuffle", epoch).permutation(len(labels))
        for sl in _batch_slices(len(labels), schedule.batch_size):
            idx = order[sl]
            batch, batch_labels = inputs[idx], labels[idx]

            emb, cache = model.forward(batch)
            cosines = cosine_matrix(normalize_rows(emb), normalize_rows(class_weights))
            mask, margins = losses.frozen_auxiliaries(cosines, batch_labels, config)
            logits = losses.forward_logits(cosines, batch_labels, config, mask, margins)
            probs = losses.softmax_probabilities(logits)
            loss = losses.loss_value(probs, batch_labels)

            iteration += 1
            log.iterations.append((iteration, epoch, loss))
            if not math.isfinite(loss):
                raise DivergedLoss(
                    f"non-finite loss at iteration {iteration} (epoch {epoch})", log=log
                )

            d_logits = losses.backward_logits(probs, batch_labels)
            d_cos = losses.backward_cosines(d_logits, cosines, batch_labels, config, mask, margins)
            d_emb, d_weights = losses.backward_parameters(d_cos, emb, class_weights)
            grads = model.backward(cache, d_emb) + [d_weights]
            sgd_step(state, params, grads)

        cosines = full_set_cosines(model, class_weights, inputs)
        log.epochs.append(epoch_diagnostics(
            epoch, state.lr, log.epoch_mean_loss(epoch), cosines, labels, config.m0,
        ))
    return TrainResult(model=model, class_weights=class_weights, log=log)


def end_to_end_check(model: EmbeddingNet, class_weights, inputs, labels,
                     config: losses.LossConfig, epsilon: float = 1e-5,
                     corrupt_first_gradient: float = 0.0):
    """Central-difference check of the composite loss(model(inputs)) gradient
    over every model parameter and classifier row.

    The mask and collaborative margins are frozen from the unperturbed
    forward pass. Returns (max_relative_error, worst_coordinate_name).
    ``corrupt_first_gradient`` is a negative-control hook: it biases one
    analytic entry so a working checker must report a failure.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    class_weights = np.array(class_weights, dtype=np.float64)

    emb, cache = model.forward(inputs)
    cosines = cosine_matrix(normalize_rows(emb), normalize_rows(class_weights))
    mask, margins = losses.frozen_auxiliaries(cosines, labels, config)

    def loss_now():
        e, _ = model.forward(inputs)
        cos = cosine_matrix(normalize_rows(e), normalize_rows(class_weights))
        logits = losses.forward_logits(cos, labels, config, mask, margins)
        return losses.loss_value(losses.softmax_probabilities(logits), labels)

    logits = losses.forward_logits(cosines, labels, config, mask, margins)
    probs = losses.softmax_probabilities(logits)
    d_logits = losses.backward_logits(probs, labels)
    d_cos = losses.backward_cosines(d_logits, cosines, labels, config, mask, margins)
    d_emb, d_weights = losses.backward_parameters(d_cos, emb, class_weights)
    param_grads = model.backward(cache, d_emb)
    if corrupt_first_gradient:
        param_grads[0] = param_grads[0].copy()
        param_grads[0].flat[0] += corrupt_first_gradient

    names = []
    for i in range(model.n_layers):
        names.extend((f"layer{i}.weight", f"layer{i}.bias"))
    tensors = list(zip(names, model.params, param_grads))
    tensors.append(("class_weights", class_weights, d_weights))

    worst, worst_name = 0.0, ""
    for name, array, analytic in tensors:
        for idx in np.ndindex(array.shape):
            saved = array[idx]
            array[idx] = saved + epsilon
            up = loss_now()
            array[idx] = saved - epsilon
            down = loss_now()
            array[idx] = saved
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(analytic[idx] - numeric) / max(abs(analytic[idx]), abs(numeric), 1e-12)
            if err > worst:
                worst, worst_name = err, f"{name}[{idx}]"
    return worst, worst_name
