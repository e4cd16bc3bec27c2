"""Joint SGD training of the classifier and the per-sample permutation layers.

Three variants share one loop: permute_prediction (the recommended one; the
layer noisifies the model's output before the loss), permute_label (the layer
softens the noisy label; equivalent to learning the label directly), and
plain_ce_baseline (the layer stays frozen and unused).

Within a batch, classifier gradients and permutation gradients come from the
same forward pass; both parameter sets step simultaneously. The permutation
layer is bypassed entirely at evaluation time.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigError, DomainError, TrainingError
from .losses import LossFn, get_loss, grad_p_batch, grad_q_batch, loss_batch
from .model import (Classifier, GradientSet, accuracy, backward_batch,
                    forward_batch, init_params, zero_grads)
from .noise import NoisyDataset
from .numerics import confidence_batch, make_rng, softmax
from .permlayer import (AlphaTable, apply_mix_batch, init_alpha,
                        mix_grad_batch, permutation_accuracy)
from .data import Dataset

VARIANTS = ("permute_prediction", "permute_label", "plain_ce_baseline")


@dataclass
class TrainConfig:
    variant: str = "permute_prediction"
    loss: str = "cross_entropy"
    epochs: int = 120
    batch_size: int = 128
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 0.0
    milestones: tuple = ()
    decay_factor: float = 0.1
    eta_alpha: float = 1.0
    i_alpha: float = 0.7
    seed: int = 0

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.lr <= 0:
            raise ConfigError("model learning rate must be positive")
        if self.eta_alpha < 0:
            raise ConfigError("eta_alpha must be nonnegative")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError("milestones must be strictly increasing")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        get_loss(self.loss)  # validates the name

    def loss_fn(self) -> LossFn:
        return get_loss(self.loss)


@dataclass
class ModelSpec:
    arch: str = "linear"
    hidden: int = 32


@dataclass
class DataBundle:
    train: NoisyDataset
    validation: NoisyDataset
    test: Dataset


@dataclass
class RunReport:
    config: dict
    initial_perm_accuracy: float
    epochs: list = field(default_factory=list)
    final_test_accuracy: float = 0.0
    final_perm_accuracy: float = 0.0
    checkpoint_path: str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def epochs_csv(self) -> str:
        cols = ["epoch", "lr", "train_loss", "val_accuracy", "test_accuracy",
                "perm_accuracy", "mean_confidence", "mean_alpha_grad_l1",
                "prop4_checked", "prop4_violations"]
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for rec in self.epochs:
            buf.write(",".join(repr(rec[k]) if isinstance(rec[k], float) else str(rec[k])
                               for k in cols) + "\n")
        return buf.getvalue()


def config_hash(config: TrainConfig, model_spec: ModelSpec) -> str:
    """Digest of everything that determines the trajectory. The epoch budget
    is deliberately excluded so a checkpoint can be resumed with more epochs."""
    train = asdict(config)
    del train["epochs"]
    blob = json.dumps({"train": train, "model": asdict(model_spec)},
                      sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _one_hot(labels: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros((labels.shape[0], c))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def batch_loss_and_grads(variant: str, loss_fn: LossFn, model: Classifier,
                         alpha_table: AlphaTable, X: np.ndarray,
                         idx: np.ndarray):
    """Loss and gradients for one mini-batch, all from a single forward pass.

    Returns (mean loss, model GradientSet for the mean loss, per-sample
    alpha-gradients of the mean loss (B, c), diagnostics dict). Diagnostics
    carry per-sample prediction confidence and the 1-norm of the per-sample
    (unaveraged) alpha-gradient, which is what the confidence bound speaks
    about.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    B = idx.shape[0]
    c = model.c
    ytil = alpha_table.noisy_label[idx]
    F, cache = forward_batch(model, X)
    conf = confidence_batch(F)

    if variant == "plain_ce_baseline":
        fn = get_loss("cross_entropy")
        Q = _one_hot(ytil, c)
        losses = loss_batch(fn, F, Q)
        dF = grad_p_batch(fn, F, Q) / B
        gset = backward_batch(model, cache, F, dF)
        galpha = np.zeros((B, c))
        per_sample_gnorm = np.zeros(B)
    elif variant == "permute_prediction":
        A = alpha_table.alpha[idx]
        S = softmax(A)
        Fp = apply_mix_batch(S, ytil, F)
        Q = _one_hot(ytil, c)
        losses = loss_batch(loss_fn, Fp, Q)
        U = grad_p_batch(loss_fn, Fp, Q)           # upstream on the permuted output
        # the layer matrix is symmetric, so pulling the gradient back through
        # it is another layer application
        dF = apply_mix_batch(S, ytil, U) / B
        gset = backward_batch(model, cache, F, dF)
        galpha_sample = mix_grad_batch(A, ytil, F, U)
        per_sample_gnorm = np.abs(galpha_sample).sum(axis=1)
        galpha = galpha_sample / B
    else:  # permute_label
        A = alpha_table.alpha[idx]
        S = softmax(A)
        losses = loss_batch(loss_fn, F, S)
        dF = grad_p_batch(loss_fn, F, S) / B
        gset = backward_batch(model, cache, F, dF)
        G = grad_q_batch(loss_fn, F, S)
        galpha_sample = S * (G - np.sum(S * G, axis=-1, keepdims=True))
        per_sample_gnorm = np.abs(galpha_sample).sum(axis=1)
        galpha = galpha_sample / B

    mean_loss = float(np.mean(losses))
    if not np.isfinite(mean_loss):
        raise TrainingError(
            f"non-finite batch loss ({mean_loss}); first losses: {losses[:8]!r}")
    diag = {"confidence": conf, "alpha_grad_l1": per_sample_gnorm}
    return mean_loss, gset, galpha, diag


def sgd_step(model: Classifier, grads: GradientSet, lr: float, momentum: float,
             weight_decay: float, velocity: GradientSet) -> None:
    """Momentum SGD in place; L2 weight decay is decoupled from the loss and
    applied to weight matrices only, never to biases."""
    params = model.param_arrays()
    gs = grads.arrays()
    vs = velocity.arrays()
    for name, p in params.items():
        v = vs[name]
        v *= momentum
        v += gs[name]
        p -= lr * v
        if weight_decay > 0.0 and name.startswith("W"):
            p -= lr * weight_decay * p


def alpha_step(alpha_table: AlphaTable, idx: np.ndarray, grads: np.ndarray,
               eta_alpha: float) -> None:
    """Bare gradient descent on the batch rows; no momentum, no decay."""
    if eta_alpha == 0.0:
        return
    alpha_table.alpha[idx] -= eta_alpha * grads


def _lr_at(config: TrainConfig, epoch: int) -> float:
    drops = sum(1 for m in config.milestones if epoch >= m)
    return config.lr * config.decay_factor ** drops


@dataclass
class TrainerState:
    model: Classifier
    alpha_table: AlphaTable
    velocity: GradientSet
    rng: np.random.Generator
    epoch: int  # last completed epoch


def init_state(config: TrainConfig, model_spec: ModelSpec, bundle: DataBundle) -> TrainerState:
    rng = make_rng(config.seed)
    model = init_params(model_spec.arch, bundle.train.features.shape[1],
                        bundle.train.c, rng, hidden=model_spec.hidden)
    table = init_alpha(bundle.train.noisy_labels, config.i_alpha, bundle.train.c)
    return TrainerState(model, table, zero_grads(model), rng, 0)


def save_checkpoint(path, state: TrainerState, config: TrainConfig,
                    model_spec: ModelSpec) -> None:
    arrays = {f"model_{k}": v for k, v in state.model.param_arrays().items()}
    arrays.update({f"vel_{k}": v for k, v in state.velocity.arrays().items()})
    meta = {
        "arch": state.model.arch,
        "m": state.model.m,
        "c": state.model.c,
        "hidden": state.model.hidden,
        "epoch": state.epoch,
        "rng_state": state.rng.bit_generator.state,
        "config_hash": config_hash(config, model_spec),
    }
    np.savez(path,
             alpha=state.alpha_table.alpha,
             noisy_label=state.alpha_table.noisy_label,
             meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
             **arrays)


def load_checkpoint(path, config: TrainConfig, model_spec: ModelSpec) -> TrainerState:
    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]))
        if meta["config_hash"] != config_hash(config, model_spec):
            raise ConfigError("checkpoint was produced under a different configuration")
        model = Classifier(meta["arch"], meta["m"], meta["c"],
                           z["model_W1"].copy(), z["model_b1"].copy(),
                           z["model_W2"].copy() if "model_W2" in z else None,
                           z["model_b2"].copy() if "model_b2" in z else None,
                           meta["hidden"])
        velocity = GradientSet(z["vel_W1"].copy(), z["vel_b1"].copy(),
                               z["vel_W2"].copy() if "vel_W2" in z else None,
                               z["vel_b2"].copy() if "vel_b2" in z else None)
        table = AlphaTable(z["alpha"].copy(), z["noisy_label"].copy())
    rng = make_rng(0)
    rng.bit_generator.state = meta["rng_state"]
    return TrainerState(model, table, velocity, rng, meta["epoch"])


def train(config: TrainConfig, model_spec: ModelSpec, bundle: DataBundle,
          checkpoint_path=None, resume_from=None) -> RunReport:
    """Run the full epoch/batch loop and return the report.

    The loop is deterministic given the config seed; the clean test labels are
    touched only by the evaluation metrics, never by any gradient.
    """
    fn = config.loss_fn()
    train_ds = bundle.train
    n, c = train_ds.n, train_ds.c
    if not 1.0 / c < config.i_alpha < 1.0:
        raise ConfigError(f"i_alpha must lie in (1/c, 1) for c={c}")

    if resume_from is not None:
        state = load_checkpoint(resume_from, config, model_spec)
    else:
        state = init_state(config, model_spec, bundle)

    report = RunReport(
        config={"train": asdict(config), "model": asdict(model_spec)},
        initial_perm_accuracy=permutation_accuracy(
            init_alpha(train_ds.noisy_labels, config.i_alpha, c),
            train_ds.clean_labels),
    )

    X = train_ds.features
    M = fn.grad_bound_M
    try:
        for epoch in range(state.epoch + 1, config.epochs + 1):
            lr = _lr_at(config, epoch)
            order = state.rng.permutation(n)
            loss_sum = 0.0
            conf_sum = 0.0
            gnorm_sum = 0.0
            prop4_checked = 0
            prop4_violations = 0
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                loss_val, gset, galpha, diag = batch_loss_and_grads(
                    config.variant, fn, state.model, state.alpha_table,
                    X[idx], idx)
                sgd_step(state.model, gset, lr, config.momentum,
                         config.weight_decay, state.velocity)
                if config.variant != "plain_ce_baseline":
                    alpha_step(state.alpha_table, idx, galpha, config.eta_alpha)
                loss_sum += loss_val * idx.shape[0]
                conf_sum += float(diag["confidence"].sum())
                gnorm_sum += float(diag["alpha_grad_l1"].sum())
                if M is not None and config.variant == "permute_prediction":
                    low = diag["confidence"] < 1.0 / c
                    bound = (c * M / 4.0) * diag["confidence"][low] + 1e-9
                    prop4_checked += int(low.sum())
                    prop4_violations += int(np.sum(diag["alpha_grad_l1"][low] > bound))
            state.epoch = epoch
            report.epochs.append({
                "epoch": epoch,
                "lr": lr,
                "train_loss": loss_sum / n,
                "val_accuracy": accuracy(state.model, bundle.validation.features,
                                         bundle.validation.noisy_labels),
                "test_accuracy": accuracy(state.model, bundle.test.features,
                                          bundle.test.labels),
                "perm_accuracy": permutation_accuracy(state.alpha_table,
                                                      train_ds.clean_labels),
                "mean_confidence": conf_sum / n,
                "mean_alpha_grad_l1": gnorm_sum / n,
                "prop4_checked": prop4_checked,
                "prop4_violations": prop4_violations,
            })
    except TrainingError as exc:
        raise TrainingError(str(exc), partial_report=report) from exc

    if report.epochs:
        report.final_test_accuracy = report.epochs[-1]["test_accuracy"]
        report.final_perm_accuracy = report.epochs[-1]["perm_accuracy"]
    else:  # resumed from an already-complete checkpoint: evaluate in place
        report.final_test_accuracy = accuracy(state.model, bundle.test.features,
                                              bundle.test.labels)
        report.final_perm_accuracy = permutation_accuracy(state.alpha_table,
                                                          train_ds.clean_labels)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, state, config, model_spec)
        report.checkpoint_path = str(checkpoint_path)
    return report


def sweep(config: TrainConfig, model_spec: ModelSpec, bundle: DataBundle,
          eta_alpha_grid, i_alpha_grid, base_seed: int | None = None):
    """One run per (eta_alpha, i_alpha) cell; independent seeds per cell.

    Returns long-format rows; a failed cell is recorded and the sweep goes on.
    """
    if not len(eta_alpha_grid) or not len(i_alpha_grid):
        raise ConfigError("sweep grids must be non-empty")
    base = config.seed if base_seed is None else base_seed
    rows = []
    cell = 0
    for ia in i_alpha_grid:
        for ea in eta_alpha_grid:
            cfg = TrainConfig(**{**asdict(config),
                                 "eta_alpha": float(ea),
                                 "i_alpha": float(ia),
                                 "seed": base + cell})
            try:
                rep = train(cfg, model_spec, bundle)
                rows.append({"eta_alpha": float(ea), "i_alpha": float(ia),
                             "perm_accuracy": rep.final_perm_accuracy,
                             "test_accuracy": rep.final_test_accuracy,
                             "initial_perm_accuracy": rep.initial_perm_accuracy,
                             "status": "ok"})
            except (TrainingError, ConfigError) as exc:
                rows.append({"eta_alpha": float(ea), "i_alpha": float(ia),
                             "perm_accuracy": float("nan"),
                             "test_accuracy": float("nan"),
                             "initial_perm_accuracy": float("nan"),
                             "status": f"failed: {exc}"})
            cell += 1
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    buf.write("eta_alpha,i_alpha,perm_accuracy,test_accuracy,initial_perm_accuracy,status\n")
    for r in rows:
        buf.write(f"{r['eta_alpha']!r},{r['i_alpha']!r},{r['perm_accuracy']!r},"
                  f"{r['test_accuracy']!r},{r['initial_perm_accuracy']!r},{r['status']}\n")
    return buf.getvalue()
