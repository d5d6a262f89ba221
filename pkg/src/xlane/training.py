"""Minimal cross-entropy trainer for the classifier.

Plain Adam over the manually-derived gradients; deterministic under a fixed
seed. Good enough to fit the synthetic twin data, not tuned for throughput.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, TrainingDiverged
from .features import N_CLASSES, WindowDataset
from .model import LnLstmParams, backward_batch, forward_batch, init_params


@dataclass
class Hyperparams:
    epochs: int = 64
    learning_rate: float = 3e-3
    batch_size: int = 32
    hidden: int = 64
    seed: int = 0
    val_fraction: float = 0.2
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    log_every: int = 5
    verbose: bool = False
    # divide the input-weight columns by the per-feature spread of the
    # training data at init; raw features span several orders of magnitude
    scale_init: bool = True
    lr_decay: str = "cosine"        # "cosine" | "none"
    keep_best: bool = True          # restore the best-validation parameters


@dataclass
class TrainResult:
    params: LnLstmParams
    train_accuracy: float
    val_accuracy: float
    history: list = field(default_factory=list)   # (epoch, loss, train_acc, val_acc)


def _loss_and_grads(params, x, labels):
    trace = forward_batch(x, params)
    B = x.shape[0]
    onehot = np.zeros((B, N_CLASSES))
    onehot[np.arange(B), labels] = 1.0
    logp = np.log(np.clip(trace.probs, 1e-300, None))
    loss = -np.mean(np.sum(onehot * logp, axis=1))
    dlogits = (trace.probs - onehot) / B
    _, grads = backward_batch(trace, params, dlogits, want_param_grads=True)
    return loss, grads, trace


def _param_vector_views(p: LnLstmParams):
    return [("W", p.W), ("U", p.U), ("b", p.b),
            ("ln_x_gain", p.ln_x.gain), ("ln_x_bias", p.ln_x.bias),
            ("ln_h_gain", p.ln_h.gain), ("ln_h_bias", p.ln_h.bias),
            ("ln_c_gain", p.ln_c.gain), ("ln_c_bias", p.ln_c.bias),
            ("W_head", p.W_head), ("b_head", p.b_head)]


def accuracy(params: LnLstmParams, data: WindowDataset) -> float:
    if len(data) == 0:
        return float("nan")
    pred = predict_classes(params, data.windows)
    return float(np.mean(pred == data.labels))


def predict_classes(params: LnLstmParams, windows: np.ndarray) -> np.ndarray:
    out = np.empty(windows.shape[0], dtype=np.int64)
    for lo in range(0, windows.shape[0], 1024):
        hi = min(lo + 1024, windows.shape[0])
        out[lo:hi] = np.argmax(forward_batch(windows[lo:hi], params).logits, axis=1)
    return out


def train(dataset: WindowDataset, hp: Hyperparams = None) -> TrainResult:
    """Fit parameters on a labeled dataset; returns params plus accuracies.

    The dataset is split train/val by hp.val_fraction (seeded shuffle).
    Raises TrainingDiverged if the loss goes non-finite.
    """
    hp = hp or Hyperparams()
    rng = np.random.default_rng(hp.seed)
    n = len(dataset)
    order = rng.permutation(n)
    n_val = int(round(n * hp.val_fraction))
    val = dataset.subset(order[:n_val])
    tr = dataset.subset(order[n_val:])

    params = init_params(seed=hp.seed, hidden=hp.hidden)
    if hp.scale_init and len(tr):
        spread = tr.windows.reshape(-1, tr.windows.shape[-1]).std(axis=0)
        params.W /= np.maximum(spread, 1e-2)[None, :]
    state_m = {name: np.zeros_like(a) for name, a in _param_vector_views(params)}
    state_v = {name: np.zeros_like(a) for name, a in _param_vector_views(params)}
    step = 0
    history = []
    best = None   # (val_acc, epoch, snapshot)

    for epoch in range(hp.epochs):
        lr = hp.learning_rate
        if hp.lr_decay == "cosine" and hp.epochs > 1:
            lr *= 0.5 * (1.0 + np.cos(np.pi * epoch / (hp.epochs - 1)))
        idx = rng.permutation(len(tr))
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(tr), hp.batch_size):
            batch = idx[lo:lo + hp.batch_size]
            try:
                loss, grads, _ = _loss_and_grads(params, tr.windows[batch],
                                                 tr.labels[batch])
            except NumericError as e:
                raise TrainingDiverged(
                    f"forward pass blew up at epoch {epoch} step {step}: {e}") from e
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch} step {step} "
                    f"(last finite epoch loss {epoch_loss / max(n_batches, 1):.4f})")
            epoch_loss += loss
            n_batches += 1
            step += 1

            gnorm = np.sqrt(sum(float(np.sum(gv * gv)) for _, gv in grads.items()))
            scale = min(1.0, hp.grad_clip / (gnorm + 1e-12))
            bc1 = 1.0 - hp.beta1 ** step
            bc2 = 1.0 - hp.beta2 ** step
            for name, value in _param_vector_views(params):
                gv = getattr(grads, name) * scale
                m = state_m[name]
                v = state_v[name]
                m *= hp.beta1
                m += (1 - hp.beta1) * gv
                v *= hp.beta2
                v += (1 - hp.beta2) * gv * gv
                value -= lr * (m / bc1) / (np.sqrt(v / bc2) + hp.adam_eps)

        track = ((epoch + 1) % hp.log_every == 0 or epoch == hp.epochs - 1
                 or hp.keep_best)
        if track:
            tr_acc = accuracy(params, tr)
            val_acc = accuracy(params, val) if n_val else tr_acc
            if hp.keep_best and (best is None or val_acc > best[0]):
                best = (val_acc, epoch + 1, _snapshot(params))
            if (epoch + 1) % hp.log_every == 0 or epoch == hp.epochs - 1:
                history.append((epoch + 1, epoch_loss / max(n_batches, 1),
                                tr_acc, val_acc))
                if hp.verbose:
                    print(f"epoch {epoch + 1:3d}  "
                          f"loss {epoch_loss / max(n_batches, 1):.4f}  "
                          f"train acc {tr_acc:.3f}  val acc {val_acc:.3f}")

    if hp.keep_best and best is not None and hp.epochs > 0:
        params = best[2]
    tr_acc = accuracy(params, tr)
    val_acc = accuracy(params, val) if n_val else tr_acc
    return TrainResult(params=params, train_accuracy=tr_acc, val_accuracy=val_acc,
                       history=history)


def _snapshot(p: LnLstmParams) -> LnLstmParams:
    from .model import LayerNormParams
    return LnLstmParams(
        W=p.W.copy(), U=p.U.copy(), b=p.b.copy(),
        ln_x=LayerNormParams(p.ln_x.gain.copy(), p.ln_x.bias.copy(), p.ln_x.var_eps),
        ln_h=LayerNormParams(p.ln_h.gain.copy(), p.ln_h.bias.copy(), p.ln_h.var_eps),
        ln_c=LayerNormParams(p.ln_c.gain.copy(), p.ln_c.bias.copy(), p.ln_c.var_eps),
        W_head=p.W_head.copy(), b_head=p.b_head.copy())
