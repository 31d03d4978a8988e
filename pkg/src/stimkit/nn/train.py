"""Mini-batch training loop over rasterized windows."""

from __future__ import annotations

import logging

import numpy as np

from ..errors import ConfigError, NumericError
from .checkpoint import ModelCheckpoint
from .model import ModelConfig, backward_batch, forward_batch, init_params
from .optim import TrainConfig, adam_init, adam_step, bce_loss

log = logging.getLogger("stimkit.train")


def train(
    model_config: ModelConfig,
    train_set: list,
    train_config: TrainConfig,
    augmenter=None,
    dtype=np.float32,
    allow_single_class: bool = False,
):
    """Fit the classifier on a list of RasterClips.

    Each epoch reshuffles the samples and, when an augmenter is given,
    re-renders every sample with a fresh random transform. Returns
    (ModelCheckpoint, history) where history holds each epoch's mean loss.
    All randomness comes from one generator seeded by the train config, so
    identical inputs give bit-identical results.

    A single-class training set is a configuration error unless the
    caller opts in (cross-validation does, after warning, so degenerate
    folds still complete).
    """
    if not train_set:
        raise ConfigError("train_set", "training set is empty")
    labels = {clip.label for clip in train_set}
    if labels != {0, 1} and not allow_single_class:
        raise ConfigError("train_set", f"need both classes present, got labels {sorted(labels)}")

    params = init_params(model_config, dtype)
    state = adam_init(params)
    rng = np.random.Generator(np.random.PCG64(train_config.seed))
    n = len(train_set)
    t = 0
    history: list[float] = []

    for epoch in range(train_config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, train_config.batch_size):
            batch_idx = order[start : start + train_config.batch_size]
            xs = []
            ys = []
            for i in batch_idx:
                clip = train_set[i]
                if augmenter is not None:
                    clip = augmenter(clip, rng)
                xs.append(clip.frames)
                ys.append(clip.label)
            x = np.stack(xs).astype(dtype)[:, :, :, :, None]
            y = np.asarray(ys, dtype=dtype)

            p, cache = forward_batch(params, model_config, x)
            losses, dp = bce_loss(p, y)
            loss_sum += float(losses.sum())
            grads = backward_batch(params, model_config, cache, dp / len(batch_idx))
            t += 1
            adam_step(params, grads, state, t, train_config)

        mean_loss = loss_sum / n
        if not np.isfinite(mean_loss):
            raise NumericError(f"training diverged: epoch {epoch} mean loss {mean_loss}")
        history.append(mean_loss)
        log.debug("epoch %d: mean loss %.6f", epoch, mean_loss)

    checkpoint = ModelCheckpoint(
        config=model_config,
        parameters={k: v.astype(np.float32) for k, v in params.items()},
        training_metadata={
            "epochs_run": train_config.epochs,
            "final_loss": history[-1] if history else None,
            "seed": train_config.seed,
        },
    )
    return checkpoint, history


def predict(checkpoint: ModelCheckpoint, clip_frames) -> float:
    """Probability that a window shows the positive class."""
    from .model import forward

    return forward(checkpoint.parameters, checkpoint.config, np.asarray(clip_frames, dtype=np.float32))


def classify(p: float) -> int:
    """Threshold at exactly 0.5; a tie counts as negative."""
    return 1 if p > 0.5 else 0
