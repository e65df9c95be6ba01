"""Training loop: sample -> forward -> loss -> backward -> Adam -> schedule."""

from __future__ import annotations

import math
import os

from .data import load_hr_pool, make_training_rng, sample_training_batch
from .network import gldfn_forward, init_weights, l1_loss, rmse_loss
from .optim import AdamState, adam_step, scheduled_lr
from .tensor import Tape, backward
from .weights_io import save_weights


class TrainingDiverged(RuntimeError):
    pass


def train(cfg, hr_dir, out_weights_path, progress=None):
    """Run the loop and write the final WeightStore to out_weights_path.

    Returns the log: a list of {"iter", "loss", "lr"} dicts, one entry
    per logged iteration.  Fully determined by (cfg, data).
    """
    pool = load_hr_pool(hr_dir)
    rng = make_training_rng(cfg.seed)
    weights = init_weights(cfg.net, seed=cfg.seed)
    state = AdamState(weights, cfg.beta1, cfg.beta2, cfg.eps)
    loss_fn = l1_loss if cfg.loss == "l1" else rmse_loss

    log = []
    for it in range(1, cfg.iters + 1):
        lr_patch, hr_patch = sample_training_batch(pool, cfg, rng)
        weights.zero_grads()
        with Tape() as tape:
            sr = gldfn_forward(lr_patch, weights, cfg.net)
            loss = loss_fn(sr, hr_patch)
        loss_val = loss.item()
        if not math.isfinite(loss_val):
            raise TrainingDiverged(f"non-finite loss {loss_val} at iteration {it}")
        backward(loss, tape)
        lr = scheduled_lr(cfg.lr0, it - 1, cfg.lr_halve_every)
        adam_step(weights, state, lr)

        if it % cfg.log_every == 0 or it == 1 or it == cfg.iters:
            entry = {"iter": it, "loss": loss_val, "lr": lr}
            log.append(entry)
            if progress:
                progress(entry)
        if cfg.checkpoint_every and it % cfg.checkpoint_every == 0 and it < cfg.iters:
            save_weights(weights, f"{out_weights_path}.ckpt-{it}")

    save_weights(weights, out_weights_path)
    return log


def write_loss_csv(log, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("iter,loss,lr\n")
        for entry in log:
            fh.write(f"{entry['iter']},{entry['loss']:.8f},{entry['lr']:.8g}\n")
