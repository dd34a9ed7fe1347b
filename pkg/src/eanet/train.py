"""Adam training loop with a step-indexed schedule.

Each step draws its batch from a fresh generator seeded by (run seed,
step index) and the learning rate is a pure function of the step index,
so nothing about the trajectory depends on loop-carried RNG state. A run
resumed from a checkpoint therefore replays the remaining steps bit for
bit as if it had never stopped.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import Adam
from .data import loss_targets
from .errors import ConfigError, NumericError
from .hand import default_template
from .network import EANet, load_checkpoint, save_checkpoint

FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"
LOSS_LOG = "loss.csv"


@dataclass
class TrainConfig:
    steps: int = 300
    batch_size: int = 32
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    anneal_factor: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.steps <= 0 or self.batch_size <= 0:
            raise ConfigError("steps and batch_size want positive values")
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigError("lr and eps want positive values")
        if not 0.0 < self.anneal_factor <= 1.0:
            raise ConfigError("anneal_factor wants a value in (0, 1]")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} wants a value in [0, 1)")

    @property
    def anneal_steps(self):
        return (self.steps // 3, self.steps // 2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)


def lr_at(cfg: TrainConfig, step):
    """Learning rate for a step index: annealed once past each milestone."""
    lr = cfg.lr
    for milestone in cfg.anneal_steps:
        if step >= milestone:
            lr *= cfg.anneal_factor
    return lr


def batch_indices(cfg: TrainConfig, step, n):
    """Sample indices for one step, independent of any earlier step."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, step]))
    return rng.choice(n, size=min(cfg.batch_size, n), replace=False)


@dataclass
class TrainResult:
    losses: list
    best_step: int
    best_loss: float
    final_path: str = None
    best_path: str = None


def train(model, samples, cfg: TrainConfig, out_dir=None, template=None,
          optimizer=None, start_step=0, stop_after=None):
    """Run (or continue) the loop from start_step toward cfg.steps.

    stop_after pauses the run at that absolute step index; the final
    checkpoint then holds everything needed to resume. With an out_dir the
    run writes a per-step loss log plus final and best checkpoints; best
    means the parameters that produced the lowest batch loss seen by this
    call, captured before their update.
    """
    if not samples:
        raise ConfigError("training needs at least one sample")
    template = template if template is not None else default_template()
    targets = [loss_targets(s) for s in samples]
    if optimizer is None:
        optimizer = Adam(model.params, lr=cfg.lr, beta1=cfg.beta1,
                         beta2=cfg.beta2, eps=cfg.eps)
    end_step = cfg.steps if stop_after is None else min(cfg.steps, stop_after)

    log_fh = writer = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fresh = start_step == 0
        log_fh = open(os.path.join(out_dir, LOSS_LOG), "w" if fresh else "a", newline="")
        writer = csv.writer(log_fh)
        if fresh:
            writer.writerow(["step", "loss", "lr"])

    result = TrainResult(losses=[], best_step=-1, best_loss=math.inf)
    best_arrays = None
    try:
        for step in range(start_step, end_step):
            optimizer.lr = lr_at(cfg, step)
            batch = batch_indices(cfg, step, len(samples))
            model.zero_grads()
            try:
                acc = None
                for i in batch:
                    total, _ = model.compute_loss(
                        model.forward(samples[i].image), targets[i], template
                    )
                    acc = total if acc is None else acc + total
                mean = acc * (1.0 / len(batch))
                value = float(mean.item())
                if not math.isfinite(value):
                    raise NumericError("loss became non-finite")
                if value < result.best_loss:
                    result.best_loss = value
                    result.best_step = step
                    best_arrays = model.param_arrays()
                mean.backward()
                optimizer.step()
            except NumericError as exc:
                # engine-level finite checks fire mid-graph; stamp the step
                exc.step = step
                exc.args = (f"{exc.args[0]} at training step {step}",)
                raise
            result.losses.append(value)
            if writer is not None:
                writer.writerow([step, repr(value), repr(optimizer.lr)])
                log_fh.flush()
    finally:
        if log_fh is not None:
            log_fh.close()

    if out_dir is not None:
        result.final_path = os.path.join(out_dir, FINAL_CHECKPOINT)
        save_checkpoint(result.final_path, model, optimizer, step=end_step)
        if best_arrays is not None:
            result.best_path = os.path.join(out_dir, BEST_CHECKPOINT)
            best_model = EANet(model.config, params=best_arrays)
            save_checkpoint(result.best_path, best_model, step=result.best_step)
    return result


def resume(checkpoint_path, samples, cfg: TrainConfig, out_dir=None,
           template=None, stop_after=None):
    """Continue an interrupted run from its final checkpoint.

    cfg must be the configuration of the original run: the schedule and
    the batch draws are functions of it. Returns (model, result).
    """
    config, params, optim_state, step = load_checkpoint(checkpoint_path)
    if optim_state is None:
        raise ConfigError(f"checkpoint {checkpoint_path} has no optimizer state to resume from")
    model = EANet(config, params=params)
    optimizer = Adam(model.params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    optimizer.load_state_arrays(optim_state, step_count=step)
    result = train(model, samples, cfg, out_dir=out_dir, template=template,
                   optimizer=optimizer, start_step=step, stop_after=stop_after)
    return model, result
