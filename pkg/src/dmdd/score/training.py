"""Denoising score matching loss and the Adam training loop."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from ..diffusion import DiffusionSchedule
from .net import ConvScoreNet

T_MIN = 1e-3  # training-time cutoff; the conditional score is singular at t = 0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 1e-4
    n_epochs: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    loss_weighting: str = "variance"  # "variance" or "uniform"
    checkpoint_every: int = 1  # epochs; 0 disables periodic checkpoints
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.loss_weighting not in ("variance", "uniform"):
            raise ValueError("loss_weighting must be 'variance' or 'uniform'")


@dataclass
class TrainResult:
    net: ConvScoreNet
    epoch_losses: list[float] = field(default_factory=list)
    aborted: bool = False


def dsm_loss(
    net: ConvScoreNet,
    batch_i0: np.ndarray,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
    weighting: str = "variance",
    accumulate: bool = True,
) -> float:
    """Denoising score-matching loss on one batch; gradients accumulate into
    the network when ``accumulate`` is set.

    Per sample: t ~ U(T_MIN, 1), i_t from the forward kernel, and the score
    error is weighted by lambda(t). With the variance weighting
    lambda = 2 * noise_scale^2, the weighted score-space error reduces to
    ``||raw - eps||^2 / 2`` in the network's noise-prediction space, so the
    target stays O(1) at every t.
    """
    x0 = np.asarray(batch_i0)
    if net.spec.input_domain == "frequency":
        # unitary feature transform: the kernel and the white noise are
        # invariant, so the regression happens directly on DFT coefficients
        x0 = np.fft.fft(x0, axis=1, norm="ortho")
    batch, n = x0.shape
    t = rng.uniform(T_MIN, 1.0, size=batch)
    eps = rng.standard_normal((batch, n, 2))
    r = schedule.retention_at(t)[:, None]
    b = schedule.noise_scale_at(t)[:, None]
    chan0 = np.stack([x0.real, x0.imag], axis=2)
    chan_t = r[:, :, None] * chan0 + b[:, :, None] * eps
    raw = net.forward_raw(chan_t, t)
    resid = raw.astype(np.float64) - eps
    if weighting == "variance":
        coeff = np.full(batch, 0.5)
    elif weighting == "uniform":
        coeff = 1.0 / (4.0 * schedule.noise_scale_at(t) ** 2)
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    per_sample = np.sum(resid**2, axis=(1, 2))
    loss = float(np.mean(coeff * per_sample))
    if accumulate:
        dout = (2.0 / batch) * coeff[:, None, None] * resid
        net.backward_raw(dout)
    return loss


class AdamState:
    def __init__(self, params: dict[str, np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.step = 0
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}

    def update(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        c = self.cfg
        self.step += 1
        bc1 = 1.0 - c.adam_beta1**self.step
        bc2 = 1.0 - c.adam_beta2**self.step
        for k, p in params.items():
            g = grads[k].astype(np.float64)
            self.m[k] = c.adam_beta1 * self.m[k] + (1 - c.adam_beta1) * g
            self.v[k] = c.adam_beta2 * self.v[k] + (1 - c.adam_beta2) * g * g
            step = c.learning_rate * (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)
            p -= step.astype(p.dtype)


def train(
    net: ConvScoreNet,
    dataset,
    config: TrainConfig,
    schedule: DiffusionSchedule,
    checkpoint_dir: str | None = None,
    log_every: int = 0,
) -> TrainResult:
    """Train the score network on a jamming dataset.

    ``dataset`` needs ``samples`` (count, N) indexable by row blocks (an
    in-memory array or the memory-mapped view from ``read_dataset``).
    On a non-finite loss the run stops and the last checkpointed parameters
    are restored.
    """
    count = dataset.samples.shape[0]
    if count < config.batch_size:
        raise ValueError("dataset smaller than one batch")
    net.schedule = schedule
    net.train_data_power = float(dataset.mean_power()) if hasattr(
        dataset, "mean_power"
    ) else None
    rng = np.random.default_rng(config.seed)
    adam = AdamState(net.parameters(), config)
    snapshot = {k: v.copy() for k, v in net.parameters().items()}
    result = TrainResult(net=net)
    n_batches = count // config.batch_size
    for epoch in range(config.n_epochs):
        order = rng.permutation(count)
        epoch_loss = 0.0
        for bi in range(n_batches):
            idx = np.sort(order[bi * config.batch_size : (bi + 1) * config.batch_size])
            batch = np.asarray(dataset.samples[idx]).astype(np.complex128)
            net.zero_grads()
            loss = dsm_loss(net, batch, schedule, rng, weighting=config.loss_weighting)
            finite = np.isfinite(loss) and all(
                np.all(np.isfinite(g)) for g in net.gradients().values()
            )
            if not finite:
                net.set_parameters(snapshot)
                result.aborted = True
                return result
            adam.update(net.parameters(), net.gradients())
            epoch_loss += loss
            if log_every and (bi + 1) % log_every == 0:
                print(f"epoch {epoch + 1} batch {bi + 1}/{n_batches} loss {loss:.4f}",
                      flush=True)
        result.epoch_losses.append(epoch_loss / n_batches)
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            snapshot = {k: v.copy() for k, v in net.parameters().items()}
            if checkpoint_dir is not None:
                from .checkpoint import save_checkpoint

                os.makedirs(checkpoint_dir, exist_ok=True)
                save_checkpoint(
                    net, os.path.join(checkpoint_dir, f"epoch{epoch + 1:04d}.ckpt")
                )
    return result
