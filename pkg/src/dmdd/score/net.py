"""Trainable convolutional score network for complex baseband pulses.

The complex input is split into two real channels (shape (batch, N, 2)), run
through a small encoder/decoder with skip connections, and the two output
channels are recombined into a complex vector. The network regresses the
kernel noise, so the score estimate at time t is ``-raw / (2 * noise_scale)``;
this keeps the regression target at unit scale across the whole schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffusion import DiffusionSchedule
from .layers import Conv1d, ConvTranspose1d, Dense, GroupNorm, ReLU, sinusoidal_embedding


@dataclass(frozen=True)
class ScoreNetSpec:
    base_channels: int = 32
    mid_channels: int = 64
    kernel: int = 3
    time_embed_dim: int = 64
    groups: int = 8
    expected_length: int | None = None
    # feature domain for the convolution stack. The unitary DFT commutes
    # with the forward kernel (white complex noise stays white), so scores
    # may be learned on DFT coefficients and mapped back; narrowband
    # interference becomes local there, which suits a small receptive field.
    input_domain: str = "time"  # "time" or "frequency"

    def __post_init__(self):
        if self.input_domain not in ("time", "frequency"):
            raise ValueError("input_domain must be 'time' or 'frequency'")

    def to_dict(self) -> dict:
        return {
            "base_channels": self.base_channels,
            "mid_channels": self.mid_channels,
            "kernel": self.kernel,
            "time_embed_dim": self.time_embed_dim,
            "groups": self.groups,
            "expected_length": self.expected_length,
            "input_domain": self.input_domain,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreNetSpec":
        d = dict(d)
        d.setdefault("input_domain", "time")
        return cls(**d)


class ConvScoreNet:
    """Two-stage stride-2 encoder, bottleneck, mirrored transposed-conv
    decoder with concatenated skips, and a 1x1 output projection. A
    sinusoidal embedding of the diffusion time is linearly projected and
    added after every stage."""

    def __init__(
        self,
        spec: ScoreNetSpec = ScoreNetSpec(),
        seed: int = 0,
        dtype=np.float32,
        schedule: DiffusionSchedule | None = None,
    ):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.schedule = schedule
        self.train_data_power: float | None = None
        rng = np.random.default_rng(seed)
        c1, c2, k, g = spec.base_channels, spec.mid_channels, spec.kernel, spec.groups
        e = spec.time_embed_dim
        mk = lambda cls_, *a, **kw: cls_(*a, rng=rng, dtype=dtype, **kw)
        self.enc1 = mk(Conv1d, 2, c1, kernel=k, stride=2, pad=k // 2)
        self.gn1 = GroupNorm(c1, groups=g, dtype=dtype)
        self.enc2 = mk(Conv1d, c1, c2, kernel=k, stride=2, pad=k // 2)
        self.gn2 = GroupNorm(c2, groups=g, dtype=dtype)
        self.mid = mk(Conv1d, c2, c2, kernel=k, stride=1, pad=k // 2)
        self.gnm = GroupNorm(c2, groups=g, dtype=dtype)
        self.up2 = mk(ConvTranspose1d, 2 * c2, c1, kernel=4, stride=2, pad=1)
        self.gn3 = GroupNorm(c1, groups=g, dtype=dtype)
        self.up1 = mk(ConvTranspose1d, 2 * c1, c1, kernel=4, stride=2, pad=1)
        self.gn4 = GroupNorm(c1, groups=g, dtype=dtype)
        self.out = mk(Conv1d, c1, 2, kernel=1, stride=1, pad=0)
        self.tp1 = mk(Dense, e, c1)
        self.tp2 = mk(Dense, e, c2)
        self.tpm = mk(Dense, e, c2)
        self.tp3 = mk(Dense, e, c1)
        self.tp4 = mk(Dense, e, c1)
        self._relus = [ReLU() for _ in range(5)]
        self._layers = {
            "enc1": self.enc1, "gn1": self.gn1,
            "enc2": self.enc2, "gn2": self.gn2,
            "mid": self.mid, "gnm": self.gnm,
            "up2": self.up2, "gn3": self.gn3,
            "up1": self.up1, "gn4": self.gn4,
            "out": self.out,
            "tp1": self.tp1, "tp2": self.tp2, "tpm": self.tpm,
            "tp3": self.tp3, "tp4": self.tp4,
        }

    # -- parameter registry --------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            f"{name}.{key}": arr
            for name, layer in self._layers.items()
            for key, arr in layer.params.items()
        }

    def gradients(self) -> dict[str, np.ndarray]:
        return {
            f"{name}.{key}": arr
            for name, layer in self._layers.items()
            for key, arr in layer.grads.items()
        }

    def set_parameters(self, values: dict[str, np.ndarray]) -> None:
        for name, arr in values.items():
            layer_name, key = name.split(".")
            layer = self._layers[layer_name]
            if layer.params[key].shape != arr.shape:
                raise ValueError(f"shape mismatch for parameter {name}")
            layer.params[key] = np.array(arr, dtype=layer.params[key].dtype)

    def zero_grads(self) -> None:
        for layer in self._layers.values():
            layer.zero_grads()

    # -- raw channel-domain passes -------------------------------------------

    def _check_length(self, length: int) -> None:
        if length % 4:
            raise ValueError("input length must be divisible by 4")
        if self.spec.expected_length is not None and length != self.spec.expected_length:
            raise ValueError(
                f"input length {length} does not match trained length "
                f"{self.spec.expected_length}"
            )

    def forward_raw(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """(batch, N, 2) -> (batch, N, 2) with per-sample times ``t``."""
        self._check_length(x.shape[1])
        x = np.ascontiguousarray(x, dtype=self.dtype)
        temb = sinusoidal_embedding(t, self.spec.time_embed_dim, dtype=self.dtype)
        r1, r2, r3, r4, r5 = self._relus
        e1 = r1.forward(self.gn1.forward(self.enc1.forward(x)))
        e1 = e1 + self.tp1.forward(temb)[:, None, :]
        e2 = r2.forward(self.gn2.forward(self.enc2.forward(e1)))
        e2 = e2 + self.tp2.forward(temb)[:, None, :]
        mm = r3.forward(self.gnm.forward(self.mid.forward(e2)))
        mm = mm + self.tpm.forward(temb)[:, None, :]
        d2 = r4.forward(self.gn3.forward(self.up2.forward(
            np.concatenate([mm, e2], axis=2))))
        d2 = d2 + self.tp3.forward(temb)[:, None, :]
        d1 = r5.forward(self.gn4.forward(self.up1.forward(
            np.concatenate([d2, e1], axis=2))))
        d1 = d1 + self.tp4.forward(temb)[:, None, :]
        return self.out.forward(d1)

    def backward_raw(self, dout: np.ndarray) -> None:
        """Accumulate parameter gradients for the preceding ``forward_raw``."""
        c1, c2 = self.spec.base_channels, self.spec.mid_channels
        r1, r2, r3, r4, r5 = self._relus
        dd1 = self.out.backward(np.ascontiguousarray(dout, dtype=self.dtype))
        self.tp4.backward(dd1.sum(axis=1))
        dcat1 = self.up1.backward(self.gn4.backward(r5.backward(dd1)))
        dd2, de1_skip = dcat1[:, :, :c1], dcat1[:, :, c1:]
        self.tp3.backward(dd2.sum(axis=1))
        dcat2 = self.up2.backward(self.gn3.backward(r4.backward(dd2)))
        dmm, de2_skip = dcat2[:, :, :c2], dcat2[:, :, c2:]
        self.tpm.backward(dmm.sum(axis=1))
        de2 = self.mid.backward(self.gnm.backward(r3.backward(dmm))) + de2_skip
        self.tp2.backward(de2.sum(axis=1))
        de1 = self.enc2.backward(self.gn2.backward(r2.backward(de2))) + de1_skip
        self.tp1.backward(de1.sum(axis=1))
        self.enc1.backward(self.gn1.backward(r1.backward(de1)))

    # -- complex-domain interface ----------------------------------------------

    def raw_complex(self, i_t: np.ndarray, t: float | np.ndarray) -> np.ndarray:
        """Run the network on complex input(s); returns the complex raw output.

        For a frequency-domain network the input is mapped through the
        unitary DFT and the output back, so callers always see time-domain
        quantities.
        """
        x = np.asarray(i_t)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        freq = self.spec.input_domain == "frequency"
        if freq:
            x = np.fft.fft(x, axis=1, norm="ortho")
        chan = np.stack([x.real, x.imag], axis=2)
        tvec = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
        raw = self.forward_raw(chan, tvec)
        out = raw[:, :, 0].astype(np.complex128) + 1j * raw[:, :, 1]
        if freq:
            out = np.fft.ifft(out, axis=1, norm="ortho")
        return out[0] if single else out

    def evaluate(self, i_t: np.ndarray, t: float) -> np.ndarray:
        """Score estimate ``-raw / (2 * noise_scale(t))``."""
        if self.schedule is None:
            raise ValueError("net has no schedule bound; set .schedule first")
        b = self.schedule.noise_scale_at(float(t))
        if b == 0.0:
            raise ValueError("score is undefined at t = 0")
        return -self.raw_complex(i_t, t) / (2.0 * b)


def net_forward(net: ConvScoreNet, i_t: np.ndarray, t: float) -> np.ndarray:
    """Raw complex network output for one signal (module-level convenience)."""
    return net.raw_complex(i_t, t)
