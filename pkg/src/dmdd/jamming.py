"""Comb-spectrum jamming generation, a Gaussian oracle prior, and dataset I/O.

The dataset file format is a single JSON header line (newline terminated)
followed by a raw little-endian float32 payload of interleaved (re, im)
pairs, ``count * n_samples`` complex values in row-major order. Samples are
therefore stored (and round-tripped bit-exactly) at complex64 precision.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DatasetCountError,
    DatasetLengthError,
    DatasetTruncatedError,
    DatasetVersionError,
    FactorizationError,
)
from .signals import ComplexSignal, crandn

DATASET_FORMAT = "jamming-dataset-v1"


@dataclass(frozen=True)
class CombParams:
    """Sampling ranges for the comb-spectrum jammer."""

    k_range: tuple[int, int]  # inclusive tone-count bounds
    freq_range: tuple[float, float]  # Hz, band containing every tone
    spacing_range: tuple[float, float]  # Hz, tone spacing bounds
    amp_range: tuple[float, float] = (0.5, 1.5)  # linear amplitude bounds

    def __post_init__(self):
        if self.k_range[0] < 1 or self.k_range[1] < self.k_range[0]:
            raise ValueError("tone count bounds must satisfy 1 <= K_min <= K_max")
        if self.freq_range[0] >= self.freq_range[1]:
            raise ValueError("freq_range must be increasing")
        if self.spacing_range[0] <= 0 or self.spacing_range[1] < self.spacing_range[0]:
            raise ValueError("spacing bounds must satisfy 0 < min <= max")
        if self.amp_range[0] <= 0 or self.amp_range[1] < self.amp_range[0]:
            raise ValueError("amplitude bounds must be positive and ordered")


@dataclass(frozen=True)
class CombRealization:
    n_tones: int
    start_freq: float
    spacing: float
    amplitudes: np.ndarray
    phases: np.ndarray
    signal: ComplexSignal

    @property
    def tone_freqs(self) -> np.ndarray:
        return self.start_freq + self.spacing * np.arange(self.n_tones)


def comb_signal(
    freqs: np.ndarray,
    amps: np.ndarray,
    phases: np.ndarray,
    duration_samples: int,
    sample_freq: float,
) -> ComplexSignal:
    """Sum of CW tones: ``sum_k A_k exp(j(2 pi f_k n / fs + phi_k))``."""
    t = np.arange(duration_samples) / sample_freq
    return (np.asarray(amps) * np.exp(1j * np.asarray(phases))) @ np.exp(
        2j * np.pi * np.outer(np.asarray(freqs), t)
    )


def draw_comb(
    params: CombParams,
    duration_samples: int,
    sample_freq: float,
    rng: np.random.Generator,
) -> CombRealization:
    """Draw one comb realization.

    Tone count, spacing, start frequency, amplitudes and phases are drawn
    uniformly from their configured ranges; the start frequency is confined
    so all ``K`` tones ``f0 + k*df`` (k = 0..K-1) stay inside ``freq_range``.
    Phases are i.i.d. uniform on [0, 2pi). An infeasible (K, df) draw retries
    the spacing up to 100 times before failing.
    """
    f_min, f_max = params.freq_range
    k = int(rng.integers(params.k_range[0], params.k_range[1] + 1))
    spacing = 0.0
    for _ in range(100):
        spacing = rng.uniform(*params.spacing_range)
        if f_max - (k - 1) * spacing >= f_min:
            break
    else:
        raise ValueError(
            f"no feasible spacing for K={k} tones in band "
            f"[{f_min:.3g}, {f_max:.3g}] Hz"
        )
    f0 = rng.uniform(f_min, f_max - (k - 1) * spacing)
    amps = rng.uniform(params.amp_range[0], params.amp_range[1], size=k)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=k)
    freqs = f0 + spacing * np.arange(k)
    return CombRealization(
        n_tones=k,
        start_freq=f0,
        spacing=spacing,
        amplitudes=amps,
        phases=phases,
        signal=comb_signal(freqs, amps, phases, duration_samples, sample_freq),
    )


@dataclass(frozen=True)
class GaussianJammingPrior:
    """Zero-mean complex Gaussian jamming prior with covariance ``C``.

    Used as an analytically tractable stand-in for the learned prior when
    validating the sampler end to end.
    """

    covariance: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.covariance, dtype=complex)
        object.__setattr__(self, "covariance", c)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("covariance must be square")
        herm = np.max(np.abs(c - c.conj().T))
        scale = max(np.max(np.abs(c)), 1.0)
        if herm > 1e-12 * scale:
            raise ValueError("covariance must be Hermitian")
        w = np.linalg.eigvalsh(c)
        if w.size and w[0] < -1e-10 * max(np.trace(c).real / c.shape[0], 1.0):
            raise ValueError("covariance must be positive semidefinite")

    @property
    def n_samples(self) -> int:
        return self.covariance.shape[0]

    def factor(self) -> np.ndarray:
        """Square root of the covariance (cached; handles singular C)."""
        cached = getattr(self, "_factor", None)
        if cached is None:
            try:
                w, u = np.linalg.eigh(self.covariance)
            except np.linalg.LinAlgError as exc:
                raise FactorizationError(
                    "eigendecomposition of prior covariance failed"
                ) from exc
            cached = u * np.sqrt(np.clip(w, 0.0, None))
            object.__setattr__(self, "_factor", cached)
        return cached


def gaussian_prior_from_tones(
    tones: list[tuple[float, float]], n_samples: int, sample_freq: float
) -> GaussianJammingPrior:
    """Covariance ``C = sum_k p_k a(f_k) a(f_k)^H`` from (freq, power) tones,
    with ``a(f)[n] = exp(j 2 pi f n / fs)``."""
    c = np.zeros((n_samples, n_samples), dtype=complex)
    t = np.arange(n_samples) / sample_freq
    for freq, power in tones:
        if power <= 0:
            raise ValueError("tone powers must be positive")
        a = np.exp(2j * np.pi * freq * t)
        c += power * np.outer(a, a.conj())
    c = 0.5 * (c + c.conj().T)
    return GaussianJammingPrior(covariance=c)


def draw_gaussian_jamming(
    prior: GaussianJammingPrior,
    rng: np.random.Generator,
    size: int | None = None,
) -> ComplexSignal:
    """Sample CN(0, C) via the (cached) eigenfactor of C.

    Returns one signal, or a (size, N) stack when ``size`` is given.
    """
    factor = prior.factor()
    # CN(0, C) = factor @ xi with xi ~ CN(0, I): unit complex white noise.
    if size is None:
        xi = crandn(rng, prior.n_samples) / np.sqrt(2.0)
        return factor @ xi
    xi = crandn(rng, size, prior.n_samples) / np.sqrt(2.0)
    return xi @ factor.T


@dataclass
class JammingDataset:
    """In-memory (or memory-mapped) collection of equal-length jamming pulses."""

    samples: np.ndarray  # (count, n_samples) complex64
    generator_params: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValueError("samples must be 2-D (count, n_samples)")
        if s.dtype != np.complex64:
            s = s.astype(np.complex64)
        self.samples = s

    @property
    def count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def mean_power(self) -> float:
        """Mean per-element power, streamed to stay memmap-friendly."""
        total = 0.0
        chunk = 4096
        for lo in range(0, self.count, chunk):
            block = np.asarray(self.samples[lo : lo + chunk])
            total += float(np.sum(block.real**2 + block.imag**2))
        return total / (self.count * self.n_samples)


def generate_comb_dataset(
    params: CombParams,
    count: int,
    n_samples: int,
    sample_freq: float,
    rng: np.random.Generator,
) -> JammingDataset:
    """Draw ``count`` independent comb realizations into a dataset."""
    out = np.empty((count, n_samples), dtype=np.complex64)
    for i in range(count):
        out[i] = draw_comb(params, n_samples, sample_freq, rng).signal
    meta = {
        "generator": "comb",
        "k_range": list(params.k_range),
        "freq_range": list(params.freq_range),
        "spacing_range": list(params.spacing_range),
        "amp_range": list(params.amp_range),
        "sample_freq": sample_freq,
    }
    return JammingDataset(samples=out, generator_params=meta)


def write_dataset(path: str | os.PathLike, dataset: JammingDataset) -> None:
    header = {
        "format": DATASET_FORMAT,
        "count": dataset.count,
        "n_samples": dataset.n_samples,
        "dtype": "float32-interleaved",
        "generator_params": dataset.generator_params,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        chunk = 4096
        for lo in range(0, dataset.count, chunk):
            block = np.ascontiguousarray(dataset.samples[lo : lo + chunk])
            pairs = np.empty((block.shape[0], block.shape[1], 2), dtype="<f4")
            pairs[..., 0] = block.real
            pairs[..., 1] = block.imag
            fh.write(pairs.tobytes())


def read_dataset(
    path: str | os.PathLike,
    expect_n: int | None = None,
    mmap: bool = False,
) -> JammingDataset:
    """Read a dataset file, validating header/payload integrity.

    With ``mmap=True`` the payload stays on disk and ``samples`` is a lazy
    complex64 view, suitable for streaming large training sets.
    """
    with open(path, "rb") as fh:
        line = fh.readline()
        if not line.endswith(b"\n"):
            raise DatasetTruncatedError("missing header terminator")
        try:
            header = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DatasetVersionError("unreadable header") from exc
        if header.get("format") != DATASET_FORMAT:
            raise DatasetVersionError(
                f"unsupported format {header.get('format')!r}"
            )
        count = int(header["count"])
        n = int(header["n_samples"])
        offset = fh.tell()
    if expect_n is not None and n != expect_n:
        raise DatasetLengthError(f"file holds length-{n} samples, expected {expect_n}")
    expected_bytes = count * n * 2 * 4
    actual_bytes = os.path.getsize(path) - offset
    if actual_bytes < expected_bytes:
        raise DatasetTruncatedError(
            f"payload has {actual_bytes} bytes, expected {expected_bytes}"
        )
    if actual_bytes != expected_bytes:
        raise DatasetCountError(
            f"payload size {actual_bytes} does not match count {count}"
        )
    if mmap:
        raw = np.memmap(path, dtype="<f4", mode="r", offset=offset, shape=(count, n, 2))
        samples = raw.view(np.complex64).reshape(count, n)
    else:
        with open(path, "rb") as fh:
            fh.seek(offset)
            raw = np.frombuffer(fh.read(expected_bytes), dtype="<f4")
        samples = raw.view(np.complex64).reshape(count, n).copy()
    return JammingDataset(samples=samples, generator_params=header.get("generator_params", {}))
