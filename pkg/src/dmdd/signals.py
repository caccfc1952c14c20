"""Waveform synthesis, range dictionary, scene generation, and power metrics.

All baseband vectors are 1-D complex ndarrays of a common length ``N``.
Complex Gaussian convention used throughout the package: ``CN(mu, s2)``
means real and imaginary parts are independent with variance ``s2 / 2``
each, so the per-element second moment of a zero-mean draw equals ``s2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySupportError, GridRangeError

SPEED_OF_LIGHT = 299_792_458.0  # m/s

ComplexSignal = np.ndarray


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Draw CN(0, 2I) samples: unit-variance real and imaginary parts."""
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@dataclass(frozen=True)
class ChirpParams:
    """Linear-FM pulse parameters.

    The receive window holds ``n_samples = round(pulse_duration * sample_freq)``
    fast-time samples; the transmitted pulse occupies the first
    ``pulse_width`` seconds of it.
    """

    carrier_freq: float  # Hz
    fm_slope: float  # Hz/s
    pulse_width: float  # s
    pulse_duration: float  # s
    bandwidth: float  # Hz
    sample_freq: float  # Hz

    def __post_init__(self):
        if self.sample_freq <= self.bandwidth:
            raise ValueError("sample_freq must exceed bandwidth")
        if self.pulse_width > self.pulse_duration:
            raise ValueError("pulse_width must not exceed pulse_duration")
        if self.n_samples <= 0:
            raise ValueError("pulse_duration * sample_freq must round to >= 1")

    @property
    def sample_interval(self) -> float:
        return 1.0 / self.sample_freq

    @property
    def n_samples(self) -> int:
        return int(round(self.pulse_duration * self.sample_freq))

    @property
    def n_coherent(self) -> int:
        """Number of samples inside the pulse support (integration gain count).

        Matches the half-open support used by :func:`sample_baseband` at
        zero delay.
        """
        t = np.arange(self.n_samples) * self.sample_interval
        return int(np.count_nonzero(t < self.pulse_width))

    @property
    def max_range(self) -> float:
        """Largest range whose round-trip delay still falls in the window."""
        return 0.5 * SPEED_OF_LIGHT * self.pulse_duration


@dataclass(frozen=True)
class RangeGrid:
    """Uniform, strictly increasing range discretization (meters)."""

    ranges: np.ndarray
    spacing: float

    def __post_init__(self):
        r = np.asarray(self.ranges, dtype=float)
        object.__setattr__(self, "ranges", r)
        if r.ndim != 1 or r.size < 1:
            raise ValueError("ranges must be a non-empty 1-D array")
        if r.size > 1:
            steps = np.diff(r)
            if np.any(steps <= 0):
                raise ValueError("ranges must be strictly increasing")
            if np.max(np.abs(steps - self.spacing)) > 1e-9 * max(self.spacing, 1.0):
                raise ValueError("ranges must be uniformly spaced")

    @classmethod
    def uniform(cls, start: float, spacing: float, count: int) -> "RangeGrid":
        return cls(ranges=start + spacing * np.arange(count), spacing=spacing)

    @property
    def size(self) -> int:
        return self.ranges.size

    def nearest_index(self, range_m: float | np.ndarray) -> np.ndarray:
        idx = np.rint((np.asarray(range_m) - self.ranges[0]) / self.spacing)
        return np.clip(idx, 0, self.size - 1).astype(int)


@dataclass(frozen=True)
class Dictionary:
    """Range-steering dictionary: column ``q`` is the waveform delayed to grid
    point ``q``. Shape ``(N, Q)``."""

    atoms: np.ndarray
    grid: RangeGrid
    params: ChirpParams

    @property
    def n_samples(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


def sample_baseband(params: ChirpParams, delay: float) -> ComplexSignal:
    """Sampled analytic LFM baseband echo for a given round-trip delay.

    Sample ``n`` is ``exp(j*pi*mu*(n*Ts - delay)^2)`` when ``n*Ts - delay``
    falls in ``[0, pulse_width)`` and zero otherwise.
    """
    if delay < 0:
        raise ValueError("delay must be nonnegative")
    if delay >= params.pulse_duration:
        raise EmptySupportError(
            f"delay {delay:.3e} s >= pulse duration {params.pulse_duration:.3e} s"
        )
    n = params.n_samples
    t = np.arange(n) * params.sample_interval - delay
    inside = (t >= 0.0) & (t < params.pulse_width)
    out = np.zeros(n, dtype=complex)
    out[inside] = np.exp(1j * np.pi * params.fm_slope * t[inside] ** 2)
    return out


def build_dictionary(params: ChirpParams, grid: RangeGrid) -> Dictionary:
    """Assemble the N x Q dictionary of delayed waveforms over the grid."""
    limit = params.max_range
    atoms = np.empty((params.n_samples, grid.size), dtype=complex)
    for q, r in enumerate(grid.ranges):
        delay = 2.0 * r / SPEED_OF_LIGHT
        if delay >= params.pulse_duration:
            raise GridRangeError(q, float(r), limit)
        atoms[:, q] = sample_baseband(params, delay)
    return Dictionary(atoms=atoms, grid=grid, params=params)


@dataclass(frozen=True)
class Scene:
    """One synthesized measurement with its ground truth.

    ``measurement = target_signal + jamming + noise`` where the noise
    realization is reproducible from ``rng_seed``.
    """

    true_ranges: np.ndarray
    true_amplitudes: np.ndarray
    jamming: ComplexSignal
    noise_var: float
    measurement: ComplexSignal
    target_signal: ComplexSignal = field(repr=False, default=None)
    rng_seed: int | None = None


def synthesize_scene(
    params: ChirpParams,
    grid: RangeGrid,
    targets: list[tuple[float, complex]],
    jamming: ComplexSignal | None,
    noise_var: float,
    rng_seed: int | None = None,
) -> Scene:
    """Build ``y = sum_k x_k s(r_k) + i + w`` at the true target ranges.

    Target ranges need not lie on ``grid``; the echo is evaluated at the
    exact range. Noise is CN(0, noise_var) per element.
    """
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    n = params.n_samples
    signal = np.zeros(n, dtype=complex)
    ranges = np.array([r for r, _ in targets], dtype=float)
    amps = np.array([a for _, a in targets], dtype=complex)
    for r, a in zip(ranges, amps):
        signal += a * sample_baseband(params, 2.0 * r / SPEED_OF_LIGHT)
    if jamming is None:
        jamming = np.zeros(n, dtype=complex)
    jamming = np.asarray(jamming, dtype=complex)
    if jamming.shape != (n,):
        raise ValueError(f"jamming must have shape ({n},)")
    rng = np.random.default_rng(rng_seed)
    noise = np.sqrt(noise_var / 2.0) * crandn(rng, n) if noise_var > 0 else 0.0
    return Scene(
        true_ranges=ranges,
        true_amplitudes=amps,
        jamming=jamming,
        noise_var=float(noise_var),
        measurement=signal + jamming + noise,
        target_signal=signal,
        rng_seed=rng_seed,
    )


def compute_sjr(scene: Scene) -> float:
    """Signal-to-jamming ratio 10*log10(||Ax||^2 / ||i||^2) in dB."""
    jam_power = float(np.sum(np.abs(scene.jamming) ** 2))
    if jam_power == 0.0:
        raise ValueError("scene has no jamming; SJR undefined")
    sig_power = float(np.sum(np.abs(scene.target_signal) ** 2))
    if sig_power == 0.0:
        raise ValueError("scene has no target signal; SJR undefined")
    return 10.0 * np.log10(sig_power / jam_power)


def compute_snr(amplitude: complex, noise_var: float) -> float:
    """Per-target SNR 10*log10(|x|^2 / sigma_w^2) in dB (pre-integration)."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    p = abs(amplitude) ** 2
    if p == 0.0:
        raise ValueError("amplitude must be nonzero")
    return 10.0 * np.log10(p / noise_var)


def integration_gain_db(n_coherent: float) -> float:
    """Coherent processing gain 10*log10(Np) in dB."""
    if n_coherent < 1:
        raise ValueError("n_coherent must be >= 1")
    return 10.0 * np.log10(n_coherent)


def scale_jamming_to_sjr(scene: Scene, target_sjr_db: float) -> ComplexSignal:
    """Return the scene's jamming rescaled so that the SJR equals the target.

    Power ratios convert to an amplitude factor of 10^((current-target)/20);
    the operation is idempotent at the target.
    """
    current = compute_sjr(scene)
    factor = 10.0 ** ((current - target_sjr_db) / 20.0)
    return scene.jamming * factor
