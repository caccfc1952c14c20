"""Variance-preserving diffusion schedule and sampling primitives.

The forward process is the continuous variance-preserving SDE
``dx = -rate(t)/2 x dt + sqrt(rate(t)) dw`` on t in [0, 1] with a linear
rate ramp, for which the transition kernel is available in closed form:

    x_t | x_0  ~  CN(retention(t) * x_0,  2 * noise_scale(t)^2 * I)

with ``retention(t) = exp(-integral(rate)/2)`` and
``retention^2 + noise_scale^2 = 1``. Under the package-wide complex
Gaussian convention, CN(0, 2I) noise has unit-variance real and imaginary
parts, so the terminal state is (nearly) standard complex white noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularKernelError
from .signals import ComplexSignal, crandn


@dataclass(frozen=True)
class DiffusionSchedule:
    """Discretized VP schedule over ``n_steps`` grid times ``(m+1)/T``.

    ``retention`` is the cumulative signal-retention factor and
    ``noise_scale`` the kernel noise amplitude; they satisfy
    ``retention^2 + noise_scale^2 = 1`` at every grid point.
    """

    n_steps: int
    rate_min: float
    rate_max: float
    times: np.ndarray = field(repr=False)
    retention: np.ndarray = field(repr=False)
    noise_scale: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return 1.0 / self.n_steps

    def rate(self, t: float | np.ndarray) -> float | np.ndarray:
        return self.rate_min + (self.rate_max - self.rate_min) * np.asarray(t)

    def drift_coef(self, t: float | np.ndarray) -> float | np.ndarray:
        return -0.5 * self.rate(t)

    def diffusion_coef(self, t: float | np.ndarray) -> float | np.ndarray:
        return np.sqrt(self.rate(t))

    def retention_at(self, t: float | np.ndarray) -> float | np.ndarray:
        t = np.asarray(t)
        integral = self.rate_min * t + 0.5 * (self.rate_max - self.rate_min) * t**2
        out = np.exp(-0.5 * integral)
        return float(out) if out.ndim == 0 else out

    def noise_scale_at(self, t: float | np.ndarray) -> float | np.ndarray:
        r = self.retention_at(t)
        out = np.sqrt(np.maximum(1.0 - np.square(r), 0.0))
        return float(out) if np.ndim(out) == 0 else out

    def kernel_at_index(self, k: int) -> tuple[float, float, float]:
        """(t, retention, noise_scale) at grid index ``k`` in 0..n_steps,
        where index 0 is t = 0 and index k >= 1 is t = k / n_steps."""
        if k == 0:
            return 0.0, 1.0, 0.0
        return (
            float(self.times[k - 1]),
            float(self.retention[k - 1]),
            float(self.noise_scale[k - 1]),
        )


def make_vp_schedule(
    n_steps: int, rate_min: float = 0.1, rate_max: float = 20.0
) -> DiffusionSchedule:
    """Build the linear-rate VP schedule.

    The terminal retention must not exceed 1e-2 so the t = 1 marginal is
    effectively pure CN(0, 2I) noise.
    """
    if n_steps < 2:
        raise ValueError("n_steps must be >= 2")
    if not (0.0 < rate_min < rate_max):
        raise ValueError("need 0 < rate_min < rate_max")
    times = (np.arange(n_steps) + 1.0) / n_steps
    integral = rate_min * times + 0.5 * (rate_max - rate_min) * times**2
    retention = np.exp(-0.5 * integral)
    if retention[-1] > 1e-2:
        raise ValueError(
            f"terminal retention {retention[-1]:.3e} > 1e-2; increase the rate ramp"
        )
    noise_scale = np.sqrt(1.0 - retention**2)
    return DiffusionSchedule(
        n_steps=n_steps,
        rate_min=rate_min,
        rate_max=rate_max,
        times=times,
        retention=retention,
        noise_scale=noise_scale,
    )


def forward_perturb(
    i0: ComplexSignal,
    t: float,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
) -> ComplexSignal:
    """Draw from the transition kernel: ``retention(t) i0 + noise_scale(t) eps``
    with eps ~ CN(0, 2I)."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    i0 = np.asarray(i0)
    r = schedule.retention_at(t)
    b = schedule.noise_scale_at(t)
    if b == 0.0:
        return i0.copy()
    return r * i0 + b * crandn(rng, *i0.shape)


def conditional_score_target(
    i_t: ComplexSignal, i0: ComplexSignal, t: float, schedule: DiffusionSchedule
) -> ComplexSignal:
    """Conjugate-gradient of the log transition kernel:
    ``-(i_t - retention * i0) / (2 * noise_scale^2)``."""
    b = schedule.noise_scale_at(t)
    if b == 0.0:
        raise SingularKernelError("kernel score undefined at t = 0")
    r = schedule.retention_at(t)
    return -(np.asarray(i_t) - r * np.asarray(i0)) / (2.0 * b**2)


def corrector_step(
    i_t: ComplexSignal,
    posterior_score: ComplexSignal,
    rng: np.random.Generator,
    step_scale: float = 1.0,
    z: ComplexSignal | None = None,
) -> tuple[ComplexSignal, float]:
    """One Langevin refinement with the norm-ratio step size
    ``eps = scale * ||z||^2 / ||score||^2``.

    The update is ``i + eps*score + sqrt(eps) z`` with z ~ CN(0, 2I). With
    the score being the conjugate Wirtinger gradient, this is the complex
    packing of real Langevin dynamics at step eps/2 per real coordinate, so
    small steps leave the target density invariant. A zero score skips the
    step; the returned step size is 0.0 in that case so callers can flag it
    in diagnostics.
    """
    i_t = np.asarray(i_t)
    score_sq = float(np.sum(np.abs(posterior_score) ** 2))
    if score_sq == 0.0:
        return i_t.copy(), 0.0
    if z is None:
        z = crandn(rng, *i_t.shape)
    eps = step_scale * float(np.sum(np.abs(z) ** 2)) / score_sq
    return i_t + eps * posterior_score + np.sqrt(eps) * z, eps


def predictor_step(
    i_t: ComplexSignal,
    posterior_score: ComplexSignal,
    t: float,
    dt: float,
    schedule: DiffusionSchedule,
    rng: np.random.Generator,
    z: ComplexSignal | None = None,
) -> ComplexSignal:
    """Reverse-time Euler-Maruyama step from t to t - dt:
    ``i + (-f(t) i + 2 g(t)^2 score) dt + g(t) sqrt(dt) z``, z ~ CN(0, 2I).

    The factor 2 on the score converts the conjugate Wirtinger gradient to
    the underlying real-coordinate gradient of the reverse-time dynamics;
    without it the reverse marginals do not match the forward ones (the
    terminal covariance comes out visibly inflated).
    """
    if t - dt < -1e-12:
        raise ValueError("step would leave [0, 1]")
    i_t = np.asarray(i_t)
    f = schedule.drift_coef(t)
    g = schedule.diffusion_coef(t)
    if z is None:
        z = crandn(rng, *i_t.shape)
    return i_t + (-f * i_t + 2.0 * g**2 * posterior_score) * dt + g * np.sqrt(dt) * z
