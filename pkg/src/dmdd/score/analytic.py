"""Closed-form jamming score for a Gaussian prior.

If the clean jamming is CN(0, C), the diffused marginal at time t is
CN(0, retention^2 C + 2 noise_scale^2 I) and its conjugate log-density
gradient is ``-(retention^2 C + 2 noise_scale^2 I)^{-1} x``. This serves as
an exact oracle for the pluggable score interface.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from ..diffusion import DiffusionSchedule
from ..errors import FactorizationError


def analytic_score(
    i_t: np.ndarray,
    t: float,
    prior_cov: np.ndarray,
    schedule: DiffusionSchedule,
) -> np.ndarray:
    """Exact marginal score of the diffused Gaussian prior at time ``t``."""
    r = schedule.retention_at(t)
    b = schedule.noise_scale_at(t)
    n = prior_cov.shape[0]
    cov = r * r * prior_cov + 2.0 * b * b * np.eye(n)
    try:
        factor = sla.cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError("diffused prior covariance is singular") from exc
    x = np.asarray(i_t)
    if x.ndim == 1:
        return -sla.cho_solve(factor, x, check_finite=False)
    return -sla.cho_solve(factor, x.T, check_finite=False).T


class AnalyticGaussianScore:
    """Score-model interface backed by an exact Gaussian prior.

    ``evaluate`` accepts a single signal ``(N,)`` or a stack ``(J, N)``; the
    factorization for the most recent ``t`` is cached since samplers call
    the score repeatedly at each grid time.
    """

    def __init__(self, prior_cov: np.ndarray, schedule: DiffusionSchedule):
        self.prior_cov = np.asarray(prior_cov, dtype=complex)
        self.schedule = schedule
        self.n_samples = self.prior_cov.shape[0]
        self._cached_t: float | None = None
        self._cached_factor = None

    def _factor(self, t: float):
        if self._cached_t is not None and t == self._cached_t:
            return self._cached_factor
        r = self.schedule.retention_at(t)
        b = self.schedule.noise_scale_at(t)
        cov = r * r * self.prior_cov + 2.0 * b * b * np.eye(self.n_samples)
        try:
            factor = sla.cho_factor(cov, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("diffused prior covariance is singular") from exc
        self._cached_t = t
        self._cached_factor = factor
        return factor

    def evaluate(self, i_t: np.ndarray, t: float) -> np.ndarray:
        factor = self._factor(float(t))
        x = np.asarray(i_t)
        if x.ndim == 1:
            return -sla.cho_solve(factor, x, check_finite=False)
        return -sla.cho_solve(factor, x.T, check_finite=False).T
