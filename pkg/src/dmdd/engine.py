"""Joint jamming posterior sampling and sparse amplitude inference.

One reverse-diffusion pass alternates, per grid time:

  1. corrector / predictor updates of J jamming chains driven by the sum of
     the plugged-in prior score and the closed-form likelihood score;
  2. a Gaussian-mixture posterior over the target amplitude vector,
     conditioning the conjugate-Gaussian solve on a set of jamming atoms;
  3. EM updates of the per-bin amplitude prior variances and of the noise
     variance.

After the final step (t = 0) a constant threshold detector runs on the
posterior amplitude mean. The mixture atoms default to the chain samples
themselves (each atom is one posterior jamming draw); a pre-diffused bank of
prior draws can be substituted via ``atom_source='prior-bank'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionSchedule, corrector_step, forward_perturb, predictor_step
from .errors import DmddError
from .linalg import DictionaryModel, MarginalFactor, single_thread_blas
from .signals import ComplexSignal, Dictionary, RangeGrid, crandn

SIGMA_FLOOR = 1e-12  # keeps pruned prior variances strictly positive


def equivalent_noise_var(t: float, noise_var: float, schedule: DiffusionSchedule) -> float:
    """Effective white-noise power ``2 b^2 / retention^2 + sigma_w^2`` seen by
    the measurement once the diffused jamming is rescaled to clean units."""
    r = schedule.retention_at(t)
    if r <= 0.0:
        raise ValueError("retention must be positive")
    b = schedule.noise_scale_at(t)
    return 2.0 * b * b / (r * r) + noise_var


def likelihood_score(
    i_t: ComplexSignal,
    y: ComplexSignal,
    dictionary: np.ndarray | Dictionary | DictionaryModel,
    sigma_sq: np.ndarray,
    noise_var: float,
    t: float,
    schedule: DiffusionSchedule,
) -> ComplexSignal:
    """Closed-form measurement score ``(1/r) Sigma_y^{-1} (y - i_t / r)`` with
    ``Sigma_y = A diag(sigma_sq) A^H + sigma_e^2 I``.

    Accepts a single chain ``(N,)`` or a stack ``(J, N)``.
    """
    model = _as_model(dictionary)
    r = schedule.retention_at(t)
    if r <= 0.0:
        raise ValueError("retention must be positive")
    se2 = equivalent_noise_var(t, noise_var, schedule)
    factor = MarginalFactor(model, np.maximum(sigma_sq, 0.0), se2)
    return _likelihood_from_factor(factor, i_t, y, r)


def _likelihood_from_factor(
    factor: MarginalFactor, i_t: np.ndarray, y: np.ndarray, retention: float
) -> np.ndarray:
    x = np.asarray(i_t)
    if x.ndim == 1:
        return factor.solve(y - x / retention) / retention
    resid = (y[None, :] - x / retention).T
    return (factor.solve(resid) / retention).T


def posterior_score(prior_score: ComplexSignal, lik_score: ComplexSignal) -> ComplexSignal:
    """Bayes decomposition: elementwise sum of prior and likelihood scores."""
    a = np.asarray(prior_score)
    b = np.asarray(lik_score)
    if a.shape != b.shape:
        raise ValueError("score shapes differ")
    return a + b


def _as_model(dictionary) -> DictionaryModel:
    if isinstance(dictionary, DictionaryModel):
        return dictionary
    if isinstance(dictionary, Dictionary):
        return DictionaryModel(dictionary.atoms)
    return DictionaryModel(np.asarray(dictionary))


# ---------------------------------------------------------------------------
# prior sample bank


@dataclass(frozen=True)
class PriorSampleBank:
    """Forward-diffused prior jamming draws on the sampling grid.

    ``samples[k]`` holds the atoms at t = k / n_steps (index 0 is the clean
    draws themselves), shape (n_steps + 1, size, N).
    """

    samples: np.ndarray
    n_steps: int

    @property
    def size(self) -> int:
        return self.samples.shape[1]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[2]

    def at_index(self, k: int) -> np.ndarray:
        return self.samples[k]


def build_prior_bank(
    dataset,
    schedule: DiffusionSchedule,
    size: int,
    rng: np.random.Generator,
) -> PriorSampleBank:
    """Draw ``size`` held-out pulses and push them through the forward kernel
    at every grid time."""
    count = dataset.samples.shape[0]
    if count < size:
        raise ValueError(f"dataset holds {count} samples, need {size}")
    idx = np.sort(rng.choice(count, size=size, replace=False))
    clean = np.asarray(dataset.samples[idx]).astype(np.complex128)
    t_count = schedule.n_steps + 1
    out = np.empty((t_count, size, clean.shape[1]), dtype=np.complex128)
    out[0] = clean
    for k in range(1, t_count):
        out[k] = forward_perturb(clean, k / schedule.n_steps, schedule, rng)
    return PriorSampleBank(samples=out, n_steps=schedule.n_steps)


# ---------------------------------------------------------------------------
# amplitude posterior


@dataclass
class PosteriorGmm:
    """Mixture posterior over the amplitude vector.

    All components share one covariance; the collapsed moments are the
    weighted component mean and ``shared + sum_j w_j mu_j mu_j^H - mu mu^H``.
    Dense Q x Q covariances are materialized only on request; the diagonals
    and the dictionary-domain trace ``tr(A cov A^H)`` (needed by the noise
    update) are always available.
    """

    weights: np.ndarray
    component_means: np.ndarray  # (Q, J) complex
    shared_cov_diag: np.ndarray
    mean: np.ndarray
    cov_diag: np.ndarray
    trace_dict_quad: float
    shared_cov: np.ndarray | None = None
    cov: np.ndarray | None = None
    degenerate_weights: bool = False


def amplitude_posterior(
    y: ComplexSignal,
    dictionary: np.ndarray | Dictionary | DictionaryModel,
    atoms: np.ndarray,
    sigma_sq: np.ndarray,
    noise_var: float,
    t: float,
    schedule: DiffusionSchedule,
    want_dense: bool | None = None,
    gram: np.ndarray | None = None,
) -> PosteriorGmm:
    """Conjugate Gaussian-mixture posterior of the amplitudes given jamming
    atoms.

    Component j conditions on atom j: its mean solves the ridge system with
    data ``y - atom_j / retention`` and the log-weights are the Gaussian
    marginal-likelihood exponents ``r_j^H Sigma_y^{-1} r_j`` (equal, through
    the matrix inversion lemma, to ``|r_j|^2 / sigma_e^2 - phi^H Sigma phi``),
    normalized in log space.
    """
    model = _as_model(dictionary)
    atoms = np.atleast_2d(np.asarray(atoms, dtype=complex))
    n_atoms = atoms.shape[0]
    r = schedule.retention_at(t)
    if r <= 0.0:
        raise ValueError("retention must be positive")
    se2 = equivalent_noise_var(t, noise_var, schedule)
    if se2 <= 0.0:
        raise ValueError("equivalent noise variance must be positive")
    d = np.maximum(np.asarray(sigma_sq, dtype=float), SIGMA_FLOOR)
    factor = MarginalFactor(model, d, se2, gram=gram)

    resid = (y[None, :] - atoms / r).T  # (N, J)
    white = factor.whiten(resid)
    exponents = np.sum(white.real**2 + white.imag**2, axis=0)
    degenerate = not np.all(np.isfinite(exponents))
    if degenerate:
        weights = np.full(n_atoms, 1.0 / n_atoms)
    else:
        w = np.exp(-(exponents - exponents.min()))
        weights = w / w.sum()

    # component means: diag(d) A^H Sigma_y^{-1} r_j for every atom at once
    solved = factor.solve(resid)
    comp_means = d[:, None] * (model.adjoint @ solved)
    mean = comp_means @ weights.astype(complex)

    shared_diag = factor.posterior_var_diag()
    comp_power = (comp_means.real**2 + comp_means.imag**2) @ weights
    cov_diag = np.maximum(shared_diag + comp_power - np.abs(mean) ** 2, 0.0)

    proj = model.atoms @ comp_means  # (N, J): A mu_j
    proj_mean = proj @ weights.astype(complex)
    trace_shared = se2 * (model.n_samples - se2 * factor.trace_inv())
    trace_spread = float(
        (np.sum(proj.real**2 + proj.imag**2, axis=0) @ weights)
        - np.sum(np.abs(proj_mean) ** 2)
    )
    trace_dict_quad = max(trace_shared + trace_spread, 0.0)

    if want_dense is None:
        want_dense = model.n_atoms <= 384
    shared_cov = cov = None
    if want_dense:
        vd = factor.whiten(model.atoms) * d[None, :]
        shared_cov = np.diag(d).astype(complex) - vd.conj().T @ vd
        scaled = comp_means * np.sqrt(weights)[None, :]
        cov = shared_cov + scaled @ scaled.conj().T - np.outer(mean, mean.conj())

    return PosteriorGmm(
        weights=weights,
        component_means=comp_means,
        shared_cov_diag=shared_diag,
        mean=mean,
        cov_diag=cov_diag,
        trace_dict_quad=trace_dict_quad,
        shared_cov=shared_cov,
        cov=cov,
        degenerate_weights=degenerate,
    )


def update_sigma_sq(gmm: PosteriorGmm) -> np.ndarray:
    """EM update of the amplitude prior variances:
    ``diag(cov) + |mean|^2`` per bin."""
    return gmm.cov_diag + np.abs(gmm.mean) ** 2


def update_noise_var(
    y: ComplexSignal,
    dictionary: np.ndarray | Dictionary | DictionaryModel,
    gmm: PosteriorGmm,
    atoms: np.ndarray,
    t: float,
    schedule: DiffusionSchedule,
    zeta: float,
) -> float:
    """EM noise-variance update with a positivity floor.

    Average squared residual of ``y - A mean - atom_j / retention`` over the
    atoms, plus the posterior spread term ``tr(A cov A^H)``, per element,
    minus the diffusion-induced part ``2 b^2 / retention^2``, floored at
    ``zeta``.
    """
    if zeta <= 0.0:
        raise ValueError("zeta must be positive")
    model = _as_model(dictionary)
    atoms = np.atleast_2d(np.asarray(atoms, dtype=complex))
    r = schedule.retention_at(t)
    b = schedule.noise_scale_at(t)
    fitted = model.atoms @ gmm.mean
    resid = y[None, :] - fitted[None, :] - atoms / r
    mean_resid_sq = float(np.mean(np.sum(resid.real**2 + resid.imag**2, axis=1)))
    n = model.n_samples
    est = (mean_resid_sq + gmm.trace_dict_quad) / n - 2.0 * b * b / (r * r)
    return max(est, zeta)


# ---------------------------------------------------------------------------
# detector


@dataclass(frozen=True)
class Detection:
    index: int
    range_m: float
    power_db: float
    margin_db: float


def threshold_detect(
    mu_post: np.ndarray,
    noise_var: float,
    threshold_db: float,
    n_coherent: float,
    grid: RangeGrid | None = None,
) -> list[Detection]:
    """Constant-threshold detector on the amplitude posterior mean.

    Bin power ``10 log10(|mu|^2 / sigma_w^2)`` is compared (inclusively)
    against ``threshold_db - 10 log10(n_coherent)``, the threshold referred
    to before coherent integration gain.
    """
    if noise_var <= 0.0:
        raise ValueError("noise_var must be positive")
    if n_coherent < 1:
        raise ValueError("n_coherent must be >= 1")
    p_min = threshold_db - 10.0 * np.log10(n_coherent)
    power = np.abs(np.asarray(mu_post)) ** 2
    with np.errstate(divide="ignore"):
        power_db = 10.0 * np.log10(power / noise_var)
    out = []
    for q in np.flatnonzero(power_db >= p_min):
        out.append(
            Detection(
                index=int(q),
                range_m=float(grid.ranges[q]) if grid is not None else float("nan"),
                power_db=float(power_db[q]),
                margin_db=float(power_db[q] - p_min),
            )
        )
    return out


# ---------------------------------------------------------------------------
# full run


@dataclass(frozen=True)
class DmddConfig:
    n_chains: int = 16
    bank_size: int = 64
    atom_source: str = "chains"  # "chains" or "prior-bank"
    zeta_scale: float = 1e-6  # noise floor = zeta_scale * ||y||^2 / N
    threshold_db: float = 16.8
    n_coherent: float | None = None  # default: from the dictionary's waveform
    corrector_scale: float = 1.0
    em_update_sigma: bool = True
    em_update_noise: bool = True
    sigma_sq_init: float | np.ndarray = 1e4  # scalar fill or per-bin array
    noise_var_init: float = 1.0
    input_scale: float | str | None = "auto"
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1 or self.bank_size < 1:
            raise ValueError("n_chains and bank_size must be >= 1")
        if self.zeta_scale <= 0:
            raise ValueError("zeta_scale must be positive")
        if self.atom_source not in ("chains", "prior-bank"):
            raise ValueError("atom_source must be 'chains' or 'prior-bank'")


@dataclass
class StepDiagnostics:
    step: int
    t: float
    noise_var: float
    residual_norm: float
    corrector_skips: int


@dataclass
class DmddResult:
    mean: np.ndarray
    cov_diag: np.ndarray
    noise_var: float
    sigma_sq: np.ndarray
    jamming_samples: np.ndarray
    detections: list[Detection]
    diagnostics: list[StepDiagnostics]
    input_scale: float


def sample_unconditional(
    score_model,
    schedule: DiffusionSchedule,
    count: int,
    n: int,
    rng: np.random.Generator,
    snapshot_times: tuple[float, ...] = (1.0, 0.5, 0.0),
    corrector_scale: float = 1.0,
) -> dict[float, np.ndarray]:
    """Reverse predictor-corrector sampling from the prior alone.

    Starts at CN(0, 2I) and runs the full grid; returns the sample stack at
    each requested time (nearest grid time at or below the request).
    """
    chains = crandn(rng, count, n)
    want = sorted(snapshot_times, reverse=True)
    snapshots: dict[float, np.ndarray] = {}
    for target in want:
        if target >= 1.0:
            snapshots[target] = chains.copy()
    dt = schedule.dt
    with single_thread_blas():
        for m in range(schedule.n_steps - 1, -1, -1):
            t, _, _ = schedule.kernel_at_index(m + 1)
            score = score_model.evaluate(chains, t)
            for j in range(count):
                chains[j], _ = corrector_step(chains[j], score[j], rng, corrector_scale)
            score = score_model.evaluate(chains, t)
            for j in range(count):
                chains[j] = predictor_step(chains[j], score[j], t, dt, schedule, rng)
            u = t - dt
            for target in want:
                if target not in snapshots and u <= target + 1e-12:
                    snapshots[target] = chains.copy()
    return snapshots


def _resolve_input_scale(y: np.ndarray, score_model, config: DmddConfig) -> float:
    mode = config.input_scale
    if mode is None:
        return 1.0
    if isinstance(mode, (int, float)):
        return float(mode) if mode > 0 else 1.0
    if mode == "auto":
        ref = getattr(score_model, "train_data_power", None)
        if not ref:
            return 1.0
        power = float(np.mean(np.abs(y) ** 2))
        if power <= 0:
            return 1.0
        return float(np.sqrt(power / ref))
    raise ValueError(f"unknown input_scale {mode!r}")


def run_dmdd(
    y: ComplexSignal,
    dictionary: Dictionary | np.ndarray,
    score_model,
    schedule: DiffusionSchedule,
    config: DmddConfig = DmddConfig(),
    bank: PriorSampleBank | None = None,
) -> DmddResult:
    """Run the full reverse pass and detect targets on the final posterior.

    When the score model records the per-element power of its training data,
    the measurement is rescaled to that power first (``input_scale='auto'``)
    so the learned score operates in distribution; every reported quantity is
    scaled back to measurement units. The detector's power ratio is invariant
    to this scaling.
    """
    grid = dictionary.grid if isinstance(dictionary, Dictionary) else None
    n_coh = config.n_coherent
    if n_coh is None:
        if not isinstance(dictionary, Dictionary):
            raise ValueError("n_coherent required when passing a bare atom matrix")
        n_coh = dictionary.params.n_coherent
    model = _as_model(dictionary)
    n, n_bins = model.n_samples, model.n_atoms
    y = np.asarray(y, dtype=complex)
    if y.shape != (n,):
        raise ValueError(f"measurement must have shape ({n},)")

    alpha = _resolve_input_scale(y, score_model, config)
    ys = y / alpha
    zeta = config.zeta_scale * float(np.sum(np.abs(ys) ** 2)) / n

    if config.atom_source == "prior-bank":
        if bank is None:
            raise ValueError("prior-bank atom source requires a bank")
        if bank.n_steps != schedule.n_steps or bank.n_samples != n:
            raise ValueError("bank does not match the schedule/measurement size")

    rng = np.random.default_rng(config.seed)
    t_steps = schedule.n_steps
    dt = schedule.dt
    chains = schedule.noise_scale[-1] * crandn(rng, config.n_chains, n)
    if np.ndim(config.sigma_sq_init) == 0:
        sigma_sq = np.full(n_bins, float(config.sigma_sq_init))
    else:
        sigma_sq = np.asarray(config.sigma_sq_init, dtype=float).copy()
        if sigma_sq.shape != (n_bins,):
            raise ValueError("sigma_sq_init must be scalar or length-Q")
    noise_var = float(config.noise_var_init)

    diagnostics: list[StepDiagnostics] = []
    gmm: PosteriorGmm | None = None
    with single_thread_blas():
        for m in range(t_steps - 1, -1, -1):
            t, _, _ = schedule.kernel_at_index(m + 1)
            d = np.maximum(sigma_sq, SIGMA_FLOOR)
            gram = model.weighted_gram(d)
            se2_t = equivalent_noise_var(t, noise_var, schedule)
            factor_t = MarginalFactor(model, d, se2_t, gram=gram)
            retention_t = schedule.retention_at(t)

            skips = 0
            lik = _likelihood_from_factor(factor_t, chains, ys, retention_t)
            prior = score_model.evaluate(chains, t)
            score = posterior_score(prior, lik)
            for j in range(config.n_chains):
                chains[j], eps = corrector_step(
                    chains[j], score[j], rng, step_scale=config.corrector_scale
                )
                if eps == 0.0:
                    skips += 1

            lik = _likelihood_from_factor(factor_t, chains, ys, retention_t)
            prior = score_model.evaluate(chains, t)
            score = posterior_score(prior, lik)
            for j in range(config.n_chains):
                chains[j] = predictor_step(chains[j], score[j], t, dt, schedule, rng)

            if not np.all(np.isfinite(chains)):
                raise DmddError(f"non-finite chain state at step {m} (t={t:.4f})")

            u, retention_u, _ = schedule.kernel_at_index(m)
            atoms = chains if config.atom_source == "chains" else bank.at_index(m)
            gmm = amplitude_posterior(
                ys, model, atoms, sigma_sq, noise_var, u, schedule,
                want_dense=False, gram=gram,
            )
            if config.em_update_sigma:
                sigma_sq = update_sigma_sq(gmm)
            if config.em_update_noise:
                noise_var = update_noise_var(ys, model, gmm, atoms, u, schedule, zeta)

            resid = ys - model.atoms @ gmm.mean - np.mean(atoms, axis=0) / retention_u
            diagnostics.append(
                StepDiagnostics(
                    step=m,
                    t=u,
                    noise_var=noise_var,
                    residual_norm=float(np.linalg.norm(resid)),
                    corrector_skips=skips,
                )
            )

    detections = threshold_detect(
        gmm.mean, noise_var, config.threshold_db, n_coh, grid
    )
    return DmddResult(
        mean=gmm.mean * alpha,
        cov_diag=gmm.cov_diag * alpha**2,
        noise_var=noise_var * alpha**2,
        sigma_sq=sigma_sq * alpha**2,
        jamming_samples=chains * alpha,
        detections=detections,
        diagnostics=diagnostics,
        input_scale=alpha,
    )
