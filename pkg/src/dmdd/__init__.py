"""Diffusion-driven mainlobe-jamming suppression and multitarget detection.

Pipeline: synthesize or ingest baseband radar scenes, learn the jamming
score from jamming-only data, run conditional reverse diffusion fused with
sparse Bayesian amplitude inference, and benchmark against matched-filter,
SBL and LASSO baselines in a Monte Carlo harness.
"""

from .baselines import (
    AdmmConfig,
    CfarConfig,
    admm_solve,
    cfar_detect,
    pulse_compress,
    sbl_solve,
    sbl_som_solve,
)
from .diffusion import (
    DiffusionSchedule,
    conditional_score_target,
    corrector_step,
    forward_perturb,
    make_vp_schedule,
    predictor_step,
)
from .engine import (
    Detection,
    DmddConfig,
    DmddResult,
    PosteriorGmm,
    PriorSampleBank,
    amplitude_posterior,
    build_prior_bank,
    equivalent_noise_var,
    likelihood_score,
    posterior_score,
    run_dmdd,
    sample_unconditional,
    threshold_detect,
    update_noise_var,
    update_sigma_sq,
)
from .harness import (
    ExperimentConfig,
    MethodAssets,
    PerformanceCurve,
    TrialRecord,
    emit_results,
    run_monte_carlo,
    score_trial,
    wilson_interval,
)
from .jamming import (
    CombParams,
    CombRealization,
    GaussianJammingPrior,
    JammingDataset,
    draw_comb,
    draw_gaussian_jamming,
    gaussian_prior_from_tones,
    generate_comb_dataset,
    read_dataset,
    write_dataset,
)
from .score import (
    AnalyticGaussianScore,
    ConvScoreNet,
    ScoreNetSpec,
    TrainConfig,
    analytic_score,
    dsm_loss,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .signals import (
    SPEED_OF_LIGHT,
    ChirpParams,
    Dictionary,
    RangeGrid,
    Scene,
    build_dictionary,
    compute_sjr,
    compute_snr,
    integration_gain_db,
    sample_baseband,
    scale_jamming_to_sjr,
    synthesize_scene,
)

__version__ = "0.1.0"
