"""Small area poverty mapping: robust area-specific nested error regression,
Monte Carlo EBP of FGT indicators, bootstrap MSPE, baselines, and a
design-based simulation harness."""

__version__ = "0.1.0"

from .baselines import NerParams, mr_ebp, mr_fit_ml
from .bootstrap import BootstrapConfig, bootstrap_mspe
from .data import (
    CensusDataset,
    DataError,
    FgtEstimate,
    SurveyDataset,
    WelfareTransform,
    direct_fgt,
    fgt_area,
    fgt_unit,
    welfare_transform,
)
from .diagnostics import cv_ecdf, direct_model_correlation, w_statistic
from .fit import AreaParams, FitConfig, FitReport, fit_nerhdp, shrinkage_factor
from .predict import PredictionConfig, conditional_shift, ebp_fgt
from .robust import (
    PsiConfig,
    RegressionFit,
    asymmetric_psi,
    huber_psi,
    mad_scale,
    mquantile_regress,
    w_star,
)
from .simulation import (
    ExperimentConfig,
    MetricsReport,
    Population,
    PopulationSpec,
    compute_metrics,
    generate_population,
    run_experiment,
    srs_draw,
)
from .tuning import (
    TauEstimates,
    TauGrid,
    area_tau,
    assign_unit_tau,
    fit_grid,
    fit_logit_eta,
    predict_tau_oos,
    smooth_delta,
)
from .varcomp import (
    VarianceSolution,
    estimate_beta0,
    iterate_variances,
    solve_sigma_eps,
    solve_sigma_gamma,
)
