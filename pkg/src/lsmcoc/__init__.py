"""Least-squares Monte Carlo for recursive cost-of-capital valuation."""

from .basis import (
    ArGarchBasis,
    ArGarchSumBasis,
    Basis,
    LifeBasis,
    RankDeficiencyError,
    build_basis_ar_garch,
    build_basis_ar_garch_sum,
    build_basis_life,
    call_value,
    ols_fit,
    predict,
    select_strikes_by_r2,
)
from .engine import CoefficientTable, RunConfig, inner_targets, lsm_backward, substream, value_at_zero
from .models import (
    ArGarchModel,
    ArGarchParams,
    ArGarchSumModel,
    LifeModel,
    LifeModelParams,
    Makeham,
    MarkovModel,
    ar_garch_step,
    life_cashflow,
    life_step,
    makeham_death_prob,
    simulate_marginal,
)
from .oracle import OracleEstimate, closed_form_normal_phi, closed_form_terminal_ar_garch, nested_value_T2
from .risk import CocParams, SpectralDensity, coc_pair, empirical_quantile, empirical_spectral, shortfall_term
from .validation import ValidationConfig, ValidationReport, andp, aroc, histogram, nrmse, rmse, validate

__version__ = "0.1.0"
