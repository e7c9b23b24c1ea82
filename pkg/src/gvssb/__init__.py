"""Grouped variational spike-and-slab regression."""
from .additive import BasisInfo, bspline_basis, expand_additive, fit_additive, predict_additive
from .cavi import elbo, fit, update_hyperparameters, update_v_sigma
from .preprocess import StandardizationInfo, ridge_init, standardize
from .simbench import SimScenario, estimation_metrics, gen_additive, gen_linear, selection_metrics
from .slabs import expected_alpha_sq, gamma_prior_term, log_norm_const
from .types import (FitConfig, FitResult, GroupedDesign, Hyperparams, SlabSpec, VariationalState,
                    make_grouped_design, validate_state)

__version__ = "0.1.0"
