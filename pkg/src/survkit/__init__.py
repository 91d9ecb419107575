"""Survival modelling toolkit: linear and deep Cox models, RReliefF feature
ranking, Shapley attributions, D-optimal scenario design and a braking
simulator that produces synthetic crossing cohorts."""

from ._kernels import BACKEND
from .braking import BrakingProfile, ScenarioSpec, braking_profile, generate_cohort, velocity_at
from .dataset import (Covariate, CovariateSchema, Dataset, LoadError, load_csv, standardize,
                      vif, vif_filter, write_csv)
from .deep import DeepCoxModel, NetworkSpec, TrainConfig, random_search, train
from .doe import AnnealConfig, Design, FactorCatalog, anneal, crossing_catalog
from .errors import ConvergenceWarning, NumericalError, SeparationError, SingularMatrixError
from .explain import conditional_interactions, shap_exact, shap_report, shap_sampled
from .relief import rrelieff, top_n
from .survival import (breslow_baseline, concordance_index, cox_summary, fit_cox,
                       fit_logistic_baseline, kaplan_meier, log_partial_likelihood)

__version__ = "0.1.0"
