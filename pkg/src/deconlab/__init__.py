"""Simulation lab for substitute-confounder adjustment with multiple causes."""

__version__ = "0.1.0"

from .errors import CollinearityError, ConfigError, DeconlabError, DegenerateInputError, UnsupportedAnalyticError
from .estimators import (CollinearityReport, EffectEstimate, Estimand, OverlapReport, ci_test, estimate_adjusted,
                         estimate_naive, estimate_substitute, overlap_diagnostic)
from .factors import (FactorModelSpec, IndependenceReport, SubstituteConfounder, fit, fit_mixture, fit_poisson_mf,
                      fit_ppca, heldout_predictive_check, independence_check)
from .graphs import (ChecklistReport, NodeClassification, check_assumptions, classify_node, d_separated,
                     is_valid_adjustment)
from .harness import ExperimentConfig, ResultsTable, run_experiment, summarize
from .scenarios import Scenario, build_scenario, catalog, expected_verdict
from .scm import (CausalGraph, Dataset, FullData, Intervention, Scm, apply_do, mask_observed, sample_full_data,
                  true_ace)

__all__ = [name for name in dir() if not name.startswith("_")]
