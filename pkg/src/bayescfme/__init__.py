"""Bayesian counterfactual mean embeddings and uncertainty-aware estimators of
the ultimate effect of a policy under covariate shift."""

from .calibration import Hyper, SweepResult, SweepRow, coverage, credible_interval, run_sweep
from .embeddings import (CMEModel, EmbeddingPosterior, WeightedEmbedding, bayes_cfme_posterior,
                         bayes_cme_posterior, cfme, cme_weights, embedding_expectation,
                         embedding_posterior, fit_cme)
from .errors import InputError, NumericalError
from .estimators import (FusionInputs, FusionModel, GaussianScalar, bayes_cfmp, bayes_cfmp_terms,
                         bayes_rcfme, cfmp, make_inputs, plugin_point)
from .kernels import (KernelSpec, SolveConfig, factorize, gram, median_heuristic,
                      nuclear_rbf_eval, rbf_eval, reg_solve)
from .synthetic import (SETTING_A, SETTING_B, RngSeed, gen_logging_data, gen_policy_d3,
                        true_eta)

__version__ = "0.1.0"
