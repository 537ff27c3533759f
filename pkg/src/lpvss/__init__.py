"""Identification of discrete-time linear parameter-varying state-space
models: sub-Markov parameter estimation (correlation analysis or regularized
FIR regression), basis-reduced Ho-Kalman realization, and maximum-likelihood
refinement by EM or Gauss-Newton prediction-error minimization."""

from .exceptions import (DegenerateExcitationError, DimensionError,
                         InstabilityError, LpvssError, MissingKeysError,
                         RankDeficiencyError, SelectionError,
                         SingularInnovationError)
from .models import (AffineMatrixFunction, BasisFunctionSet, DataSet,
                     GeneralNoise, InnovationNoise, LpvSsModel, NoiseFree,
                     SimilarityTransform, apply_transform, eval_matrix,
                     innovation_filter, random_stable_model, simulate)
from .markov import (SubMarkovKey, SubMarkovTable, enumerate_keys,
                     fir_predict, true_sub_markov, true_table)
from .cra import CraConfig, estimate_sub_markov_cra, estimate_table_cra
from .fir import (BayesHyper, FirRegression, build_regression,
                  estimate_table_fir, neg_log_marginal, rwls, tune_hyper)
from .realization import (HankelBlocks, SelectionBasis, assemble_hankel,
                          greedy_selection, realize_exact, realize_svd)
from .em import EmConfig, SmoothedMoments, e_step, em_refine, m_step
from .gb import (GbConfig, GbResult, PemParameterization, ddlc_basis,
                 gb_refine, predict_and_jacobian)
from .metrics import (bfr, identification_signals, one_step_predictions,
                      set_snr, validation_signals)
from .harness import ExperimentSpec, RunResult, run_montecarlo, run_pipeline

__version__ = "0.1.0"
