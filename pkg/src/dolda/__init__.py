"""Supervised topic modeling with a diagonal-orthant probit classifier.

LDA topics and a multi-class probit are estimated jointly: per-document
topic proportions act as regression features, coefficients carry a
horseshoe shrinkage prior, and a partially collapsed Gibbs sampler keeps
the token sweep parallel over documents.
"""

__version__ = "0.1.0"

from .corpus import (
    Corpus,
    CovariateEncoder,
    FoldAssignment,
    Vocabulary,
    build_vocabulary,
    encode,
    load_stoplist,
    split_folds,
    tokenize,
)
from .estimator import DoldaClassifier
from .geweke import GewekeConfig, GewekeResult, run_geweke
from .predict import (
    FittedModel,
    estimate_phi_bar,
    load_model,
    predict_corpus,
    predict_label,
    predictive_distribution,
    sample_new_doc_topics,
    save_model,
)
from .regression import (
    PriorFamily,
    RegressionState,
    do_class_probabilities,
    do_log_likelihood,
    fit_do_probit,
)
from .sampler import (
    ModelState,
    RunConfig,
    SamplerAbort,
    SamplerResult,
    compute_eta_cross,
    compute_g_all,
    compute_g_full,
    gibbs_iteration,
    init_model,
    log_likelihood,
    run_sampler,
    state_hash,
    update_g_incremental,
)
from .simulate import SimulatedCorpus, forward_simulate
from .topic_state import Hyper, TopicState, init_random, sample_phi, zbar_matrix

__all__ = [
    "__version__",
    "Corpus",
    "CovariateEncoder",
    "DoldaClassifier",
    "FittedModel",
    "FoldAssignment",
    "GewekeConfig",
    "GewekeResult",
    "Hyper",
    "ModelState",
    "PriorFamily",
    "RegressionState",
    "RunConfig",
    "SamplerAbort",
    "SamplerResult",
    "SimulatedCorpus",
    "TopicState",
    "Vocabulary",
    "build_vocabulary",
    "compute_eta_cross",
    "compute_g_all",
    "compute_g_full",
    "do_class_probabilities",
    "do_log_likelihood",
    "encode",
    "estimate_phi_bar",
    "fit_do_probit",
    "forward_simulate",
    "gibbs_iteration",
    "init_model",
    "init_random",
    "load_model",
    "load_stoplist",
    "log_likelihood",
    "predict_corpus",
    "predict_label",
    "predictive_distribution",
    "run_geweke",
    "run_sampler",
    "sample_new_doc_topics",
    "sample_phi",
    "save_model",
    "split_folds",
    "state_hash",
    "tokenize",
    "update_g_incremental",
    "zbar_matrix",
]
