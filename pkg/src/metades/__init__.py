"""Dynamic ensemble selection with meta-learned classifier competence."""

from .base import LinearClassifier, Pool, bagging_pool, train_perceptron
from .baselines import BASELINES, run_baseline
from .bench import ExperimentConfig, RunResult, emit_tables, run_experiment
from .dataset import Dataset, Partition, generate_banana, generate_lithuanian, load_csv, protocol_split
from .descore import DesConfig, classify_query, combine, estimate_competences, evaluate, evaluate_modes
from .metaclassifier import NaiveBayesModel, fit_naive_bayes, train_meta
from .metafeatures import MetaDataset, MetaVector, build_meta_dataset, extract_meta_vector
from .stats import AccuracyTable, friedman_mean_ranks, kruskal_wallis, wilcoxon_signed_rank

__version__ = "0.1.0"
