"""Evaluation metrics, baselines, synthetic data and the experiment runner."""
from .baselines import BprMfRanker, Ranker, TopRanker, TrainORRanker, baseline_bpr_mf, baseline_top
from .experiment import MODELS, EvalReport, evaluate_rankers, run_experiment
from .metrics import average_precision, evaluate_scores, mean_average_precision, recall_at_k
from .synth import SynthData, generate_synthetic

__all__ = [
    "BprMfRanker", "EvalReport", "MODELS", "Ranker", "SynthData", "TopRanker", "TrainORRanker",
    "average_precision", "baseline_bpr_mf", "baseline_top", "evaluate_rankers", "evaluate_scores",
    "generate_synthetic", "mean_average_precision", "recall_at_k", "run_experiment",
]
