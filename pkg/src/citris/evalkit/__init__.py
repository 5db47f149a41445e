from .correlation import (CorrelationReport, correlation_report,
                          r2_categorical, r2_circular, r2_continuous,
                          spearman_circular, spearman_continuous,
                          summaries_from_matrix)
from .pipeline import (baseline_assignment, evaluate_latents, evaluate_model,
                       minimal_variable_check)
from .probes import LatentProbe, probe_predictions, train_probes, worker_count
from .triplet import TripletReport, triplet_eval

__all__ = [
    "CorrelationReport", "LatentProbe", "TripletReport",
    "baseline_assignment", "correlation_report", "evaluate_latents",
    "evaluate_model", "minimal_variable_check", "probe_predictions",
    "r2_categorical", "r2_circular", "r2_continuous", "spearman_circular",
    "spearman_continuous", "summaries_from_matrix", "train_probes",
    "triplet_eval", "worker_count",
]
