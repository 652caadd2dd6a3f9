"""Disaster information-need finder: in-region vs out-region query log-odds."""

__version__ = "0.1.0"

from .errors import MalformedInputError, NeedFinderError, TrainingDivergedError, UntrainableError
from .region import Box, Polygon, RegionSpec, load_region
from .scenario import (GroundTruth, MediaSpike, NeedProfile, RegionMarker, ScenarioConfig,
                       bundled_config, generate_scenario, ground_truth, load_config, write_scenario)
from .prepare import (DailyCountRow, RegionFlag, aggregate_daily, assign_region_flag, flag_events,
                      k_anonymize, normalize_query, prepare_counts)
from .learn import (Hyperparams, ModelWeights, NeedReport, StopwordSet, TrainingCorpus, build_corpus,
                    derive_stopwords, score_day, train, undersample)
from .evaluate import evaluate_recovery, pv_score, raw_count_ranking

__all__ = [
    "MalformedInputError", "NeedFinderError", "TrainingDivergedError", "UntrainableError",
    "Box", "Polygon", "RegionSpec", "load_region",
    "GroundTruth", "MediaSpike", "NeedProfile", "RegionMarker", "ScenarioConfig",
    "bundled_config", "generate_scenario", "ground_truth", "load_config", "write_scenario",
    "DailyCountRow", "RegionFlag", "aggregate_daily", "assign_region_flag", "flag_events",
    "k_anonymize", "normalize_query", "prepare_counts",
    "Hyperparams", "ModelWeights", "NeedReport", "StopwordSet", "TrainingCorpus", "build_corpus",
    "derive_stopwords", "score_day", "train", "undersample",
    "evaluate_recovery", "pv_score", "raw_count_ranking",
]
