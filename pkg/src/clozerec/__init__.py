"""clozerec: news click prediction as cloze-style mask prediction.

A user's click history and a candidate title are wrapped by a prompt
template around a single mask slot; a masked language model scores the
template's positive answer word at the mask and that probability is the
ranking score. The package covers MIND-format corpus handling, the twelve
built-in templates (discrete / continuous / hybrid across four
perspectives), a trainable tiny masked LM plus a HuggingFace adapter,
training with validation-based selection, per-impression ranking metrics,
and multi-template score fusion.
"""

from .corpus import (CandidateText, ImpressionRecord, MissingNewsError,
                     NewsArticle, NewsCatalog, ParseError, Sample, UserText,
                     assemble_eval_set, assemble_training_set,
                     build_candidate_text, build_user_text,
                     downsample_training, parse_behaviors, parse_news,
                     read_samples_jsonl, split_validation,
                     write_samples_jsonl)
from .ensembling import (AlignmentError, EnsembleSpec, cross_type_ensemble,
                         ensemble_scores, fuse_scored)
from .evaluation import (MetricsReport, ScoredImpression, auc_score,
                         evaluate, mrr_score, ndcg_score)
from .scoring import score_impressions, score_samples, scored_impressions
from .templates import (AnswerSpace, PromptSequence, TemplateError,
                        TemplateSpec, builtin_templates, get_template,
                        load_templates, render, save_templates, verbalize)
from .training import Checkpoint, TrainConfig, TrainingDiverged, compute_loss, train

__version__ = "0.1.0"

__all__ = [
    "AlignmentError", "AnswerSpace", "CandidateText", "Checkpoint",
    "EnsembleSpec", "ImpressionRecord", "MetricsReport", "MissingNewsError",
    "NewsArticle", "NewsCatalog", "ParseError", "PromptSequence", "Sample",
    "ScoredImpression", "TemplateError", "TemplateSpec", "TrainConfig",
    "TrainingDiverged", "UserText", "assemble_eval_set",
    "assemble_training_set", "auc_score", "build_candidate_text",
    "build_user_text", "builtin_templates", "compute_loss",
    "cross_type_ensemble", "downsample_training", "ensemble_scores",
    "evaluate", "fuse_scored", "get_template", "load_templates",
    "mrr_score", "ndcg_score", "parse_behaviors", "parse_news",
    "read_samples_jsonl", "render", "save_templates", "score_impressions",
    "score_samples", "scored_impressions", "split_validation", "train",
    "verbalize", "write_samples_jsonl",
]
