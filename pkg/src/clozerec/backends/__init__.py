"""Masked-LM backends: a self-contained tiny model plus a HuggingFace
adapter, behind one scoring/encoding surface."""

from __future__ import annotations

import os

from .base import (AnswerIds, AnswerWordError, MaskedLMBackend,
                   RegistrationError)
from .encoding import EncodingOverflowError, TokenizedInput, TruncationReport
from .tiny import (MiniMaskedLM, TinyBackend, TinyModelConfig,
                   build_tiny_backend, vocab_from_samples)
from .tokenizer import WordPieceVocab, basic_tokenize

MODEL_CACHE_ENV = "CLOZEREC_MODEL_CACHE"


def resolve_model_path(model_id: str) -> str:
    """Resolve a model/checkpoint id to a path, honoring the cache env var."""
    if os.path.isdir(model_id):
        return model_id
    cache = os.environ.get(MODEL_CACHE_ENV)
    if cache:
        candidate = os.path.join(cache, model_id)
        if os.path.isdir(candidate):
            return candidate
    return model_id


def load_backend(model_id: str, seed: int = 0) -> MaskedLMBackend:
    """Load a saved backend: a tiny-model checkpoint directory (holding
    ``backend.json``) or anything transformers can resolve."""
    path = resolve_model_path(model_id)
    if os.path.isfile(os.path.join(path, "backend.json")):
        return TinyBackend.load(path)
    from .hf import HuggingFaceBackend
    return HuggingFaceBackend(path, seed=seed)


__all__ = [
    "AnswerIds", "AnswerWordError", "EncodingOverflowError",
    "MaskedLMBackend", "MiniMaskedLM", "MODEL_CACHE_ENV",
    "RegistrationError", "TinyBackend", "TinyModelConfig", "TokenizedInput",
    "TruncationReport", "WordPieceVocab", "basic_tokenize",
    "build_tiny_backend", "load_backend", "resolve_model_path",
    "vocab_from_samples",
]
