"""Adapter for HuggingFace masked LMs (BERT/RoBERTa/DeBERTa family).

The model id is pluggable: a hub name or a local checkpoint directory (the
latter is the only option in offline environments). Requires the optional
``transformers`` dependency; nothing here is imported by the rest of the
package unless this backend is requested.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import torch

from .base import AnswerWordError, MaskedLMBackend, RegistrationError

_REGISTRY_FILE = "virtual_registry.json"


def _require_transformers():
    try:
        import transformers
        return transformers
    except ImportError as exc:
        raise ImportError(
            "the HuggingFace backend needs the optional 'transformers' "
            "dependency (pip install clozerec[hf])") from exc


class HuggingFaceBackend(MaskedLMBackend):
    def __init__(self, model_id: str, seed: int = 0,
                 cache_dir: str | None = None):
        transformers = _require_transformers()
        self.model_id = model_id
        self.seed = seed
        self.tokenizer = transformers.AutoTokenizer.from_pretrained(
            model_id, cache_dir=cache_dir)
        self.model = transformers.AutoModelForMaskedLM.from_pretrained(
            model_id, cache_dir=cache_dir)
        self.model.eval()
        tok = self.tokenizer
        for attr in ("cls_token_id", "sep_token_id", "mask_token_id",
                     "pad_token_id"):
            if getattr(tok, attr, None) is None:
                raise ValueError(f"tokenizer for {model_id!r} lacks {attr}")
        self.cls_id = tok.cls_token_id
        self.sep_id = tok.sep_token_id
        self.mask_id = tok.mask_token_id
        self.pad_id = tok.pad_token_id
        self.max_positions = int(getattr(
            self.model.config, "max_position_embeddings", 512))
        self.pretrained_size = len(tok)
        self.virtual_registry: dict[str, int] = {}
        self._reg_gen = torch.Generator().manual_seed(seed + 1)
        registry_path = os.path.join(model_id, _REGISTRY_FILE)
        if os.path.isfile(registry_path):
            with open(registry_path, encoding="utf-8") as fh:
                saved = json.load(fh)
            self.virtual_registry = {k: int(v) for k, v in saved.items()}
            self.pretrained_size = len(tok) - len(self.virtual_registry)

    def piece_ids(self, words: Sequence[str]) -> list[int]:
        text = " ".join(words)
        if not text:
            return []
        return self.tokenizer(text, add_special_tokens=False)["input_ids"]

    def single_token_id(self, word: str) -> int:
        # Try the bare word first, then the space-prefixed in-sentence form
        # used by byte-level BPE tokenizers (RoBERTa-style).
        for candidate in (word, " " + word):
            ids = self.tokenizer(candidate,
                                 add_special_tokens=False)["input_ids"]
            if len(ids) == 1:
                return ids[0]
        pieces = self.tokenizer.tokenize(word)
        raise AnswerWordError(
            f"answer word {word!r} maps to {pieces}; pick a word the "
            f"tokenizer keeps as one piece")

    def register_virtual_tokens(self, names: Iterable[str]) -> None:
        fresh = []
        for name in names:
            if name in self.virtual_registry:
                continue
            if self.tokenizer.convert_tokens_to_ids(name) not in (
                    None, self.tokenizer.unk_token_id):
                raise RegistrationError(
                    f"{name!r} collides with an existing vocabulary token")
            if name not in fresh:
                fresh.append(name)
        if not fresh:
            return
        self.tokenizer.add_tokens(fresh, special_tokens=True)
        embeddings = self.model.get_input_embeddings()
        std = float(embeddings.weight.data[:self.pretrained_size].std())
        self.model.resize_token_embeddings(len(self.tokenizer))
        embeddings = self.model.get_input_embeddings()
        with torch.no_grad():
            for name in fresh:
                token_id = self.tokenizer.convert_tokens_to_ids(name)
                row = torch.empty(embeddings.weight.shape[1])
                row.normal_(0.0, std, generator=self._reg_gen)
                embeddings.weight[token_id] = row
                self.virtual_registry[name] = token_id

    def decode_tokens(self, ids: Sequence[int]) -> list[str]:
        return self.tokenizer.convert_ids_to_tokens(list(ids))

    def logits(self, ids, attention_mask):
        return self.model(input_ids=ids, attention_mask=attention_mask).logits

    def attentions(self, ids, attention_mask):
        out = self.model(input_ids=ids, attention_mask=attention_mask,
                         output_attentions=True)
        return list(out.attentions)

    @property
    def num_layers(self) -> int:
        return int(self.model.config.num_hidden_layers)

    @property
    def num_heads(self) -> int:
        return int(self.model.config.num_attention_heads)

    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        self.model.save_pretrained(directory)
        self.tokenizer.save_pretrained(directory)
        with open(os.path.join(directory, _REGISTRY_FILE), "w",
                  encoding="utf-8") as fh:
            json.dump(self.virtual_registry, fh, sort_keys=True)

    @classmethod
    def load(cls, directory, seed: int = 0) -> "HuggingFaceBackend":
        return cls(directory, seed=seed)
