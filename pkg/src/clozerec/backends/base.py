"""Common masked-LM backend surface: answer-word resolution, batched mask
scoring restricted to the binary answer space, and mask-token attention
extraction. Concrete backends supply tokenization and the forward pass."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import torch

from ..templates import AnswerSpace, PromptSequence
from .encoding import TokenizedInput, assemble_token_ids


class RegistrationError(Exception):
    """A virtual-token name collides with a pretrained vocabulary entry."""


class AnswerWordError(Exception):
    """An answer word does not map to exactly one vocabulary token."""


@dataclass(frozen=True)
class AnswerIds:
    pos_id: int
    neg_id: int


PROB_EPS = 1e-12  # keeps saturated sigmoid outputs strictly inside (0, 1)


class MaskedLMBackend:
    """Base class; subclasses set the special-token ids, ``max_positions``,
    ``virtual_registry`` and implement the abstract hooks below."""

    model_id: str = ""
    max_positions: int = 512
    cls_id: int
    sep_id: int
    mask_id: int
    pad_id: int
    virtual_registry: dict[str, int]

    # --- abstract hooks -------------------------------------------------
    def piece_ids(self, words: Sequence[str]) -> list[int]:
        """Subword-tokenize a span of whitespace words into vocab ids."""
        raise NotImplementedError

    def single_token_id(self, word: str) -> int:
        """Id of ``word`` if it is exactly one subword token, else raise
        AnswerWordError."""
        raise NotImplementedError

    def register_virtual_tokens(self, names: Iterable[str]) -> None:
        raise NotImplementedError

    def decode_tokens(self, ids: Sequence[int]) -> list[str]:
        raise NotImplementedError

    def logits(self, ids: torch.Tensor, attention_mask: torch.Tensor
               ) -> torch.Tensor:
        """MLM-head logits, shape (batch, seq, vocab). Differentiable."""
        raise NotImplementedError

    def attentions(self, ids: torch.Tensor, attention_mask: torch.Tensor
                   ) -> list[torch.Tensor]:
        """Per-layer attention weights, each (batch, heads, seq, seq)."""
        raise NotImplementedError

    @property
    def num_layers(self) -> int:
        raise NotImplementedError

    # --- shared behavior ------------------------------------------------
    def encode(self, prompt: PromptSequence,
               max_len: int | None = None) -> TokenizedInput:
        """Tokenize a rendered prompt under the backend's conventions."""
        if max_len is None:
            max_len = self.max_positions
        max_len = min(max_len, self.max_positions)

        def virtual_id(name: str) -> int:
            try:
                return self.virtual_registry[name]
            except KeyError:
                raise KeyError(
                    f"virtual token {name!r} is not registered; call "
                    f"register_virtual_tokens first") from None

        return assemble_token_ids(
            prompt, self.piece_ids, virtual_id,
            cls_id=self.cls_id, sep_id=self.sep_id, mask_id=self.mask_id,
            max_len=max_len)

    def answer_ids(self, answer_space: AnswerSpace) -> AnswerIds:
        """Resolve the two answer words; each must be a single token."""
        return AnswerIds(pos_id=self.single_token_id(answer_space.w_pos),
                         neg_id=self.single_token_id(answer_space.w_neg))

    def collate(self, inputs: Sequence[TokenizedInput]
                ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Pad a batch to a common length; returns (ids, attention, mask_pos)."""
        if not inputs:
            raise ValueError("empty batch")
        width = max(len(x) for x in inputs)
        ids = torch.full((len(inputs), width), self.pad_id, dtype=torch.long)
        attn = torch.zeros((len(inputs), width), dtype=torch.long)
        mask_pos = torch.empty(len(inputs), dtype=torch.long)
        for i, x in enumerate(inputs):
            n = len(x)
            ids[i, :n] = torch.tensor(x.ids, dtype=torch.long)
            attn[i, :n] = torch.tensor(x.attention_mask, dtype=torch.long)
            if not 0 <= x.mask_position < n:
                raise ValueError(
                    f"mask_position {x.mask_position} out of range for "
                    f"length-{n} input")
            if x.ids[x.mask_position] != self.mask_id:
                raise ValueError("mask_position does not point at the mask "
                                 "token")
            mask_pos[i] = x.mask_position
        return ids, attn, mask_pos

    def answer_logits(self, ids: torch.Tensor, attn: torch.Tensor,
                      mask_pos: torch.Tensor, answers: AnswerIds
                      ) -> tuple[torch.Tensor, torch.Tensor]:
        """Mask-position logits of the two answer words. Differentiable."""
        logits = self.logits(ids, attn)
        rows = logits[torch.arange(ids.shape[0]), mask_pos]
        return rows[:, answers.pos_id], rows[:, answers.neg_id]

    def p_pos(self, ids: torch.Tensor, attn: torch.Tensor,
              mask_pos: torch.Tensor, answers: AnswerIds,
              normalize: str = "pair") -> torch.Tensor:
        """Positive-answer probability at the mask. Differentiable.

        normalize="pair" renormalizes over the two answer words (so
        p_pos + p_neg = 1); normalize="vocab" softmaxes over the whole
        vocabulary and reports the raw positive-answer probability.
        """
        if normalize == "pair":
            pos, neg = self.answer_logits(ids, attn, mask_pos, answers)
            return torch.sigmoid(pos - neg)
        if normalize == "vocab":
            logits = self.logits(ids, attn)
            rows = logits[torch.arange(ids.shape[0]), mask_pos]
            probs = torch.softmax(rows, dim=-1)
            return probs[:, answers.pos_id]
        raise ValueError(f"unknown normalize mode {normalize!r}")

    def score_mask(self, inputs: Sequence[TokenizedInput], answers: AnswerIds,
                   batch_size: int = 32, normalize: str = "pair"
                   ) -> np.ndarray:
        """Inference-mode p_pos for a batch of encoded prompts, strictly in
        (0, 1): saturated values are nudged inside by 1e-12. The complement
        probability is 1 - p_pos by construction."""
        if not inputs:
            raise ValueError("empty batch")
        out = np.empty(len(inputs), dtype=np.float64)
        with torch.no_grad():
            for start in range(0, len(inputs), batch_size):
                chunk = inputs[start:start + batch_size]
                ids, attn, mask_pos = self.collate(chunk)
                p = self.p_pos(ids, attn, mask_pos, answers,
                               normalize=normalize)
                out[start:start + len(chunk)] = p.double().cpu().numpy()
        return np.clip(out, PROB_EPS, 1.0 - PROB_EPS)

    def attention_weights(self, encoded: TokenizedInput, layer: int
                          ) -> np.ndarray:
        """Mask-token attention rows at ``layer``: shape (heads, seq_len);
        each head row sums to 1."""
        if not 0 <= layer < self.num_layers:
            raise ValueError(
                f"layer {layer} out of range for a {self.num_layers}-layer "
                f"model")
        with torch.no_grad():
            ids, attn, mask_pos = self.collate([encoded])
            per_layer = self.attentions(ids, attn)
            rows = per_layer[layer][0, :, mask_pos[0], :]
        return rows.double().cpu().numpy()
