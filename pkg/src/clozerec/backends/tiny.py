"""Self-contained tiny masked language model (pure PyTorch, CPU-friendly).

A BERT-shaped encoder small enough to train on a laptop: token + position
embeddings, a few post-layer-norm transformer blocks with explicit per-head
attention (so mask-token attention rows can be exported exactly), and an MLM
head tied to the input embedding matrix. The vocabulary is resizable so
virtual prompt tokens can be registered with trainable embeddings.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..corpus import NCLS_MARKER
from .base import AnswerWordError, MaskedLMBackend, RegistrationError
from .tokenizer import (CLS_TOKEN, MASK_TOKEN, PAD_TOKEN, SEP_TOKEN,
                        WordPieceVocab, basic_tokenize)


@dataclass(frozen=True)
class TinyModelConfig:
    hidden: int = 64
    layers: int = 2
    heads: int = 8
    ffn: int = 256
    max_positions: int = 128
    dropout: float = 0.0
    layer_norm_eps: float = 1e-12
    init_std: float = 0.02

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError("hidden size must be divisible by head count")


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, cfg: TinyModelConfig):
        super().__init__()
        self.heads = cfg.heads
        self.head_dim = cfg.hidden // cfg.heads
        self.qkv = nn.Linear(cfg.hidden, 3 * cfg.hidden)
        self.out = nn.Linear(cfg.hidden, cfg.hidden)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor, additive_mask: torch.Tensor
                ) -> tuple[torch.Tensor, torch.Tensor]:
        batch, length, hidden = x.shape
        qkv = self.qkv(x).view(batch, length, 3, self.heads, self.head_dim)
        q, k, v = (qkv[:, :, i].transpose(1, 2) for i in range(3))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        scores = scores + additive_mask
        attn = torch.softmax(scores, dim=-1)
        ctx = (self.dropout(attn) @ v).transpose(1, 2)
        ctx = ctx.reshape(batch, length, hidden)
        return self.out(ctx), attn


class TransformerBlock(nn.Module):
    def __init__(self, cfg: TinyModelConfig):
        super().__init__()
        self.attention = MultiHeadSelfAttention(cfg)
        self.attn_norm = nn.LayerNorm(cfg.hidden, eps=cfg.layer_norm_eps)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.hidden, cfg.ffn),
            nn.GELU(),
            nn.Linear(cfg.ffn, cfg.hidden),
        )
        self.ffn_norm = nn.LayerNorm(cfg.hidden, eps=cfg.layer_norm_eps)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, additive_mask):
        attn_out, attn = self.attention(x, additive_mask)
        x = self.attn_norm(x + self.dropout(attn_out))
        x = self.ffn_norm(x + self.dropout(self.ffn(x)))
        return x, attn


class MiniMaskedLM(nn.Module):
    """Encoder with an MLM head whose decoder is tied to the embeddings."""

    def __init__(self, vocab_size: int, cfg: TinyModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(vocab_size, cfg.hidden)
        self.pos_emb = nn.Embedding(cfg.max_positions, cfg.hidden)
        self.emb_norm = nn.LayerNorm(cfg.hidden, eps=cfg.layer_norm_eps)
        self.blocks = nn.ModuleList(
            TransformerBlock(cfg) for _ in range(cfg.layers))
        self.transform = nn.Linear(cfg.hidden, cfg.hidden)
        self.head_norm = nn.LayerNorm(cfg.hidden, eps=cfg.layer_norm_eps)
        self.output_bias = nn.Parameter(torch.zeros(vocab_size))
        self.apply(self._init_weights)

    def _init_weights(self, module) -> None:
        # small normal init keeps the tied-embedding logits near zero at
        # start, so training begins from p ~ 0.5 instead of saturation
        if isinstance(module, (nn.Linear, nn.Embedding)):
            module.weight.data.normal_(0.0, self.cfg.init_std)
            if isinstance(module, nn.Linear) and module.bias is not None:
                module.bias.data.zero_()
        elif isinstance(module, nn.LayerNorm):
            module.weight.data.fill_(1.0)
            module.bias.data.zero_()

    @property
    def vocab_size(self) -> int:
        return self.tok_emb.num_embeddings

    def get_input_embeddings(self) -> nn.Embedding:
        return self.tok_emb

    def forward(self, ids: torch.Tensor, attention_mask: torch.Tensor,
                collect_attention: bool = False
                ) -> tuple[torch.Tensor, list[torch.Tensor] | None]:
        batch, length = ids.shape
        positions = torch.arange(length, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)[None, :, :]
        x = self.emb_norm(x)
        # Padded keys get a huge negative bias so their weight is exactly 0.
        neg = torch.finfo(x.dtype).min
        additive = (1 - attention_mask[:, None, None, :]).to(x.dtype) * neg
        attns: list[torch.Tensor] = []
        for block in self.blocks:
            x, attn = block(x, additive)
            if collect_attention:
                attns.append(attn)
        hidden = self.head_norm(F.gelu(self.transform(x)))
        logits = hidden @ self.tok_emb.weight.t() + self.output_bias
        return logits, (attns if collect_attention else None)

    def grow_vocab(self, new_rows: torch.Tensor) -> None:
        """Append embedding rows (and zero output-bias entries) for newly
        registered tokens. Call before building the optimizer."""
        old = self.tok_emb.weight.data
        emb = nn.Embedding(old.shape[0] + new_rows.shape[0], old.shape[1])
        emb = emb.to(old.dtype)
        with torch.no_grad():
            emb.weight[:old.shape[0]] = old
            emb.weight[old.shape[0]:] = new_rows.to(old.dtype)
        self.tok_emb = emb
        bias = torch.zeros(emb.num_embeddings, dtype=self.output_bias.dtype)
        with torch.no_grad():
            bias[:old.shape[0]] = self.output_bias.data
        self.output_bias = nn.Parameter(bias)


class TinyBackend(MaskedLMBackend):
    """Masked-LM backend over MiniMaskedLM with a corpus-built vocabulary."""

    def __init__(self, vocab: WordPieceVocab,
                 config: TinyModelConfig | None = None, seed: int = 0,
                 model_id: str = "tiny"):
        self.vocab = vocab
        self.config = config or TinyModelConfig()
        self.seed = seed
        self.model_id = model_id
        self.max_positions = self.config.max_positions
        self.cls_id = vocab.id_of(CLS_TOKEN)
        self.sep_id = vocab.id_of(SEP_TOKEN)
        self.mask_id = vocab.id_of(MASK_TOKEN)
        self.pad_id = vocab.id_of(PAD_TOKEN)
        self.pretrained_size = len(vocab)
        self.virtual_registry: dict[str, int] = {}
        torch.manual_seed(seed)
        self.model = MiniMaskedLM(len(vocab), self.config)
        self._reg_gen = torch.Generator().manual_seed(seed + 1)

    # --- tokenization hooks ----------------------------------------------
    def piece_ids(self, words: Sequence[str]) -> list[int]:
        return self.vocab.encode_words(words)

    def single_token_id(self, word: str) -> int:
        basics = basic_tokenize(word)
        pieces = [p for b in basics for p in self.vocab.wordpiece(b)]
        if len(pieces) != 1 or pieces[0] == "[UNK]":
            raise AnswerWordError(
                f"answer word {word!r} maps to {pieces}; pick a word that is "
                f"a single vocabulary token (e.g. a frequent lowercase word)")
        return self.vocab.id_of(pieces[0])

    def decode_tokens(self, ids: Sequence[int]) -> list[str]:
        return [self.vocab.token_of(int(i)) for i in ids]

    # --- virtual tokens ----------------------------------------------------
    def register_virtual_tokens(self, names: Iterable[str]) -> None:
        """Add vocabulary entries with trainable embeddings for new virtual
        tokens. Re-registering an already-registered name is a no-op; a name
        that exists as a pretrained token is an error."""
        fresh: list[str] = []
        for name in names:
            if name in self.virtual_registry:
                continue
            if name in self.vocab:
                raise RegistrationError(
                    f"{name!r} collides with a pretrained vocabulary token")
            if name not in fresh:
                fresh.append(name)
        if not fresh:
            return
        pretrained = self.model.tok_emb.weight.data[:self.pretrained_size]
        std = float(pretrained.std())
        rows = torch.empty(len(fresh), self.config.hidden)
        rows.normal_(0.0, std, generator=self._reg_gen)
        self.model.grow_vocab(rows)
        for name in fresh:
            self.virtual_registry[name] = self.vocab.add(name)

    @property
    def first_virtual_id(self) -> int:
        return self.pretrained_size

    # --- forward hooks -----------------------------------------------------
    def logits(self, ids, attention_mask):
        out, _ = self.model(ids, attention_mask)
        return out

    def attentions(self, ids, attention_mask):
        _, attns = self.model(ids, attention_mask, collect_attention=True)
        return attns

    @property
    def num_layers(self) -> int:
        return self.config.layers

    @property
    def num_heads(self) -> int:
        return self.config.heads

    # --- persistence ---------------------------------------------------------
    def save(self, directory) -> None:
        os.makedirs(directory, exist_ok=True)
        meta = {
            "type": "tiny",
            "model_id": self.model_id,
            "seed": self.seed,
            "config": asdict(self.config),
            "tokens": self.vocab.tokens,
            "pretrained_size": self.pretrained_size,
            "virtual_registry": self.virtual_registry,
        }
        with open(os.path.join(directory, "backend.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(meta, fh, sort_keys=True)
        torch.save(self.model.state_dict(),
                   os.path.join(directory, "weights.pt"))

    @classmethod
    def load(cls, directory) -> "TinyBackend":
        with open(os.path.join(directory, "backend.json"),
                  encoding="utf-8") as fh:
            meta = json.load(fh)
        vocab = WordPieceVocab(meta["tokens"])
        cfg = TinyModelConfig(**meta["config"])
        backend = cls.__new__(cls)
        backend.vocab = vocab
        backend.config = cfg
        backend.seed = meta["seed"]
        backend.model_id = meta["model_id"]
        backend.max_positions = cfg.max_positions
        backend.cls_id = vocab.id_of(CLS_TOKEN)
        backend.sep_id = vocab.id_of(SEP_TOKEN)
        backend.mask_id = vocab.id_of(MASK_TOKEN)
        backend.pad_id = vocab.id_of(PAD_TOKEN)
        backend.pretrained_size = meta["pretrained_size"]
        backend.virtual_registry = dict(meta["virtual_registry"])
        backend.model = MiniMaskedLM(len(vocab), cfg)
        state = torch.load(os.path.join(directory, "weights.pt"),
                           weights_only=True)
        backend.model.load_state_dict(state)
        backend._reg_gen = torch.Generator().manual_seed(meta["seed"] + 1)
        return backend


def vocab_from_samples(samples, templates=()) -> WordPieceVocab:
    """Build the tiny backend's vocabulary from assembled samples plus the
    template literals and answer words (answer words must stay single
    tokens)."""
    texts: list[str] = []
    for sample in samples:
        for span in sample.user_text.title_spans:
            texts.append(" ".join(span))
        texts.append(sample.candidate_text.rendered)
    extra: list[str] = []
    for spec in templates:
        for seg in spec.segments:
            text = getattr(seg, "text", None)
            if text:
                texts.append(text)
        extra.extend([spec.answer_space.w_pos, spec.answer_space.w_neg])
    return WordPieceVocab.build(texts, extra_tokens=extra)


def build_tiny_backend(samples, templates=(),
                       config: TinyModelConfig | None = None,
                       seed: int = 0) -> TinyBackend:
    """Vocabulary from data, model from the seed, [NCLS] plus each template's
    virtual tokens registered."""
    vocab = vocab_from_samples(samples, templates)
    backend = TinyBackend(vocab, config=config, seed=seed)
    names = [NCLS_MARKER]
    for spec in templates:
        names.extend(spec.virtual_token_names)
    backend.register_virtual_tokens(names)
    return backend
