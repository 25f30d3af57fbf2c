"""Fine-tuning on assembled samples: cross-entropy over the positive-answer
probability, AdamW with decoupled weight decay, gradient accumulation up to
the effective batch size, and per-epoch validation-AUC model selection."""

from __future__ import annotations

import copy
import json
import math
import os
import random
from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch

from .backends.base import MaskedLMBackend
from .corpus import NCLS_MARKER, Sample
from .evaluation import MetricsReport, evaluate
from .scoring import encode_samples, scored_impressions
from .templates import (TemplateSpec, template_from_config,
                        template_to_config)

LOSS_EPS = 1e-7

MLM_MASK_FRACTION = 0.15


class TrainingDiverged(Exception):
    """The loss went non-finite; carries the step and offending batch."""

    def __init__(self, step: int, impression_ids: list[str]):
        self.step = step
        self.impression_ids = impression_ids
        super().__init__(
            f"non-finite loss at step {step} "
            f"(impressions: {', '.join(impression_ids[:8])})")


@dataclass
class TrainConfig:
    learning_rate: float = 2e-5
    weight_decay: float = 0.01
    batch_size: int = 128           # effective, via gradient accumulation
    micro_batch_size: int | None = None
    epochs: int = 3
    rng_seed: int = 0
    neg_ratio: int = 4
    max_len: int | None = None
    template_id: str = ""
    few_shot_fraction: float | None = None
    freeze_backbone: bool = False
    early_stop_drops: int = 2       # stop after this many consecutive AUC drops
    normalize: str = "pair"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.micro_batch_size is None:
            self.micro_batch_size = min(32, self.batch_size)

    def to_dict(self) -> dict:
        return asdict(self)


def compute_loss(p_pos, labels) -> torch.Tensor:
    """Mean binary cross entropy over positive-answer probabilities:
    -(1/N) sum[y log p + (1-y) log(1-p)], with a 1e-7 floor inside the logs.

    Accepts tensors or array-likes; differentiable when ``p_pos`` carries
    gradients. Non-tensor inputs are evaluated in double precision.
    """
    if isinstance(p_pos, torch.Tensor):
        p = p_pos
    else:
        p = torch.as_tensor(p_pos, dtype=torch.float64)
    y = torch.as_tensor(labels)
    if p.shape != y.shape:
        raise ValueError(
            f"length mismatch: {tuple(p.shape)} probabilities vs "
            f"{tuple(y.shape)} labels")
    if p.numel() == 0:
        raise ValueError("empty batch")
    if not bool(((y == 0) | (y == 1)).all()):
        raise ValueError("labels must be 0 or 1")
    y = y.to(p.dtype)
    log_p = torch.log(p.clamp(min=LOSS_EPS))
    log_not_p = torch.log((1.0 - p).clamp(min=LOSS_EPS))
    return -(y * log_p + (1.0 - y) * log_not_p).mean()


@dataclass
class Checkpoint:
    backend: MaskedLMBackend
    template: TemplateSpec
    epoch: int
    validation: MetricsReport
    train_config: TrainConfig | None = None
    history: list = field(default_factory=list)

    def save(self, directory) -> str:
        os.makedirs(directory, exist_ok=True)
        self.backend.save(os.path.join(directory, "model"))
        sidecar = {
            "template": template_to_config(self.template),
            "epoch": self.epoch,
            "validation": self.validation.to_dict(),
            "train_config": (self.train_config.to_dict()
                             if self.train_config else None),
        }
        with open(os.path.join(directory, "checkpoint.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(sidecar, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return directory

    @classmethod
    def load(cls, directory) -> "Checkpoint":
        from .backends import load_backend
        with open(os.path.join(directory, "checkpoint.json"),
                  encoding="utf-8") as fh:
            sidecar = json.load(fh)
        backend = load_backend(os.path.join(directory, "model"))
        validation = MetricsReport(
            auc=sidecar["validation"].get("auc"),
            mrr=sidecar["validation"].get("mrr"),
            ndcg5=sidecar["validation"].get("ndcg5"),
            ndcg10=sidecar["validation"].get("ndcg10"),
            n_impressions=sidecar["validation"].get("n_impressions", 0),
            skipped=sidecar["validation"].get("skipped", {}))
        return cls(backend=backend,
                   template=template_from_config(sidecar["template"]),
                   epoch=sidecar["epoch"], validation=validation)


def _freeze_backbone(backend: MaskedLMBackend):
    """Leave only the virtual-token embedding rows trainable; returns a
    callback restoring the pretrained rows, to run after every optimizer
    step (AdamW's decoupled weight decay moves even zero-gradient rows).
    The row-masking hook stays attached, so a frozen backend should not be
    reused for a later full fine-tune."""
    embedding = backend.model.get_input_embeddings()
    first_virtual = backend.first_virtual_id
    for param in backend.model.parameters():
        param.requires_grad_(False)
    embedding.weight.requires_grad_(True)

    def zero_pretrained_rows(grad):
        grad = grad.clone()
        grad[:first_virtual] = 0
        return grad

    embedding.weight.register_hook(zero_pretrained_rows)
    frozen_rows = embedding.weight[:first_virtual].detach().clone()

    def restore_pretrained_rows():
        with torch.no_grad():
            embedding.weight[:first_virtual] = frozen_rows

    return restore_pretrained_rows


def _validation_auc(report: MetricsReport) -> float:
    return report.auc if report.auc is not None else float("-inf")


def pretrain_mlm(backend: MaskedLMBackend, encoded_inputs: Sequence,
                 epochs: int = 2, learning_rate: float = 1e-3,
                 weight_decay: float = 0.01, batch_size: int = 16,
                 rng_seed: int = 0,
                 mask_fraction: float = MLM_MASK_FRACTION) -> list[float]:
    """Masked-word pretraining on already-encoded sequences: a random
    fraction of non-special positions is replaced by the mask token and
    predicted with full-vocabulary cross entropy.

    Prompt-based scoring presupposes a pretrained masked LM; for the bundled
    from-scratch tiny model a couple of epochs over the corpus builds the
    token-matching behavior that fine-tuning then exploits. Returns the
    per-step loss curve.
    """
    import torch.nn.functional as F

    if not encoded_inputs:
        raise ValueError("nothing to pretrain on")
    gen = torch.Generator().manual_seed(rng_seed)
    optimizer = torch.optim.AdamW(backend.model.parameters(),
                                  lr=learning_rate,
                                  weight_decay=weight_decay)
    special = torch.tensor([backend.cls_id, backend.sep_id, backend.pad_id,
                            backend.mask_id])
    losses: list[float] = []
    backend.model.train()
    for epoch in range(epochs):
        order = list(range(len(encoded_inputs)))
        random.Random(rng_seed + 7_919 * (epoch + 1)).shuffle(order)
        for start in range(0, len(order), batch_size):
            batch = [encoded_inputs[i] for i in order[start:start + batch_size]]
            ids, attn, _ = backend.collate(batch)
            maskable = (attn == 1) & ~torch.isin(ids, special)
            chosen = maskable & (torch.rand(ids.shape, generator=gen)
                                 < mask_fraction)
            if not bool(chosen.any()):
                continue
            corrupted = ids.clone()
            corrupted[chosen] = backend.mask_id
            logits = backend.logits(corrupted, attn)
            loss = F.cross_entropy(logits[chosen], ids[chosen])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
    backend.model.eval()
    return losses


def train(config: TrainConfig, train_samples: Sequence[Sample],
          valid_samples: Sequence[Sample], template: TemplateSpec,
          backend: MaskedLMBackend, log_dir=None) -> Checkpoint:
    """Run epochs of shuffled mini-batches and return the checkpoint with the
    highest validation AUC. The training curve (per-step loss, per-epoch
    validation metrics) is kept on the checkpoint and optionally logged as
    JSON lines."""
    if not train_samples:
        raise ValueError("empty training set")
    if not valid_samples:
        raise ValueError("empty validation set")

    backend.register_virtual_tokens(
        [NCLS_MARKER] + template.virtual_token_names)
    answers = backend.answer_ids(template.answer_space)
    restore_frozen = None
    if config.freeze_backbone:
        restore_frozen = _freeze_backbone(backend)

    torch.manual_seed(config.rng_seed)
    encoded_train = encode_samples(backend, template, train_samples,
                                   max_len=config.max_len)
    labels = torch.tensor([s.label for s in train_samples],
                          dtype=torch.float32)
    encoded_valid = encode_samples(backend, template, valid_samples,
                                   max_len=config.max_len)

    trainable = [p for p in backend.model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(trainable, lr=config.learning_rate,
                                  weight_decay=config.weight_decay)

    log_fh = None
    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        log_fh = open(os.path.join(log_dir, "train_log.jsonl"), "w",
                      encoding="utf-8")

    history: list[dict] = []

    def log(record: dict) -> None:
        history.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record, sort_keys=True))
            log_fh.write("\n")

    best_state = None
    best_auc = float("-inf")
    best_epoch = -1
    best_report = None
    prev_auc = None
    consecutive_drops = 0
    step = 0

    try:
        for epoch in range(config.epochs):
            backend.model.train()
            order = list(range(len(train_samples)))
            random.Random(config.rng_seed + 1_000_003 * (epoch + 1)).shuffle(order)
            for start in range(0, len(order), config.batch_size):
                batch_idx = order[start:start + config.batch_size]
                optimizer.zero_grad()
                batch_loss = 0.0
                for micro_start in range(0, len(batch_idx),
                                         config.micro_batch_size):
                    micro = batch_idx[micro_start:
                                      micro_start + config.micro_batch_size]
                    ids, attn, mask_pos = backend.collate(
                        [encoded_train[i] for i in micro])
                    p = backend.p_pos(ids, attn, mask_pos, answers,
                                      normalize=config.normalize)
                    loss = compute_loss(p, labels[micro])
                    scaled = loss * (len(micro) / len(batch_idx))
                    scaled.backward()
                    batch_loss += float(scaled.detach())
                if not math.isfinite(batch_loss):
                    raise TrainingDiverged(
                        step, [train_samples[i].impression_id
                               for i in batch_idx])
                optimizer.step()
                if restore_frozen is not None:
                    restore_frozen()
                step += 1
                log({"kind": "step", "step": step, "epoch": epoch,
                     "loss": batch_loss, "lr": config.learning_rate})

            backend.model.eval()
            scores = backend.score_mask(encoded_valid, answers,
                                        normalize=config.normalize)
            report = evaluate(scored_impressions(valid_samples, scores),
                              keep_per_impression=False)
            auc = _validation_auc(report)
            log({"kind": "epoch", "epoch": epoch, "valid_auc": report.auc,
                 "valid_mrr": report.mrr, "valid_ndcg5": report.ndcg5,
                 "valid_ndcg10": report.ndcg10})
            if auc > best_auc:
                best_auc = auc
                best_epoch = epoch
                best_report = report
                best_state = copy.deepcopy(backend.model.state_dict())
            if prev_auc is not None and auc < prev_auc:
                consecutive_drops += 1
            else:
                consecutive_drops = 0
            prev_auc = auc
            if (config.early_stop_drops
                    and consecutive_drops >= config.early_stop_drops):
                log({"kind": "early_stop", "epoch": epoch})
                break
    finally:
        if log_fh is not None:
            log_fh.close()

    if best_state is not None:
        backend.model.load_state_dict(best_state)
    backend.model.eval()
    return Checkpoint(backend=backend, template=template, epoch=best_epoch,
                      validation=best_report, train_config=config,
                      history=history)
