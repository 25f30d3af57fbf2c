import json
import math

import numpy as np
import pytest
import torch

from clozerec.backends.tiny import TinyBackend, TinyModelConfig
from clozerec.backends.tokenizer import WordPieceVocab
from clozerec.corpus import NCLS_MARKER
from clozerec.scoring import score_impressions
from clozerec.templates import get_template
from clozerec.training import (Checkpoint, LOSS_EPS, TrainConfig,
                               TrainingDiverged, compute_loss, train)
from clozerec.evaluation import evaluate


def oracle_loss(ps, ys):
    """Hand-coded mean cross entropy with the same epsilon floor."""
    total = 0.0
    for p, y in zip(ps, ys):
        total += y * math.log(max(p, LOSS_EPS)) \
            + (1 - y) * math.log(max(1.0 - p, LOSS_EPS))
    return -total / len(ps)


class TestComputeLoss:
    def test_half_probability_gives_ln2(self):
        assert float(compute_loss([0.5], [1])) == pytest.approx(
            math.log(2), abs=1e-12)

    def test_hand_evaluated_pair(self):
        value = float(compute_loss([0.9, 0.1], [1, 0]))
        assert value == pytest.approx(-(math.log(0.9) + math.log(0.9)) / 2,
                                      abs=1e-12)
        assert value == pytest.approx(0.105361, abs=1e-6)

    def test_confident_predictions_bounded_by_floor(self):
        value = float(compute_loss([1.0, 0.0], [1, 0]))
        assert 0.0 <= value <= -math.log(LOSS_EPS)
        assert value < 1e-6

    def test_matches_oracle_on_random_batches(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(1, 64))
            ps = rng.uniform(1e-9, 1 - 1e-9, size=n)
            ys = rng.integers(0, 2, size=n)
            ours = float(compute_loss(ps, ys))
            assert ours == pytest.approx(oracle_loss(ps, ys), abs=1e-9)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(7)
        ps = rng.uniform(0.01, 0.99, size=32)
        ys = rng.integers(0, 2, size=32)
        base = float(compute_loss(ps, ys))
        perm = rng.permutation(32)
        assert float(compute_loss(ps[perm], ys[perm])) == pytest.approx(
            base, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            compute_loss([0.5, 0.5], [1])

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            compute_loss([], [])

    def test_bad_labels(self):
        with pytest.raises(ValueError, match="labels"):
            compute_loss([0.5], [2])

    def test_differentiable(self):
        p = torch.tensor([0.3, 0.8], requires_grad=True)
        loss = compute_loss(p, torch.tensor([0.0, 1.0]))
        loss.backward()
        assert p.grad is not None and torch.isfinite(p.grad).all()


class TestOptimizerContract:
    def test_zero_lr_step_is_identity(self):
        vocab = WordPieceVocab.build(["a b c d e"])
        backend = TinyBackend(vocab, TinyModelConfig(hidden=16, layers=1,
                                                     heads=2, ffn=32,
                                                     max_positions=16))
        before = {k: v.clone() for k, v in backend.model.state_dict().items()}
        opt = torch.optim.AdamW(backend.model.parameters(), lr=0.0,
                                weight_decay=0.01)
        ids = torch.tensor([[backend.cls_id, backend.mask_id,
                             backend.sep_id]])
        attn = torch.ones_like(ids)
        logits = backend.logits(ids, attn)
        loss = logits.sum()
        loss.backward()
        opt.step()
        after = backend.model.state_dict()
        for key in before:
            assert torch.equal(before[key], after[key]), key


def _train_setup(small_samples, epochs=1, seed=0, **kwargs):
    train_samples, eval_samples = small_samples
    template = get_template("discrete-utility")
    config = TrainConfig(learning_rate=1e-3, batch_size=16,
                         micro_batch_size=8, epochs=epochs, rng_seed=seed,
                         template_id=template.template_id, **kwargs)
    return train_samples, eval_samples, template, config


def _fresh_backend(samples, seed=0):
    from clozerec.backends.tiny import build_tiny_backend
    from clozerec.templates import builtin_templates
    return build_tiny_backend(samples, builtin_templates(),
                              config=TinyModelConfig(hidden=32, layers=2,
                                                     heads=2, ffn=64,
                                                     max_positions=96),
                              seed=seed)


class TestTrainLoop:
    def test_seed_reproduces_loss_trace(self, small_samples):
        traces = []
        for _ in range(2):
            train_samples, eval_samples, template, config = _train_setup(
                small_samples, epochs=1, seed=5)
            backend = _fresh_backend(train_samples + eval_samples)
            checkpoint = train(config, train_samples, eval_samples, template,
                               backend)
            traces.append([rec["loss"] for rec in checkpoint.history
                           if rec["kind"] == "step"])
        assert traces[0] == traces[1]
        assert len(traces[0]) > 0

    def test_returns_best_by_validation_auc(self, small_samples):
        train_samples, eval_samples, template, config = _train_setup(
            small_samples, epochs=2)
        backend = _fresh_backend(train_samples + eval_samples)
        checkpoint = train(config, train_samples, eval_samples, template,
                           backend)
        epochs = [rec for rec in checkpoint.history if rec["kind"] == "epoch"]
        best = max(epochs, key=lambda rec: rec["valid_auc"])
        assert checkpoint.epoch == best["epoch"]
        assert checkpoint.validation.auc == best["valid_auc"]

    def test_log_file_written(self, small_samples, tmp_path):
        train_samples, eval_samples, template, config = _train_setup(
            small_samples)
        backend = _fresh_backend(train_samples + eval_samples)
        train(config, train_samples, eval_samples, template, backend,
              log_dir=tmp_path)
        lines = (tmp_path / "train_log.jsonl").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        kinds = {rec["kind"] for rec in records}
        assert "step" in kinds and "epoch" in kinds
        step = next(rec for rec in records if rec["kind"] == "step")
        assert set(step) >= {"step", "loss", "lr"}

    def test_freeze_backbone_touches_only_virtual_rows(self, small_samples):
        train_samples, eval_samples, template, config = _train_setup(
            small_samples, freeze_backbone=True)
        backend = _fresh_backend(train_samples + eval_samples)
        emb_before = backend.model.tok_emb.weight.detach().clone()
        ffn_before = backend.model.blocks[0].ffn[0].weight.detach().clone()
        train(config, train_samples, eval_samples, template, backend)
        emb_after = backend.model.tok_emb.weight.detach()
        boundary = backend.first_virtual_id
        assert torch.equal(emb_before[:boundary], emb_after[:boundary])
        assert not torch.equal(emb_before[boundary:], emb_after[boundary:])
        assert torch.equal(ffn_before,
                           backend.model.blocks[0].ffn[0].weight.detach())

    def test_empty_train_set_rejected(self, small_samples):
        train_samples, eval_samples, template, config = _train_setup(
            small_samples)
        backend = _fresh_backend(train_samples + eval_samples)
        with pytest.raises(ValueError, match="empty"):
            train(config, [], eval_samples, template, backend)

    def test_divergence_reports_step_and_batch(self, small_samples,
                                               monkeypatch):
        train_samples, eval_samples, template, config = _train_setup(
            small_samples)
        backend = _fresh_backend(train_samples + eval_samples)

        real_p_pos = backend.p_pos

        def poisoned(ids, attn, mask_pos, answers, normalize="pair"):
            out = real_p_pos(ids, attn, mask_pos, answers,
                             normalize=normalize)
            return out * float("nan")

        monkeypatch.setattr(backend, "p_pos", poisoned)
        with pytest.raises(TrainingDiverged) as err:
            train(config, train_samples, eval_samples, template, backend)
        assert err.value.step == 0
        assert len(err.value.impression_ids) > 0

    def test_checkpoint_round_trip(self, small_samples, tmp_path):
        train_samples, eval_samples, template, config = _train_setup(
            small_samples)
        backend = _fresh_backend(train_samples + eval_samples)
        checkpoint = train(config, train_samples, eval_samples, template,
                           backend)
        scored = score_impressions(checkpoint.backend, checkpoint.template,
                                   eval_samples[:20])
        checkpoint.save(tmp_path / "ckpt")

        restored = Checkpoint.load(tmp_path / "ckpt")
        assert restored.template == checkpoint.template
        assert restored.epoch == checkpoint.epoch
        scored2 = score_impressions(restored.backend, restored.template,
                                    eval_samples[:20])
        for a, b in zip(scored, scored2):
            assert a.entries == b.entries
        assert restored.validation.auc == pytest.approx(
            checkpoint.validation.auc)


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.learning_rate == 2e-5
        assert config.batch_size == 128
        assert config.neg_ratio == 4
        assert config.epochs == 3

    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
