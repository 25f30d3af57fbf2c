"""Experiment runner: prepare data, train per template, evaluate, sweep the
virtual-token count, run few-shot harnesses, ensemble checkpoints and export
mask attention. Every command writes a run manifest next to its outputs.

Config precedence: command-line flags > --config JSON file > built-in
defaults. All outputs are UTF-8 JSON/CSV; plots are out of scope (the CSVs
are plot-ready).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import corpus
from .backends import MODEL_CACHE_ENV, load_backend
from .backends.base import AnswerWordError, RegistrationError
from .backends.encoding import EncodingOverflowError
from .backends.tiny import TinyModelConfig, build_tiny_backend
from .ensembling import AlignmentError, fuse_scored
from .evaluation import evaluate
from .manifest import RunManifest
from .scoring import (encode_samples, prediction_rows, score_samples,
                      scored_impressions, write_predictions_jsonl)
from .templates import (DEFAULT_N_VIRTUAL, TemplateError, builtin_templates,
                        get_template, make_builtin_template)
from .training import (Checkpoint, TrainConfig, TrainingDiverged,
                       pretrain_mlm, train)

TRAIN_DEFAULTS = {
    "model_id": "tiny",
    "n_virtual": DEFAULT_N_VIRTUAL,
    "lr": 2e-5,
    "weight_decay": 0.01,
    "batch_size": 128,
    "micro_batch_size": None,
    "epochs": 3,
    "max_len": None,
    "few_shot": None,
    "seed": 0,
    "pretrain_epochs": None,   # default: 2 for fresh tiny models, else 0
    "pretrain_lr": 1e-3,
    "hidden": 64,
    "layers": 2,
    "heads": 8,
    "ffn": 256,
    "max_positions": 128,
}


class CliError(Exception):
    pass


def _load_config_file(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return cfg


def _merge_config(args: argparse.Namespace) -> dict:
    """Fill unset flags from the config file, then from built-in defaults."""
    merged = dict(TRAIN_DEFAULTS)
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        unknown = set(file_cfg) - set(TRAIN_DEFAULTS)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in TRAIN_DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model-id", dest="model_id",
                        help="'tiny' (default) or a checkpoint/model path")
    parser.add_argument("--n-virtual", dest="n_virtual", type=int,
                        help="virtual tokens per group (continuous/hybrid)")
    parser.add_argument("--lr", type=float)
    parser.add_argument("--weight-decay", dest="weight_decay", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int,
                        help="effective batch size (gradient accumulation)")
    parser.add_argument("--micro-batch-size", dest="micro_batch_size",
                        type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--max-len", dest="max_len", type=int)
    parser.add_argument("--few-shot", dest="few_shot", type=float,
                        help="fraction of training impressions to keep")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--pretrain-epochs", dest="pretrain_epochs",
                        type=int,
                        help="masked-word pretraining epochs before "
                             "fine-tuning (default 2 for fresh tiny models)")
    parser.add_argument("--pretrain-lr", dest="pretrain_lr", type=float)
    parser.add_argument("--freeze-backbone", action="store_true",
                        help="train only the virtual-token embeddings")
    parser.add_argument("--hidden", type=int, help="tiny model width")
    parser.add_argument("--layers", type=int, help="tiny model depth")
    parser.add_argument("--heads", type=int)
    parser.add_argument("--ffn", type=int)
    parser.add_argument("--max-positions", dest="max_positions", type=int)
    parser.add_argument("--config", help="JSON file with flag defaults")


def _resolve_template(template_id: str, n_virtual: int):
    try:
        return get_template(template_id, n_virtual)
    except KeyError as exc:
        raise CliError(str(exc)) from None


def _sample_paths(data_dir: str) -> dict[str, str]:
    return {split: os.path.join(data_dir, f"{split}_samples.jsonl")
            for split in ("train", "valid", "test")}


def _read_split(data_dir: str, split: str) -> list[corpus.Sample]:
    path = _sample_paths(data_dir)[split]
    if not os.path.isfile(path):
        raise CliError(f"no {split} sample file at {path}; run prepare first")
    return corpus.read_samples_jsonl(path)


def _tiny_config(cfg: dict) -> TinyModelConfig:
    return TinyModelConfig(hidden=cfg["hidden"], layers=cfg["layers"],
                           heads=cfg["heads"], ffn=cfg["ffn"],
                           max_positions=cfg["max_positions"])


def _build_backend(cfg: dict, template, train_samples, valid_samples):
    if cfg["model_id"] == "tiny":
        return build_tiny_backend(list(train_samples) + list(valid_samples),
                                  [template], config=_tiny_config(cfg),
                                  seed=cfg["seed"])
    backend = load_backend(cfg["model_id"], seed=cfg["seed"])
    backend.register_virtual_tokens(
        [corpus.NCLS_MARKER] + template.virtual_token_names)
    return backend


def _train_once(cfg: dict, template, train_samples, valid_samples, out_dir,
                freeze_backbone: bool) -> Checkpoint:
    if cfg["few_shot"] is not None:
        train_samples = corpus.downsample_training(
            train_samples, cfg["few_shot"], rng_seed=cfg["seed"])
    backend = _build_backend(cfg, template, train_samples, valid_samples)
    pretrain_epochs = cfg["pretrain_epochs"]
    if pretrain_epochs is None:
        pretrain_epochs = 2 if cfg["model_id"] == "tiny" else 0
    if pretrain_epochs:
        encoded = encode_samples(backend, template, train_samples,
                                 max_len=cfg["max_len"])
        pretrain_mlm(backend, encoded, epochs=pretrain_epochs,
                     learning_rate=cfg["pretrain_lr"],
                     rng_seed=cfg["seed"])
    config = TrainConfig(
        learning_rate=cfg["lr"], weight_decay=cfg["weight_decay"],
        batch_size=cfg["batch_size"],
        micro_batch_size=cfg["micro_batch_size"], epochs=cfg["epochs"],
        rng_seed=cfg["seed"], max_len=cfg["max_len"],
        template_id=template.template_id,
        few_shot_fraction=cfg["few_shot"], freeze_backbone=freeze_backbone)
    return train(config, train_samples, valid_samples, template, backend,
                 log_dir=out_dir)


def _evaluate_split(checkpoint: Checkpoint, samples, out_dir, prefix: str,
                    batch_size: int = 32):
    scores = score_samples(checkpoint.backend, checkpoint.template, samples,
                           batch_size=batch_size)
    report = evaluate(scored_impressions(samples, scores))
    report.write_json(os.path.join(out_dir, f"{prefix}_metrics.json"))
    report.write_per_impression_csv(
        os.path.join(out_dir, f"{prefix}_per_impression.csv"))
    rows = prediction_rows(samples, scores, checkpoint.template.template_id)
    write_predictions_jsonl(
        rows, os.path.join(out_dir, f"{prefix}_predictions.jsonl"))
    return report


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(command="prepare",
                           config={"valid_fraction": args.valid_fraction,
                                   "neg_ratio": args.neg_ratio,
                                   "max_history": args.max_history,
                                   "max_title_words": args.max_title_words,
                                   "max_candidate_words": args.max_candidate_words},
                           seed=args.seed)
    manifest.add_input(args.news)
    manifest.add_input(args.behaviors)
    if args.test_behaviors:
        manifest.add_input(args.test_behaviors)

    def parse_file(path, parser):
        try:
            with open(path, encoding="utf-8") as fh:
                return parser(fh)
        except corpus.ParseError as exc:
            raise CliError(f"{path}: {exc}") from exc

    catalog = parse_file(args.news, corpus.parse_news)
    if catalog.duplicates_skipped:
        print(f"warning: {catalog.duplicates_skipped} duplicate news ids "
              f"skipped", file=sys.stderr)
    impressions = parse_file(args.behaviors, corpus.parse_behaviors)
    train_imps, valid_imps = corpus.split_validation(
        impressions, fraction=args.valid_fraction, rng_seed=args.seed)

    caps = dict(max_history=args.max_history,
                max_history_title_words=args.max_title_words,
                max_candidate_title_words=args.max_candidate_words)
    train_samples = corpus.assemble_training_set(
        train_imps, catalog, neg_ratio=args.neg_ratio, rng_seed=args.seed,
        **caps)
    valid_samples = corpus.assemble_eval_set(valid_imps, catalog, **caps)

    paths = _sample_paths(args.out)
    n = corpus.write_samples_jsonl(train_samples, paths["train"])
    manifest.add_output("train_samples", paths["train"], count=n)
    n = corpus.write_samples_jsonl(valid_samples, paths["valid"])
    manifest.add_output("valid_samples", paths["valid"], count=n)
    if args.test_behaviors:
        test_imps = parse_file(args.test_behaviors, corpus.parse_behaviors)
        test_samples = corpus.assemble_eval_set(test_imps, catalog, **caps)
        n = corpus.write_samples_jsonl(test_samples, paths["test"])
        manifest.add_output("test_samples", paths["test"], count=n)

    manifest.write(os.path.join(args.out, "manifest.json"))
    print(f"prepared {len(train_samples)} train samples, "
          f"{len(valid_samples)} valid samples -> {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _merge_config(args)
    os.makedirs(args.out, exist_ok=True)
    template = _resolve_template(args.template, cfg["n_virtual"])
    train_samples = _read_split(args.data, "train")
    valid_samples = _read_split(args.data, "valid")

    manifest = RunManifest(command="train", seed=cfg["seed"],
                           config={**cfg, "template": args.template,
                                   "freeze_backbone": args.freeze_backbone})
    for split in ("train", "valid"):
        manifest.add_input(_sample_paths(args.data)[split])

    checkpoint = _train_once(cfg, template, train_samples, valid_samples,
                             args.out, args.freeze_backbone)
    ckpt_dir = os.path.join(args.out, "checkpoint")
    checkpoint.save(ckpt_dir)
    manifest.add_output("checkpoint", ckpt_dir)
    checkpoint.validation.write_json(
        os.path.join(args.out, "valid_metrics.json"))
    manifest.add_output("valid_metrics",
                        os.path.join(args.out, "valid_metrics.json"))
    manifest.add_output("train_log",
                        os.path.join(args.out, "train_log.jsonl"))

    test_path = _sample_paths(args.data)["test"]
    if os.path.isfile(test_path):
        manifest.add_input(test_path)
        test_samples = corpus.read_samples_jsonl(test_path)
        report = _evaluate_split(checkpoint, test_samples, args.out, "test")
        manifest.add_output("test_metrics",
                            os.path.join(args.out, "test_metrics.json"))
        manifest.add_output("test_predictions",
                            os.path.join(args.out, "test_predictions.jsonl"))
        print(f"test AUC {report.auc:.4f}" if report.auc is not None
              else "test AUC undefined")

    manifest.write(os.path.join(args.out, "manifest.json"))
    val_auc = checkpoint.validation.auc
    print(f"best epoch {checkpoint.epoch} "
          f"valid AUC {val_auc:.4f}" if val_auc is not None
          else f"best epoch {checkpoint.epoch}")
    return 0


def cmd_eval(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    checkpoint = Checkpoint.load(args.checkpoint)
    samples = _read_split(args.data, args.split)
    manifest = RunManifest(command="eval",
                           config={"checkpoint": args.checkpoint,
                                   "split": args.split})
    manifest.add_input(_sample_paths(args.data)[args.split])
    report = _evaluate_split(checkpoint, samples, args.out, args.split,
                             batch_size=args.batch_size)
    for name in ("metrics.json", "per_impression.csv", "predictions.jsonl"):
        manifest.add_output(f"{args.split}_{name}",
                            os.path.join(args.out, f"{args.split}_{name}"))
    manifest.write(os.path.join(args.out, "manifest.json"))
    print(report.to_json())
    return 0


def _metric_row(report) -> dict:
    return {"auc": report.auc, "mrr": report.mrr, "ndcg5": report.ndcg5,
            "ndcg10": report.ndcg10}


def _eval_split_for_row(checkpoint, data_dir):
    """Evaluate on test when prepared, else on the validation split."""
    test_path = _sample_paths(data_dir)["test"]
    split = "test" if os.path.isfile(test_path) else "valid"
    samples = _read_split(data_dir, split)
    scores = score_samples(checkpoint.backend, checkpoint.template, samples)
    return split, evaluate(scored_impressions(samples, scores),
                           keep_per_impression=False)


def cmd_sweep_n(args) -> int:
    cfg = _merge_config(args)
    base = _resolve_template(args.template, cfg["n_virtual"])
    if base.kind == "discrete":
        raise CliError(
            f"{args.template} is a discrete template with no virtual tokens "
            f"to sweep; pick a continuous or hybrid one")
    n_values = [int(v) for v in args.n_values.split(",") if v != ""]
    if not n_values:
        raise CliError("--n-values must list at least one integer")
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(command="sweep-n", seed=cfg["seed"],
                           config={**cfg, "template": args.template,
                                   "n_values": n_values})
    train_samples = _read_split(args.data, "train")
    valid_samples = _read_split(args.data, "valid")

    rows = []
    for n in n_values:
        template = make_builtin_template(base.kind, base.perspective, n)
        cell_dir = os.path.join(args.out, f"n{n}")
        os.makedirs(cell_dir, exist_ok=True)
        checkpoint = _train_once(cfg, template, train_samples, valid_samples,
                                 cell_dir, args.freeze_backbone)
        checkpoint.save(os.path.join(cell_dir, "checkpoint"))
        split, report = _eval_split_for_row(checkpoint, args.data)
        rows.append({"n": n, **_metric_row(report)})
        manifest.add_output(f"n{n}", cell_dir)
        print(f"n={n} {split} AUC "
              f"{report.auc:.4f}" if report.auc is not None else f"n={n}")

    csv_path = os.path.join(args.out, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["n", "auc", "mrr", "ndcg5",
                                                "ndcg10"])
        writer.writeheader()
        writer.writerows(rows)
    manifest.add_output("sweep_csv", csv_path, count=len(rows))
    manifest.write(os.path.join(args.out, "manifest.json"))
    return 0


def cmd_fewshot(args) -> int:
    cfg = _merge_config(args)
    template = _resolve_template(args.template, cfg["n_virtual"])
    fractions = [float(v) for v in args.fractions.split(",") if v != ""]
    if not fractions:
        raise CliError("--fractions must list at least one value")
    os.makedirs(args.out, exist_ok=True)
    manifest = RunManifest(command="fewshot", seed=cfg["seed"],
                           config={**cfg, "template": args.template,
                                   "fractions": fractions})
    train_samples = _read_split(args.data, "train")
    valid_samples = _read_split(args.data, "valid")

    rows = []
    for fraction in fractions:
        cell_cfg = dict(cfg, few_shot=fraction)
        cell_dir = os.path.join(args.out, f"fraction{fraction:g}")
        os.makedirs(cell_dir, exist_ok=True)
        checkpoint = _train_once(cell_cfg, template, train_samples,
                                 valid_samples, cell_dir,
                                 args.freeze_backbone)
        checkpoint.save(os.path.join(cell_dir, "checkpoint"))
        split, report = _eval_split_for_row(checkpoint, args.data)
        kept = corpus.downsample_training(train_samples, fraction,
                                          rng_seed=cfg["seed"])
        rows.append({"fraction": fraction,
                     "train_impressions": len({s.impression_id
                                               for s in kept}),
                     **_metric_row(report)})
        manifest.add_output(f"fraction{fraction:g}", cell_dir)

    csv_path = os.path.join(args.out, "fewshot.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["fraction", "train_impressions", "auc", "mrr",
                            "ndcg5", "ndcg10"])
        writer.writeheader()
        writer.writerows(rows)
    manifest.add_output("fewshot_csv", csv_path, count=len(rows))
    manifest.write(os.path.join(args.out, "manifest.json"))
    return 0


def cmd_ensemble(args) -> int:
    checkpoints = [p for p in args.checkpoints.split(",") if p]
    if not checkpoints:
        raise CliError("--checkpoints must list at least one directory")
    os.makedirs(args.out, exist_ok=True)
    samples = _read_split(args.data, args.split)
    manifest = RunManifest(command="ensemble",
                           config={"checkpoints": checkpoints,
                                   "split": args.split})
    manifest.add_input(_sample_paths(args.data)[args.split])

    members = []
    member_ids = []
    for path in checkpoints:
        checkpoint = Checkpoint.load(path)
        scores = score_samples(checkpoint.backend, checkpoint.template,
                               samples, batch_size=args.batch_size)
        members.append(scored_impressions(samples, scores))
        member_ids.append(checkpoint.template.template_id)

    fused = fuse_scored(members)
    report = evaluate(fused)
    report.write_json(os.path.join(args.out, "metrics.json"))
    fused_rows = [
        {"impression_id": imp.impression_id, "candidate_id": cid,
         "template_id": "+".join(member_ids), "p_pos": score, "label": label}
        for imp in fused for cid, score, label in imp.entries]
    write_predictions_jsonl(fused_rows,
                            os.path.join(args.out, "fused_predictions.jsonl"))
    manifest.add_output("metrics", os.path.join(args.out, "metrics.json"))
    manifest.add_output("fused_predictions",
                        os.path.join(args.out, "fused_predictions.jsonl"),
                        count=len(fused_rows))
    manifest.write(os.path.join(args.out, "manifest.json"))
    print(report.to_json())
    return 0


def _parse_layers(spec: str, num_layers: int) -> list[int]:
    layers = []
    for item in spec.split(","):
        item = item.strip()
        if item == "first":
            layers.append(0)
        elif item == "last":
            layers.append(num_layers - 1)
        elif item:
            layers.append(int(item))
    if not layers:
        raise CliError("--layers must name at least one layer")
    return layers


def cmd_export_attention(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    checkpoint = Checkpoint.load(args.checkpoint)
    backend = checkpoint.backend
    samples = _read_split(args.data, args.split)

    selected = samples
    if args.impression is not None:
        selected = [s for s in selected
                    if s.impression_id == args.impression]
    if args.candidate is not None:
        selected = [s for s in selected if s.candidate_id == args.candidate]
    if args.index is not None:
        selected = selected[args.index:args.index + 1]
    if not selected:
        raise CliError("selector matched no sample")
    sample = selected[0]

    from .templates import render
    encoded = backend.encode(render(checkpoint.template, sample.user_text,
                                    sample.candidate_text))
    token_texts = backend.decode_tokens(encoded.ids)
    layers = _parse_layers(args.layers, backend.num_layers)

    csv_path = os.path.join(args.out, "attention.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "head", "token_index", "token_text",
                         "weight"])
        for layer in layers:
            rows = backend.attention_weights(encoded, layer)
            for head in range(rows.shape[0]):
                for idx in range(rows.shape[1]):
                    writer.writerow([layer, head, idx, token_texts[idx],
                                     float(rows[head, idx])])
    manifest = RunManifest(command="export-attention",
                           config={"checkpoint": args.checkpoint,
                                   "split": args.split,
                                   "impression": sample.impression_id,
                                   "candidate": sample.candidate_id,
                                   "layers": layers})
    manifest.add_input(_sample_paths(args.data)[args.split])
    manifest.add_output("attention_csv", csv_path,
                        count=len(layers) * backend.num_heads
                        * len(encoded.ids))
    manifest.write(os.path.join(args.out, "manifest.json"))
    print(f"wrote {csv_path}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clozerec",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"Model/checkpoint ids also resolve under ${MODEL_CACHE_ENV}.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="parse MIND files into sample sets")
    p.add_argument("--news", required=True)
    p.add_argument("--behaviors", required=True,
                   help="training-period behaviors TSV")
    p.add_argument("--test-behaviors", dest="test_behaviors")
    p.add_argument("--out", required=True)
    p.add_argument("--valid-fraction", dest="valid_fraction", type=float,
                   default=corpus.DEFAULT_VALID_FRACTION)
    p.add_argument("--neg-ratio", dest="neg_ratio", type=int,
                   default=corpus.DEFAULT_NEG_RATIO)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-history", dest="max_history", type=int,
                   default=corpus.MAX_HISTORY)
    p.add_argument("--max-title-words", dest="max_title_words", type=int,
                   default=corpus.MAX_HISTORY_TITLE_WORDS)
    p.add_argument("--max-candidate-words", dest="max_candidate_words",
                   type=int, default=corpus.MAX_CANDIDATE_TITLE_WORDS)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fine-tune one template")
    p.add_argument("--data", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-n",
                       help="train/eval across virtual-token counts")
    p.add_argument("--data", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--n-values", dest="n_values", required=True,
                   help="comma-separated counts, e.g. 0,1,3,5")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep_n)

    p = sub.add_parser("fewshot",
                       help="down-sample training and compare fractions")
    p.add_argument("--data", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--fractions", required=True,
                   help="comma-separated fractions, e.g. 1.0,0.5,0.25")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(func=cmd_fewshot)

    p = sub.add_parser("ensemble", help="fuse member checkpoints' scores")
    p.add_argument("--checkpoints", required=True,
                   help="comma-separated checkpoint directories")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("export-attention",
                       help="mask-token attention rows as plot-ready CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("valid", "test"), default="test")
    p.add_argument("--impression", help="impression id to select")
    p.add_argument("--candidate", help="candidate id to select")
    p.add_argument("--index", type=int,
                   help="index into the (filtered) sample list")
    p.add_argument("--layers", default="first,last")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_attention)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, corpus.CorpusError, TemplateError, AlignmentError,
            AnswerWordError, RegistrationError, EncodingOverflowError,
            TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
