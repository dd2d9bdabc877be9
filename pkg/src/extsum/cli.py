"""Batch command-line harness.

One JSON config file drives every subcommand; `--set dotted.key=value`
overrides individual fields (values parse as JSON, falling back to plain
strings). All randomness flows from seeds in the config. Exit codes: 0
success, 2 input/config error, 3 numeric failure during training.

Subcommands: synth, oracle, train, summarize, evaluate, ablate,
significance.
"""

from __future__ import annotations

import argparse
import copy
import json
import shutil
import sys
from pathlib import Path

import numpy as np

from .autodiff import (AdamState, NonFiniteGradient, Tensor, load_checkpoint,
                       save_checkpoint)
from .corpus import (BudgetConfig, DatasetError, Document, PosClass, Split,
                     ablate_pos_class, load_dataset, save_dataset, shuffle_document)
from .embed import (EmbeddingError, EmbeddingPolicy, EmbeddingTable, build_vocab,
                    learned_embedding_table, load_pretrained_embeddings)
from .encoders import EncoderConfig, EncoderKind
from .extractors import ExtractorConfig, ExtractorKind
from .metrics import (MultiRef, RougeConfig, ScoreReport, approx_randomization_test,
                      average_reports, oracle_extract_labels)
from .pipeline import (Model, TrainConfig, TrainingError, build_model, evaluate_system,
                       generate_summary, lead_summarizer, load_model_tensors,
                       model_summarizer, oracle_summarizer, predict_probs, train)
from .synth import SynthSpec, generate_corpus

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG: dict = {
    "dataset": {"train": None, "valid": None, "test": None, "labels": None},
    "embeddings": {"path": None, "dim": 200, "policy": "fixed", "min_count": 3},
    "encoder": {"kind": "averaging", "rnn_hidden": 300,
                "cnn_windows": [1, 2, 3, 4, 5, 6],
                "cnn_maps": [25, 25, 50, 50, 50, 50], "dropout": 0.25},
    "extractor": {"kind": "rnn", "gru_hidden": 300, "mlp_hidden": 100,
                  "doc_rep": 100, "pos_dim": 16, "pos_table_size": 500,
                  "dropout": 0.25},
    "train": {"max_epochs": 50, "batch_size": 32, "learning_rate": 0.0001,
              "teacher_forcing_epochs": None, "log_timing": True},
    "rouge": {"order": 2, "remove_stopwords": True, "stemming": False,
              "multi_ref": "average"},
    "budget": {"budget_words": 100},
    "seeds": [1, 2, 3, 4, 5],
    "run_id": "run",
    "output_dir": ".",
    "oracle": {"input": None, "output": None},
    "summarize": {"checkpoint": None, "input": None, "output": None},
    "evaluate": {"systems": [], "trials": 10000, "alpha": 0.05, "seed": 0},
    "ablate": {"transform": None, "classes": [], "seed": None, "output_dir": None},
    "significance": {"scores_a": None, "scores_b": None, "trials": 10000,
                     "alpha": 0.05, "num_comparisons": None, "seed": 0,
                     "output": None},
    "synth": {"num_docs": 100, "sentences_per_doc": 8, "tokens_per_sentence": 10,
              "lead_bias": 0.0, "vocab_size": 200, "seed": 0,
              "content_class": "N", "summary_sentences": 2,
              "signal_token_frac": 0.5, "split": "train", "output": None},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _apply_set(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects dotted.key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    keys = dotted.split(".")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set path {dotted!r} crosses a non-object field")
    node[keys[-1]] = value


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = _merge(cfg, json.load(fh))
    for assignment in overrides:
        _apply_set(cfg, assignment)
    return cfg


# -- config -> domain objects ---------------------------------------------------


def _require(cfg: dict, dotted: str):
    node = cfg
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node or node[key] is None:
            raise ConfigError(f"config field {dotted!r} is required")
        node = node[key]
    return node


def rouge_config(cfg: dict) -> RougeConfig:
    r = cfg["rouge"]
    return RougeConfig(order=int(r["order"]),
                       remove_stopwords=bool(r["remove_stopwords"]),
                       stemming=bool(r["stemming"]),
                       multi_ref=MultiRef(r["multi_ref"]))


def budget_config(cfg: dict) -> BudgetConfig:
    return BudgetConfig(budget_words=int(cfg["budget"]["budget_words"]))


def encoder_config(cfg: dict) -> EncoderConfig:
    e = cfg["encoder"]
    return EncoderConfig(kind=EncoderKind(e["kind"]), rnn_hidden=int(e["rnn_hidden"]),
                         cnn_windows=tuple(e["cnn_windows"]),
                         cnn_maps=tuple(e["cnn_maps"]), dropout=float(e["dropout"]))


def extractor_config(cfg: dict) -> ExtractorConfig:
    x = cfg["extractor"]
    return ExtractorConfig(kind=ExtractorKind(x["kind"]),
                           gru_hidden=int(x["gru_hidden"]),
                           mlp_hidden=int(x["mlp_hidden"]), doc_rep=int(x["doc_rep"]),
                           pos_dim=int(x["pos_dim"]),
                           pos_table_size=int(x["pos_table_size"]),
                           dropout=float(x["dropout"]))


def train_config(cfg: dict, seed: int) -> TrainConfig:
    t = cfg["train"]
    tf = t["teacher_forcing_epochs"]
    return TrainConfig(seed=seed, budget=budget_config(cfg),
                       max_epochs=int(t["max_epochs"]),
                       batch_size=int(t["batch_size"]),
                       learning_rate=float(t["learning_rate"]),
                       teacher_forcing_epochs=None if tf is None else int(tf),
                       log_timing=bool(t["log_timing"]))


def build_table(cfg: dict, rng: np.random.Generator,
                train_docs: list[Document] | None) -> EmbeddingTable:
    e = cfg["embeddings"]
    dim = int(e["dim"])
    policy = EmbeddingPolicy(e["policy"])
    if policy is EmbeddingPolicy.FIXED:
        path = _require(cfg, "embeddings.path")
        return load_pretrained_embeddings(path, dim)
    if train_docs is None:
        raise ConfigError("learned embeddings need dataset.train for the vocabulary")
    vocab = build_vocab(train_docs, int(e["min_count"]))
    pretrained = None
    if e["path"] is not None:
        pretrained = load_pretrained_embeddings(e["path"], dim)
    return learned_embedding_table(vocab, dim, rng, pretrained=pretrained,
                                   min_count=int(e["min_count"]))


def _load_split(cfg: dict, name: str) -> list[Document]:
    path = _require(cfg, f"dataset.{name}")
    return load_dataset(path, Split(name))


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_jsonl(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")))
            fh.write("\n")


# -- subcommands ------------------------------------------------------------------


def cmd_synth(cfg: dict) -> int:
    s = cfg["synth"]
    output = _require(cfg, "synth.output")
    spec = SynthSpec(num_docs=int(s["num_docs"]),
                     sentences_per_doc=int(s["sentences_per_doc"]),
                     tokens_per_sentence=int(s["tokens_per_sentence"]),
                     lead_bias=float(s["lead_bias"]),
                     vocab_size=int(s["vocab_size"]), seed=int(s["seed"]),
                     content_class=PosClass(s["content_class"]),
                     summary_sentences=int(s["summary_sentences"]),
                     signal_token_frac=float(s["signal_token_frac"]),
                     split=Split(s["split"]))
    docs = generate_corpus(spec)
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    save_dataset(output, docs)
    print(f"wrote {len(docs)} documents to {output}")
    return EXIT_OK


def cmd_oracle(cfg: dict) -> int:
    input_path = cfg["oracle"]["input"] or _require(cfg, "dataset.train")
    output = _require(cfg, "oracle.output")
    docs = load_dataset(input_path)
    budget = budget_config(cfg)
    oracle_cfg = RougeConfig(order=1,
                             remove_stopwords=bool(cfg["rouge"]["remove_stopwords"]),
                             multi_ref=MultiRef(cfg["rouge"]["multi_ref"]))
    rows = [{"id": doc.id,
             "labels": list(oracle_extract_labels(doc, budget, oracle_cfg))}
            for doc in docs]
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    _write_jsonl(output, rows)
    print(f"labeled {len(rows)} documents -> {output}")
    return EXIT_OK


def _attach_labels(docs: list[Document], labels_path) -> list[Document]:
    by_id: dict[str, list[int]] = {}
    with open(labels_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{labels_path}:{lineno}: invalid JSON: {exc}")
            by_id[row["id"]] = row["labels"]
    out = []
    for doc in docs:
        if doc.id not in by_id:
            raise DatasetError(f"no labels for document {doc.id!r} in {labels_path}")
        out.append(doc.with_labels(by_id[doc.id]))
    return out


def cmd_train(cfg: dict) -> int:
    train_docs = _load_split(cfg, "train")
    valid_docs = _load_split(cfg, "valid")
    train_docs = _attach_labels(train_docs, _require(cfg, "dataset.labels"))
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = cfg["seeds"]
    if not seeds:
        raise ConfigError("seeds must be non-empty")
    enc_cfg = encoder_config(cfg)
    ext_cfg = extractor_config(cfg)
    rcfg = rouge_config(cfg)
    manifest = {"run_id": cfg["run_id"], "runs": []}
    for seed in seeds:
        seed = int(seed)
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        table = build_table(cfg, rng, train_docs)
        model = build_model(enc_cfg, ext_cfg, table, rng)
        tcfg = train_config(cfg, seed)
        result = train(model, train_docs, valid_docs, tcfg, rcfg)
        run_id = f"{cfg['run_id']}-s{seed}"
        best_path = out_dir / f"{run_id}.best"
        last_path = out_dir / f"{run_id}.last"
        log_path = out_dir / f"{run_id}.log.jsonl"
        best_tensors = {k: Tensor(v) for k, v in result.best_tensors.items()}
        save_checkpoint(best_path, best_tensors, state=None, run_config=cfg,
                        meta={"seed": seed, "kind": "best",
                              "best_epoch": result.best_epoch,
                              "best_valid_rouge2": result.best_score})
        save_checkpoint(last_path, model.tensors(), state=result.adam,
                        run_config=cfg,
                        meta={"seed": seed, "kind": "last",
                              "epochs_run": len(result.log)})
        _write_jsonl(log_path, result.log)
        manifest["runs"].append({"seed": seed, "best": best_path.name,
                                 "last": last_path.name, "log": log_path.name,
                                 "best_epoch": result.best_epoch,
                                 "best_valid_rouge2": result.best_score})
        print(f"seed {seed}: best epoch {result.best_epoch} "
              f"valid bigram recall {result.best_score:.4f}")
    _write_json(out_dir / f"{cfg['run_id']}.manifest.json", manifest)
    return EXIT_OK


def load_model_from_checkpoint(cfg: dict, checkpoint_path) -> Model:
    """Rebuild the architecture from config and fill it with saved values.

    Learned-policy runs rebuild the vocabulary from dataset.train (the
    build is deterministic), then overwrite every parameter, embedding
    matrix included, from the checkpoint.
    """
    flat, _, _, _meta = load_checkpoint(checkpoint_path)
    policy = EmbeddingPolicy(cfg["embeddings"]["policy"])
    train_docs = None
    if policy is EmbeddingPolicy.LEARNED:
        train_docs = _load_split(cfg, "train")
    table = build_table(cfg, np.random.default_rng(0), train_docs)
    model = build_model(encoder_config(cfg), extractor_config(cfg), table, seed=0)
    load_model_tensors(model, flat)
    return model


def cmd_summarize(cfg: dict) -> int:
    ckpt = _require(cfg, "summarize.checkpoint")
    input_path = cfg["summarize"]["input"] or _require(cfg, "dataset.test")
    output = _require(cfg, "summarize.output")
    if not Path(ckpt).exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = load_model_from_checkpoint(cfg, ckpt)
    docs = load_dataset(input_path, Split.TEST)
    budget = budget_config(cfg)
    rows = []
    for doc in docs:
        summary = generate_summary(doc, predict_probs(model, doc), budget)
        rows.append({"id": doc.id, "indices": list(summary.indices),
                     "summary": list(summary.tokens)})
    Path(output).parent.mkdir(parents=True, exist_ok=True)
    _write_jsonl(output, rows)
    print(f"summarized {len(rows)} documents -> {output}")
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    systems = cfg["evaluate"]["systems"]
    if not systems:
        raise ConfigError("evaluate.systems must list at least one system")
    test_docs = _load_split(cfg, "test")
    budget = budget_config(cfg)
    rcfg = rouge_config(cfg)
    out_dir = Path(cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: dict[str, ScoreReport] = {}
    for system in systems:
        name = system["name"]
        kind = system["kind"]
        if kind == "lead":
            reports[name] = evaluate_system(test_docs, lead_summarizer(budget),
                                            budget, rcfg, system=name)
        elif kind == "oracle":
            reports[name] = evaluate_system(test_docs,
                                            oracle_summarizer(budget, rcfg),
                                            budget, rcfg, system=name)
        elif kind == "model":
            ckpts = system.get("checkpoints") or []
            if not ckpts:
                raise ConfigError(f"system {name!r} lists no checkpoints")
            per_seed = []
            for ckpt in ckpts:
                if not Path(ckpt).exists():
                    raise FileNotFoundError(f"checkpoint not found: {ckpt}")
                model = load_model_from_checkpoint(cfg, ckpt)
                _, _, _, meta = load_checkpoint(ckpt)
                per_seed.append(evaluate_system(test_docs,
                                                model_summarizer(model, budget),
                                                budget, rcfg, system=name,
                                                seed=meta.get("seed")))
            reports[name] = (per_seed[0] if len(per_seed) == 1
                             else average_reports(per_seed, system=name))
        else:
            raise ConfigError(f"unknown system kind {kind!r} for {name!r}")
    for name, report in reports.items():
        for metric in report.metric_names():
            _write_json(out_dir / f"{name}.{metric}.json", report.to_json(metric))
        means = " ".join(f"{m}={report.means[m]:.4f}" for m in report.metric_names())
        print(f"{name}: {means}")

    primary = f"rouge{cfg['rouge']['order']}"
    rows = []
    if len(reports) > 1:
        best_name = max(reports, key=lambda n: reports[n].means[primary])
        best = reports[best_name]
        others = [n for n in reports if n != best_name]
        num_comparisons = len(reports) - 1
        alpha = float(cfg["evaluate"]["alpha"])
        trials = int(cfg["evaluate"]["trials"])
        seed = int(cfg["evaluate"]["seed"])
        ids = sorted(best.per_doc)
        for other in others:
            a = [best.per_doc[i][primary] for i in ids]
            b = [reports[other].per_doc[i][primary] for i in ids]
            p, significant = approx_randomization_test(
                a, b, trials=trials, alpha=alpha,
                num_comparisons=num_comparisons, seed=seed)
            rows.append({"pair": [best_name, other], "metric": primary, "p": p,
                         "threshold": alpha / num_comparisons,
                         "significant": significant})
    _write_json(out_dir / "significance.json", rows)
    return EXIT_OK


def cmd_ablate(cfg: dict) -> int:
    transform = _require(cfg, "ablate.transform")
    out_dir = Path(cfg["ablate"]["output_dir"] or cfg["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    present = [name for name in ("train", "valid", "test")
               if cfg["dataset"].get(name)]
    if not present:
        raise ConfigError("ablate needs at least one dataset split")
    if transform == "pos":
        classes = {PosClass(c) for c in cfg["ablate"]["classes"]}
        if not classes:
            raise ConfigError("ablate.classes must name at least one pos class")
        for name in present:
            docs = [ablate_pos_class(doc, classes) for doc in _load_split(cfg, name)]
            save_dataset(out_dir / f"{name}.jsonl", docs)
    elif transform == "shuffle":
        seed = cfg["ablate"]["seed"]
        if seed is None:
            seed = int(cfg["seeds"][0])
        for name in present:
            src = cfg["dataset"][name]
            dst = out_dir / f"{name}.jsonl"
            if name == "train":
                docs = [shuffle_document(doc, np.random.SeedSequence([int(seed), i]))
                        for i, doc in enumerate(_load_split(cfg, name))]
                save_dataset(dst, docs)
            else:
                # evaluation stays on untouched data; copy bytes verbatim
                shutil.copyfile(src, dst)
    else:
        raise ConfigError(f"unknown ablate.transform {transform!r}")
    print(f"wrote transformed splits ({transform}) -> {out_dir}")
    return EXIT_OK


def cmd_significance(cfg: dict) -> int:
    s = cfg["significance"]
    path_a = _require(cfg, "significance.scores_a")
    path_b = _require(cfg, "significance.scores_b")
    if s["num_comparisons"] is None:
        raise ConfigError("significance.num_comparisons must be set explicitly")
    with open(path_a, "r", encoding="utf-8") as fh:
        report_a = json.load(fh)
    with open(path_b, "r", encoding="utf-8") as fh:
        report_b = json.load(fh)
    ids = sorted(report_a["per_doc"])
    if sorted(report_b["per_doc"]) != ids:
        raise ConfigError("score files cover different document ids")
    a = [report_a["per_doc"][i] for i in ids]
    b = [report_b["per_doc"][i] for i in ids]
    alpha = float(s["alpha"])
    num_comparisons = int(s["num_comparisons"])
    p, significant = approx_randomization_test(a, b, trials=int(s["trials"]),
                                               alpha=alpha,
                                               num_comparisons=num_comparisons,
                                               seed=int(s["seed"]))
    row = {"pair": [report_a.get("system"), report_b.get("system")],
           "metric": report_a.get("metric"), "p": p,
           "threshold": alpha / num_comparisons, "significant": significant}
    if s["output"]:
        _write_json(s["output"], row)
    print(json.dumps(row, sort_keys=True))
    return EXIT_OK


# -- entry point -------------------------------------------------------------------

COMMANDS = {
    "synth": cmd_synth,
    "oracle": cmd_oracle,
    "train": cmd_train,
    "summarize": cmd_summarize,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "significance": cmd_significance,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="extsum",
        description="Extractive summarization experiments: synthetic data, "
                    "oracle labels, training, summarization, evaluation, "
                    "ablations, significance testing.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", default=None,
                       help="JSON config file (defaults apply when omitted)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. train.max_epochs=5")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DatasetError, EmbeddingError, FileNotFoundError,
            json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TrainingError, NonFiniteGradient, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
