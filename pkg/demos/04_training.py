"""End to end: synthesize data, label it, train, and score against baselines.

Run from the repository root:  python3 demos/04_training.py  (about 15 seconds)
"""

import numpy as np

from extsum.corpus import BudgetConfig
from extsum.embed import build_vocab, learned_embedding_table
from extsum.encoders import EncoderConfig, EncoderKind
from extsum.extractors import ExtractorConfig, ExtractorKind
from extsum.metrics import RougeConfig, oracle_extract_labels
from extsum.pipeline import (TrainConfig, build_model, evaluate_system,
                             lead_summarizer, model_summarizer,
                             oracle_summarizer, train)
from extsum.synth import SynthSpec, generate_corpus

budget = BudgetConfig(budget_words=20)
label_cfg = RougeConfig(order=1)
eval_cfg = RougeConfig(order=2)


def corpus(seed, n, prefix):
    return generate_corpus(SynthSpec(
        num_docs=n, sentences_per_doc=8, tokens_per_sentence=10,
        lead_bias=0.7, vocab_size=150, seed=seed, summary_sentences=2,
        id_prefix=prefix))


train_docs = [d.with_labels(oracle_extract_labels(d, budget, label_cfg))
              for d in corpus(11, 300, "tr")]
valid_docs = corpus(12, 40, "va")
test_docs = corpus(13, 60, "te")
positives = sum(sum(d.labels) for d in train_docs)
total = sum(d.n_sentences for d in train_docs)
print(f"{len(train_docs)} training documents, "
      f"{positives}/{total} sentences labeled positive")

rng = np.random.default_rng(np.random.SeedSequence([42]))
table = learned_embedding_table(build_vocab(train_docs, 1), 8, rng)
model = build_model(
    EncoderConfig(kind=EncoderKind.AVERAGING, dropout=0.25),
    ExtractorConfig(kind=ExtractorKind.SUMMARUNNER, gru_hidden=8, mlp_hidden=8,
                    doc_rep=8, pos_dim=4, pos_table_size=8, dropout=0.25),
    table, rng)

cfg = TrainConfig(seed=42, budget=budget, max_epochs=8, batch_size=32,
                  learning_rate=0.003, log_timing=False)
result = train(model, train_docs, valid_docs, cfg, eval_cfg)
for row in result.log:
    print(f"  epoch {row['epoch']}  loss {row['train_loss']:8.2f}  "
          f"valid bigram recall {row['valid_rouge2']:.4f}")
print(f"kept epoch {result.best_epoch} (valid {result.best_score:.4f})")

print("\ntest-set mean recall (bigram):")
for name, summarizer in (("lead", lead_summarizer(budget)),
                         ("model", model_summarizer(model, budget)),
                         ("oracle", oracle_summarizer(budget, label_cfg))):
    report = evaluate_system(test_docs, summarizer, budget, eval_cfg, name,
                             metrics=("rouge2",))
    print(f"  {name:7s} {report.means['rouge2']:.4f}")
