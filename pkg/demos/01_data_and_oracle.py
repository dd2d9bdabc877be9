"""Documents, recall metrics, greedy labels, and budgeted summaries.

Run from the repository root:  python3 demos/01_data_and_oracle.py
"""

from extsum.corpus import BudgetConfig, document
from extsum.metrics import (RougeConfig, oracle_extract_labels,
                            oracle_extract_trace, rouge_l_recall,
                            rouge_n_recall)
from extsum.pipeline import generate_summary, lead_summary

doc = document(
    "demo-001",
    [
        ["the", "storm", "closed", "the", "harbor", "on", "monday"],
        ["officials", "said", "ferries", "would", "stay", "docked"],
        ["a", "spokesman", "declined", "to", "comment"],
        ["the", "harbor", "reopened", "after", "two", "days"],
        ["local", "shops", "reported", "quiet", "streets"],
    ],
    [["storm", "closed", "harbor", "reopened", "after", "two", "days"]],
)

r1 = RougeConfig(order=1)
r2 = RougeConfig(order=2)

print("per-sentence unigram recall against the reference:")
for i, sent in enumerate(doc.sentences):
    score = rouge_n_recall(sent.words(), doc.references, r1)
    print(f"  [{i}] {' '.join(sent.words()):45s} {score:.3f}")

budget = BudgetConfig(budget_words=12)
print(f"\ngreedy trace at a {budget.budget_words}-word budget:")
for step in oracle_extract_trace(doc, budget, r1):
    print(f"  pick sentence {step.index}, running recall {step.score:.3f}")

labels = oracle_extract_labels(doc, budget, r1)
print(f"labels: {labels}")

probs = [0.2, 0.9, 0.1, 0.8, 0.3]
summary = generate_summary(doc, probs, budget)
print(f"\nmodel-style summary from probabilities {probs}:")
for i in summary.indices:
    print(f"  [{i}] {' '.join(doc.sentences[i].words())}")
print(f"lead baseline: {' '.join(lead_summary(doc, budget))}")

picked = summary.tokens
print(f"\nsummary unigram recall  {rouge_n_recall(picked, doc.references, r1):.3f}")
print(f"summary bigram recall   {rouge_n_recall(picked, doc.references, r2):.3f}")
print(f"summary LCS recall      {rouge_l_recall(picked, doc.references, r1):.3f}")
