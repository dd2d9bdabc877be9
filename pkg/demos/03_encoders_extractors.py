"""Three sentence encoders, four extractors, and who sees past decisions.

Run from the repository root:  python3 demos/03_encoders_extractors.py
"""

import numpy as np

from extsum.corpus import document
from extsum.embed import build_vocab, learned_embedding_table
from extsum.encoders import EncoderConfig, EncoderKind, encoder_output_dim
from extsum.extractors import (DecodeMode, ExtractorConfig, ExtractorKind,
                               extract_cheng_lapata, make_extractor_params)
from extsum.pipeline import build_model, predict_probs

doc = document(
    "demo-003",
    [
        ["prices", "rose", "sharply", "in", "march"],
        ["the", "bank", "held", "rates", "steady"],
        ["analysts", "expected", "a", "small", "cut"],
        ["markets", "closed", "mixed"],
    ],
    [["prices", "rose", "rates", "steady"]],
)

rng = np.random.default_rng(np.random.SeedSequence([3]))
table = learned_embedding_table(build_vocab([doc], 1), 8, rng)

print("per-sentence probabilities for every encoder/extractor pairing:")
for enc_kind in EncoderKind:
    enc_cfg = EncoderConfig(kind=enc_kind, rnn_hidden=4, cnn_windows=(2, 3),
                            cnn_maps=(3, 3))
    d_h = encoder_output_dim(enc_cfg, table.dim)
    print(f"\n  {enc_kind.value} encoder (sentence vectors of size {d_h}):")
    for ext_kind in ExtractorKind:
        ext_cfg = ExtractorConfig(kind=ext_kind, gru_hidden=4, mlp_hidden=4,
                                  doc_rep=4, pos_dim=2, pos_table_size=8)
        model = build_model(enc_cfg, ext_cfg, table, rng)
        probs = predict_probs(model, doc)
        print(f"    {ext_kind.value:13s} {np.array2string(probs, precision=3)}")

# the step-by-step extractor feeds its own previous decision back in, so
# forcing a different history moves every later probability (never the first)
print("\nforced-decision sensitivity of the step-by-step extractor:")
cfg = ExtractorConfig(kind=ExtractorKind.CHENG_LAPATA, gru_hidden=4, mlp_hidden=4)
params = make_extractor_params(cfg, 8, np.random.default_rng(7))
H = np.random.default_rng(8).normal(size=(4, 8))
for history in ([0, 0, 0, 0], [1, 0, 0, 0], [1, 1, 0, 0]):
    out = extract_cheng_lapata(H, params, DecodeMode.TEACHER_FORCED, history, cfg)
    print(f"  history {history} -> probs {np.array2string(out.probs, precision=3)}")
