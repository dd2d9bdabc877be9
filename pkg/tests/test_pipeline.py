"""Loss arithmetic, batching, training loop, generation, evaluation."""

import math
from dataclasses import replace

import numpy as np
import pytest

from extsum.autodiff import EVAL, Tape, Tensor, backward
from extsum.corpus import BudgetConfig, PosClass, Token
from extsum.encoders import EncoderConfig, EncoderKind
from extsum.extractors import DecodeMode, ExtractorConfig, ExtractorKind
from extsum.metrics import (MultiRef, RougeConfig, oracle_extract_trace,
                            rouge_n_recall)
from extsum.pipeline import (LossWeights, Model, TrainConfig, TrainingError,
                             build_model, evaluate_system, generate_summary,
                             label_class_weights, lead_summarizer, lead_summary,
                             load_model_tensors, make_batch, model_forward,
                             oracle_summarizer, oracle_summary, predict_probs,
                             train, weighted_nll_loss)

from .helpers import doc, fixed_table, random_doc

VOCAB = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
         "hotel", "india", "juliet"]


def tiny_model(kind=ExtractorKind.RNN, seed=0, dropout=0.25):
    table = fixed_table(VOCAB, dim=4, seed=90)
    enc_cfg = EncoderConfig(kind=EncoderKind.AVERAGING, dropout=dropout)
    ext_cfg = ExtractorConfig(kind=kind, gru_hidden=3, mlp_hidden=3, doc_rep=3,
                              pos_dim=2, pos_table_size=4, dropout=dropout)
    return build_model(enc_cfg, ext_cfg, table, seed)


def labeled_corpus(rng, count, n_range=(2, 4)):
    docs = []
    for i in range(count):
        n = int(rng.integers(*n_range, endpoint=True))
        d = random_doc(rng, VOCAB, n, 4, doc_id=f"d{i}")
        labels = rng.integers(0, 2, size=n)
        if labels.sum() == 0:
            labels[0] = 1
        docs.append(replace(d, labels=tuple(int(v) for v in labels)))
    return docs


# -- loss weights -----------------------------------------------------------------


def test_class_weights_nine_to_one():
    docs = [doc("a", ["w x", "y z"], ["w"], labels=[1, 0]),
            doc("b", ["a b", "c d", "e f", "g h"], ["a"], labels=[0, 0, 0, 0]),
            doc("c", ["i j", "k l", "m n", "o p"], ["i"], labels=[0, 0, 0, 0])]
    w = label_class_weights(docs)
    assert w.w0 == 1.0
    assert w.w1 == 9.0


def test_class_weights_balanced():
    docs = [doc("a", ["w x", "y z"], ["w"], labels=[1, 0])]
    assert label_class_weights(docs).w1 == 1.0


def test_class_weights_counting_oracle():
    rng = np.random.default_rng(0)
    docs = labeled_corpus(rng, 25)
    ones = sum(sum(d.labels) for d in docs)
    zeros = sum(len(d.labels) - sum(d.labels) for d in docs)
    assert label_class_weights(docs).w1 == zeros / ones


def test_class_weights_require_positives():
    docs = [doc("a", ["w x"], ["w"], labels=[0])]
    with pytest.raises(ValueError, match="degenerate"):
        label_class_weights(docs)


def test_class_weights_require_labels():
    docs = [doc("a", ["w x"], ["w"])]
    with pytest.raises(ValueError, match="no labels"):
        label_class_weights(docs)


# -- weighted NLL -------------------------------------------------------------------


def test_nll_hand_fixture():
    tape = Tape()
    probs = Tensor(np.array([[0.5, 0.8, 0.1]]), requires_grad=True)
    gold = np.array([[1.0, 0.0, 0.0]])
    mask = np.ones((1, 3))
    loss = weighted_nll_loss(tape, probs, gold, LossWeights(w1=2.0), mask)
    want = -(2.0 * math.log(0.5) + math.log(1.0 - 0.8) + math.log(1.0 - 0.1))
    assert abs(loss.item() - want) < 1e-12


def test_nll_perfect_fit_approaches_zero():
    tape = Tape()
    eps = 1e-12
    probs = Tensor(np.array([[1.0 - eps, eps, eps]]))
    gold = np.array([[1.0, 0.0, 0.0]])
    loss = weighted_nll_loss(tape, probs, gold, LossWeights(w1=3.0),
                             np.ones((1, 3)))
    assert 0.0 <= loss.item() < 1e-9


def test_nll_masked_positions_ignored():
    tape = Tape()
    probs = Tensor(np.array([[0.5, 0.8, 0.25]]))
    gold = np.array([[1.0, 0.0, 1.0]])
    mask = np.array([[1.0, 1.0, 0.0]])
    loss = weighted_nll_loss(tape, probs, gold, LossWeights(w1=1.0), mask)
    want = -(math.log(0.5) + math.log(0.2))
    assert abs(loss.item() - want) < 1e-12


def test_nll_saturated_probability_is_an_error():
    tape = Tape()
    probs = Tensor(np.array([[0.5, 1.0]]))
    gold = np.array([[1.0, 1.0]])
    with pytest.raises(TrainingError, match="saturated"):
        weighted_nll_loss(tape, probs, gold, LossWeights(w1=1.0), np.ones((1, 2)))


def test_nll_saturation_under_mask_is_fine():
    tape = Tape()
    probs = Tensor(np.array([[0.5, 0.0]]))
    gold = np.array([[1.0, 0.0]])
    mask = np.array([[1.0, 0.0]])
    loss = weighted_nll_loss(tape, probs, gold, LossWeights(w1=1.0), mask)
    assert abs(loss.item() + math.log(0.5)) < 1e-12


def test_nll_shape_mismatch_rejected():
    tape = Tape()
    with pytest.raises(ValueError, match="shape"):
        weighted_nll_loss(tape, Tensor(np.full((1, 3), 0.5)), np.zeros((1, 2)),
                          LossWeights(w1=1.0), np.ones((1, 3)))


def test_nll_gradient_is_weighted_residual():
    # through a sigmoid the NLL gradient w.r.t. the logit is w(y) (p - y)
    tape = Tape()
    x = Tensor(np.array([[0.3, -0.7, 1.2]]), requires_grad=True)
    probs = tape.sigmoid(x)
    gold = np.array([[1.0, 0.0, 1.0]])
    weights = LossWeights(w1=4.0)
    loss = weighted_nll_loss(tape, probs, gold, weights, np.ones((1, 3)))
    backward(tape, loss)
    w = np.where(gold > 0, weights.w1, weights.w0)
    want = w * (probs.data - gold)
    assert np.max(np.abs(x.grad - want)) < 1e-12


def test_loss_weights_validate():
    with pytest.raises(ValueError):
        LossWeights(w1=0.0)


# -- batching ---------------------------------------------------------------------


def test_make_batch_layout():
    table = fixed_table(VOCAB, dim=4, seed=1)
    d1 = doc("a", ["alpha bravo charlie", "delta"], ["alpha"], labels=[1, 0])
    d2 = doc("b", ["echo foxtrot"], ["echo"])
    from extsum.corpus import Sentence
    old = d2.sentences[0].tokens
    marked = Sentence(tokens=(old[0], replace(old[1], ablated=True)))
    d2 = replace(d2, sentences=(marked,))
    batch = make_batch([d1, d2], table)
    assert batch.indices.shape == (2, 2, 3)
    assert batch.indices[0, 0, 0] == table.row_of("alpha")
    assert batch.indices[0, 1, 1] == 0  # padding
    assert batch.token_mask[0, 0, :, 0].tolist() == [1.0, 1.0, 1.0]
    assert batch.token_mask[0, 1, :, 0].tolist() == [1.0, 0.0, 0.0]
    assert batch.sent_mask[:, :, 0].tolist() == [[1.0, 1.0], [1.0, 0.0]]
    # ablated token stays in token_mask but is dropped from keep
    assert batch.token_mask[1, 0, 1, 0] == 1.0
    assert batch.keep[1, 0, 1, 0] == 0.0
    assert batch.gold[0].tolist() == [1.0, 0.0]
    assert batch.gold[1].tolist() == [0.0, 0.0]  # unlabeled -> zeros


def test_make_batch_rejects_empty():
    table = fixed_table(VOCAB, dim=4, seed=1)
    with pytest.raises(ValueError):
        make_batch([], table)


@pytest.mark.parametrize("kind", list(ExtractorKind))
def test_batched_loss_equals_sum_of_singles(kind):
    model = tiny_model(kind=kind, seed=3)
    rng = np.random.default_rng(4)
    docs = labeled_corpus(rng, 3, n_range=(1, 4))
    weights = LossWeights(w1=2.5)

    def loss_of(doc_list):
        batch = make_batch(doc_list, model.table)
        tape = Tape()
        out = model_forward(tape, model, batch, mode=EVAL,
                            decode_mode=DecodeMode.TEACHER_FORCED)
        return weighted_nll_loss(tape, out.probs, batch.gold, weights,
                                 batch.sent_mask[..., 0]).item()

    total = loss_of(docs)
    singles = sum(loss_of([d]) for d in docs)
    assert abs(total - singles) < 1e-10


def test_predict_probs_shape_and_range():
    model = tiny_model(seed=5)
    d = doc("a", ["alpha bravo", "charlie", "delta echo"], ["alpha"])
    p = predict_probs(model, d)
    assert p.shape == (3,)
    assert np.all((p > 0) & (p < 1))


# -- model bundle --------------------------------------------------------------------


def test_model_tensor_names_are_disjoint():
    model = tiny_model(kind=ExtractorKind.SUMMARUNNER, seed=6)
    names = model.tensors()
    from extsum.encoders import encoder_tensors
    from extsum.extractors import extractor_tensors
    expected = (len(model.table.params())
                + len(encoder_tensors(model.encoder_params))
                + len(extractor_tensors(model.extractor_params)))
    assert len(names) == expected


def test_load_model_tensors_roundtrip():
    src = tiny_model(seed=7)
    dst = tiny_model(seed=8)
    d = doc("a", ["alpha bravo", "charlie delta"], ["alpha"])
    assert not np.allclose(predict_probs(src, d), predict_probs(dst, d))
    load_model_tensors(dst, src.tensors())
    assert np.array_equal(predict_probs(src, d), predict_probs(dst, d))


def test_load_model_tensors_rejects_name_mismatch():
    src = tiny_model(seed=7)
    dst = tiny_model(kind=ExtractorKind.SEQ2SEQ, seed=8)
    with pytest.raises(ValueError, match="parameter names"):
        load_model_tensors(dst, src.tensors())


def test_load_model_tensors_rejects_shape_mismatch():
    src = tiny_model(seed=7)
    flat = dict(src.tensors())
    name = "ext.rnn.head.U"
    assert name in flat
    flat[name] = Tensor(np.zeros((1, 1)))
    with pytest.raises(ValueError, match="shape mismatch"):
        load_model_tensors(tiny_model(seed=9), flat)


# -- train config --------------------------------------------------------------------


def test_teacher_forcing_defaults_by_kind():
    cfg = TrainConfig(seed=0, budget=BudgetConfig(budget_words=10), max_epochs=50)
    assert cfg.resolve_teacher_forcing(ExtractorKind.CHENG_LAPATA) == 25
    assert cfg.resolve_teacher_forcing(ExtractorKind.RNN) == 0
    assert cfg.resolve_teacher_forcing(ExtractorKind.SEQ2SEQ) == 0
    assert cfg.resolve_teacher_forcing(ExtractorKind.SUMMARUNNER) == 0


def test_explicit_teacher_forcing_honored():
    cfg = TrainConfig(seed=0, budget=BudgetConfig(budget_words=10),
                      max_epochs=10, teacher_forcing_epochs=7)
    assert cfg.resolve_teacher_forcing(ExtractorKind.RNN) == 7


def test_train_config_validation():
    budget = BudgetConfig(budget_words=10)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, budget=budget, max_epochs=-1)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, budget=budget, batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, budget=budget, learning_rate=0.0)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, budget=budget, max_epochs=5, teacher_forcing_epochs=6)
    with pytest.raises(ValueError):
        TrainConfig(seed=0, budget=budget, early_stop_metric="valid_rouge1")


# -- training loop ---------------------------------------------------------------------


def train_setup(kind=ExtractorKind.RNN, seed=11, max_epochs=3, **kw):
    model = tiny_model(kind=kind, seed=seed)
    rng = np.random.default_rng(seed + 1)
    train_docs = labeled_corpus(rng, 6)
    valid_docs = labeled_corpus(rng, 2)
    cfg = TrainConfig(seed=seed, budget=BudgetConfig(budget_words=6),
                      max_epochs=max_epochs, batch_size=4,
                      learning_rate=1e-3, log_timing=False, **kw)
    rouge_cfg = RougeConfig(order=2)
    return model, train_docs, valid_docs, cfg, rouge_cfg


def test_zero_epochs_returns_initialization():
    model, tr, va, cfg, rc = train_setup(max_epochs=0)
    before = {k: v.data.copy() for k, v in model.tensors().items()}
    result = train(model, tr, va, cfg, rc)
    assert result.log == []
    assert result.best_epoch == 0
    assert result.best_score == 0.0
    for name, data in before.items():
        assert np.array_equal(result.best_tensors[name], data)


def test_train_log_schema():
    model, tr, va, cfg, rc = train_setup(max_epochs=2)
    result = train(model, tr, va, cfg, rc)
    assert len(result.log) == 2
    for i, row in enumerate(result.log, start=1):
        assert sorted(row) == ["epoch", "mode", "train_loss", "valid_rouge2",
                               "wall_ms"]
        assert row["epoch"] == i
        assert row["mode"] == "predicted"
        assert row["wall_ms"] == 0  # log_timing off
        assert np.isfinite(row["train_loss"])
        assert 0.0 <= row["valid_rouge2"] <= 1.0


def test_train_log_timing_records_nonnegative_ms():
    model, tr, va, cfg, rc = train_setup(max_epochs=1)
    cfg = replace(cfg, log_timing=True)
    result = train(model, tr, va, cfg, rc)
    assert result.log[0]["wall_ms"] >= 0


def test_train_deterministic_given_seed():
    out = []
    for _ in range(2):
        model, tr, va, cfg, rc = train_setup(max_epochs=3)
        out.append(train(model, tr, va, cfg, rc))
    assert out[0].log == out[1].log
    assert out[0].best_epoch == out[1].best_epoch
    for name in out[0].best_tensors:
        assert np.array_equal(out[0].best_tensors[name], out[1].best_tensors[name])


def test_prefix_of_run_invariant_to_max_epochs():
    model_a, tr, va, cfg_a, rc = train_setup(max_epochs=3)
    log_a = train(model_a, tr, va, cfg_a, rc).log
    model_b, tr, va, cfg_b, rc = train_setup(max_epochs=2)
    log_b = train(model_b, tr, va, cfg_b, rc).log
    assert log_a[:2] == log_b


def test_early_stop_keeps_first_argmax_epoch():
    model, tr, va, cfg, rc = train_setup(max_epochs=4)
    result = train(model, tr, va, cfg, rc)
    scores = [row["valid_rouge2"] for row in result.log]
    best = max(scores)
    assert result.best_epoch == scores.index(best) + 1
    assert result.best_score == best


def test_retraining_to_best_epoch_reproduces_checkpoint():
    model, tr, va, cfg, rc = train_setup(max_epochs=4, seed=17)
    full = train(model, tr, va, cfg, rc)
    assert full.best_epoch >= 1
    model2, tr, va, cfg2, rc = train_setup(max_epochs=4, seed=17)
    cfg2 = replace(cfg2, max_epochs=full.best_epoch)
    rerun = train(model2, tr, va, cfg2, rc)
    assert rerun.best_epoch == full.best_epoch
    for name in full.best_tensors:
        assert np.array_equal(full.best_tensors[name], rerun.best_tensors[name])


def test_training_moves_parameters_and_loss_is_finite():
    model, tr, va, cfg, rc = train_setup(max_epochs=2)
    before = {k: v.data.copy() for k, v in model.tensors().items()}
    result = train(model, tr, va, cfg, rc)
    moved = any(not np.array_equal(model.tensors()[k].data, before[k])
                for k in before)
    assert moved
    assert all(np.isfinite(row["train_loss"]) for row in result.log)


def test_teacher_forcing_schedule_boundary_in_log():
    model, tr, va, cfg, rc = train_setup(kind=ExtractorKind.CHENG_LAPATA,
                                         max_epochs=4, seed=19)
    result = train(model, tr, va, cfg, rc)
    modes = [row["mode"] for row in result.log]
    assert modes == ["teacher_forced", "teacher_forced", "predicted", "predicted"]


def test_train_requires_nonempty_splits():
    model, tr, va, cfg, rc = train_setup()
    with pytest.raises(ValueError):
        train(model, [], va, cfg, rc)
    with pytest.raises(ValueError):
        train(model, tr, [], cfg, rc)


def test_train_requires_labels():
    model, tr, va, cfg, rc = train_setup()
    unlabeled = [replace(d, labels=None) for d in tr]
    with pytest.raises(ValueError, match="no labels"):
        train(model, unlabeled, va, cfg, rc)


# -- generation -----------------------------------------------------------------------


def sentence_of_len(word: str, n: int) -> str:
    return " ".join(f"{word}{i}" for i in range(n))


def test_generate_summary_ranking_fixture():
    d = doc("a", [sentence_of_len("a", 60), sentence_of_len("b", 50),
                  sentence_of_len("c", 50)], ["a0"])
    out = generate_summary(d, [0.9, 0.1, 0.8], BudgetConfig(budget_words=100))
    assert out.indices == (0, 2)
    assert len(out.tokens) == 110  # crossing sentence included
    assert out.tokens[:60] == d.sentences[0].words()
    assert out.tokens[60:] == d.sentences[2].words()


def test_generate_summary_exhausts_short_document():
    d = doc("a", ["alpha bravo", "charlie"], ["alpha"])
    out = generate_summary(d, [0.2, 0.8], BudgetConfig(budget_words=100))
    assert out.indices == (0, 1)
    assert out.tokens == ("alpha", "bravo", "charlie")


def test_generate_summary_tie_prefers_earlier():
    d = doc("a", ["alpha bravo", "charlie delta"], ["alpha"])
    out = generate_summary(d, [0.5, 0.5], BudgetConfig(budget_words=2))
    assert out.indices == (0,)


def test_generate_summary_sort_and_accumulate_oracle():
    rng = np.random.default_rng(20)
    budget = BudgetConfig(budget_words=8)
    for trial in range(50):
        d = random_doc(rng, VOCAB, int(rng.integers(1, 7)), 5,
                       doc_id=f"d{trial}")
        probs = rng.random(d.n_sentences)
        out = generate_summary(d, probs, budget)
        order = sorted(range(d.n_sentences), key=lambda i: (-probs[i], i))
        want, total = [], 0
        for i in order:
            want.append(i)
            total += d.sentences[i].word_count
            if total >= budget.budget_words:
                break
        assert out.indices == tuple(sorted(want))
        assert list(out.indices) == sorted(out.indices)
        if total < budget.budget_words:
            assert len(out.indices) == d.n_sentences
        else:
            assert len(out.tokens) >= budget.budget_words


def test_generate_summary_validates_length():
    d = doc("a", ["alpha bravo"], ["alpha"])
    with pytest.raises(ValueError):
        generate_summary(d, [0.5, 0.5], BudgetConfig(budget_words=2))


def test_lead_summary_cuts_mid_sentence():
    d = doc("a", ["alpha bravo charlie", "delta echo"], ["alpha"])
    assert lead_summary(d, BudgetConfig(budget_words=4)) == (
        "alpha", "bravo", "charlie", "delta")
    assert lead_summary(d, BudgetConfig(budget_words=50)) == (
        "alpha", "bravo", "charlie", "delta", "echo")


def test_lead_summary_slice_oracle():
    rng = np.random.default_rng(21)
    for trial in range(20):
        d = random_doc(rng, VOCAB, int(rng.integers(1, 5)), 6)
        flat = tuple(t for s in d.sentences for t in s.words())
        budget = int(rng.integers(1, 12))
        assert lead_summary(d, BudgetConfig(budget_words=budget)) == flat[:budget]


def test_oracle_summary_selects_flagged():
    d = doc("a", ["alpha bravo", "charlie", "delta"], ["alpha"])
    out = oracle_summary(d, [1, 0, 1])
    assert out.indices == (0, 2)
    assert out.tokens == ("alpha", "bravo", "delta")
    with pytest.raises(ValueError):
        oracle_summary(d, [1, 0])


# -- evaluation -----------------------------------------------------------------------


def test_evaluate_system_metrics_and_means():
    budget = BudgetConfig(budget_words=3)
    rc = RougeConfig(order=1)
    docs = [doc("a", ["alpha bravo", "charlie"], ["alpha bravo charlie"]),
            doc("b", ["delta echo", "foxtrot"], ["delta echo foxtrot"])]
    report = evaluate_system(docs, lead_summarizer(budget), budget, rc, "lead")
    assert report.system == "lead"
    assert sorted(report.per_doc) == ["a", "b"]
    assert sorted(report.metric_names()) == ["rouge1", "rouge2", "rougeL"]
    assert report.per_doc["a"]["rouge1"] == 1.0
    # lead takes all 3 words in order, so both bigrams survive
    assert report.per_doc["a"]["rouge2"] == 1.0
    assert report.means["rouge1"] == 1.0


def test_evaluate_system_truncates_system_side_only():
    budget = BudgetConfig(budget_words=2)
    rc = RougeConfig(order=1)
    d = doc("a", ["alpha bravo charlie delta"], ["alpha bravo charlie delta"])
    report = evaluate_system([d], lambda doc_: doc_.sentences[0].words(),
                             budget, rc, "sys")
    assert report.per_doc["a"]["rouge1"] == 0.5


def test_evaluate_oracle_matches_trace_scores():
    rng = np.random.default_rng(22)
    budget = BudgetConfig(budget_words=10_000)  # never truncates
    rc = RougeConfig(order=1)
    docs = []
    finals = {}
    for i in range(10):
        d = random_doc(rng, VOCAB, int(rng.integers(2, 6)), 5, doc_id=f"d{i}")
        steps = oracle_extract_trace(d, budget, rc)
        labels = [0] * d.n_sentences
        for s in steps:
            labels[s.index] = 1
        finals[d.id] = steps[-1].score if steps else 0.0
        docs.append(replace(d, labels=tuple(labels)))
    report = evaluate_system(docs, oracle_summarizer(budget, rc), budget, rc,
                             "oracle")
    for doc_id, score in finals.items():
        assert abs(report.per_doc[doc_id]["rouge1"] - score) < 1e-12


def test_oracle_beats_lead_on_mean_rouge1():
    rng = np.random.default_rng(23)
    budget = BudgetConfig(budget_words=6)
    rc = RougeConfig(order=1)
    docs = [random_doc(rng, VOCAB, int(rng.integers(2, 6)), 5, doc_id=f"d{i}")
            for i in range(20)]
    lead = evaluate_system(docs, lead_summarizer(budget), budget, rc, "lead")
    oracle = evaluate_system(docs, oracle_summarizer(budget, rc), budget, rc,
                             "oracle")
    assert oracle.means["rouge1"] >= lead.means["rouge1"]


def test_evaluate_system_deterministic():
    budget = BudgetConfig(budget_words=4)
    rc = RougeConfig(order=1)
    rng = np.random.default_rng(24)
    docs = [random_doc(rng, VOCAB, 3, 4, doc_id=f"d{i}") for i in range(5)]
    a = evaluate_system(docs, lead_summarizer(budget), budget, rc, "lead")
    b = evaluate_system(docs, lead_summarizer(budget), budget, rc, "lead")
    assert a.per_doc == b.per_doc and a.means == b.means


def test_evaluate_system_rejects_empty():
    budget = BudgetConfig(budget_words=4)
    with pytest.raises(ValueError):
        evaluate_system([], lead_summarizer(budget), budget,
                        RougeConfig(order=1), "lead")
