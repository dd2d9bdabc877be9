"""Extractive summarization toolkit.

Neural sentence extraction trained against greedy oracle labels, with
budgeted summary generation, n-gram recall evaluation, and corpus
transforms (part-of-speech ablation, sentence shuffling) for probing what
the models actually learn. All numerics run on a small reverse-mode
autodiff tape over float64 numpy arrays.
"""

from .autodiff import (TRAIN, EVAL, AdamState, AutodiffError, GruParams,
                       NonFiniteGradient, Tape, Tensor, adam_step, backward,
                       clip_gradients, collect_grads, dropout_mask, gru_cell,
                       gru_params, load_checkpoint, save_checkpoint, xavier_init,
                       zero_grads, zeros_init)
from .corpus import (UNK_TOKEN, BudgetConfig, DatasetError, Document, PosClass,
                     Sentence, Split, Token, ablate_pos_class, document,
                     load_dataset, save_dataset, sentence, shuffle_document)
from .embed import (EmbeddingError, EmbeddingPolicy, EmbeddingTable, UnkRule,
                    build_vocab, learned_embedding_table,
                    load_pretrained_embeddings, lookup_sentence_embeddings,
                    save_embeddings)
from .encoders import (EncoderConfig, EncoderKind, encode_avg, encode_batch,
                       encode_cnn, encode_rnn, encoder_output_dim,
                       make_encoder_params)
from .extractors import (AUTO_REGRESSIVE, DecodeMode, ExtractorConfig,
                         ExtractorKind, extract_batch, extract_cheng_lapata,
                         extract_rnn, extract_seq2seq, extract_summarunner,
                         make_extractor_params)
from .metrics import (MultiRef, RougeConfig, ScoreReport,
                      approx_randomization_test, average_reports,
                      oracle_extract_labels, oracle_extract_trace,
                      rouge_l_recall, rouge_n_recall, stopword_set)
from .pipeline import (Model, SummaryResult, TrainConfig, TrainingError,
                       build_model, evaluate_system, generate_summary,
                       label_class_weights, lead_summary, lead_summarizer,
                       load_model_tensors, make_batch, model_forward,
                       model_summarizer, oracle_summarizer, predict_probs,
                       train, weighted_nll_loss)
from .synth import SynthSpec, generate_corpus, generate_document, planted_sources

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # autodiff
    "TRAIN", "EVAL", "AdamState", "AutodiffError", "GruParams",
    "NonFiniteGradient", "Tape", "Tensor", "adam_step", "backward",
    "clip_gradients", "collect_grads", "dropout_mask", "gru_cell", "gru_params",
    "load_checkpoint", "save_checkpoint", "xavier_init", "zero_grads",
    "zeros_init",
    # corpus
    "UNK_TOKEN", "BudgetConfig", "DatasetError", "Document", "PosClass",
    "Sentence", "Split", "Token", "ablate_pos_class", "document",
    "load_dataset", "save_dataset", "sentence", "shuffle_document",
    # embeddings
    "EmbeddingError", "EmbeddingPolicy", "EmbeddingTable", "UnkRule",
    "build_vocab", "learned_embedding_table", "load_pretrained_embeddings",
    "lookup_sentence_embeddings", "save_embeddings",
    # encoders
    "EncoderConfig", "EncoderKind", "encode_avg", "encode_batch", "encode_cnn",
    "encode_rnn", "encoder_output_dim", "make_encoder_params",
    # extractors
    "AUTO_REGRESSIVE", "DecodeMode", "ExtractorConfig", "ExtractorKind",
    "extract_batch", "extract_cheng_lapata", "extract_rnn", "extract_seq2seq",
    "extract_summarunner", "make_extractor_params",
    # metrics
    "MultiRef", "RougeConfig", "ScoreReport", "approx_randomization_test",
    "average_reports", "oracle_extract_labels", "oracle_extract_trace",
    "rouge_l_recall", "rouge_n_recall", "stopword_set",
    # pipeline
    "Model", "SummaryResult", "TrainConfig", "TrainingError", "build_model",
    "evaluate_system", "generate_summary", "label_class_weights",
    "lead_summary", "lead_summarizer", "load_model_tensors", "make_batch",
    "model_forward", "model_summarizer", "oracle_summarizer", "predict_probs",
    "train", "weighted_nll_loss",
    # synthetic corpora
    "SynthSpec", "generate_corpus", "generate_document", "planted_sources",
]
