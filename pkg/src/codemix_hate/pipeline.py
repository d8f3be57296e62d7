"""End-to-end stage wiring shared by the command line and experiment drivers."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from codemix_hate.augment import SynonymLexicon, augment_corpus, default_lexicon, load_lexicon
from codemix_hate.config import RunConfig
from codemix_hate.corpus import LabeledCorpus, MessageRecord, stratified_split
from codemix_hate.embeddings import (
    EmbeddingTable,
    Vocabulary,
    build_embedding_matrix,
    build_vocab,
    encode_corpus,
    load_embeddings,
)
from codemix_hate.evaluate import MetricsReport, evaluate
from codemix_hate.model import Model, init_model
from codemix_hate.preprocess import (
    STAGES,
    Resources,
    clean_text,
    preprocess_pipeline,
    remove_stopwords,
    tokenize,
    transliterate,
)
from codemix_hate.training import EncodedSet, TrainingHistory, train

logger = logging.getLogger(__name__)


@dataclass
class PreprocessStats:
    messages: int = 0
    dropped_empty: int = 0
    # total tokens after each stage, in STAGES order
    tokens: tuple[int, int, int] = (0, 0, 0)

    def lines(self) -> list[str]:
        out = [f"messages: {self.messages} (dropped {self.dropped_empty} empty after processing)"]
        for name, n in zip(STAGES, self.tokens):
            mean = n / self.messages if self.messages else 0.0
            out.append(f"  after {name:<17} tokens={n:<8d} mean/message={mean:.2f}")
        return out


def preprocess_corpus(corpus: LabeledCorpus, resources: Resources) -> tuple[LabeledCorpus, PreprocessStats]:
    """Processed text for every record; records left with no tokens are dropped."""
    kept: list[MessageRecord] = []
    totals = np.zeros(3, dtype=np.int64)
    dropped = 0
    for rec in corpus:
        msg = preprocess_pipeline(rec.text, resources, audit=True)
        totals += msg.stage_trace
        if not msg.tokens:
            dropped += 1
            continue
        kept.append(MessageRecord(rec.id, msg.text, rec.label, rec.source_id))
    stats = PreprocessStats(len(corpus), dropped, tuple(int(v) for v in totals))
    # drop augmented rows whose source vanished
    ids = {r.id for r in kept}
    kept = [r for r in kept if r.source_id is None or r.source_id in ids]
    return LabeledCorpus(kept), stats


def clean_only(corpus: LabeledCorpus) -> LabeledCorpus:
    """Cleaned and tokenised text without stopword removal or transliteration."""
    recs = [MessageRecord(r.id, " ".join(tokenize(clean_text(r.text))), r.label, r.source_id)
            for r in corpus if clean_text(r.text)]
    return LabeledCorpus(recs)


def finish_preprocessing(corpus: LabeledCorpus, resources: Resources) -> LabeledCorpus:
    recs = []
    for r in corpus:
        tokens = transliterate(remove_stopwords(r.text.split(), resources.stopwords),
                               resources.dictionary)
        if tokens:
            recs.append(MessageRecord(r.id, " ".join(tokens), r.label, r.source_id))
    ids = {r.id for r in recs}
    return LabeledCorpus(r for r in recs if r.source_id is None or r.source_id in ids)


def token_lists(corpus: LabeledCorpus) -> list[list[str]]:
    return [r.text.split() for r in corpus]


def encode_labeled(corpus: LabeledCorpus, vocab: Vocabulary, max_length: int) -> EncodedSet:
    indices, lengths = encode_corpus(token_lists(corpus), vocab, max_length)
    return EncodedSet(indices, lengths, np.array([int(r.label) for r in corpus], dtype=np.int64))


def resources_for(cfg: RunConfig) -> Resources:
    return Resources.from_paths(cfg.data.stopwords, cfg.data.dictionary)


def lexicon_for(cfg: RunConfig) -> SynonymLexicon:
    return load_lexicon(cfg.data.lexicon) if cfg.data.lexicon else default_lexicon()


def embedding_table_for(cfg: RunConfig) -> EmbeddingTable | None:
    if not cfg.data.embeddings:
        return None
    return load_embeddings(cfg.data.embeddings, cfg.model.embedding_dimension,
                           trainable=cfg.model.embeddings_trainable)


def build_model(cfg: RunConfig, vocab: Vocabulary, table: EmbeddingTable | None) -> Model:
    rng = np.random.default_rng(cfg.model.seed)
    matrix = build_embedding_matrix(vocab, table, rng, cfg.model.embedding_dimension)
    model = init_model(cfg.model, matrix, rng)
    model.vocab_digest = vocab.digest()
    return model


def split_validation(train_corpus: LabeledCorpus, cfg: RunConfig) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Carve the validation set out of original training records only."""
    originals = LabeledCorpus(r for r in train_corpus if not r.is_augmented)
    fit, val = stratified_split(originals, cfg.split.validation_fraction, cfg.split.seed + 1)
    val_ids = {r.id for r in val}
    fit = LabeledCorpus(r for r in train_corpus
                        if r.id not in val_ids and r.source_id not in val_ids)
    return fit, val


@dataclass
class TrainResult:
    model: Model
    vocabulary: Vocabulary
    history: TrainingHistory


def train_from_corpora(cfg: RunConfig, fit: LabeledCorpus, val: LabeledCorpus,
                       resume=None) -> TrainResult:
    if resume is not None and resume.vocabulary is not None:
        vocab = resume.vocabulary
    else:
        vocab = build_vocab(token_lists(fit), cfg.vocab.min_frequency)
    model = build_model(cfg, vocab, embedding_table_for(cfg)) if resume is None else resume.model
    fit_set = encode_labeled(fit, vocab, cfg.model.max_length)
    val_set = encode_labeled(val, vocab, cfg.model.max_length)
    best, history = train(model, fit_set, val_set, cfg.schedule, vocabulary=vocab, resume=resume)
    return TrainResult(best, vocab, history)


@dataclass
class ExperimentResult:
    report: MetricsReport
    history: TrainingHistory
    train_counts: tuple[int, int, int]


def run_experiment(cfg: RunConfig, raw: LabeledCorpus, lexicon: SynonymLexicon | None = None,
                   resources: Resources | None = None) -> ExperimentResult:
    """Preprocess, split, optionally augment, train and evaluate one configuration.

    The order matches running the ``preprocess``, ``split``, ``augment``,
    ``train`` and ``evaluate`` commands one after another.
    """
    resources = resources or resources_for(cfg)
    lexicon = lexicon or lexicon_for(cfg)
    pre_stage = cfg.augment.enabled and cfg.augment.stage == "pre_preprocess"
    processed = clean_only(raw) if pre_stage else preprocess_corpus(raw, resources)[0]
    train_part, test = stratified_split(processed, cfg.split.test_fraction, cfg.split.seed)
    fit, val = split_validation(train_part, cfg)
    if cfg.augment.enabled:
        fit = augment_corpus(fit, cfg.augment.to_augment_config(), lexicon, resources.stopwords)
    if pre_stage:
        fit, val, test = (finish_preprocessing(c, resources) for c in (fit, val, test))
    result = train_from_corpora(cfg, fit, val)
    test_set = encode_labeled(test, result.vocabulary, cfg.model.max_length)
    report = evaluate(result.model, test_set, seed=cfg.schedule.seed, config_hash=cfg.digest())
    return ExperimentResult(report, result.history, fit.counts)


def grid_points(cfg: RunConfig) -> list[dict[str, object]]:
    """Cartesian product of the ``grid`` lists, in key order then value order."""
    import itertools

    keys = list(cfg.grid)
    if not keys:
        return [{}]
    return [dict(zip(keys, combo)) for combo in itertools.product(*(cfg.grid[k] for k in keys))]


def cell_name(point: dict[str, object]) -> str:
    if not point:
        return "base"
    return ",".join(f"{k.split('.')[-1]}={v}" for k, v in point.items())


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    """Same configuration with every stage's seed set from ``seed``."""
    return replace(
        cfg,
        split=replace(cfg.split, seed=seed),
        augment=replace(cfg.augment, seed=seed),
        model=replace(cfg.model, seed=seed),
        schedule=replace(cfg.schedule, seed=seed),
    )


