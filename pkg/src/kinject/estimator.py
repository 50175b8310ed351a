"""scikit-learn style wrappers around the matcher, splicer and three-stage pipeline."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.model_selection import train_test_split
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_consistent_length, check_is_fitted

from . import pipeline
from .config import RunConfig
from .data import Dataset
from .encoding import splice
from .kg import Triple, TripleStore, build_surface_dict, load_triples
from .matcher import gather_facts, match_subjects, tokenize


def _check_texts(X):
    if isinstance(X, str):
        raise ValueError("expected a sequence of sentences, got a single string")
    texts = list(X)
    if not texts:
        raise ValueError("empty input: need at least one sentence")
    bad = [type(t).__name__ for t in texts if not isinstance(t, str)]
    if bad:
        raise TypeError(f"sentences must be str, got {bad[0]}")
    return texts


def _triple_store(triples, budget=None):
    if triples is None:
        store = TripleStore()
    elif isinstance(triples, TripleStore):
        store = triples
    elif isinstance(triples, (str, Path)):
        store = load_triples(triples)
    else:
        store = TripleStore.from_triples(t if isinstance(t, Triple) else Triple.from_text(*t) for t in triples)
    return store if budget is None else store.truncated(budget)


class KnowledgeSplicer(BaseEstimator, TransformerMixin):
    """Fit on a KG; transform sentences into spliced token sequences.

    ``fit`` accepts a ``TripleStore``, a triple file path or an iterable of
    ``(subject, predicate, object)`` strings.
    """

    def __init__(self, max_ngram=4, per_subject_cap=1, per_sentence_cap=8, max_len=None, triple_budget=None, freq_file=None):
        self.max_ngram = max_ngram
        self.per_subject_cap = per_subject_cap
        self.per_sentence_cap = per_sentence_cap
        self.max_len = max_len
        self.triple_budget = triple_budget
        self.freq_file = freq_file

    def fit(self, X, y=None):
        self.store_ = _triple_store(X, self.triple_budget)
        self.surface_dict_ = build_surface_dict(self.store_, self.freq_file)
        return self

    def match(self, X):
        """(merged tokens, facts) per sentence."""
        check_is_fitted(self, "surface_dict_")
        out = []
        for text in _check_texts(X):
            merged, result = match_subjects(tokenize(text), self.surface_dict_, self.max_ngram)
            out.append((merged, gather_facts(result, self.store_, self.per_subject_cap, self.per_sentence_cap)))
        return out

    def transform(self, X):
        return [splice(merged, result.facts, self.max_len) for merged, result in self.match(X)]


class KnowledgeInjectedClassifier(BaseEstimator, ClassifierMixin):
    """Sentence classifier with an optional KG injector in front of the backbone.

    ``fit`` runs masked-LM pretraining and fine-tuning on ``X``, then, when
    ``triples`` is given, trains the injector with the backbone frozen.
    A stratified ``validation_fraction`` of ``X`` picks the best checkpoint
    of each supervised stage.
    """

    def __init__(
        self,
        triples=None,
        triple_budget=None,
        d_model=128,
        backbone_layers=2,
        backbone_heads=2,
        injector_preset="base",
        injector_layers=0,
        injector_heads=0,
        dropout=0.1,
        pretrain_steps=200,
        finetune_steps=300,
        inject_steps=300,
        lr_pretrain=3e-4,
        lr_finetune=1e-4,
        lr_inject=3e-4,
        batch_size=16,
        eval_every=50,
        max_ngram=4,
        per_sentence_cap=8,
        max_seq_len=128,
        freeze_backbone=True,
        validation_fraction=0.2,
        random_state=0,
    ):
        self.triples = triples
        self.triple_budget = triple_budget
        self.d_model = d_model
        self.backbone_layers = backbone_layers
        self.backbone_heads = backbone_heads
        self.injector_preset = injector_preset
        self.injector_layers = injector_layers
        self.injector_heads = injector_heads
        self.dropout = dropout
        self.pretrain_steps = pretrain_steps
        self.finetune_steps = finetune_steps
        self.inject_steps = inject_steps
        self.lr_pretrain = lr_pretrain
        self.lr_finetune = lr_finetune
        self.lr_inject = lr_inject
        self.batch_size = batch_size
        self.eval_every = eval_every
        self.max_ngram = max_ngram
        self.per_sentence_cap = per_sentence_cap
        self.max_seq_len = max_seq_len
        self.freeze_backbone = freeze_backbone
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _run_config(self):
        return RunConfig(
            seed=self.random_state, d_model=self.d_model, backbone_layers=self.backbone_layers,
            backbone_heads=self.backbone_heads, injector_preset=self.injector_preset,
            injector_layers=self.injector_layers, injector_heads=self.injector_heads, dropout=self.dropout,
            pretrain_steps=self.pretrain_steps, finetune_steps=self.finetune_steps, inject_steps=self.inject_steps,
            lr_pretrain=self.lr_pretrain, lr_finetune=self.lr_finetune, lr_inject=self.lr_inject,
            batch_size=self.batch_size, eval_every=self.eval_every, max_ngram=self.max_ngram,
            per_sentence_cap=self.per_sentence_cap, max_seq_len=self.max_seq_len,
            freeze_backbone_stage3=self.freeze_backbone, triple_budget=self.triple_budget,
        )

    def fit(self, X, y):
        texts = _check_texts(X)
        y = np.asarray(y)
        check_consistent_length(texts, y)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError(f"need at least two classes, got {self.classes_.tolist()}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(f"validation_fraction must be in (0, 1), got {self.validation_fraction}")

        cfg = self._run_config()
        labels = self.classes_.tolist()
        fit_x, val_x, fit_y, val_y = train_test_split(
            texts, y.tolist(), test_size=self.validation_fraction, random_state=self.random_state, stratify=y
        )
        train = Dataset(list(zip(fit_x, fit_y)), "train")
        dev = Dataset(list(zip(val_x, val_y)), "dev")

        stage1 = pipeline.pretrain(cfg, train.texts)
        self.base_model_, report = pipeline.finetune(cfg, stage1, train, dev, labels)
        self.reports_ = [stage1.report, report]
        self.model_ = self.base_model_
        if self.triples is not None:
            store = _triple_store(self.triples, self.triple_budget)
            knowledge = pipeline.Knowledge(store, build_surface_dict(store))
            self.model_, report = pipeline.inject_train(cfg, self.base_model_, train, dev, knowledge)
            self.reports_.append(report)
        self.best_validation_score_ = report.accuracy["dev"] / 100.0
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return np.array(self.model_.predict(_check_texts(X)), dtype=self.classes_.dtype)

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        prepared = self.model_.prepare(_check_texts(X))
        out = [self.model_.logits(prepared[k : k + pipeline.EVAL_BATCH]).data for k in range(0, len(prepared), pipeline.EVAL_BATCH)]
        return np.vstack(out)
