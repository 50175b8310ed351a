"""Three-stage training: masked-LM pretraining, text-only fine-tuning, knowledge injection.

The in-memory functions (``pretrain``, ``finetune``, ``inject_train``,
``evaluate``, ``ablate``) return plain objects; the ``stage*`` wrappers add
checkpoint and metrics files in ``cfg.run_dir`` for the CLI.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import backbone as bb
from . import injector as inj
from . import tensor as T
from .data import Dataset, check_disjoint, load_dataset
from .encoding import MASK, Vocabulary, encode_batch, init_embedding_rows, splice
from .errors import ConfigError, DataError
from .kg import TripleStore, build_surface_dict, load_triples
from .matcher import gather_facts, match_subjects, tokenize
from .params import ParameterStore, adam_step, load_checkpoint, make_rng, save_checkpoint

log = logging.getLogger(__name__)

EVAL_BATCH = 64


@dataclass
class MetricsReport:
    stage: str
    accuracy: dict = field(default_factory=dict)  # split -> percent
    loss_curve: list = field(default_factory=list)
    best_step: int = 0
    fingerprint: str = ""
    extra: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    def record(self):
        """The deterministic part, as written to metrics files."""
        out = asdict(self)
        out.pop("wall_clock")
        return out

    def to_json(self):
        return json.dumps(self.record(), sort_keys=True)


@dataclass
class Knowledge:
    store: TripleStore
    sdict: object

    @classmethod
    def empty(cls):
        store = TripleStore()
        return cls(store, build_surface_dict(store))

    @classmethod
    def from_config(cls, cfg):
        if not cfg.kg:
            log.warning("no kg configured; stage 3 runs without knowledge")
            return cls.empty()
        cfg.check_paths("kg")
        store = load_triples(cfg.kg)
        if cfg.triple_budget is not None:
            store = store.truncated(cfg.triple_budget)
        sdict = build_surface_dict(store, cfg.freq_file or None)
        return cls(store, sdict)

    def vocabulary_tokens(self):
        return self.store.vocabulary_tokens() + list(self.sdict.entries)


@dataclass
class TaskModel:
    """A stage-2 (text-only) or stage-3 (knowledge-injected) classifier."""

    params: ParameterStore
    vocab: Vocabulary
    labels: list
    backbone_cfg: object
    injector_cfg: object = None
    knowledge: Knowledge = None
    max_seq_len: int = 128
    max_ngram: int = 4
    per_subject_cap: int = 1
    per_sentence_cap: int = 8

    @property
    def uses_knowledge(self):
        return self.injector_cfg is not None

    def prepare(self, texts):
        if self.uses_knowledge:
            return [knowledge_inputs(t, self) for t in texts]
        return [plain_inputs(t, self.vocab, self.max_seq_len) for t in texts]

    def logits(self, prepared, training=False, rng=None):
        table = self.params[bb.EMBED]
        d = self.backbone_cfg.d_model
        if self.uses_knowledge:
            sent = encode_batch([p[0] for p in prepared], [p[1] for p in prepared], d)
            spl = encode_batch([p[2] for p in prepared], [p[3] for p in prepared], d)
            x = inj.forward(spl, sent, table, self.injector_cfg, self.params, training, rng)
        else:
            sent = encode_batch([p[0] for p in prepared], [p[1] for p in prepared], d)
            x = sent.embedded(table)
        return bb.backbone_forward(x, sent.pad, self.params, self.backbone_cfg, training=training, rng=rng)

    def predict_indices(self, texts):
        prepared = self.prepare(texts)
        out = []
        for k in range(0, len(prepared), EVAL_BATCH):
            out.extend(np.argmax(self.logits(prepared[k : k + EVAL_BATCH]).data, axis=1).tolist())
        return out

    def predict(self, texts):
        return [self.labels[i] for i in self.predict_indices(texts)]


def plain_inputs(text, vocab, max_len=None):
    words = tokenize(text).tokens
    if max_len is not None and len(words) > max_len:
        raise DataError(f"sentence has {len(words)} tokens, more than max_seq_len={max_len}")
    pos = [2 * i for i in range(1, len(words) + 1)]
    return vocab.ids(words), pos


def knowledge_inputs(text, model):
    merged, result = match_subjects(tokenize(text), model.knowledge.sdict, model.max_ngram)
    result = gather_facts(result, model.knowledge.store, model.per_subject_cap, model.per_sentence_cap)
    seq = splice(merged, result.facts, model.max_seq_len)
    sent = seq.sentence()
    return (
        model.vocab.ids(sent.texts),
        np.add(sent.alphas, sent.betas).tolist(),
        model.vocab.ids(seq.texts),
        np.add(seq.alphas, seq.betas).tolist(),
    )


# --- data ---------------------------------------------------------------------


def load_splits(cfg, need=("train", "dev", "test")):
    cfg.check_paths(*need)
    labels = cfg.labels or None
    splits = {name: load_dataset(getattr(cfg, name), name, labels) for name in need}
    if labels is None:
        labels = sorted({y for ds in splits.values() for y in ds.labels})
        undeclared = {y for name, ds in splits.items() if name != "train" for y in ds.labels} - set(splits["train"].labels)
        if undeclared:
            raise DataError(f"labels {sorted(undeclared)} do not occur in train; declare `labels`")
    check_disjoint(*splits.values())
    return splits, list(labels)


def corpus_texts(cfg, train):
    texts = list(train.texts)
    if cfg.pretrain_corpus:
        cfg.check_paths("pretrain_corpus")
        with open(cfg.pretrain_corpus, encoding="utf-8") as fh:
            texts = [line.strip() for line in fh if line.strip()] + texts
    if not texts:
        raise ConfigError("pretraining corpus is empty")
    return texts


class BatchSampler:
    """Shuffled passes over ``n`` indices, reshuffling between passes."""

    def __init__(self, n, batch_size, rng):
        self.n, self.batch_size, self.rng = n, batch_size, rng
        self.order, self.pos = rng.permutation(n), 0

    def next(self):
        out = []
        while len(out) < min(self.batch_size, self.n):
            if self.pos == self.n:
                self.order, self.pos = self.rng.permutation(self.n), 0
            out.append(int(self.order[self.pos]))
            self.pos += 1
        return out


# --- stage 1 --------------------------------------------------------------------


@dataclass
class PretrainResult:
    params: ParameterStore
    vocab: Vocabulary
    report: MetricsReport


def pretrain(cfg, texts):
    """Masked-token pretraining of the embedding table and backbone."""
    t0 = time.perf_counter()
    if not texts:
        raise ConfigError("pretraining corpus is empty")
    token_lists = [tokenize(t).tokens for t in texts]
    vocab = Vocabulary(w for words in token_lists for w in words)
    bcfg = cfg.backbone_config()
    params = ParameterStore()
    params.add(bb.EMBED, init_embedding_rows(cfg.seed, vocab.itos, cfg.d_model))
    bb.init_backbone(bcfg, params)
    bb.init_head(params, "mlm", cfg.d_model, len(vocab), cfg.seed)

    ids = [vocab.ids(w) for w in token_lists]
    pos = [[2 * i for i in range(1, len(w) + 1)] for w in token_lists]
    sampler = BatchSampler(len(ids), cfg.batch_size, make_rng(cfg.seed, "stage1.batches"))
    mask_rng = make_rng(cfg.seed, "stage1.mask")
    drop_rng = make_rng(cfg.seed, "stage1.dropout")
    curve = []
    for _ in range(cfg.pretrain_steps):
        rows = sampler.next()
        batch = encode_batch([ids[r] for r in rows], [pos[r] for r in rows], cfg.d_model)
        masked = bb.mask_positions(batch.pad, cfg.mask_rate, mask_rng)
        inputs = np.where(masked, MASK, batch.ids)
        x = T.add(T.take_rows(params[bb.EMBED], inputs), T.Tensor(batch.codes))
        params.zero_grad()
        logits = bb.lm_pretrain_forward(x, batch.pad, masked, params, bcfg, training=True, rng=drop_rng)
        loss = bb.lm_loss(logits, batch.ids, masked)
        loss.backward()
        adam_step(params, cfg.lr_pretrain, cfg.beta1, cfg.beta2, cfg.adam_eps)
        curve.append(loss.item())
    report = MetricsReport("stage1", loss_curve=curve, best_step=cfg.pretrain_steps, fingerprint=cfg.fingerprint())
    report.wall_clock = time.perf_counter() - t0
    return PretrainResult(params, vocab, report)


def masked_lm_loss(params, vocab, cfg, texts, rate=None, seed_stream="stage1.probe"):
    """Masked-LM loss on ``texts`` with a fixed mask draw, no dropout."""
    token_lists = [tokenize(t).tokens for t in texts]
    batch = encode_batch(
        [vocab.ids(w) for w in token_lists], [[2 * i for i in range(1, len(w) + 1)] for w in token_lists], cfg.d_model
    )
    masked = bb.mask_positions(batch.pad, cfg.mask_rate if rate is None else rate, make_rng(cfg.seed, seed_stream))
    x = T.add(T.take_rows(params[bb.EMBED], np.where(masked, MASK, batch.ids)), T.Tensor(batch.codes))
    logits = bb.lm_pretrain_forward(x, batch.pad, masked, params, cfg.backbone_config())
    return bb.lm_loss(logits, batch.ids, masked).item()


# --- shared training loop -------------------------------------------------------


def accuracy(model, ds):
    if len(ds) == 0:
        raise DataError(f"split {ds.split!r} is empty")
    gold = [model.labels.index(y) for y in ds.labels]
    pred = model.predict_indices(ds.texts)
    return 100.0 * sum(int(p == g) for p, g in zip(pred, gold)) / len(gold)


def _train(model, train, dev, steps, groups, cfg, stream):
    """Adam on ``groups`` = [(names, lr), ...]; returns (best params, curve, best step, best dev acc)."""
    y = np.array([model.labels.index(label) for label in train.labels])
    prepared = model.prepare(train.texts)
    sampler = BatchSampler(len(prepared), cfg.batch_size, make_rng(cfg.seed, f"{stream}.batches"))
    drop_rng = make_rng(cfg.seed, f"{stream}.dropout")
    trainable = [n for names, _ in groups for n in names]
    best = (model.params.subset(trainable), 0, -1.0)
    curve = []
    for step in range(1, steps + 1):
        rows = sampler.next()
        model.params.zero_grad()
        logits = model.logits([prepared[r] for r in rows], training=True, rng=drop_rng)
        loss = T.cross_entropy(logits, y[rows])
        loss.backward()
        for names, lr in groups:
            adam_step(model.params, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, names)
        curve.append(loss.item())
        if step % cfg.eval_every == 0 or step == steps:
            acc = accuracy(model, dev)
            if acc >= best[2]:
                best = (model.params.subset(trainable), step, acc)
    model.params.update_from(best[0])
    return curve, best[1], best[2]


# --- stage 2 ----------------------------------------------------------------------


def finetune(cfg, stage1, train, dev, labels):
    """Fine-tune backbone + classification head on plain embeddings, keep the dev-best step."""
    t0 = time.perf_counter()
    bcfg = cfg.backbone_config(len(labels))
    params = stage1.params.subset([bb.PREFIX])
    bb.init_head(params, "cls", cfg.d_model, len(labels), cfg.seed)
    model = TaskModel(params, stage1.vocab, list(labels), bcfg, max_seq_len=cfg.max_seq_len)
    curve, best_step, dev_acc = _train(model, train, dev, cfg.finetune_steps, [(params.names(), cfg.lr_finetune)], cfg, "stage2")
    report = MetricsReport(
        "stage2", {"dev": dev_acc}, curve, best_step, cfg.fingerprint(), {"base_fingerprint": cfg.base_fingerprint()}
    )
    report.wall_clock = time.perf_counter() - t0
    return model, report


# --- stage 3 ----------------------------------------------------------------------


def inject_train(cfg, stage2, train, dev, knowledge):
    """Train a freshly initialized injector in front of the stage-2 classifier."""
    t0 = time.perf_counter()
    if stage2.backbone_cfg.d_model != cfg.d_model or stage2.params[bb.EMBED].shape[1] != cfg.d_model:
        raise ConfigError(
            f"stage-2 checkpoint has d_model={stage2.params[bb.EMBED].shape[1]}, config has {cfg.d_model}"
        )
    icfg = cfg.injector_config()
    params = stage2.params.copy()
    vocab = stage2.vocab.copy()
    added = vocab.extend(knowledge.vocabulary_tokens())
    if added:
        table = np.vstack([params[bb.EMBED].data, init_embedding_rows(cfg.seed, added, cfg.d_model)])
        params.params.pop(bb.EMBED)
        params.add(bb.EMBED, table)
    inj.init_injector(icfg, params)
    model = TaskModel(
        params, vocab, list(stage2.labels), stage2.backbone_cfg, icfg, knowledge,
        cfg.max_seq_len, cfg.max_ngram, cfg.per_subject_cap, cfg.per_sentence_cap,
    )
    groups = [(params.names(inj.PREFIX), cfg.lr_inject)]
    if not cfg.freeze_backbone_stage3:
        rest = [n for n in params.names() if not n.startswith(inj.PREFIX)]
        groups.append((rest, cfg.lr_inject * cfg.backbone_lr_scale))
    curve, best_step, dev_acc = _train(model, train, dev, cfg.inject_steps, groups, cfg, "stage3")
    matched = sum(1 for p in model.prepare(train.texts) if len(p[2]) > len(p[0]))
    report = MetricsReport(
        "stage3", {"dev": dev_acc}, curve, best_step, cfg.fingerprint(),
        {
            "base_fingerprint": cfg.base_fingerprint(),
            "triples": len(knowledge.store),
            "surface_forms": len(knowledge.sdict),
            "train_sentences_with_facts": matched,
        },
    )
    report.wall_clock = time.perf_counter() - t0
    return model, report


# --- evaluation and ablation -------------------------------------------------------


def evaluate(model, ds, predictions_path=None):
    t0 = time.perf_counter()
    if len(ds) == 0:
        raise DataError(f"split {ds.split!r} is empty")
    pred = model.predict(ds.texts)
    correct = sum(int(p == g) for p, g in zip(pred, ds.labels))
    if predictions_path is not None:
        with open(predictions_path, "w", encoding="utf-8", newline="\n") as fh:
            for k, (g, p) in enumerate(zip(ds.labels, pred)):
                fh.write(f"{k}\t{g}\t{p}\n")
    stage = "stage3" if model.uses_knowledge else "stage2"
    report = MetricsReport(stage, {ds.split: 100.0 * correct / len(ds)}, extra={"n": len(ds), "correct": correct})
    report.wall_clock = time.perf_counter() - t0
    return report


@dataclass
class Experiment:
    """Stages 1-2 run once; stage 3 reruns per knowledge setting."""

    cfg: object
    splits: dict
    labels: list
    stage1: PretrainResult = None
    stage2: TaskModel = None
    stage2_report: MetricsReport = None

    @classmethod
    def from_config(cls, cfg):
        splits, labels = load_splits(cfg)
        return cls(cfg, splits, labels)

    def run_base(self):
        train, dev = self.splits["train"], self.splits["dev"]
        self.stage1 = pretrain(self.cfg, corpus_texts(self.cfg, train))
        self.stage2, self.stage2_report = finetune(self.cfg, self.stage1, train, dev, self.labels)
        self.stage2_report.accuracy["test"] = accuracy(self.stage2, self.splits["test"])
        return self.stage2_report

    def run_knowledge(self, knowledge, cfg=None):
        cfg = cfg or self.cfg
        if self.stage2 is None:
            self.run_base()
        model, report = inject_train(cfg, self.stage2, self.splits["train"], self.splits["dev"], knowledge)
        report.accuracy["test"] = accuracy(model, self.splits["test"])
        return model, report


def ablate(cfg, budgets, experiment=None):
    """Stage 3 once per triple budget over shared stages 1-2; rows of (budget, dev, test)."""
    if any(b < 0 for b in budgets) or any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ConfigError(f"ablation budgets must be nonnegative and strictly increasing: {budgets}")
    experiment = experiment or Experiment.from_config(cfg)
    if experiment.stage2 is None:
        experiment.run_base()
    rows = []
    for budget in budgets:
        run_cfg = cfg.with_overrides(triple_budget=budget)
        _, report = experiment.run_knowledge(Knowledge.from_config(run_cfg), run_cfg)
        rows.append((budget, report.accuracy["dev"], report.accuracy["test"]))
    return rows


# --- file-backed stages (CLI) -------------------------------------------------------


def _run_dir(cfg):
    d = Path(cfg.run_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_sidecar(path, **fields_):
    Path(path).write_text(json.dumps(fields_, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _read_sidecar(path):
    if not Path(path).exists():
        raise ConfigError(f"missing {path}; run the earlier stage first")
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_metrics(path, reports):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in reports:
            fh.write(r.to_json() + "\n")


def _log_time(run_dir, command, seconds):
    with open(Path(run_dir) / "timing.log", "a", encoding="utf-8") as fh:
        fh.write(f"{command}\t{seconds:.3f}\n")


def stage1_pretrain(cfg):
    t0 = time.perf_counter()
    cfg.check_paths("train")
    train = load_dataset(cfg.train, "train", cfg.labels or None)
    result = pretrain(cfg, corpus_texts(cfg, train))
    d = _run_dir(cfg)
    save_checkpoint(result.params, d / "stage1.kinj")
    result.vocab.save(d / "vocab.txt")
    _write_sidecar(d / "stage1.json", stage=1, base_fingerprint=cfg.base_fingerprint(), d_model=cfg.d_model)
    _write_metrics(d / "metrics_stage1.jsonl", [result.report])
    _log_time(d, "pretrain", time.perf_counter() - t0)
    return result


def _load_stage1(cfg):
    d = Path(cfg.run_dir)
    meta = _read_sidecar(d / "stage1.json")
    _check_base(meta, cfg, "stage1")
    return PretrainResult(load_checkpoint(d / "stage1.kinj"), Vocabulary.load(d / "vocab.txt"), None)


def _check_base(meta, cfg, what):
    if meta["d_model"] != cfg.d_model:
        raise ConfigError(f"{what} checkpoint has d_model={meta['d_model']}, config has {cfg.d_model}")
    if meta["base_fingerprint"] != cfg.base_fingerprint():
        raise ConfigError(
            f"{what} checkpoint was produced by config fingerprint {meta['base_fingerprint']}, "
            f"current config is {cfg.base_fingerprint()}"
        )


def stage2_finetune(cfg):
    t0 = time.perf_counter()
    splits, labels = load_splits(cfg)
    stage1 = _load_stage1(cfg)
    model, report = finetune(cfg, stage1, splits["train"], splits["dev"], labels)
    report.accuracy["test"] = accuracy(model, splits["test"])
    d = _run_dir(cfg)
    save_checkpoint(model.params, d / "stage2.kinj")
    _write_sidecar(
        d / "stage2.json", stage=2, base_fingerprint=cfg.base_fingerprint(), d_model=cfg.d_model, labels=labels
    )
    _write_metrics(d / "metrics_stage2.jsonl", [report])
    _log_time(d, "finetune", time.perf_counter() - t0)
    return model, report


def load_stage2(cfg):
    d = Path(cfg.run_dir)
    meta = _read_sidecar(d / "stage2.json")
    _check_base(meta, cfg, "stage2")
    params = load_checkpoint(d / "stage2.kinj")
    bcfg = cfg.backbone_config(len(meta["labels"]))
    return TaskModel(params, Vocabulary.load(d / "vocab.txt"), meta["labels"], bcfg, max_seq_len=cfg.max_seq_len)


def stage3_inject_train(cfg):
    t0 = time.perf_counter()
    splits, _ = load_splits(cfg)
    stage2 = load_stage2(cfg)
    model, report = inject_train(cfg, stage2, splits["train"], splits["dev"], Knowledge.from_config(cfg))
    report.accuracy["test"] = accuracy(model, splits["test"])
    d = _run_dir(cfg)
    save_checkpoint(model.params, d / "stage3.kinj")
    model.vocab.save(d / "vocab_stage3.txt")
    _write_sidecar(
        d / "stage3.json", stage=3, base_fingerprint=cfg.base_fingerprint(), fingerprint=cfg.fingerprint(),
        d_model=cfg.d_model, labels=model.labels, triple_budget=cfg.triple_budget,
    )
    _write_metrics(d / "metrics_stage3.jsonl", [report])
    _log_time(d, "inject-train", time.perf_counter() - t0)
    return model, report


def load_stage3(cfg):
    d = Path(cfg.run_dir)
    meta = _read_sidecar(d / "stage3.json")
    _check_base(meta, cfg, "stage3")
    if meta["triple_budget"] != cfg.triple_budget:
        raise ConfigError(f"stage3 checkpoint used triple_budget={meta['triple_budget']}, config has {cfg.triple_budget}")
    knowledge = Knowledge.from_config(cfg)
    vocab = Vocabulary.load(d / "vocab_stage3.txt")
    params = load_checkpoint(d / "stage3.kinj")
    if params[bb.EMBED].shape[0] != len(vocab):
        raise ConfigError("stage3 checkpoint and vocabulary disagree")
    return TaskModel(
        params, vocab, meta["labels"], cfg.backbone_config(len(meta["labels"])), cfg.injector_config(), knowledge,
        cfg.max_seq_len, cfg.max_ngram, cfg.per_subject_cap, cfg.per_sentence_cap,
    )


def run_eval(cfg):
    t0 = time.perf_counter()
    if cfg.eval_model not in ("stage2", "stage3"):
        raise ConfigError(f"eval_model must be stage2 or stage3, got {cfg.eval_model!r}")
    cfg.check_paths(cfg.eval_split)
    ds = load_dataset(getattr(cfg, cfg.eval_split), cfg.eval_split, cfg.labels or None)
    model = load_stage2(cfg) if cfg.eval_model == "stage2" else load_stage3(cfg)
    d = _run_dir(cfg)
    report = evaluate(model, ds, d / f"predictions_{cfg.eval_model}_{cfg.eval_split}.tsv")
    report.fingerprint = cfg.fingerprint()
    _write_metrics(d / f"metrics_eval_{cfg.eval_model}_{cfg.eval_split}.jsonl", [report])
    _log_time(d, "eval", time.perf_counter() - t0)
    return report


def run_ablation(cfg):
    t0 = time.perf_counter()
    budgets = cfg.ablation_budgets
    if not budgets:
        raise ConfigError("ablation_budgets is empty")
    experiment = Experiment.from_config(cfg)
    rows = ablate(cfg, budgets, experiment)
    d = _run_dir(cfg)
    with open(d / "ablation.tsv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("budget\tdev_acc\ttest_acc\n")
        for b, dev, test in rows:
            fh.write(f"{b}\t{dev:.4f}\t{test:.4f}\n")
    _log_time(d, "ablate", time.perf_counter() - t0)
    return rows
