"""Acceptance criteria, each at its stated tolerance and time limit.

Every test records one PASS/FAIL line, printed in the terminal summary and
also to stdout (visible with ``-s``).
"""
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from helpers import gradient_check
from kinject import backbone as bb
from kinject import pipeline
from kinject import tensor as T
from kinject.cli import main
from kinject.config import RunConfig
from kinject.data import knowledge_task
from kinject.encoding import Origin, Vocabulary, encode_batch, init_embedding_rows, position_codes, splice
from kinject.errors import ConfigError
from kinject.injector import InjectorConfig, init_injector
from kinject.kg import SurfaceDict, Triple, TripleStore, build_surface_dict
from kinject.matcher import gather_facts, match_subjects, tokenize
from kinject.params import dumps, load_checkpoint, loads, make_rng, save_checkpoint

from test_encoding import GOLDEN, _worked_matrix, worked_example
from test_matcher import brute_force_match
from test_pipeline import tiny

EXPERIMENT = Path(__file__).resolve().parents[1] / "configs" / "knowledge_task.conf"


def record(name, passed, detail):
    conftest.CRITERIA.append((name, passed, detail))
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    assert passed, detail


def _experiment_config(tmp_path):
    cfg = RunConfig.from_file(EXPERIMENT)
    data = knowledge_task(cfg.seed, cfg.synth_entities, cfg.synth_noise, cfg.synth_mentions).write(tmp_path / "data")
    return cfg.with_overrides(
        run_dir=str(tmp_path / "run"), train=str(data / "train.tsv"), dev=str(data / "dev.tsv"),
        test=str(data / "test.tsv"), kg=str(data / "kg.tsv"),
    )


# --- gradients ----------------------------------------------------------------------


def _tiny_full_model():
    """Embedding + injector + backbone + both heads, all parameters perturbed."""
    d = 8
    store = TripleStore.from_triples([Triple.from_text("red fox", "is_a", "animal"), Triple.from_text("moss", "grows_on", "stone")])
    vocab = Vocabulary(["the", "red", "fox", "saw", "moss"])
    knowledge = pipeline.Knowledge(store, build_surface_dict(store))
    vocab.extend(knowledge.vocabulary_tokens())
    bcfg = bb.BackboneConfig(layers=2, d_model=d, heads=2, d_ff=12, dropout=0.0)
    icfg = InjectorConfig(layers=2, d_model=d, heads=2, d_ff=12, dropout=0.0)
    params = bb.init_backbone(bcfg)
    params.add(bb.EMBED, init_embedding_rows(0, vocab.itos, d))
    bb.init_head(params, "cls", d, 2, 0)
    bb.init_head(params, "mlm", d, len(vocab), 0)
    init_injector(icfg, params)
    rng = make_rng(7)
    for name in params.names():
        if name.endswith(".b") or name.endswith(".g"):
            params[name].data = params[name].data + 0.1 * rng.normal(size=params[name].shape)
    model = pipeline.TaskModel(params, vocab, ["a", "b"], bcfg, icfg, knowledge)
    return model, bcfg


def test_gradient_suite():
    t0 = time.perf_counter()
    model, bcfg = _tiny_full_model()
    params = model.params
    prepared = model.prepare(["the red fox saw moss", "moss"])
    y = np.array([1, 0])
    plain = [pipeline.plain_inputs(t, model.vocab) for t in ["the fox saw the moss", "red"]]
    lm_batch = encode_batch([p[0] for p in plain], [p[1] for p in plain], bcfg.d_model)
    masked = np.zeros(lm_batch.pad.shape, dtype=bool)
    masked[0, [1, 3]] = True
    masked[1, 0] = True

    def loss():
        task = T.cross_entropy(model.logits(prepared), y)
        x = T.add(T.take_rows(params[bb.EMBED], lm_batch.ids), T.Tensor(lm_batch.codes))
        lm = bb.lm_loss(bb.lm_pretrain_forward(x, lm_batch.pad, masked, params, bcfg), lm_batch.ids, masked)
        return task + lm

    errors = gradient_check(params, loss, h=1e-4)
    worst = max(errors, key=errors.get)
    elapsed = time.perf_counter() - t0
    covered = {n.split(".")[0] for n in errors}
    ok = errors[worst] < 1e-4 and elapsed < 60 and covered == {"injector", "backbone", "head"}
    record(
        "gradient suite", ok,
        f"{len(errors)} tensors, worst {worst} rel err {errors[worst]:.2e} (< 1e-4), {elapsed:.1f}s (< 60s)",
    )


# --- encoding ----------------------------------------------------------------------------


def test_encoding_suite():
    t0 = time.perf_counter()
    merged, facts = worked_example()
    seq = splice(merged, facts)
    first, subj = seq.tokens[0], seq.tokens[seq.sentence_len]
    golden = (first.alpha, first.beta) == (1, 1) and (subj.alpha, subj.beta) == (5, 1) and subj.origin is Origin.SUBJ
    digest = hashlib.sha256(np.ascontiguousarray(_worked_matrix(), dtype="<f8").tobytes()).hexdigest()
    golden = golden and digest == GOLDEN.read_text().strip()

    rng = make_rng(2024, "acceptance.encoding")
    unique = bounded = True
    for _ in range(1000):
        n = int(rng.integers(1, 21))
        idx = sorted(rng.integers(1, n + 1, size=int(rng.integers(0, 9))).tolist())
        sides = lambda: tuple(f"t{k}" for k in range(int(rng.integers(1, 4))))  # noqa: E731
        facts = [(i, Triple(sides(), sides(), sides())) for i in idx]
        s = splice([f"w{k}" for k in range(n)], facts)
        pairs = list(zip(s.alphas, s.betas))
        unique &= len(set(pairs)) == len(pairs)
        codes = position_codes(np.add(s.alphas, s.betas), 64)
        bounded &= bool(np.all(np.abs(codes) <= 1.0))
    elapsed = time.perf_counter() - t0
    record(
        "encoding suite", golden and unique and bounded and elapsed < 5,
        f"worked example golden {golden}, pair-unique over 1000 samples {unique}, codes in [-1,1] {bounded}, {elapsed:.2f}s (< 5s)",
    )


# --- matcher -----------------------------------------------------------------------------


def test_matcher_oracle():
    t0 = time.perf_counter()
    rng = make_rng(2024, "acceptance.matcher")
    words = list("abcdefgh")
    mismatches = disorder = 0
    for _ in range(1000):
        surfaces = {
            " ".join(rng.choice(words, size=int(rng.integers(1, 5))).tolist()) for _ in range(int(rng.integers(0, 51)))
        }
        sentence = rng.choice(words, size=int(rng.integers(1, 21))).tolist()
        max_ngram = int(rng.integers(1, 5))
        sdict = SurfaceDict({s: (s, 1) for s in surfaces})
        merged, result = match_subjects(tokenize(" ".join(sentence)), sdict, max_ngram)
        mismatches += merged.tokens != brute_force_match(sentence, surfaces, max_ngram)
        store = TripleStore.from_triples(Triple.from_text(s, "p", f"o{k}") for s in sorted(surfaces) for k in range(2))
        facts = gather_facts(result, store, per_subject_cap=2, per_sentence_cap=8).facts
        positions = [i for i, _ in facts]
        disorder += positions != sorted(positions)
    elapsed = time.perf_counter() - t0
    record(
        "matcher oracle", mismatches == 0 and disorder == 0 and elapsed < 10,
        f"{mismatches} oracle mismatches, {disorder} out-of-order fact lists in 1000 instances, {elapsed:.2f}s (< 10s)",
    )


# --- experiments --------------------------------------------------------------------------


def test_end_to_end_knowledge_separability(tmp_path):
    t0 = time.perf_counter()
    cfg = _experiment_config(tmp_path)
    exp = pipeline.Experiment.from_config(cfg)
    base = exp.run_base().accuracy["test"]
    _, k_report = exp.run_knowledge(pipeline.Knowledge.from_config(cfg))
    control_cfg = cfg.with_overrides(triple_budget=0)
    _, c_report = exp.run_knowledge(pipeline.Knowledge.from_config(control_cfg), control_cfg)
    k, control = k_report.accuracy["test"], c_report.accuracy["test"]
    elapsed = time.perf_counter() - t0
    ok = base <= 60 and k >= 90 and abs(control - base) <= 2 and elapsed < 600
    record(
        "end-to-end", ok,
        f"baseline test {base:.2f}% (<= 60), K-model {k:.2f}% (>= 90), zero-budget control {control:.2f}% "
        f"(within 2 of baseline), {elapsed:.0f}s (< 600s)",
    )


def test_ablation_shape(tmp_path):
    t0 = time.perf_counter()
    cfg = _experiment_config(tmp_path)
    rows = pipeline.ablate(cfg, [10, 100, 500, 1000])
    acc = {b: test for b, _, test in rows}
    elapsed = time.perf_counter() - t0
    ok = (
        acc[100] - acc[10] >= 10 and abs(acc[500] - acc[100]) <= 2 and abs(acc[1000] - acc[100]) <= 2 and elapsed < 1200
    )
    curve = ", ".join(f"{b}: {a:.2f}" for b, a in acc.items())
    record("ablation shape", ok, f"test accuracy by budget {{{curve}}}, {elapsed:.0f}s (< 1200s)")


# --- reproducibility ---------------------------------------------------------------------


SMALL = [
    "--set", "d_model=16", "--set", "backbone_layers=1", "--set", "injector_layers=1", "--set", "pretrain_steps=6",
    "--set", "finetune_steps=6", "--set", "inject_steps=6", "--set", "eval_every=3", "--set", "batch_size=8",
    "--set", "synth_entities=20", "--set", "synth_noise=30", "--set", "synth_mentions=4",
    "--set", "ablation_budgets=0,10,50",
]


def _run_all_commands(root, capsys):
    root.mkdir()
    sentences = root / "sentences.txt"
    outputs = {}
    assert main(["gen-synth", "--set", f"synth_dir={root}", *SMALL]) == 0
    subject = (root / "kg.tsv").read_text().splitlines()[0].split("\t")[0]
    sentences.write_text(f"i met {subject} yesterday\nnothing here\n")
    cfg = ["--config", str(root / "config.txt"), *SMALL]
    commands = [
        ["build-kg"], ["match", "--input", str(sentences)], ["encode", "--input", str(sentences)],
        ["pretrain"], ["finetune"], ["inject-train"], ["eval", "--set", "eval_model=stage2"],
        ["eval", "--set", "eval_model=stage3"], ["ablate"],
    ]
    capsys.readouterr()
    for k, cmd in enumerate(commands):
        assert main([cmd[0], *cfg, *cmd[1:]]) == 0, cmd
        outputs[f"{k}:{cmd[0]}"] = capsys.readouterr().out
    files = {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file() and p.name != "timing.log"}
    return outputs, files


def test_determinism(tmp_path, capsys):
    out_a, files_a = _run_all_commands(tmp_path / "a", capsys)
    out_b, files_b = _run_all_commands(tmp_path / "b", capsys)
    differing = sorted(str(k) for k in files_a if files_a[k] != files_b.get(k))
    differing += [f"stdout of {k}" for k in out_a if out_a[k].replace(str(tmp_path / "a"), "") != out_b[k].replace(str(tmp_path / "b"), "")]
    checkpoints = sum(1 for k in files_a if str(k).endswith(".kinj"))
    metrics = sum(1 for k in files_a if str(k).endswith((".jsonl", ".json", ".tsv")))
    ok = not differing and files_a.keys() == files_b.keys() and checkpoints >= 3
    record(
        "determinism", ok,
        f"{len(out_a)} commands run twice; {checkpoints} checkpoints and {metrics} metrics/data files compared; "
        f"differing: {differing or 'none'}",
    )


def test_checkpoint_round_trip(tmp_path):
    problems = []
    files = consumed = 0
    for seed, d_model, preset in [(0, 16, "base"), (1, 8, "base"), (2, 12, "large")]:
        work = tmp_path / f"s{seed}"
        work.mkdir()
        cfg = tiny(work, seed=seed, d_model=d_model, injector_preset=preset, injector_layers=0, injector_heads=0)
        pipeline.stage1_pretrain(cfg)
        pipeline.stage2_finetune(cfg)
        # a different stage-3-only setting shares the stage-2 fingerprint
        for variant in (cfg, cfg.with_overrides(triple_budget=5, inject_steps=3, lr_inject=5e-4)):
            try:
                pipeline.stage3_inject_train(variant)
                consumed += 1
            except ConfigError as exc:
                problems.append(f"seed {seed}: stage 3 rejected its stage-2 checkpoint ({exc})")
        for name in ("stage1.kinj", "stage2.kinj", "stage3.kinj"):
            path = Path(cfg.run_dir) / name
            again = work / f"again_{name}"
            save_checkpoint(load_checkpoint(path), again)
            files += 1
            if again.read_bytes() != path.read_bytes() or dumps(loads(path.read_bytes())) != path.read_bytes():
                problems.append(f"seed {seed}: {name} changed on save-load-save")
    record(
        "checkpoint round-trip", not problems and consumed == 6,
        f"{files} checkpoints byte-identical after save-load-save; stage 3 consumed stage 2 in {consumed}/6 runs; "
        f"problems: {problems or 'none'}",
    )
