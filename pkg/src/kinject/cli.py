"""``kinject`` command line: one subcommand per pipeline step."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, parse_override
from .data import knowledge_task, separable_task
from .errors import KInjectError
from .kg import save_surface_dict, save_triples
from .matcher import format_match_line, gather_facts, match_subjects, tokenize
from .encoding import splice

log = logging.getLogger("kinject")


def _config(args):
    overrides = args.set or []
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_pairs([parse_override(o) for o in overrides], base_dir=Path.cwd())


def _lines(args):
    stream = open(args.input, encoding="utf-8") if args.input else sys.stdin
    with stream:
        for line in stream:
            line = line.rstrip("\r\n")
            if line.strip():
                yield line


def cmd_build_kg(cfg, args):
    knowledge = pipeline.Knowledge.from_config(cfg)
    d = Path(cfg.run_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_triples(knowledge.store, d / "kg_used.tsv")
    save_surface_dict(knowledge.sdict, d / "surface_dict.tsv")
    print(f"{len(knowledge.store)} triples, {len(knowledge.sdict)} surface forms, "
          f"{knowledge.sdict.skipped_rows} frequency rows skipped -> {d}")


def _matched(cfg, args):
    knowledge = pipeline.Knowledge.from_config(cfg)
    for text in _lines(args):
        merged, result = match_subjects(tokenize(text), knowledge.sdict, cfg.max_ngram)
        yield text, merged, gather_facts(result, knowledge.store, cfg.per_subject_cap, cfg.per_sentence_cap)


def cmd_match(cfg, args):
    for text, merged, result in _matched(cfg, args):
        print(format_match_line(text, merged, result))


def cmd_encode(cfg, args):
    for _, merged, result in _matched(cfg, args):
        print(splice(merged, result.facts, cfg.max_seq_len).to_json())


def cmd_pretrain(cfg, args):
    result = pipeline.stage1_pretrain(cfg)
    curve = result.report.loss_curve
    if curve:
        print(f"masked-LM loss {curve[0]:.4f} -> {curve[-1]:.4f} over {len(curve)} steps")
    else:
        print("0 steps; checkpoint holds the initialization")


def cmd_finetune(cfg, args):
    _, report = pipeline.stage2_finetune(cfg)
    print(json.dumps({"stage": 2, "accuracy": report.accuracy, "best_step": report.best_step}))


def cmd_inject_train(cfg, args):
    _, report = pipeline.stage3_inject_train(cfg)
    print(json.dumps({"stage": 3, "accuracy": report.accuracy, "best_step": report.best_step}))


def cmd_ablate(cfg, args):
    for budget, dev, test in pipeline.run_ablation(cfg):
        print(f"{budget}\t{dev:.2f}\t{test:.2f}")


def cmd_eval(cfg, args):
    report = pipeline.run_eval(cfg)
    print(json.dumps(report.accuracy))


def cmd_gen_synth(cfg, args):
    if cfg.synth_kind == "knowledge":
        task = knowledge_task(cfg.seed, cfg.synth_entities, cfg.synth_noise, cfg.synth_mentions)
    elif cfg.synth_kind == "separable":
        task = separable_task(cfg.seed)
    else:
        raise KInjectError(f"unknown synth_kind {cfg.synth_kind!r}")
    d = task.write(cfg.synth_dir)
    lines = ["train = train.tsv", "dev = dev.tsv", "test = test.tsv", "labels = neg,pos", f"seed = {cfg.seed}"]
    if task.triples:
        lines.append("kg = kg.tsv")
    (d / "config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(task.train)}/{len(task.dev)}/{len(task.test)} examples and {len(task.triples)} triples to {d}")


COMMANDS = {
    "build-kg": (cmd_build_kg, "load the KG under triple_budget and write the surface dictionary"),
    "match": (cmd_match, "match sentences (one per line) against the KG; TSV out"),
    "encode": (cmd_encode, "splice matched sentences; one JSON record per line"),
    "pretrain": (cmd_pretrain, "stage 1: masked-LM pretraining of the backbone"),
    "finetune": (cmd_finetune, "stage 2: text-only task fine-tuning"),
    "inject-train": (cmd_inject_train, "stage 3: train the knowledge injector"),
    "ablate": (cmd_ablate, "stage 3 for each of ablation_budgets"),
    "eval": (cmd_eval, "evaluate eval_model on eval_split"),
    "gen-synth": (cmd_gen_synth, "write a synthetic task to synth_dir"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="kinject", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        if name in ("match", "encode"):
            p.add_argument("--input", help="sentence file (default: stdin)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _config(args)
        COMMANDS[args.command][0](cfg, args)
    except KInjectError as exc:
        print(f"kinject {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
