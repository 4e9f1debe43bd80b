"""Command-line orchestration of the corpus, training, and evaluation pipeline.

Every command reads its settings from (lowest to highest precedence) a
profile, an optional key=value config file, and --set overrides; all
randomness follows --seed. Logs go to stderr; results go to stdout or the
declared output paths. Exit codes: 0 success, 1 validation or runtime
failure, 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import autodiff as ad
from . import reports
from .augmenter import SRC_TO_TGT, TGT_TO_SRC, augment
from .config import ConfigError, RunConfig, load_run_config
from .corpus import Corpus, CorpusError, domain_similarity, read_conll, write_conll
from .model import CrossDomainAutoencoder, ModelConfig
from .synthcorpus import default_spec, generate_pair, save_pair
from .tagger import load_tagger, micro_f1, run_experiment, save_tagger, train_tagger
from .trainer import (
    TrainData,
    TrainingDivergedError,
    create_state,
    evaluate_perplexity,
    full_objective_grad_check,
    train_phase1,
    train_phase2,
    write_training_log,
)
from .vocab import VocabError, build_vocab, load_vocab, save_vocab

log = logging.getLogger("crossaug.cli")

GRAD_TOLERANCE = 1e-4


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--profile", choices=("paper", "desk"), default=None)
    common.add_argument("--config", default=None, help="key=value settings file")
    common.add_argument("--set", dest="settings", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--no-figures", action="store_true",
                        help="skip rendering matplotlib figures")

    parser = argparse.ArgumentParser(prog="crossaug", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate the built-in paired synthetic corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--train-size", type=int, default=500)
    p.add_argument("--dev-size", type=int, default=100)
    p.add_argument("--test-size", type=int, default=100)

    p = sub.add_parser("vocab", parents=[common], help="build a frequency vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="run both training phases and save the best checkpoint")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--src-dev", default=None)
    p.add_argument("--tgt-dev", default=None)
    p.add_argument("--out", required=True, help="run directory for all artifacts")

    p = sub.add_parser("ppl", parents=[common], help="evaluate corpus perplexity")
    p.add_argument("--model", required=True, help="run directory from `train`")
    p.add_argument("--corpus", required=True)
    p.add_argument("--domain", choices=("src", "tgt"), required=True)
    p.add_argument("--mode", choices=("denoise", "detransform"), default="denoise")

    p = sub.add_parser("augment", parents=[common],
                       help="transform a corpus and keep filtered survivors")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--direction", choices=(SRC_TO_TGT, TGT_TO_SRC), default=SRC_TO_TGT)

    p = sub.add_parser("similarity", parents=[common],
                       help="mention overlap between a train and a test corpus")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", default=None, help="optional TSV output path")

    p = sub.add_parser("ner-train", parents=[common], help="train the NER tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", default=None)
    p.add_argument("--out", required=True, help="tagger directory")

    p = sub.add_parser("ner-eval", parents=[common], help="score a tagger on a corpus")
    p.add_argument("--tagger", required=True)
    p.add_argument("--test", required=True)

    p = sub.add_parser("experiment", parents=[common],
                       help="Source / Source+Generated / Target comparison")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt-train", required=True)
    p.add_argument("--gen", default=None, help="generated corpus (may be omitted)")
    p.add_argument("--tgt-dev", required=True)
    p.add_argument("--tgt-test", required=True)
    p.add_argument("--out", required=True, help="output directory")

    sub.add_parser("gradcheck", parents=[common],
                   help="finite-difference check of the full phase-1 objective")

    return parser


def _resolve_config(args) -> RunConfig:
    overrides = {}
    for entry in args.settings:
        if "=" not in entry:
            raise ConfigError(f"--set expects KEY=VALUE, got {entry!r}")
        key, value = entry.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return load_run_config(profile=args.profile, config_path=args.config,
                           overrides=overrides)


def _save_model(run_dir: Path, model: CrossDomainAutoencoder, state, cfg: RunConfig) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    ad.save_arrays(run_dir / "model.ckpt", model.state_dict())
    save_vocab(state.src_vocab, run_dir / "src.vocab")
    save_vocab(state.tgt_vocab, run_dir / "tgt.vocab")
    meta = {
        "model": model.config.to_dict(),
        "seed": cfg.seed,
        "profile": cfg.profile,
        "epochs_run": state.epoch,
        "best_epoch": state.best_epoch,
        "best_criterion": state.best_criterion if math.isfinite(state.best_criterion) else None,
    }
    (run_dir / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                                        encoding="utf-8")


def _load_model(run_dir):
    path = Path(run_dir)
    meta = json.loads((path / "model.json").read_text(encoding="utf-8"))
    model = CrossDomainAutoencoder(ModelConfig(**meta["model"]), seed=int(meta["seed"]))
    model.load_state_dict(ad.load_arrays(path / "model.ckpt"))
    src_vocab = load_vocab(path / "src.vocab")
    tgt_vocab = load_vocab(path / "tgt.vocab")
    return model, src_vocab, tgt_vocab


def _cmd_synth(args, cfg: RunConfig) -> int:
    spec = default_spec(seed=cfg.seed, train_size=args.train_size,
                        dev_size=args.dev_size, test_size=args.test_size)
    formal, noisy, style_map = generate_pair(spec)
    save_pair(formal, noisy, style_map, args.out)
    log.info("wrote %d/%d/%d sentences per domain to %s", spec.train_size,
             spec.dev_size, spec.test_size, args.out)
    return 0


def _cmd_vocab(args, cfg: RunConfig) -> int:
    corpus = read_conll(args.corpus)
    vocabulary = build_vocab(corpus, cfg.max_vocab)
    save_vocab(vocabulary, args.out)
    log.info("wrote %d symbols to %s", len(vocabulary), args.out)
    return 0


def _cmd_train(args, cfg: RunConfig) -> int:
    data = TrainData(
        src_train=read_conll(args.src, domain_id="src"),
        tgt_train=read_conll(args.tgt, domain_id="tgt"),
        src_dev=read_conll(args.src_dev, domain_id="src-dev") if args.src_dev else None,
        tgt_dev=read_conll(args.tgt_dev, domain_id="tgt-dev") if args.tgt_dev else None,
    )
    phase1_cfg = cfg.train_config(epochs=cfg.epochs1)
    state = create_state(data, phase1_cfg, model_options=cfg.model_options(),
                         max_vocab=cfg.max_vocab)
    train_phase1(state, phase1_cfg)
    train_phase2(state, cfg.train_config(epochs=cfg.epochs2))

    run_dir = Path(args.out)
    best = state.best_model()
    _save_model(run_dir, best, state, cfg)
    write_training_log(state.history, run_dir / "train_log.tsv")
    if not args.no_figures:
        reports.training_curves(state.history, run_dir / "train_curves.png")
    log.info("best epoch %d (criterion %.6f); artifacts in %s",
             state.best_epoch, state.best_criterion, run_dir)
    return 0


def _cmd_ppl(args, cfg: RunConfig) -> int:
    model, src_vocab, tgt_vocab = _load_model(args.model)
    corpus = read_conll(args.corpus)
    value = evaluate_perplexity(model, corpus, args.domain, args.mode,
                                src_vocab, tgt_vocab, noise_cfg=cfg.noise_config(),
                                seed=cfg.seed)
    print(f"{value:.6f}")
    return 0


def _cmd_augment(args, cfg: RunConfig) -> int:
    model, src_vocab, tgt_vocab = _load_model(args.model)
    corpus = read_conll(args.input)
    report = augment(model, corpus, args.direction, src_vocab, tgt_vocab,
                     batch_size=cfg.batch_size)
    write_conll(report.generated, args.out)
    sidecar = Path(str(args.out) + ".report.tsv")
    sidecar.write_text(report.to_tsv(), encoding="utf-8")
    if not args.no_figures:
        reports.filter_chart(report, Path(str(args.out) + ".filters.png"))
    print(report.to_tsv(), end="")
    return 0


def _cmd_similarity(args, cfg: RunConfig) -> int:
    train = read_conll(args.train)
    test = read_conll(args.test)
    rep = domain_similarity(train, test)
    line = f"{rep.non_overlap_count}\t{rep.overlap_count}\t{rep.similarity_pct:.2f}"
    print(line)
    if args.out:
        Path(args.out).write_text("non_overlap\toverlap\tpercent\n" + line + "\n",
                                  encoding="utf-8")
        if not args.no_figures:
            reports.similarity_chart({"train vs test": rep},
                                     Path(str(args.out) + ".png"))
    return 0


def _cmd_ner_train(args, cfg: RunConfig) -> int:
    train = read_conll(args.train)
    dev = read_conll(args.dev) if args.dev else None
    tagger = train_tagger(train, cfg.tagger_config(), dev=dev)
    save_tagger(tagger, args.out)
    log.info("saved tagger (%d labels) to %s", len(tagger.labels), args.out)
    return 0


def _cmd_ner_eval(args, cfg: RunConfig) -> int:
    tagger = load_tagger(args.tagger)
    test = read_conll(args.test)
    rep = micro_f1(test, tagger.tag_corpus(test))
    print("tp\tfp\tfn\tprecision\trecall\tf1")
    print(f"{rep.true_positives}\t{rep.false_positives}\t{rep.false_negatives}"
          f"\t{rep.precision:.4f}\t{rep.recall:.4f}\t{rep.f1:.4f}")
    return 0


def _cmd_experiment(args, cfg: RunConfig) -> int:
    src = read_conll(args.src)
    tgt_train = read_conll(args.tgt_train)
    gen = read_conll(args.gen) if args.gen else Corpus("generated", (), src.entity_types)
    tgt_dev = read_conll(args.tgt_dev)
    tgt_test = read_conll(args.tgt_test)
    result = run_experiment(src, tgt_train, gen, tgt_dev, tgt_test, cfg.tagger_config())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.tsv").write_text(result.to_tsv(), encoding="utf-8")
    if not args.no_figures:
        reports.experiment_chart(result, out / "experiment.png")
    print(result.to_tsv(), end="")
    return 0


def _cmd_gradcheck(args, cfg: RunConfig) -> int:
    # Fixed canonical fixture: finite differences need every coordinate's
    # gradient above the f64 rounding floor, which only holds for a vetted
    # model/input combination, so the experiment seed is deliberately unused.
    worst = full_objective_grad_check()
    print(f"{worst:.3e}")
    return 0 if worst <= GRAD_TOLERANCE else 1


_HANDLERS = {
    "synth": _cmd_synth,
    "vocab": _cmd_vocab,
    "train": _cmd_train,
    "ppl": _cmd_ppl,
    "augment": _cmd_augment,
    "similarity": _cmd_similarity,
    "ner-train": _cmd_ner_train,
    "ner-eval": _cmd_ner_eval,
    "experiment": _cmd_experiment,
    "gradcheck": _cmd_gradcheck,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_request:  # argparse uses 2 for usage errors
        return int(exit_request.code or 0)
    try:
        cfg = _resolve_config(args)
        return _HANDLERS[args.command](args, cfg)
    except (ConfigError, CorpusError, VocabError, TrainingDivergedError,
            ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
