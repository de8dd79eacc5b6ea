"""Command-line entry point wiring all modules together.

Subcommands: synth-data, train-codebook, train-bpe, encode-units,
train-lm, pretrain, finetune, decode, eval, ablate.  Every artifact lives
in an experiment directory with a config snapshot and content hashes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import ConfigError, ExperimentConfig, dump_config, load_config
from .corpus import load_manifest, load_utterance, synth_corpus
from .decoding import BeamConfig, beam_decode
from .lexicon import Lexicon
from .lm import NGramLM, train_lm
from .metrics import token_error_rate
from .model import Model, load_checkpoint
from .trainer import Resources, Trainer
from .units import (BpeModel, Codebook, TeacherFeaturizer, bpe_train,
                    deduplicate, kmeans_fit, quantize, speech_to_pseudocodes)

log = logging.getLogger("phonemix")

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 3
EXIT_MISSING_ARTIFACT = 4


class MissingArtifactError(FileNotFoundError):
    def __init__(self, what: str, produce_with: str):
        super().__init__(f"missing artifact: {what}; run `phonemix {produce_with}` first")
        self.produce_with = produce_with


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _record_artifact(exp: Path, name: str, path: Path):
    reg_path = exp / "artifacts.json"
    reg = json.loads(reg_path.read_text()) if reg_path.exists() else {}
    reg[name] = {"path": str(path.relative_to(exp)), "sha256": _sha256(path)}
    reg_path.write_text(json.dumps(reg, indent=2))


def _snapshot_config(exp: Path, cfg: ExperimentConfig):
    exp.mkdir(parents=True, exist_ok=True)
    snap = exp / "config.yaml"
    if not snap.exists():
        snap.write_text(dump_config(cfg))


def _featurizer(cfg: ExperimentConfig) -> TeacherFeaturizer:
    pcfg = cfg.pipeline
    return TeacherFeaturizer(feature_dim=cfg.corpus.feature_dim,
                             out_dim=pcfg.teacher_dim,
                             window=pcfg.teacher_window, seed=pcfg.seed)


def _load_resources(cfg: ExperimentConfig, data_dir: Path,
                    exp: Path | None = None,
                    need_codes: bool = False) -> Resources:
    manifest_path = data_dir / "manifest.jsonl"
    if not manifest_path.exists():
        raise MissingArtifactError(str(manifest_path), "synth-data")
    manifest = load_manifest(manifest_path)
    lexicon = Lexicon.load(data_dir / "lexicon.tsv")
    res = Resources(manifest=manifest, lexicon=lexicon)
    if need_codes:
        cb_path = exp / "codebook.npz"
        bpe_path = exp / "bpe.json"
        if not cb_path.exists():
            raise MissingArtifactError(str(cb_path), "train-codebook")
        if not bpe_path.exists():
            raise MissingArtifactError(str(bpe_path), "train-bpe")
        res.codebook = Codebook.load(cb_path)
        res.bpe = BpeModel.load(bpe_path)
        res.featurizer = _featurizer(cfg)
    return res


def _prepare(args, need_codes=False):
    cfg = load_config(args.config, seed=args.seed)
    exp = Path(args.exp)
    _snapshot_config(exp, cfg)
    res = _load_resources(cfg, Path(args.data), exp, need_codes=need_codes)
    return cfg, exp, res


# --- subcommand implementations -------------------------------------------


def cmd_dump_config(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    print(dump_config(cfg), end="")
    return EXIT_OK


def cmd_synth_data(args) -> int:
    cfg = load_config(args.config, seed=args.seed)
    out = Path(args.out)
    manifest = synth_corpus(cfg.corpus, out)
    log.info("wrote %d utterances to %s", len(manifest.entries), out)
    return EXIT_OK


def _teacher_vectors(res: Resources, featurizer, max_utts: int):
    ids = res.manifest.ids(kind="speech", split="train")[:max_utts]
    vecs = []
    for uid in ids:
        utt = load_utterance(res.manifest, uid)
        vecs.append(featurizer.featurize(utt.features))
    return np.concatenate(vecs, axis=0)


def cmd_train_codebook(args) -> int:
    cfg, exp, res = _prepare(args)
    pcfg = cfg.pipeline
    featurizer = _featurizer(cfg)
    vectors = _teacher_vectors(res, featurizer, args.max_utts)
    cb = kmeans_fit(vectors, K=pcfg.codebook_k,
                    max_iters=pcfg.codebook_max_iters, seed=pcfg.seed)
    cb.save(exp / "codebook.npz")
    _record_artifact(exp, "codebook", exp / "codebook.npz")
    log.info("codebook: K=%d, final inertia %.4f", cb.K, cb.inertia_history[-1])
    return EXIT_OK


def cmd_train_bpe(args) -> int:
    cfg, exp, res = _prepare(args)
    pcfg = cfg.pipeline
    cb_path = exp / "codebook.npz"
    if not cb_path.exists():
        raise MissingArtifactError(str(cb_path), "train-codebook")
    cb = Codebook.load(cb_path)
    featurizer = _featurizer(cfg)
    corpus = []
    for uid in res.manifest.ids(kind="speech", split="train")[:args.max_utts]:
        utt = load_utterance(res.manifest, uid)
        units = deduplicate(quantize(cb, featurizer.featurize(utt.features)))
        corpus.append(units)
    bpe = bpe_train(corpus, target_vocab=pcfg.bpe_vocab, base_vocab=cb.K)
    bpe.save(exp / "bpe.json")
    _record_artifact(exp, "bpe", exp / "bpe.json")
    log.info("bpe: %d merges, vocab %d", len(bpe.merges), bpe.vocab_size)
    return EXIT_OK


def cmd_encode_units(args) -> int:
    cfg, exp, res = _prepare(args, need_codes=True)
    out = Path(args.out)
    with open(out, "w") as f:
        for uid in res.manifest.ids(kind=args.kind):
            utt = load_utterance(res.manifest, uid)
            codes = speech_to_pseudocodes(res.featurizer, res.codebook,
                                          res.bpe, utt.features)
            f.write(uid + "\t" + " ".join(map(str, codes)) + "\n")
    log.info("wrote pseudo-codes to %s", out)
    return EXIT_OK


def cmd_train_lm(args) -> int:
    cfg, exp, res = _prepare(args)
    pcfg = cfg.pipeline
    train_texts = [load_utterance(res.manifest, uid).text
                   for uid in res.manifest.ids(kind="text", split="train")]
    model = train_lm(train_texts, vocab_size=cfg.corpus.text_vocab_size,
                     order=pcfg.lm_order, alpha=pcfg.lm_alpha)
    model.save(exp / "lm.json")
    _record_artifact(exp, "lm", exp / "lm.json")
    dev_texts = [load_utterance(res.manifest, uid).text
                 for uid in res.manifest.ids(kind="text", split="dev")[:200]]
    if dev_texts:
        log.info("lm perplexity (dev): %.2f", model.perplexity(dev_texts))
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg, exp, res = _prepare(args, need_codes=True)
    tr = pipeline.run_pretrain(res, cfg.model, cfg.train,
                               metrics_path=exp / "metrics.jsonl",
                               ckpt_path=exp / "pretrain-ckpt.npz")
    out = exp / "pretrained.npz"
    tr.save_state(out, "stage2", {"step": cfg.train.stage2_steps})
    _record_artifact(exp, "pretrained", out)
    log.info("pretrained checkpoint: %s", out)
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg, exp, res = _prepare(args)
    if args.init:
        mcfg, params, _, _ = load_checkpoint(args.init)
        model = Model(mcfg, params)
    else:
        init_path = exp / "pretrained.npz"
        if not init_path.exists():
            raise MissingArtifactError(str(init_path), "pretrain")
        mcfg, params, _, _ = load_checkpoint(init_path)
        model = Model(mcfg, params)
    tr = pipeline.run_finetune(model, res, cfg.train,
                               metrics_path=exp / "metrics.jsonl")
    out = exp / "finetuned.npz"
    tr.save_state(out, "finetune", {"step": cfg.train.finetune_steps})
    _record_artifact(exp, "finetuned", out)
    log.info("finetuned checkpoint: %s", out)
    return EXIT_OK


def cmd_decode(args) -> int:
    cfg, exp, res = _prepare(args)
    mcfg, params, _, _ = load_checkpoint(args.checkpoint)
    model = Model(mcfg, params)
    lm = None
    if args.lm_weight > 0:
        lm_path = exp / "lm.json"
        if not lm_path.exists():
            raise MissingArtifactError(str(lm_path), "train-lm")
        lm = NGramLM.load(lm_path)
    beam_cfg = BeamConfig(beam_size=args.beam, lm_weight=args.lm_weight,
                          length_penalty=cfg.beam.length_penalty,
                          max_len=cfg.beam.max_len)
    ids = res.manifest.ids(kind="paired", split=args.split)[:args.max_utts]
    out = Path(args.out)
    ref_path = out.with_suffix(".refs.tsv")
    from . import autodiff as ad
    with open(out, "w") as fh, open(ref_path, "w") as fr, ad.no_grad():
        for uid in ids:
            utt = load_utterance(res.manifest, uid)
            hyp = beam_decode(model, utt.features, lm=lm, cfg=beam_cfg)
            fh.write(f"{uid}\t{hyp.score:.4f}\t"
                     + " ".join(map(str, hyp.tokens)) + "\n")
            fr.write(uid + "\t" + " ".join(map(str, utt.text)) + "\n")
    log.info("wrote %d hypotheses to %s (refs: %s)", len(ids), out, ref_path)
    return EXIT_OK


def _read_token_file(path) -> dict[str, list[int]]:
    out = {}
    for ln, line in enumerate(Path(path).read_text().splitlines(), start=1):
        parts = line.split("\t")
        if len(parts) == 3:  # id, score, tokens
            uid, _, toks = parts
        elif len(parts) == 2:
            uid, toks = parts
        else:
            raise ValueError(f"{path}:{ln}: expected 2 or 3 tab-separated fields")
        out[uid] = [int(t) for t in toks.split()] if toks.strip() else []
    return out


def cmd_eval(args) -> int:
    hyps = _read_token_file(args.hyp)
    refs = _read_token_file(args.ref)
    if set(hyps) != set(refs):
        raise ValueError("hypothesis and reference ids differ")
    ids = sorted(refs)
    ter = token_error_rate([hyps[i] for i in ids], [refs[i] for i in ids])
    print(f"TER {ter:.4f}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg, exp, res = _prepare(args, need_codes=True)
    removal_lists = []
    if args.removals:
        for group in args.removals.split(";"):
            removal_lists.append(tuple(t.strip() for t in group.split("&")))
    seeds = [int(s) for s in args.seeds.split(",")]

    def progress(name, seed, ter):
        log.info("variant %-10s seed %d TER %s", name, seed,
                 f"{ter:.4f}" if ter is not None else "diverged")

    report = pipeline.ablate(res, cfg.model, cfg.train, removal_lists, seeds,
                             beam_cfg=cfg.beam, max_eval_utts=args.max_utts,
                             progress=progress)
    out = exp / "ablation.json"
    out.write_text(json.dumps(report, indent=2))
    for name, v in report["variants"].items():
        med = v["ter_median"]
        print(f"{name:12s} TER median {med if med is None else f'{med:.4f}'}"
              f"  collapse={v['collapse_detected']}")
    log.info("report: %s", out)
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="phonemix")
    p.add_argument("--config", default=None, help="YAML config file")
    p.add_argument("--seed", type=int, default=None,
                   help="override every config seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker cap (execution is deterministic regardless)")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("dump-config", help="print the resolved config")
    sp.set_defaults(fn=cmd_dump_config)

    sp = sub.add_parser("synth-data", help="generate the synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_synth_data)

    def common(sp):
        sp.add_argument("--data", required=True, help="corpus directory")
        sp.add_argument("--exp", required=True, help="experiment directory")

    sp = sub.add_parser("train-codebook", help="fit the k-means codebook")
    common(sp)
    sp.add_argument("--max-utts", type=int, default=500)
    sp.set_defaults(fn=cmd_train_codebook)

    sp = sub.add_parser("train-bpe", help="train BPE over unit sequences")
    common(sp)
    sp.add_argument("--max-utts", type=int, default=2000)
    sp.set_defaults(fn=cmd_train_bpe)

    sp = sub.add_parser("encode-units", help="emit pseudo-codes per utterance")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--kind", default="speech", choices=["speech", "paired"])
    sp.set_defaults(fn=cmd_encode_units)

    sp = sub.add_parser("train-lm", help="train the external n-gram LM")
    common(sp)
    sp.set_defaults(fn=cmd_train_lm)

    sp = sub.add_parser("pretrain", help="two-stage multi-task pre-training")
    common(sp)
    sp.set_defaults(fn=cmd_pretrain)

    sp = sub.add_parser("finetune", help="supervised fine-tuning")
    common(sp)
    sp.add_argument("--init", default=None, help="initial checkpoint "
                    "(default: <exp>/pretrained.npz)")
    sp.set_defaults(fn=cmd_finetune)

    sp = sub.add_parser("decode", help="beam decoding with optional LM fusion")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--beam", type=int, default=4)
    sp.add_argument("--lm-weight", type=float, default=0.0)
    sp.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    sp.add_argument("--max-utts", type=int, default=200)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_decode)

    sp = sub.add_parser("eval", help="token error rate between files")
    sp.add_argument("--hyp", required=True)
    sp.add_argument("--ref", required=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("ablate", help="task-removal ablation study")
    common(sp)
    sp.add_argument("--removals", default="p2t;msp;s2c;msp&s2c;pp;s2t",
                    help="semicolon-separated variants, & joins tasks")
    sp.add_argument("--seeds", default="0,1,2")
    sp.add_argument("--max-utts", type=int, default=100)
    sp.set_defaults(fn=cmd_ablate)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.quiet else (
        logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except MissingArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING_ARTIFACT
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # structured failure, nonzero exit
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
