"""High-level experiment orchestration: pretrain/finetune runs, token
error rate evaluation, and the task-removal ablation harness.
"""

from __future__ import annotations

from dataclasses import replace
from statistics import median

import numpy as np

from . import autodiff as ad
from .decoding import BeamConfig, beam_decode
from .lm import NGramLM
from .metrics import token_error_rate
from .model import Model, ModelConfig, init_params
from .optim import DivergenceError
from .trainer import Resources, TrainConfig, Trainer


def evaluate_ter(model: Model, res: Resources, split: str = "dev",
                 beam_cfg: BeamConfig | None = None,
                 lm: NGramLM | None = None, max_utts: int = 100) -> float:
    """Decode paired utterances of a split and score against references."""
    ids = res.manifest.ids(kind="paired", split=split)[:max_utts]
    if not ids:
        raise ValueError(f"no paired utterances in split {split!r}")
    hyps, refs = [], []
    with ad.no_grad():
        for uid in ids:
            from .corpus import load_utterance
            utt = load_utterance(res.manifest, uid)
            hyp = beam_decode(model, utt.features, lm=lm, cfg=beam_cfg)
            hyps.append(hyp.tokens)
            refs.append(list(utt.text))
    return token_error_rate(hyps, refs)


def run_pretrain(res: Resources, model_cfg: ModelConfig, cfg: TrainConfig,
                 metrics_path=None, ckpt_path=None,
                 stage1_model: Model | None = None) -> Trainer:
    """Stage-1 warm-up (unless given pre-warmed params) then stage 2."""
    model = stage1_model or Model(model_cfg)
    tr = Trainer(model, res, cfg, metrics_path=metrics_path)
    if stage1_model is None:
        tr.train_stage1(ckpt_path=ckpt_path)
    tr.train_stage2(ckpt_path=ckpt_path)
    return tr


def run_stage1_only(res: Resources, model_cfg: ModelConfig,
                    cfg: TrainConfig) -> Model:
    model = Model(model_cfg)
    tr = Trainer(model, res, cfg)
    tr.train_stage1()
    return model


def run_finetune(model: Model, res: Resources, cfg: TrainConfig,
                 metrics_path=None) -> Trainer:
    tr = Trainer(model, res, cfg, metrics_path=metrics_path)
    tr.finetune()
    return tr


def _clone_model(model: Model) -> Model:
    from .autodiff import Tensor

    params = {k: Tensor(t.data.copy(), requires_grad=True)
              for k, t in model.params.items()}
    return Model(model.cfg, params)


def variant_name(removals: tuple[str, ...]) -> str:
    return "full" if not removals else "-" + "&".join(removals)


def ablate(res: Resources, model_cfg: ModelConfig, base_cfg: TrainConfig,
           removal_lists: list[tuple[str, ...]], seeds: list[int],
           beam_cfg: BeamConfig | None = None, max_eval_utts: int = 100,
           progress=None) -> dict:
    """Run stage2 + finetune for the full model and each task-removal
    variant with shared seeds; report dev TER and collapse diagnostics.

    Stage-1 warm-up is run once per seed and shared by every variant that
    keeps the P2T task; removing P2T skips the warm-up.
    """
    variants = [()] + [tuple(r) for r in removal_lists]
    for removals in variants:
        remaining = [t for t in base_cfg.enabled_tasks if t not in removals]
        if not remaining:
            raise ValueError(f"removing {removals} leaves no tasks")
    report: dict = {"variants": {}, "seeds": seeds}
    warm: dict[int, Model] = {}
    for seed in seeds:
        cfg = replace(base_cfg, seed=seed)
        warm[seed] = run_stage1_only(
            res, replace(model_cfg, seed=seed), cfg)
    for removals in variants:
        name = variant_name(removals)
        ters, collapses, min_ents, diverged = [], [], [], []
        for seed in seeds:
            enabled = tuple(t for t in base_cfg.enabled_tasks
                            if t not in removals)
            cfg = replace(base_cfg, seed=seed, enabled_tasks=enabled)
            mcfg = replace(model_cfg, seed=seed)
            if "p2t" in enabled:
                start = _clone_model(warm[seed])
            else:
                start = Model(mcfg)
            tr = Trainer(start, res, cfg)
            try:
                tr.train_stage2()
                ft = Trainer(tr.model, res, replace(cfg, enabled_tasks=("s2t",)))
                ft.finetune()
                ter = evaluate_ter(ft.model, res, beam_cfg=beam_cfg,
                                   max_utts=max_eval_utts)
                ters.append(ter)
            except DivergenceError as e:
                diverged.append({"seed": seed, "error": str(e)})
            collapses.append(tr.collapse_detected)
            min_ents.append(tr.min_entropy)
            if progress:
                progress(name, seed, ters[-1] if ters else None)
        report["variants"][name] = {
            "removals": list(removals),
            "ter": ters,
            "ter_median": median(ters) if ters else None,
            "diverged": diverged,
            "collapse_detected": any(collapses),
            "min_pred_entropy": min(min_ents) if min_ents else None,
        }
    return report
