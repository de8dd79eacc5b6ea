"""Two-stage multi-task training.

Stage 1 warms up on phoneme-to-text only (patience-based stop).  Stage 2
interleaves the five tasks in exact per-cycle ratios; each batch is
single-task, the phoneme embedding table is frozen during masked-speech
batches, and a collapse diagnostic (mean predicted-distribution entropy)
is logged every masked-speech step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import losses as L
from .corpus import Manifest, Utterance, load_utterance
from .lexicon import Lexicon, NoiseConfig, noise_phonemes, text_to_phonemes
from .masking import SpanMaskConfig, downsample_mask, sample_span_mask
from .model import Model, save_checkpoint, load_checkpoint, ModelConfig
from .optim import Adam, DivergenceError, OptimConfig
from .units import BpeModel, Codebook, TeacherFeaturizer, speech_to_pseudocodes

TASK_ORDER = ("msp", "s2c", "p2t", "pp", "s2t")

# per-task frozen parameter paths; the phoneme table only moves via PP/P2T
FREEZE: dict[str, frozenset] = {
    "msp": frozenset({"phoneme_emb"}),
    "pp": frozenset(),
    "s2c": frozenset(),
    "p2t": frozenset(),
    "s2t": frozenset(),
}


@dataclass
class TrainConfig:
    stage1_steps: int = 400
    stage2_steps: int = 600
    finetune_steps: int = 200
    batch_size: int = 8
    sample_ratios: dict = field(default_factory=lambda: {
        "msp": 4, "s2c": 4, "p2t": 2, "pp": 1, "s2t": 1})
    loss_weights: dict = field(default_factory=lambda: {t: 1.0 for t in TASK_ORDER})
    enabled_tasks: tuple = TASK_ORDER
    optim: OptimConfig = field(default_factory=OptimConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    span_mask: SpanMaskConfig = field(default_factory=SpanMaskConfig)
    seed: int = 0
    eval_interval: int = 50
    patience: int = 5
    dev_eval_utts: int = 64
    checkpoint_interval: int = 0  # 0 disables periodic checkpoints
    entropy_floor_frac: float = 0.1  # alert below ln(I) * frac

    def validate(self):
        if not self.enabled_tasks:
            raise ValueError("at least one task must be enabled")
        for t in self.enabled_tasks:
            if t not in TASK_ORDER:
                raise ValueError(f"unknown task {t!r}")
        for t, r in self.sample_ratios.items():
            if r < 0:
                raise ValueError(f"negative ratio for {t}")
        if min(self.stage1_steps, self.stage2_steps, self.finetune_steps) < 0:
            raise ValueError("step counts must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["enabled_tasks"] = list(self.enabled_tasks)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["optim"] = OptimConfig(**d["optim"])
        d["noise"] = NoiseConfig(**d["noise"])
        d["span_mask"] = SpanMaskConfig(**d["span_mask"])
        d["enabled_tasks"] = tuple(d["enabled_tasks"])
        return cls(**d)


def schedule_cycle(cfg: TrainConfig, cycle_idx: int) -> list[str]:
    """The tasks of one cycle: exactly ratio[k] batches of each enabled
    task, order shuffled deterministically per cycle."""
    tasks = []
    for t in TASK_ORDER:
        if t in cfg.enabled_tasks:
            tasks.extend([t] * cfg.sample_ratios.get(t, 0))
    if not tasks:
        raise ValueError("schedule is empty: all enabled tasks have ratio 0")
    rng = np.random.default_rng([cfg.seed, 0x5C, cycle_idx])
    rng.shuffle(tasks)
    return tasks


def task_at(cfg: TrainConfig, step: int) -> str:
    cycle_len = sum(cfg.sample_ratios.get(t, 0) for t in TASK_ORDER
                    if t in cfg.enabled_tasks)
    return schedule_cycle(cfg, step // cycle_len)[step % cycle_len]


def build_schedule(cfg: TrainConfig):
    """Infinite deterministic task sequence."""
    step = 0
    while True:
        yield task_at(cfg, step)
        step += 1


@dataclass
class Resources:
    manifest: Manifest
    lexicon: Lexicon
    featurizer: TeacherFeaturizer | None = None
    codebook: Codebook | None = None
    bpe: BpeModel | None = None


class Trainer:
    def __init__(self, model: Model, res: Resources, cfg: TrainConfig,
                 metrics_path=None):
        cfg.validate()
        self.model = model
        self.res = res
        self.cfg = cfg
        self.opt = Adam(model.params, cfg.optim)
        self.rng = np.random.default_rng([cfg.seed, 0x7A])
        self.metrics_path = Path(metrics_path) if metrics_path else None
        self.history: list[dict] = []
        self.collapse_detected = False
        self.min_entropy = float("inf")
        self.ctc_skipped = 0
        self._utts: dict[str, Utterance] = {}
        self._codes: dict[str, np.ndarray] = {}
        m = res.manifest
        self.pools = {
            "text": m.ids(kind="text", split="train"),
            "speech": m.ids(kind="speech", split="train"),
            "paired": m.ids(kind="paired", split="train"),
        }
        self.dev_text = m.ids(kind="text", split="dev")[:cfg.dev_eval_utts]
        self.dev_paired = m.ids(kind="paired", split="dev")

    # --- data access ----------------------------------------------------

    def _utt(self, uid: str) -> Utterance:
        if uid not in self._utts:
            self._utts[uid] = load_utterance(self.res.manifest, uid)
        return self._utts[uid]

    def _pseudocodes(self, uid: str) -> np.ndarray:
        if uid not in self._codes:
            r = self.res
            if r.featurizer is None or r.codebook is None or r.bpe is None:
                raise ValueError("S2C needs featurizer, codebook and bpe model")
            self._codes[uid] = speech_to_pseudocodes(
                r.featurizer, r.codebook, r.bpe, self._utt(uid).features)
        return self._codes[uid]

    def _sample(self, pool_name: str, n: int) -> list[str]:
        pool = self.pools[pool_name]
        if not pool:
            raise ValueError(f"empty training pool: {pool_name}")
        idx = self.rng.integers(len(pool), size=n)
        return [pool[i] for i in idx]

    # --- per-task batch losses -------------------------------------------

    def _seq_loss(self, memory, text, space, loss_fn, train_rng):
        cfgm = self.model.cfg
        prefix = np.concatenate([[cfgm.bos(space)], text])
        target = np.concatenate([text, [cfgm.eos(space)]])
        logp = self.model.decode(prefix, memory, space,
                                 train=train_rng is not None, rng=train_rng)
        return loss_fn(logp, target), len(target)

    def _batch_p2t(self, ids):
        total, norm = None, 0
        for uid in ids:
            text = self._utt(uid).text
            ph = text_to_phonemes(self.res.lexicon, text)
            noisy, _ = noise_phonemes(ph, self.cfg.noise, self.res.lexicon,
                                      rng=self.rng)
            mem = self.model.encode_phonemes(noisy, train=True, rng=self.rng)
            loss, n = self._seq_loss(mem, text, "text", L.loss_p2t, self.rng)
            total = loss if total is None else ad.add(total, loss)
            norm += n
        return total, norm, {}

    def _batch_s2t(self, ids):
        total, norm = None, 0
        for uid in ids:
            utt = self._utt(uid)
            mem = self.model.encode_speech(utt.features, train=True, rng=self.rng)
            loss, n = self._seq_loss(mem, utt.text, "text", L.loss_s2t, self.rng)
            total = loss if total is None else ad.add(total, loss)
            norm += n
        return total, norm, {}

    def _batch_s2c(self, ids):
        total, norm = None, 0
        for uid in ids:
            utt = self._utt(uid)
            codes = self._pseudocodes(uid)
            mem = self.model.encode_speech(utt.features, train=True, rng=self.rng)
            loss, n = self._seq_loss(mem, codes, "code", L.loss_s2c, self.rng)
            total = loss if total is None else ad.add(total, loss)
            norm += n
        return total, norm, {}

    def _batch_pp(self, ids):
        total, norm, skipped = None, 0, 0
        for uid in ids:
            utt = self._utt(uid)
            ph = text_to_phonemes(self.res.lexicon, utt.text)
            H = self.model.encode_speech(utt.features, train=True, rng=self.rng)
            logits = self.model.phoneme_logits(H, with_blank=True)
            try:
                loss = L.loss_pp(logits, ph)
            except L.CtcInfeasibleError:
                skipped += 1
                continue
            total = loss if total is None else ad.add(total, loss)
            norm += len(ph)
        self.ctc_skipped += skipped
        return total, norm, {"ctc_skipped": skipped}

    def _batch_msp(self, ids):
        total, norm = None, 0
        entropies = []
        E = self.model.params["phoneme_emb"].data[1:self.model.cfg.phoneme_vocab + 1]
        for uid in ids:
            feats = self._utt(uid).features
            frame_mask = sample_span_mask(len(feats), self.cfg.span_mask,
                                          rng=self.rng, force=True)
            lat_mask = downsample_mask(frame_mask,
                                       kernel=self.model.cfg.conv_kernel,
                                       stride=self.model.cfg.conv_stride)
            with ad.no_grad():
                H_clean = self.model.encode_speech(feats)
            target = L.target_phoneme_distribution(H_clean, E)
            H_masked = self.model.encode_speech(feats, latent_mask=lat_mask,
                                                train=True, rng=self.rng)
            pred_logits = self.model.phoneme_logits(H_masked, with_blank=False)
            pred_log = ad.log_softmax(pred_logits, axis=-1)
            loss = L.loss_msp(target, pred_log, lat_mask)
            total = loss if total is None else ad.add(total, loss)
            norm += int(lat_mask.sum())
            pred_dist = np.exp(pred_log.data[lat_mask])
            entropies.append(L.distribution_entropy(pred_dist))
        mean_ent = float(np.mean(entropies))
        floor = np.log(self.model.cfg.phoneme_vocab) * self.cfg.entropy_floor_frac
        self.min_entropy = min(self.min_entropy, mean_ent)
        if mean_ent < floor:
            self.collapse_detected = True
        return total, norm, {"pred_entropy": mean_ent,
                             "collapse_alert": bool(mean_ent < floor)}

    _POOL_FOR_TASK = {"msp": "speech", "s2c": "speech", "p2t": "text",
                      "pp": "paired", "s2t": "paired"}

    # --- optimization ----------------------------------------------------

    def train_step(self, task: str, phase: str, step: int):
        ids = self._sample(self._POOL_FOR_TASK[task], self.cfg.batch_size)
        builder = getattr(self, f"_batch_{task}")
        total, norm, diag = builder(ids)
        record = {"phase": phase, "step": step, "task": task, **diag}
        if total is None:
            record["skipped"] = True
            self._log(record)
            return
        raw = float(total.data)
        if not np.isfinite(raw):
            raise DivergenceError(f"non-finite loss in task {task} at step {step}")
        weight = self.cfg.loss_weights.get(task, 1.0)
        scaled = ad.mul(total, weight / max(norm, 1))
        self.model.zero_grad()
        scaled.backward()
        self.opt.step(self.model.grads(), frozen=FREEZE[task])
        record["loss"] = raw
        record["norm_loss"] = raw / max(norm, 1)
        self._log(record)

    def _log(self, record: dict):
        self.history.append(record)
        if self.metrics_path:
            with open(self.metrics_path, "a") as f:
                f.write(json.dumps(record) + "\n")

    # --- dev evaluation ---------------------------------------------------

    def dev_p2t_loss(self) -> float:
        """Mean per-token P2T loss on a fixed dev subset (no rng side
        effects on the training stream)."""
        if not self.dev_text:
            raise ValueError("no dev text utterances")
        eval_rng = np.random.default_rng([self.cfg.seed, 0xDE])
        total, count = 0.0, 0
        with ad.no_grad():
            for uid in self.dev_text:
                text = self._utt(uid).text
                ph = text_to_phonemes(self.res.lexicon, text)
                noisy, _ = noise_phonemes(ph, self.cfg.noise, self.res.lexicon,
                                          rng=eval_rng)
                mem = self.model.encode_phonemes(noisy)
                loss, n = self._seq_loss(mem, text, "text", L.loss_p2t, None)
                total += float(loss.data)
                count += n
        return total / count

    # --- phases ------------------------------------------------------------

    def train_stage1(self, ckpt_path=None, _resume_state=None):
        """P2T-only warm-up: stops at stage1_steps or dev-loss patience."""
        cfg = self.cfg
        if "p2t" not in cfg.enabled_tasks or cfg.stage1_steps == 0:
            return
        state = _resume_state or {"step": 0, "best": float("inf"), "stale": 0}
        step = state["step"]
        best, stale = state["best"], state["stale"]
        while step < cfg.stage1_steps:
            self.train_step("p2t", "stage1", step)
            step += 1
            if step % cfg.eval_interval == 0:
                dev = self.dev_p2t_loss()
                self._log({"phase": "stage1", "step": step, "task": "dev_p2t",
                           "loss": dev})
                if dev < best - 1e-4:
                    best, stale = dev, 0
                else:
                    stale += 1
                if stale >= cfg.patience:
                    break
            if ckpt_path and cfg.checkpoint_interval and \
                    step % cfg.checkpoint_interval == 0:
                self.save_state(ckpt_path, "stage1",
                                {"step": step, "best": best, "stale": stale})

    def train_stage2(self, ckpt_path=None, start_step: int = 0):
        """Joint multi-task training over the deterministic schedule."""
        cfg = self.cfg
        for step in range(start_step, cfg.stage2_steps):
            self.train_step(task_at(cfg, step), "stage2", step)
            done = step + 1
            if ckpt_path and cfg.checkpoint_interval and \
                    done % cfg.checkpoint_interval == 0:
                self.save_state(ckpt_path, "stage2", {"step": done})

    def finetune(self, ckpt_path=None, start_step: int = 0):
        """Supervised speech-to-text only."""
        for step in range(start_step, self.cfg.finetune_steps):
            self.train_step("s2t", "finetune", step)
            done = step + 1
            if ckpt_path and self.cfg.checkpoint_interval and \
                    done % self.cfg.checkpoint_interval == 0:
                self.save_state(ckpt_path, "finetune", {"step": done})

    # --- checkpointing -----------------------------------------------------

    def save_state(self, path, phase: str, phase_state: dict):
        extra = {
            "train_config": self.cfg.to_dict(),
            "phase": phase,
            "phase_state": phase_state,
            "opt_step": self.opt.step_count,
            "rng_state": self.rng.bit_generator.state,
            "collapse_detected": self.collapse_detected,
            "min_entropy": self.min_entropy,
            "ctc_skipped": self.ctc_skipped,
        }
        save_checkpoint(path, self.model.cfg, self.model.params, extra=extra,
                        arrays=self.opt.state_arrays())

    @classmethod
    def restore(cls, path, res: Resources, metrics_path=None):
        """Rebuild a trainer mid-run; continuing is bit-identical to an
        uninterrupted run."""
        model_cfg, params, extra, arrays = load_checkpoint(path)
        model = Model(model_cfg, params)
        cfg = TrainConfig.from_dict(extra["train_config"])
        tr = cls(model, res, cfg, metrics_path=metrics_path)
        tr.opt.load_state_arrays(arrays, extra["opt_step"])
        tr.rng.bit_generator.state = extra["rng_state"]
        tr.collapse_detected = extra["collapse_detected"]
        tr.min_entropy = extra["min_entropy"]
        tr.ctc_skipped = extra["ctc_skipped"]
        return tr, extra["phase"], extra["phase_state"]
