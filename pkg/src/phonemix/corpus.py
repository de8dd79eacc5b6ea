"""Synthetic corpus generation and manifest/feature file I/O.

"Speech" features are a known stochastic function of phoneme sequences:
text comes from a fixed Markov chain, maps through the lexicon to phonemes,
and each phoneme emits a few frames of its Gaussian signature vector.
Ground truth therefore exists for every utterance.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lexicon import Lexicon, build_lexicon, text_to_phonemes

MANIFEST_FORMAT = "phonemix-manifest"
MANIFEST_VERSION = 1
FEATURE_MAGIC = b"PMXF"

KINDS = ("text", "speech", "paired")
SPLITS = ("train", "dev", "test")


class ManifestError(ValueError):
    pass


class MissingIdError(KeyError):
    def __init__(self, utt_id: str):
        super().__init__(f"utterance id not in manifest: {utt_id}")
        self.utt_id = utt_id


@dataclass
class SyntheticCorpusConfig:
    seed: int = 0
    n_text_utts: int = 50_000
    n_unlabeled_speech_utts: int = 10_000
    n_paired_utts: int = 2_000
    text_vocab_size: int = 40
    phoneme_vocab_size: int = 16
    homophone_rate: float = 0.5
    feature_dim: int = 16
    frames_per_phoneme: tuple[int, int] = (6, 10)
    noise_std: float = 0.3
    min_utt_len: int = 4
    max_utt_len: int = 10
    dev_fraction: float = 0.05
    test_fraction: float = 0.05

    def validate(self):
        if self.phoneme_vocab_size > self.text_vocab_size:
            raise ValueError("phoneme vocab must not exceed text vocab")
        for name in ("n_text_utts", "n_unlabeled_speech_utts", "n_paired_utts",
                     "text_vocab_size", "phoneme_vocab_size", "feature_dim",
                     "min_utt_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        lo, hi = self.frames_per_phoneme
        if not 1 <= lo <= hi:
            raise ValueError("frames_per_phoneme must be a valid range")
        if self.max_utt_len < self.min_utt_len:
            raise ValueError("max_utt_len < min_utt_len")


@dataclass
class ManifestEntry:
    id: str
    kind: str  # text | speech | paired
    split: str  # train | dev | test
    text: list[int] | None = None
    features: str | None = None  # path relative to manifest dir

    def validate(self):
        if self.kind not in KINDS:
            raise ManifestError(f"bad kind {self.kind!r} for {self.id}")
        if self.split not in SPLITS:
            raise ManifestError(f"bad split {self.split!r} for {self.id}")
        if self.text is None and self.features is None:
            raise ManifestError(f"entry {self.id} has neither text nor features")
        if self.kind == "paired" and (self.text is None or len(self.text) < 1
                                      or self.features is None):
            raise ManifestError(f"paired entry {self.id} must carry both payloads")


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    root: Path | None = None
    by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.by_id = {}
        for e in self.entries:
            if e.id in self.by_id:
                raise ManifestError(f"duplicate id {e.id}")
            self.by_id[e.id] = e

    def ids(self, kind=None, split=None):
        return [e.id for e in self.entries
                if (kind is None or e.kind == kind)
                and (split is None or e.split == split)]


@dataclass
class Utterance:
    id: str
    split: str
    features: np.ndarray | None = None  # (T, F) float32
    text: np.ndarray | None = None  # (L,) int64


def write_features(path, feats: np.ndarray):
    feats = np.asarray(feats, dtype="<f4")
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(struct.pack("<II", feats.shape[0], feats.shape[1]))
        f.write(feats.tobytes())


def read_features(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise ManifestError(f"{path}: bad feature file magic")
    t, fdim = struct.unpack("<II", raw[4:12])
    body = np.frombuffer(raw[12:], dtype="<f4")
    if body.size != t * fdim:
        raise ManifestError(f"{path}: truncated feature payload")
    return body.reshape(t, fdim).copy()


def save_manifest(manifest: Manifest, path):
    with open(path, "w") as f:
        f.write(json.dumps({"format": MANIFEST_FORMAT,
                            "version": MANIFEST_VERSION}) + "\n")
        for e in manifest.entries:
            rec = {"id": e.id, "kind": e.kind, "split": e.split}
            if e.text is not None:
                rec["text"] = [int(t) for t in e.text]
            if e.features is not None:
                rec["features"] = e.features
            f.write(json.dumps(rec) + "\n")


def load_manifest(path) -> Manifest:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}:1: unparseable header") from e
    if header.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: not a {MANIFEST_FORMAT} file")
    if header.get("version") != MANIFEST_VERSION:
        raise ManifestError(f"{path}: unsupported version {header.get('version')}")
    entries = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entry = ManifestEntry(id=rec["id"], kind=rec["kind"], split=rec["split"],
                                  text=rec.get("text"), features=rec.get("features"))
        except (json.JSONDecodeError, KeyError) as e:
            raise ManifestError(f"{path}:{ln}: bad manifest record: {e}") from e
        entry.validate()
        entries.append(entry)
    return Manifest(entries=entries, root=path.parent)


def load_utterance(manifest: Manifest, utt_id: str) -> Utterance:
    if utt_id not in manifest.by_id:
        raise MissingIdError(utt_id)
    e = manifest.by_id[utt_id]
    feats = None
    if e.features is not None:
        if manifest.root is None:
            raise ManifestError("manifest has no root directory for feature paths")
        feats = read_features(manifest.root / e.features)
    text = np.asarray(e.text, dtype=np.int64) if e.text is not None else None
    return Utterance(id=e.id, split=e.split, features=feats, text=text)


def phoneme_signatures(cfg: SyntheticCorpusConfig) -> np.ndarray:
    """Per-phoneme mean frame vectors, rows indexed 1..I (row 0 unused)."""
    rng = np.random.default_rng([cfg.seed, 0x5160])
    sig = rng.normal(0.0, 1.0, size=(cfg.phoneme_vocab_size + 1, cfg.feature_dim))
    sig[0] = 0.0
    return sig


def _markov_chain(cfg: SyntheticCorpusConfig):
    rng = np.random.default_rng([cfg.seed, 0xA11])
    V = cfg.text_vocab_size
    init = rng.dirichlet(np.full(V, 0.5))
    trans = rng.dirichlet(np.full(V, 0.3), size=V)
    return init, trans


def _sample_text(rng, init, trans, lo, hi) -> np.ndarray:
    n = int(rng.integers(lo, hi + 1))
    out = np.empty(n, dtype=np.int64)
    out[0] = rng.choice(len(init), p=init)
    for i in range(1, n):
        out[i] = rng.choice(len(init), p=trans[out[i - 1]])
    return out


def _emit_frames(rng, phonemes, sig, cfg) -> np.ndarray:
    lo, hi = cfg.frames_per_phoneme
    chunks = []
    for p in phonemes:
        n = int(rng.integers(lo, hi + 1))
        base = np.tile(sig[p], (n, 1))
        if cfg.noise_std > 0:
            base = base + rng.normal(0.0, cfg.noise_std, size=base.shape)
        chunks.append(base)
    return np.concatenate(chunks, axis=0).astype(np.float32)


def _pick_split(rng, cfg) -> str:
    r = rng.random()
    if r < cfg.dev_fraction:
        return "dev"
    if r < cfg.dev_fraction + cfg.test_fraction:
        return "test"
    return "train"


def synth_corpus(cfg: SyntheticCorpusConfig, out_dir) -> Manifest:
    """Generate the corpus under out_dir and return its manifest.

    Writes manifest.jsonl, lexicon.tsv and features/<id>.bin files.
    Deterministic for a given config.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)

    lex = build_lexicon(cfg.text_vocab_size, cfg.phoneme_vocab_size,
                        cfg.homophone_rate, cfg.seed)
    lex.save(out_dir / "lexicon.tsv")
    sig = phoneme_signatures(cfg)
    init, trans = _markov_chain(cfg)
    rng = np.random.default_rng([cfg.seed, 0xC0])

    entries = []

    def make(kind: str, count: int):
        for i in range(count):
            uid = f"{kind}-{i:06d}"
            text = _sample_text(rng, init, trans, cfg.min_utt_len, cfg.max_utt_len)
            split = _pick_split(rng, cfg)
            feat_rel = None
            if kind in ("speech", "paired"):
                phonemes = text_to_phonemes(lex, text)
                feats = _emit_frames(rng, phonemes, sig, cfg)
                feat_rel = f"features/{uid}.bin"
                write_features(out_dir / feat_rel, feats)
            entries.append(ManifestEntry(
                id=uid, kind=kind, split=split,
                text=[int(t) for t in text] if kind in ("text", "paired") else None,
                features=feat_rel))

    make("text", cfg.n_text_utts)
    make("speech", cfg.n_unlabeled_speech_utts)
    make("paired", cfg.n_paired_utts)

    manifest = Manifest(entries=entries, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest
