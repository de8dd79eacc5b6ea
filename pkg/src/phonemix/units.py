"""Unlabeled-speech annotation pipeline: frozen featurizer, k-means
discretization, run-length deduplication, and BPE compression into
pseudo-codes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CODEBOOK_VERSION = 1
BPE_VERSION = 1


class InsufficientDataError(ValueError):
    pass


@dataclass
class TeacherFeaturizer:
    """Frozen random projection with window averaging.

    Stands in for a pre-trained encoder: deterministic, never updated.
    """

    feature_dim: int
    out_dim: int = 16
    window: int = 2
    seed: int = 0
    projection: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng([self.seed, 0xFEA7])
        self.projection = rng.normal(
            0.0, 1.0 / np.sqrt(self.feature_dim),
            size=(self.feature_dim, self.out_dim))

    def featurize(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[1] != self.feature_dim:
            raise ValueError(f"expected dim {self.feature_dim}, got {frames.shape[1]}")
        T = frames.shape[0]
        n_out = -(-T // self.window)
        pooled = np.empty((n_out, self.feature_dim))
        for i in range(n_out):
            pooled[i] = frames[i * self.window:(i + 1) * self.window].mean(axis=0)
        return pooled @ self.projection


@dataclass
class Codebook:
    centroids: np.ndarray  # (K, D)
    inertia_history: list[float] | None = None

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    def validate(self):
        if self.K < 2:
            raise ValueError("codebook needs K >= 2")
        if not np.isfinite(self.centroids).all():
            raise ValueError("non-finite centroid")
        uniq = np.unique(self.centroids, axis=0)
        if uniq.shape[0] != self.K:
            raise ValueError("duplicate centroids")

    def save(self, path):
        hist = np.asarray(self.inertia_history or [], dtype=np.float64)
        np.savez(path, version=CODEBOOK_VERSION, centroids=self.centroids,
                 inertia_history=hist)

    @classmethod
    def load(cls, path) -> "Codebook":
        with np.load(path) as z:
            if int(z["version"]) != CODEBOOK_VERSION:
                raise ValueError(f"unsupported codebook version {z['version']}")
            hist = z["inertia_history"].tolist() if "inertia_history" in z else None
            return cls(centroids=z["centroids"], inertia_history=hist)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(points, K, rng):
    n = points.shape[0]
    centroids = np.empty((K, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = _sq_dists(points, centroids[:1]).min(axis=1)
    for i in range(1, K):
        total = d2.sum()
        if total <= 0:
            centroids[i] = points[rng.integers(n)]
        else:
            centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, _sq_dists(points, centroids[i:i + 1]).min(axis=1))
    return centroids


def kmeans_fit(vectors, K: int, max_iters: int = 100, tol: float = 1e-7,
               seed: int = 0) -> Codebook:
    """Lloyd's algorithm with k-means++ init.

    Empty clusters are re-seeded to the point farthest from its assigned
    centroid.  Stops when the max centroid shift drops below tol.
    """
    points = np.asarray(vectors, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < K:
        raise InsufficientDataError(f"need at least {K} vectors")
    rng = np.random.default_rng([seed, 0x4B])
    centroids = _kmeans_pp_init(points, K, rng)
    history = []
    for _ in range(max_iters):
        d2 = _sq_dists(points, centroids)
        assign = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(points)), assign].sum()))
        new = centroids.copy()
        for k in range(K):
            members = points[assign == k]
            if len(members):
                new[k] = members.mean(axis=0)
            else:
                far = int(d2[np.arange(len(points)), assign].argmax())
                new[k] = points[far]
                assign[far] = k
        shift = np.abs(new - centroids).max()
        centroids = new
        if shift < tol:
            break
    # final inertia at the converged centroids
    d2 = _sq_dists(points, centroids)
    history.append(float(d2.min(axis=1).sum()))
    return Codebook(centroids=centroids, inertia_history=history)


def quantize(cb: Codebook, frames: np.ndarray) -> np.ndarray:
    """Nearest-centroid unit per frame; ties break to the lowest index."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[1] != cb.centroids.shape[1]:
        raise ValueError(
            f"frame dim {frames.shape[1]} != codebook dim {cb.centroids.shape[1]}")
    return _sq_dists(frames, cb.centroids).argmin(axis=1)


def deduplicate(units) -> np.ndarray:
    """Collapse runs of equal adjacent units to a single unit."""
    units = np.asarray(units, dtype=np.int64)
    if units.size == 0:
        return units.copy()
    keep = np.ones(len(units), dtype=bool)
    keep[1:] = units[1:] != units[:-1]
    return units[keep]


@dataclass
class BpeModel:
    base_vocab: int  # unit ids 0..K-1 are the base symbols
    merges: list[tuple[int, int, int]] = field(default_factory=list)  # (a, b, new)

    @property
    def vocab_size(self) -> int:
        return self.base_vocab + len(self.merges)

    def save(self, path):
        Path(path).write_text(json.dumps({
            "version": BPE_VERSION,
            "base_vocab": self.base_vocab,
            "merges": [[int(a), int(b), int(n)] for a, b, n in self.merges],
        }))

    @classmethod
    def load(cls, path) -> "BpeModel":
        obj = json.loads(Path(path).read_text())
        if obj.get("version") != BPE_VERSION:
            raise ValueError(f"unsupported bpe version {obj.get('version')}")
        return cls(base_vocab=obj["base_vocab"],
                   merges=[tuple(m) for m in obj["merges"]])


def _apply_merge(seq: list[int], a: int, b: int, new: int) -> list[int]:
    out = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
            out.append(new)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out


def bpe_train(corpus, target_vocab: int, base_vocab: int) -> BpeModel:
    """Merge the most frequent adjacent pair (lexicographic tie-break)
    until target_vocab symbols exist or no pair occurs twice."""
    if target_vocab < base_vocab:
        raise ValueError("target_vocab must be >= base vocab")
    seqs = [list(map(int, s)) for s in corpus]
    merges: list[tuple[int, int, int]] = []
    next_id = base_vocab
    while base_vocab + len(merges) < target_vocab:
        counts: dict[tuple[int, int], int] = {}
        for s in seqs:
            for pair in zip(s, s[1:]):
                counts[pair] = counts.get(pair, 0) + 1
        if not counts:
            break
        best_count = max(counts.values())
        if best_count < 2:
            break
        pair = min(p for p, c in counts.items() if c == best_count)
        merges.append((pair[0], pair[1], next_id))
        seqs = [_apply_merge(s, pair[0], pair[1], next_id) for s in seqs]
        next_id += 1
    return BpeModel(base_vocab=base_vocab, merges=merges)


def bpe_encode(model: BpeModel, units) -> np.ndarray:
    """Apply merges greedily, lowest rank first."""
    seq = list(map(int, units))
    rank = {(a, b): (r, new) for r, (a, b, new) in enumerate(model.merges)}
    while len(seq) > 1:
        best = None
        for pair in zip(seq, seq[1:]):
            r = rank.get(pair)
            if r is not None and (best is None or r[0] < best[0]):
                best = (r[0], pair, r[1])
        if best is None:
            break
        _, (a, b), new = best
        seq = _apply_merge(seq, a, b, new)
    return np.asarray(seq, dtype=np.int64)


def bpe_decode(model: BpeModel, codes) -> np.ndarray:
    expand = {new: (a, b) for a, b, new in model.merges}
    out: list[int] = []
    for c in map(int, codes):
        if c >= model.vocab_size or c < 0:
            raise ValueError(f"unknown symbol {c}")
        stack = [c]
        buf = []
        while stack:
            sym = stack.pop()
            if sym in expand:
                a, b = expand[sym]
                stack.append(b)
                stack.append(a)
            else:
                buf.append(sym)
        out.extend(buf)
    return np.asarray(out, dtype=np.int64)


def speech_to_pseudocodes(featurizer: TeacherFeaturizer, cb: Codebook,
                          bpe: BpeModel, features: np.ndarray) -> np.ndarray:
    """featurize -> quantize -> deduplicate -> bpe_encode."""
    hidden = featurizer.featurize(features)
    units = quantize(cb, hidden)
    return bpe_encode(bpe, deduplicate(units))
