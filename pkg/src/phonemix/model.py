"""Encoder-decoder network at toy dimensions.

Encoder = 2-layer strided conv feature extractor + speech-encoder
transformer stack + shared transformer stack.  Phoneme inputs embed
through the phoneme table and enter the shared stack directly.  The
decoder is a causal transformer with cross-attention and separate output
heads for text tokens and pseudo-codes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    feature_dim: int = 16
    model_dim: int = 64
    ffn_dim: int = 128
    heads: int = 4
    layers_speech_enc: int = 2
    layers_shared_enc: int = 2
    layers_dec: int = 2
    conv_kernel: int = 3
    conv_stride: int = 2
    phoneme_vocab: int = 16  # I
    text_vocab: int = 40
    code_vocab: int = 128
    dropout: float = 0.1
    seed: int = 0
    dtype: str = "float32"

    def validate(self):
        if self.model_dim % self.heads:
            raise ValueError("model_dim must be divisible by heads")
        for name in ("feature_dim", "model_dim", "ffn_dim", "heads",
                     "layers_speech_enc", "layers_shared_enc", "layers_dec",
                     "phoneme_vocab", "text_vocab", "code_vocab"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    # phoneme symbol space: 0 = blank, 1..I phonemes, then specials
    @property
    def n_phoneme_symbols(self) -> int:
        return self.phoneme_vocab + 5

    # text/code symbol spaces: tokens, then bos/eos/pad
    @property
    def n_text_symbols(self) -> int:
        return self.text_vocab + 3

    @property
    def n_code_symbols(self) -> int:
        return self.code_vocab + 3

    def bos(self, space: str) -> int:
        return self.text_vocab if space == "text" else self.code_vocab

    def eos(self, space: str) -> int:
        return (self.text_vocab if space == "text" else self.code_vocab) + 1


def sinusoidal_positions(length: int, dim: int, dtype) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(dim // 2)[None, :]
    angles = pos / np.power(10000.0, 2 * i / dim)
    enc = np.zeros((length, dim))
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles)
    return enc.astype(dtype)


def _xavier(rng, shape, dtype):
    fan_in, fan_out = shape[-2] if len(shape) > 1 else shape[0], shape[-1]
    if len(shape) == 3:  # conv weight (k, cin, cout)
        fan_in = shape[0] * shape[1]
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def init_params(cfg: ModelConfig) -> dict[str, Tensor]:
    cfg.validate()
    dtype = np.dtype(cfg.dtype)
    rng = np.random.default_rng([cfg.seed, 0x1417])
    d, k = cfg.model_dim, cfg.conv_kernel
    p: dict[str, np.ndarray] = {}

    p["phoneme_emb"] = (rng.normal(0, 0.3, (cfg.n_phoneme_symbols, d))
                        .astype(dtype))
    p["text_emb"] = rng.normal(0, 0.3, (cfg.n_text_symbols, d)).astype(dtype)
    p["code_emb"] = rng.normal(0, 0.3, (cfg.n_code_symbols, d)).astype(dtype)

    p["conv0_w"] = _xavier(rng, (k, cfg.feature_dim, d), dtype)
    p["conv0_b"] = np.zeros(d, dtype)
    p["conv1_w"] = _xavier(rng, (k, d, d), dtype)
    p["conv1_b"] = np.zeros(d, dtype)
    p["latent_mask_vec"] = rng.normal(0, 0.3, (1, d)).astype(dtype)

    def make_layer(prefix: str, cross: bool):
        p[f"{prefix}ln1_g"] = np.ones(d, dtype)
        p[f"{prefix}ln1_b"] = np.zeros(d, dtype)
        for w in ("wq", "wk", "wv", "wo"):
            p[f"{prefix}{w}"] = _xavier(rng, (d, d), dtype)
        if cross:
            p[f"{prefix}lnc_g"] = np.ones(d, dtype)
            p[f"{prefix}lnc_b"] = np.zeros(d, dtype)
            for w in ("cq", "ck", "cv", "co"):
                p[f"{prefix}{w}"] = _xavier(rng, (d, d), dtype)
        p[f"{prefix}ln2_g"] = np.ones(d, dtype)
        p[f"{prefix}ln2_b"] = np.zeros(d, dtype)
        p[f"{prefix}ffn_w1"] = _xavier(rng, (d, cfg.ffn_dim), dtype)
        p[f"{prefix}ffn_b1"] = np.zeros(cfg.ffn_dim, dtype)
        p[f"{prefix}ffn_w2"] = _xavier(rng, (cfg.ffn_dim, d), dtype)
        p[f"{prefix}ffn_b2"] = np.zeros(d, dtype)

    for i in range(cfg.layers_speech_enc):
        make_layer(f"spe{i}_", cross=False)
    for i in range(cfg.layers_shared_enc):
        make_layer(f"shr{i}_", cross=False)
    for i in range(cfg.layers_dec):
        make_layer(f"dec{i}_", cross=True)

    p["enc_lnf_g"] = np.ones(d, dtype)
    p["enc_lnf_b"] = np.zeros(d, dtype)
    p["dec_lnf_g"] = np.ones(d, dtype)
    p["dec_lnf_b"] = np.zeros(d, dtype)

    p["text_head_w"] = _xavier(rng, (d, cfg.n_text_symbols), dtype)
    p["text_head_b"] = np.zeros(cfg.n_text_symbols, dtype)
    p["code_head_w"] = _xavier(rng, (d, cfg.n_code_symbols), dtype)
    p["code_head_b"] = np.zeros(cfg.n_code_symbols, dtype)

    return {name: Tensor(arr, requires_grad=True) for name, arr in p.items()}


class Model:
    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor] | None = None):
        cfg.validate()
        self.cfg = cfg
        self.params = params if params is not None else init_params(cfg)

    # --- plumbing -----------------------------------------------------

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        return {k: t.grad for k, t in self.params.items() if t.grad is not None}

    def cast(self, dtype: str) -> "Model":
        cfg2 = ModelConfig(**{**asdict(self.cfg), "dtype": dtype})
        params = {k: Tensor(t.data.astype(dtype), requires_grad=True)
                  for k, t in self.params.items()}
        return Model(cfg2, params)

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    # --- building blocks ----------------------------------------------

    def _attention(self, prefix, x: Tensor, mem: Tensor, attn_mask, drop):
        d, h = self.cfg.model_dim, self.cfg.heads
        dk = d // h
        p = self.params
        Tq = x.shape[0]
        Tk = mem.shape[0]
        q = ad.transpose(ad.reshape(x @ p[prefix + "q"], (Tq, h, dk)), (1, 0, 2))
        key = ad.transpose(ad.reshape(mem @ p[prefix + "k"], (Tk, h, dk)), (1, 0, 2))
        v = ad.transpose(ad.reshape(mem @ p[prefix + "v"], (Tk, h, dk)), (1, 0, 2))
        scores = ad.mul(ad.matmul(q, ad.transpose(key, (0, 2, 1))),
                        1.0 / np.sqrt(dk))
        if attn_mask is not None:
            scores = ad.add(scores, attn_mask)
        attn = ad.softmax(scores, axis=-1)
        ctx = ad.matmul(attn, v)  # (h, Tq, dk)
        merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (Tq, d))
        out = merged @ p[prefix + "o"]
        return drop(out)

    def _ffn(self, prefix, x: Tensor, drop):
        p = self.params
        hidden = ad.gelu(ad.add(x @ p[prefix + "ffn_w1"], p[prefix + "ffn_b1"]))
        return drop(ad.add(hidden @ p[prefix + "ffn_w2"], p[prefix + "ffn_b2"]))

    def _ln(self, prefix, x: Tensor):
        return ad.layer_norm(x, self.params[prefix + "_g"], self.params[prefix + "_b"])

    def _encoder_layer(self, prefix, x: Tensor, drop):
        h = self._ln(prefix + "ln1", x)
        x = ad.add(x, self._attention(prefix + "w", h, h, None, drop))
        return ad.add(x, self._ffn(prefix, self._ln(prefix + "ln2", x), drop))

    def _decoder_layer(self, prefix, x, mem, causal_mask, drop):
        h = self._ln(prefix + "ln1", x)
        x = ad.add(x, self._attention(prefix + "w", h, h, causal_mask, drop))
        x = ad.add(x, self._attention(prefix + "c", self._ln(prefix + "lnc", x),
                                      mem, None, drop))
        return ad.add(x, self._ffn(prefix, self._ln(prefix + "ln2", x), drop))

    def _dropper(self, train: bool, rng):
        if not train or self.cfg.dropout <= 0:
            return lambda t: t
        if rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")
        return lambda t: ad.dropout(t, self.cfg.dropout, rng)

    # --- public forward passes ------------------------------------------

    def encode_speech(self, features: np.ndarray, latent_mask=None,
                      train: bool = False, rng=None) -> Tensor:
        """Conv extractor -> latent mask substitution -> speech encoder ->
        shared encoder.  `latent_mask` indexes latent (post-conv) steps."""
        features = np.asarray(features, dtype=self.dtype)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("features must be a nonempty (T, F) matrix")
        if not np.isfinite(features).all():
            raise ValueError("non-finite feature input")
        p = self.params
        drop = self._dropper(train, rng)
        x = Tensor(features)
        x = ad.gelu(ad.conv1d(x, p["conv0_w"], p["conv0_b"],
                              stride=self.cfg.conv_stride, pad=1))
        z = ad.gelu(ad.conv1d(x, p["conv1_w"], p["conv1_b"],
                              stride=self.cfg.conv_stride, pad=1))
        t_lat = z.shape[0]
        if latent_mask is not None and np.any(latent_mask):
            m = np.asarray(latent_mask, dtype=self.dtype)[:, None]
            if m.shape[0] != t_lat:
                raise ValueError(f"latent mask length {m.shape[0]} != {t_lat}")
            z = ad.add(ad.mul(z, 1.0 - m), ad.mul(p["latent_mask_vec"], m))
        z = ad.add(z, sinusoidal_positions(t_lat, self.cfg.model_dim, self.dtype))
        for i in range(self.cfg.layers_speech_enc):
            z = self._encoder_layer(f"spe{i}_", z, drop)
        for i in range(self.cfg.layers_shared_enc):
            z = self._encoder_layer(f"shr{i}_", z, drop)
        return self._ln("enc_lnf", z)

    def encode_phonemes(self, seq, train: bool = False, rng=None) -> Tensor:
        """Embed via the phoneme table and run the shared encoder only."""
        seq = np.asarray(seq, dtype=np.int64)
        if seq.ndim != 1 or seq.size < 1:
            raise ValueError("phoneme sequence must be nonempty 1-D")
        if seq.min() < 0 or seq.max() >= self.cfg.n_phoneme_symbols:
            raise ValueError("phoneme id out of range")
        drop = self._dropper(train, rng)
        d = self.cfg.model_dim
        x = ad.mul(ad.embedding(self.params["phoneme_emb"], seq), np.sqrt(d))
        x = ad.add(x, sinusoidal_positions(len(seq), d, self.dtype))
        for i in range(self.cfg.layers_shared_enc):
            x = self._encoder_layer(f"shr{i}_", x, drop)
        return self._ln("enc_lnf", x)

    def decode(self, prefix, memory: Tensor, space: str,
               train: bool = False, rng=None) -> Tensor:
        """Teacher-forced pass: log-probs (len(prefix), V) where row k
        conditions on prefix[:k+1]."""
        if space not in ("text", "code"):
            raise ValueError("space must be 'text' or 'code'")
        prefix = np.asarray(prefix, dtype=np.int64)
        if prefix.size < 1:
            raise ValueError("prefix must start with bos")
        if prefix[0] != self.cfg.bos(space):
            raise ValueError("prefix must start with bos")
        drop = self._dropper(train, rng)
        d = self.cfg.model_dim
        emb = self.params["text_emb" if space == "text" else "code_emb"]
        x = ad.mul(ad.embedding(emb, prefix), np.sqrt(d))
        x = ad.add(x, sinusoidal_positions(len(prefix), d, self.dtype))
        L = len(prefix)
        causal = np.triu(np.full((L, L), -1e9, dtype=self.dtype), k=1)
        for i in range(self.cfg.layers_dec):
            x = self._decoder_layer(f"dec{i}_", x, memory, causal, drop)
        x = self._ln("dec_lnf", x)
        head_w = self.params[f"{space}_head_w"]
        head_b = self.params[f"{space}_head_b"]
        return ad.log_softmax(ad.add(x @ head_w, head_b), axis=-1)

    def decode_step(self, prefix, memory: Tensor, space: str) -> np.ndarray:
        """Log-prob vector for the next token after `prefix`."""
        return self.decode(prefix, memory, space).data[-1]

    def phoneme_logits(self, H: Tensor, with_blank: bool) -> Tensor:
        """Similarity logits of encoder states against the phoneme table.

        with_blank=True prepends the blank row (class 0) and lets the
        gradient reach E (PP task).  with_blank=False uses a severed copy
        of E, so the MSP prediction branch never moves the table."""
        emb = self.params["phoneme_emb"]
        I = self.cfg.phoneme_vocab
        if with_blank:
            table = ad.slice_rows(emb, 0, I + 1)
        else:
            table = Tensor(emb.data[1:I + 1])
        return ad.matmul(H, ad.transpose(table, (1, 0)))


def param_count(cfg: ModelConfig) -> int:
    return sum(t.data.size for t in init_params(cfg).values())


def save_checkpoint(path, cfg: ModelConfig, params: dict[str, Tensor],
                    extra: dict | None = None,
                    arrays: dict[str, np.ndarray] | None = None):
    """Versioned npz container: named tensors + config + JSON metadata."""
    payload = {f"param/{k}": t.data for k, t in params.items()}
    if arrays:
        payload.update(arrays)
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(cfg),
            "extra": extra or {}}
    payload["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    import os
    import tempfile
    d = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    os.close(fd)
    try:
        np.savez(tmp, **payload)
        os.replace(tmp + ".npz", path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def load_checkpoint(path):
    """Return (cfg, params, extra_meta, other_arrays)."""
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        cfg = ModelConfig(**{k: tuple(v) if isinstance(v, list) else v
                             for k, v in meta["config"].items()})
        params = {}
        arrays = {}
        for key in z.files:
            if key.startswith("param/"):
                params[key[len("param/"):]] = Tensor(z[key], requires_grad=True)
            elif key != "__meta__":
                arrays[key] = z[key]
    return cfg, params, meta["extra"], arrays
