"""Student/teacher encoders, projection head, toy decoder, optimizer, checkpoints.

The encoder is a conv frontend (two 1-D convolutions, total stride equal to
the time-downsampling factor) followed by sinusoidal positions and pre-norm
transformer blocks. `encoder_forward` returns the residual-stream activations
after a chosen block (the tap) together with the post-final-LayerNorm output,
so a prediction head can train an intermediate layer while distillation
anchors the output space.

All parameters live in `Params` (name -> autodiff Tensor). Checkpoints are a
versioned little-endian binary: magic, JSON config block, named float32
tensors, JSON RNG block, step counter.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._util import DataError, NumericError, content_hash, seed_rng
from .features import FeatureMatrix

# ---------------------------------------------------------------------------
# parameter container


class Params:
    """Ordered mapping of parameter name -> Tensor."""

    def __init__(self, tensors: dict[str, ad.Tensor] | None = None):
        self._tensors: dict[str, ad.Tensor] = dict(tensors or {})

    def __getitem__(self, name: str) -> ad.Tensor:
        return self._tensors[name]

    def __setitem__(self, name: str, tensor: ad.Tensor) -> None:
        self._tensors[name] = tensor

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self):
        return iter(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self) -> list[str]:
        return list(self._tensors)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._tensors.items()}

    def num_values(self) -> int:
        return sum(t.data.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None

    def copy(self) -> "Params":
        return Params(
            {
                name: ad.Tensor(t.data.copy(), requires_grad=t.requires_grad)
                for name, t in self._tensors.items()
            }
        )

    def freeze(self) -> "Params":
        frozen: dict[str, ad.Tensor] = {}
        for name, t in self._tensors.items():
            data = t.data.copy()
            data.setflags(write=False)
            frozen[name] = ad.Tensor(data)
        return Params(frozen)

    def content_hash(self) -> str:
        return content_hash(self.arrays())

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            if name not in arrays:
                raise DataError(f"missing parameter '{name}' in loaded arrays")
            src = np.asarray(arrays[name], dtype=t.data.dtype)
            if src.shape != t.data.shape:
                raise DataError(
                    f"parameter '{name}': shape {src.shape} != expected {t.data.shape}"
                )
            t.data = src.copy()


def snapshot_teacher(student: Params) -> Params:
    """Deep-copy the student into a frozen, read-only teacher parameter set."""
    return student.freeze()


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class EncoderConfig:
    n_mels: int = 80
    n_layers: int = 8
    d_model: int = 64
    n_heads: int = 4
    ff_mult: int = 4
    downsample_factor: int = 2
    max_frames: int = 3000
    dtype: str = "float32"

    def __post_init__(self):
        if self.n_layers < 2:
            raise ValueError("n_layers must be >= 2")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {
            "n_mels": self.n_mels,
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "ff_mult": self.ff_mult,
            "downsample_factor": self.downsample_factor,
            "max_frames": self.max_frames,
            "dtype": self.dtype,
        }


@dataclass(frozen=True)
class LayerTap:
    """1-based index of the transformer block whose residual-stream output
    feeds the prediction head and the layer-level distillation loss."""

    layer: int

    def validate(self, n_layers: int) -> None:
        if not 1 <= self.layer <= n_layers:
            raise ValueError(f"tap layer {self.layer} out of range [1, {n_layers}]")


@dataclass
class EncoderOutputs:
    tap: ad.Tensor
    final: ad.Tensor
    out_lengths: np.ndarray

    @property
    def t_out(self) -> int:
        return self.final.shape[-2]


@dataclass(frozen=True)
class DecoderConfig:
    vocab_size: int
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    ff_mult: int = 4
    max_tokens: int = 64
    dtype: str = "float32"
    pad_id: int = 0
    bos_id: int = 1
    eos_id: int = 2

    def __post_init__(self):
        if self.vocab_size <= max(self.pad_id, self.bos_id, self.eos_id):
            raise ValueError("vocab must include pad/bos/eos ids")
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "n_layers": self.n_layers,
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "ff_mult": self.ff_mult,
            "max_tokens": self.max_tokens,
            "dtype": self.dtype,
            "pad_id": self.pad_id,
            "bos_id": self.bos_id,
            "eos_id": self.eos_id,
        }


# ---------------------------------------------------------------------------
# initialization


def _init_linear(rng, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    return (rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)).astype(dtype)


def _init_block(p: Params, rng, prefix: str, d: int, ff: int, dtype, cross: bool) -> None:
    def ln(name):
        p[f"{prefix}.{name}.g"] = ad.parameter(np.ones(d), dtype)
        p[f"{prefix}.{name}.b"] = ad.parameter(np.zeros(d), dtype)

    def attn(name):
        for w in ("wq", "wk", "wv", "wo"):
            p[f"{prefix}.{name}.{w}"] = ad.parameter(_init_linear(rng, d, d, dtype), dtype)
        for b in ("bq", "bk", "bv", "bo"):
            p[f"{prefix}.{name}.{b}"] = ad.parameter(np.zeros(d), dtype)

    ln("ln1")
    attn("attn")
    if cross:
        ln("ln2")
        attn("cross")
        ln("ln3")
    else:
        ln("ln2")
    p[f"{prefix}.mlp.w1"] = ad.parameter(_init_linear(rng, d, ff, dtype), dtype)
    p[f"{prefix}.mlp.b1"] = ad.parameter(np.zeros(ff), dtype)
    p[f"{prefix}.mlp.w2"] = ad.parameter(_init_linear(rng, ff, d, dtype), dtype)
    p[f"{prefix}.mlp.b2"] = ad.parameter(np.zeros(d), dtype)


def init_encoder_params(cfg: EncoderConfig, seed: int = 0) -> Params:
    rng = seed_rng("encoder-init", seed)
    d, dtype = cfg.d_model, cfg.np_dtype
    p = Params()
    p["conv1.w"] = ad.parameter(
        rng.standard_normal((3, cfg.n_mels, d)) / np.sqrt(3 * cfg.n_mels), dtype
    )
    p["conv1.b"] = ad.parameter(np.zeros(d), dtype)
    p["conv2.w"] = ad.parameter(rng.standard_normal((3, d, d)) / np.sqrt(3 * d), dtype)
    p["conv2.b"] = ad.parameter(np.zeros(d), dtype)
    for i in range(1, cfg.n_layers + 1):
        _init_block(p, rng, f"block{i}", d, d * cfg.ff_mult, dtype, cross=False)
    p["ln_out.g"] = ad.parameter(np.ones(d), dtype)
    p["ln_out.b"] = ad.parameter(np.zeros(d), dtype)
    return p


def init_projection_params(d_model: int, codebook_size: int, seed: int = 0, dtype="float32") -> Params:
    rng = seed_rng("projection-init", seed)
    dtype = np.dtype(dtype)
    p = Params()
    p["proj.w"] = ad.parameter(_init_linear(rng, d_model, codebook_size, dtype), dtype)
    p["proj.b"] = ad.parameter(np.zeros(codebook_size), dtype)
    return p


def init_decoder_params(cfg: DecoderConfig, seed: int = 0) -> Params:
    rng = seed_rng("decoder-init", seed)
    d, dtype = cfg.d_model, cfg.np_dtype
    p = Params()
    p["embed"] = ad.parameter(rng.standard_normal((cfg.vocab_size, d)) / np.sqrt(d), dtype)
    for i in range(1, cfg.n_layers + 1):
        _init_block(p, rng, f"block{i}", d, d * cfg.ff_mult, dtype, cross=True)
    p["ln_out.g"] = ad.parameter(np.ones(d), dtype)
    p["ln_out.b"] = ad.parameter(np.zeros(d), dtype)
    p["out.w"] = ad.parameter(_init_linear(rng, d, cfg.vocab_size, dtype), dtype)
    p["out.b"] = ad.parameter(np.zeros(cfg.vocab_size), dtype)
    return p


# ---------------------------------------------------------------------------
# forward pieces

_SINUSOID_CACHE: dict[tuple, np.ndarray] = {}


def sinusoidal_positions(length: int, d_model: int, dtype) -> np.ndarray:
    key = (length, d_model, np.dtype(dtype).str)
    if key not in _SINUSOID_CACHE:
        pos = np.arange(length, dtype=np.float64)[:, None]
        idx = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, idx / d_model)
        pe = np.zeros((length, d_model), dtype=np.float64)
        pe[:, 0::2] = np.sin(angle)
        pe[:, 1::2] = np.cos(angle)[:, : d_model // 2]
        out = pe.astype(dtype)
        out.setflags(write=False)
        _SINUSOID_CACHE[key] = out
    return _SINUSOID_CACHE[key]


NEG_BIAS = -1e9


def key_padding_bias(lengths: np.ndarray, t: int, dtype) -> np.ndarray | None:
    """(B, 1, 1, t) additive attention bias: 0 on valid keys, -1e9 on padding."""
    lengths = np.asarray(lengths)
    if (lengths >= t).all():
        return None
    valid = np.arange(t)[None, :] < lengths[:, None]
    bias = np.where(valid, 0.0, NEG_BIAS).astype(dtype)
    return bias[:, None, None, :]


def causal_bias(length: int, dtype) -> np.ndarray:
    mask = np.triu(np.full((length, length), NEG_BIAS, dtype=dtype), k=1)
    return mask[None, None, :, :]


def _linear(x: ad.Tensor, w: ad.Tensor, b: ad.Tensor) -> ad.Tensor:
    return ad.add(ad.matmul(x, w), b)


def _split_heads(x: ad.Tensor, n_heads: int) -> ad.Tensor:
    b, t, d = x.shape
    x = ad.reshape(x, (b, t, n_heads, d // n_heads))
    return ad.transpose(x, (0, 2, 1, 3))


def _merge_heads(x: ad.Tensor) -> ad.Tensor:
    b, h, t, dh = x.shape
    x = ad.transpose(x, (0, 2, 1, 3))
    return ad.reshape(x, (b, t, h * dh))


def _attention(p: Params, prefix: str, x_q: ad.Tensor, x_kv: ad.Tensor, n_heads: int, bias) -> ad.Tensor:
    q = _split_heads(_linear(x_q, p[f"{prefix}.wq"], p[f"{prefix}.bq"]), n_heads)
    k = _split_heads(_linear(x_kv, p[f"{prefix}.wk"], p[f"{prefix}.bk"]), n_heads)
    v = _split_heads(_linear(x_kv, p[f"{prefix}.wv"], p[f"{prefix}.bv"]), n_heads)
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), scale)
    if bias is not None:
        scores = ad.add(scores, bias)
    ctx = ad.matmul(ad.softmax(scores, axis=-1), v)
    return _linear(_merge_heads(ctx), p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def _mlp(p: Params, prefix: str, x: ad.Tensor) -> ad.Tensor:
    h = ad.gelu(_linear(x, p[f"{prefix}.w1"], p[f"{prefix}.b1"]))
    return _linear(h, p[f"{prefix}.w2"], p[f"{prefix}.b2"])


def _check_finite(x: ad.Tensor, where: str) -> None:
    if not np.all(np.isfinite(x.data)):
        raise NumericError(f"non-finite activation at {where}")


def _as_batch(features) -> tuple[np.ndarray, bool]:
    if isinstance(features, FeatureMatrix):
        arr = features.frames
    else:
        arr = np.asarray(features)
    if arr.ndim == 2:
        return arr[None, :, :], True
    if arr.ndim == 3:
        return arr, False
    raise ValueError(f"features must be (T, F) or (B, T, F), got shape {arr.shape}")


def encoder_forward(
    params: Params,
    cfg: EncoderConfig,
    features,
    tap: LayerTap | int,
    lengths: np.ndarray | None = None,
) -> EncoderOutputs:
    """Run the encoder; return activations at the tap layer and the final output.

    `features` is (T, F), (B, T, F) or a FeatureMatrix; `lengths` gives valid
    input frames per batch item when the batch is padded. The tap is the
    residual stream after the given block; `final` additionally passes the
    output LayerNorm.
    """
    tap = tap if isinstance(tap, LayerTap) else LayerTap(int(tap))
    tap.validate(cfg.n_layers)
    batch, _ = _as_batch(features)
    b, t_in, width = batch.shape
    if width != cfg.n_mels:
        raise ValueError(f"feature width {width} does not match config n_mels {cfg.n_mels}")
    if t_in < 1:
        raise ValueError("need at least one input frame")
    if t_in > cfg.max_frames:
        raise ValueError(f"input has {t_in} frames, above max_frames {cfg.max_frames}")
    if lengths is None:
        lengths = np.full(b, t_in, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)

    dtype = cfg.np_dtype
    x = ad.as_tensor(batch.astype(dtype, copy=False))
    x = ad.gelu(ad.conv1d(x, params["conv1.w"], params["conv1.b"], stride=1, padding=1))
    x = ad.gelu(
        ad.conv1d(x, params["conv2.w"], params["conv2.b"], stride=cfg.downsample_factor, padding=1)
    )
    _check_finite(x, "conv frontend")
    t_out = x.shape[1]
    out_lengths = -(-lengths // cfg.downsample_factor)

    x = ad.add(x, sinusoidal_positions(t_out, cfg.d_model, dtype))
    bias = key_padding_bias(out_lengths, t_out, dtype)

    tap_tensor: ad.Tensor | None = None
    for i in range(1, cfg.n_layers + 1):
        h = ad.layer_norm(x, params[f"block{i}.ln1.g"], params[f"block{i}.ln1.b"])
        x = ad.add(x, _attention(params, f"block{i}.attn", h, h, cfg.n_heads, bias))
        h2 = ad.layer_norm(x, params[f"block{i}.ln2.g"], params[f"block{i}.ln2.b"])
        x = ad.add(x, _mlp(params, f"block{i}.mlp", h2))
        _check_finite(x, f"encoder block {i}")
        if i == tap.layer:
            tap_tensor = x
    final = ad.layer_norm(x, params["ln_out.g"], params["ln_out.b"])
    _check_finite(final, "encoder output norm")
    assert tap_tensor is not None
    return EncoderOutputs(tap=tap_tensor, final=final, out_lengths=out_lengths)


def projection_forward(proj_params: Params, tap: ad.Tensor) -> ad.Tensor:
    """Standardize tap activations per frame, then map to codebook logits."""
    return _linear(ad.standardize(tap), proj_params["proj.w"], proj_params["proj.b"])


def decoder_forward(
    params: Params,
    cfg: DecoderConfig,
    encoder_final,
    tokens: np.ndarray,
    enc_lengths: np.ndarray | None = None,
) -> ad.Tensor:
    """Teacher-forced decoder pass; returns next-token logits (B, L, vocab).

    Causal self-attention guarantees logits at position i depend only on
    tokens[0..i] (and the audio encoding via cross-attention).
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    b, length = tokens.shape
    if length < 1:
        raise ValueError("token prefix must be non-empty")
    if length > cfg.max_tokens:
        raise ValueError(f"token prefix length {length} exceeds max_tokens {cfg.max_tokens}")
    if (tokens[:, 0] != cfg.bos_id).any():
        raise ValueError("token prefix must begin with BOS")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ValueError("token id out of vocab range")

    enc = ad.as_tensor(encoder_final)
    if enc.ndim == 2:
        enc = ad.reshape(enc, (1,) + enc.shape)
    dtype = cfg.np_dtype
    if enc_lengths is None:
        enc_lengths = np.full(enc.shape[0], enc.shape[1], dtype=np.int64)
    cross_bias = key_padding_bias(np.asarray(enc_lengths), enc.shape[1], dtype)
    self_bias = causal_bias(length, dtype)

    x = ad.add(ad.embedding(params["embed"], tokens), sinusoidal_positions(length, cfg.d_model, dtype))
    for i in range(1, cfg.n_layers + 1):
        h = ad.layer_norm(x, params[f"block{i}.ln1.g"], params[f"block{i}.ln1.b"])
        x = ad.add(x, _attention(params, f"block{i}.attn", h, h, cfg.n_heads, self_bias))
        h2 = ad.layer_norm(x, params[f"block{i}.ln2.g"], params[f"block{i}.ln2.b"])
        x = ad.add(x, _attention(params, f"block{i}.cross", h2, enc, cfg.n_heads, cross_bias))
        h3 = ad.layer_norm(x, params[f"block{i}.ln3.g"], params[f"block{i}.ln3.b"])
        x = ad.add(x, _mlp(params, f"block{i}.mlp", h3))
        _check_finite(x, f"decoder block {i}")
    x = ad.layer_norm(x, params["ln_out.g"], params["ln_out.b"])
    return _linear(x, params["out.w"], params["out.b"])


def greedy_decode(params: Params, cfg: DecoderConfig, encoder_final, max_len: int) -> list[int]:
    """Append argmax tokens until EOS or max_len; ties take the lowest id."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    enc = encoder_final.data if isinstance(encoder_final, ad.Tensor) else np.asarray(encoder_final)
    ids = [cfg.bos_id]
    with ad.no_grad():
        for _ in range(max_len):
            logits = decoder_forward(params, cfg, enc, np.array([ids]))
            nxt = int(np.argmax(logits.data[0, -1]))
            if nxt == cfg.eos_id:
                break
            ids.append(nxt)
            if len(ids) >= cfg.max_tokens:
                break
    return ids[1:]


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adam over named parameter groups with per-group learning rates.

    Parameters whose grad is None in a step are skipped (their moments stay
    untouched). The step counter is global; update order is the fixed
    insertion order of each group, so runs are reproducible.
    """

    def __init__(self, groups: list[tuple[str, Params, float]], betas=(0.9, 0.98), eps=1e-8):
        self.groups = groups
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        for gname, params, _ in groups:
            for name, tensor in params.items():
                key = f"{gname}.{name}"
                self.m[key] = np.zeros_like(tensor.data)
                self.v[key] = np.zeros_like(tensor.data)

    def zero_grad(self) -> None:
        for _, params, _ in self.groups:
            params.zero_grad()

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for gname, params, lr in self.groups:
            for name, tensor in params.items():
                if tensor.grad is None:
                    continue
                key = f"{gname}.{name}"
                g = tensor.grad
                self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
                self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * (g * g)
                mhat = self.m[key] / bc1
                vhat = self.v[key] / bc2
                tensor.data = tensor.data - lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for key, arr in self.m.items():
            out[f"adam.m.{key}"] = arr
        for key, arr in self.v.items():
            out[f"adam.v.{key}"] = arr
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.t = t
        for key in self.m:
            self.m[key] = np.asarray(arrays[f"adam.m.{key}"]).copy()
            self.v[key] = np.asarray(arrays[f"adam.v.{key}"]).copy()


# ---------------------------------------------------------------------------
# checkpoints

CKPT_MAGIC = b"BRDCKPT1"


@dataclass
class Checkpoint:
    config: dict
    tensors: dict[str, np.ndarray]
    rng_state: dict
    step: int


def save_checkpoint(
    path: str | Path,
    config: dict,
    tensors: dict[str, np.ndarray],
    rng_state: dict,
    step: int,
) -> None:
    """Write the versioned binary checkpoint (tensors stored as float32 LE)."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        cfg_blob = json.dumps(config, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(cfg_blob)))
        fh.write(cfg_blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            fh.write(arr.tobytes())
        rng_blob = json.dumps(rng_state, sort_keys=True).encode("utf-8")
        fh.write(struct.pack("<I", len(rng_blob)))
        fh.write(rng_blob)
        fh.write(struct.pack("<Q", step))


def load_checkpoint(path: str | Path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CKPT_MAGIC:
            raise DataError(f"{path}: bad checkpoint magic {magic!r}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        config = json.loads(fh.read(cfg_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim)) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            tensors[name] = data.copy()
        (rng_len,) = struct.unpack("<I", fh.read(4))
        rng_state = json.loads(fh.read(rng_len).decode("utf-8"))
        (step,) = struct.unpack("<Q", fh.read(8))
    return Checkpoint(config=config, tensors=tensors, rng_state=rng_state, step=step)
