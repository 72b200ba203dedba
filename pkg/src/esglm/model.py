"""Tiny transformer encoder with MLM and classification heads.

Forward passes, the cross-entropy objective, and exact reverse-mode
gradients are implemented directly on numpy arrays.  Everything is pure
given (params, batch, seed); parameter updates live in optim.py.

Parameters are stored float32 by default (checkpoint payloads are 32-bit);
tests that need 64-bit gradient checks build a float64 ParameterSet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatch, InvalidConfig, NumericError, ShapeError
from .tokenizer import EncodedInput

LN_EPS = 1e-12
IGNORE_INDEX = -100
INIT_STD = 0.02

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden_dim: int
    num_layers: int
    num_heads: int
    ffn_dim: int
    max_seq_len: int = 512
    dropout_rate: float = 0.1

    def __post_init__(self):
        counts = {
            "vocab_size": self.vocab_size,
            "hidden_dim": self.hidden_dim,
            "num_layers": self.num_layers,
            "num_heads": self.num_heads,
            "ffn_dim": self.ffn_dim,
            "max_seq_len": self.max_seq_len,
        }
        for name, value in counts.items():
            if int(value) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {value}")
        if self.hidden_dim % self.num_heads != 0:
            raise InvalidConfig(
                f"hidden_dim {self.hidden_dim} not divisible by "
                f"num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig(f"dropout_rate {self.dropout_rate} not in [0,1)")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-5
    adam_epsilon: float = 1e-8
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epochs: int = 8
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be > 0")
        if self.adam_epsilon <= 0:
            raise InvalidConfig("adam_epsilon must be > 0")
        for name in ("adam_beta1", "adam_beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise InvalidConfig(f"{name} must be in [0,1), got {b}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidConfig("epochs and batch_size must be >= 1")


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical name -> shape map; also the checkpoint tensor order.

    The MLM projection is weight-tied to tok_emb, so only its bias appears.
    """
    d, f = config.hidden_dim, config.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.max_seq_len, d),
    }
    for i in range(config.num_layers):
        p = f"layers.{i}."
        for m in ("wq", "wk", "wv", "wo"):
            shapes[p + "attn." + m] = (d, d)
        for m in ("bq", "bk", "bv", "bo"):
            shapes[p + "attn." + m] = (d,)
        for ln in ("ln1", "ln2"):
            shapes[p + ln + ".gain"] = (d,)
            shapes[p + ln + ".bias"] = (d,)
        shapes[p + "ffn.w1"] = (d, f)
        shapes[p + "ffn.b1"] = (f,)
        shapes[p + "ffn.w2"] = (f, d)
        shapes[p + "ffn.b2"] = (d,)
    shapes["mlm_bias"] = (config.vocab_size,)
    shapes["pooler.w"] = (d, d)
    shapes["pooler.b"] = (d,)
    shapes["cls.w"] = (d, 2)
    shapes["cls.b"] = (2,)
    return shapes


@dataclass
class ParameterSet:
    """Named weight tensors, all sharing one dtype."""

    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = value

    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def dtype(self) -> np.dtype:
        return self.tensors["tok_emb"].dtype

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def copy(self) -> "ParameterSet":
        return ParameterSet({k: v.copy() for k, v in self.tensors.items()})

    def check_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NumericError(f"non-finite values in parameter {name}")

    def check_shapes(self, config: ModelConfig) -> None:
        expected = parameter_shapes(config)
        if set(expected) != set(self.tensors):
            missing = set(expected) - set(self.tensors)
            extra = set(self.tensors) - set(expected)
            raise ShapeError(f"parameter names mismatch: -{missing} +{extra}")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ShapeError(
                    f"{name}: expected shape {shape}, "
                    f"got {self.tensors[name].shape}"
                )


def _trunc_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    """Normal(0, std) with values beyond 2 std resampled."""
    x = rng.normal(0.0, std, size=shape)
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > 2.0 * std
    return x


def init_params(
    config: ModelConfig, seed: int = 0, dtype=np.float32
) -> ParameterSet:
    """Truncated-normal weights (std 0.02), zero biases, unit LN gains."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gain":
            t = np.ones(shape)
        elif leaf.startswith("b") or leaf == "bias" or name == "mlm_bias":
            t = np.zeros(shape)
        else:
            t = _trunc_normal(rng, shape, INIT_STD)
        tensors[name] = np.ascontiguousarray(t, dtype=dtype)
    return ParameterSet(tensors)


def gelu(x: np.ndarray) -> np.ndarray:
    """tanh-approximation GELU."""
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x**3)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * _GELU_C * (
        1.0 + 3.0 * _GELU_A * x**2
    )


def _softmax(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=-1, keepdims=True)


def _layernorm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    y = xc * inv
    return gain * y + bias, (y, inv)

def _layernorm_backward(dout, ln_cache, gain):
    y, inv = ln_cache
    dgain = np.sum(dout * y, axis=tuple(range(dout.ndim - 1)))
    dbias = np.sum(dout, axis=tuple(range(dout.ndim - 1)))
    dy = dout * gain
    dx = inv * (
        dy
        - dy.mean(axis=-1, keepdims=True)
        - y * np.mean(dy * y, axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


def _split_heads(x: np.ndarray, num_heads: int) -> np.ndarray:
    b, s, d = x.shape
    return x.reshape(b, s, num_heads, d // num_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, s, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, s, h * dh)


def _dropout(x, rate, rng, cache_slot, key):
    if rate <= 0.0 or rng is None:
        return x
    keep = rng.random(x.shape) >= rate
    cache_slot[key] = keep
    return x * keep / (1.0 - rate)


def encoder_forward(
    ids: np.ndarray,
    attention_mask: np.ndarray,
    params: ParameterSet,
    config: ModelConfig,
    train: bool = False,
    rng: np.random.Generator | None = None,
    want_cache: bool = False,
):
    """Batched encoder: (B, S) ids -> (B, S, d) hidden states.

    Sequences shorter than max_seq_len are allowed; position embeddings
    are sliced.  PAD keys receive additive -inf before the softmax, so
    real positions are unaffected by padding length.
    """
    ids = np.asarray(ids)
    attention_mask = np.asarray(attention_mask)
    if ids.ndim != 2 or attention_mask.shape != ids.shape:
        raise ShapeError(
            f"ids {ids.shape} / attention_mask {attention_mask.shape}"
        )
    b, s = ids.shape
    if s > config.max_seq_len:
        raise ShapeError(f"sequence length {s} > max_seq_len {config.max_seq_len}")

    drop = config.dropout_rate if train else 0.0
    if train and drop > 0.0 and rng is None:
        raise InvalidConfig("train-mode forward with dropout needs an rng")

    cache: dict = {"ids": ids, "mask": attention_mask, "layers": [], "drop": {}}
    key_ok = (attention_mask == 1)[:, None, None, :]
    scale = 1.0 / math.sqrt(config.head_dim)

    h = params["tok_emb"][ids] + params["pos_emb"][:s][None, :, :]
    h = _dropout(h, drop, rng, cache["drop"], "emb")
    cache["emb_out"] = h

    for i in range(config.num_layers):
        p = f"layers.{i}."
        lc: dict = {"x": h}
        q = _split_heads(h @ params[p + "attn.wq"] + params[p + "attn.bq"], config.num_heads)
        k = _split_heads(h @ params[p + "attn.wk"] + params[p + "attn.bk"], config.num_heads)
        v = _split_heads(h @ params[p + "attn.wv"] + params[p + "attn.bv"], config.num_heads)
        scores = np.where(key_ok, (q @ k.swapaxes(-1, -2)) * scale, -np.inf)
        probs = _softmax(scores)
        ctx = _merge_heads(probs @ v)
        attn = ctx @ params[p + "attn.wo"] + params[p + "attn.bo"]
        attn = _dropout(attn, drop, rng, cache["drop"], f"attn{i}")
        h1, ln1_cache = _layernorm(
            h + attn, params[p + "ln1.gain"], params[p + "ln1.bias"]
        )
        f1 = h1 @ params[p + "ffn.w1"] + params[p + "ffn.b1"]
        a = gelu(f1)
        f2 = a @ params[p + "ffn.w2"] + params[p + "ffn.b2"]
        f2 = _dropout(f2, drop, rng, cache["drop"], f"ffn{i}")
        h, ln2_cache = _layernorm(
            h1 + f2, params[p + "ln2.gain"], params[p + "ln2.bias"]
        )
        lc.update(q=q, k=k, v=v, probs=probs, ctx=ctx, ln1=ln1_cache,
                  h1=h1, f1=f1, a=a, ln2=ln2_cache)
        cache["layers"].append(lc)

    if want_cache:
        return h, cache
    return h


def encoder_backward(
    dh: np.ndarray,
    cache: dict,
    params: ParameterSet,
    config: ModelConfig,
    grads: dict[str, np.ndarray],
    train: bool = False,
) -> None:
    """Accumulate d(loss)/d(param) into grads, given d(loss)/d(hidden)."""
    drop = config.dropout_rate if train else 0.0
    scale = 1.0 / math.sqrt(config.head_dim)
    d = config.hidden_dim

    def flat(x):
        return x.reshape(-1, x.shape[-1])

    for i in reversed(range(config.num_layers)):
        p = f"layers.{i}."
        lc = cache["layers"][i]
        dres2, dg2, db2 = _layernorm_backward(dh, lc["ln2"], params[p + "ln2.gain"])
        grads[p + "ln2.gain"] += dg2
        grads[p + "ln2.bias"] += db2

        df2 = dres2
        if drop > 0.0:
            df2 = df2 * cache["drop"][f"ffn{i}"] / (1.0 - drop)
        grads[p + "ffn.w2"] += flat(lc["a"]).T @ flat(df2)
        grads[p + "ffn.b2"] += df2.sum(axis=(0, 1))
        df1 = (df2 @ params[p + "ffn.w2"].T) * gelu_grad(lc["f1"])
        grads[p + "ffn.w1"] += flat(lc["h1"]).T @ flat(df1)
        grads[p + "ffn.b1"] += df1.sum(axis=(0, 1))
        dh1 = dres2 + df1 @ params[p + "ffn.w1"].T

        dres1, dg1, db1 = _layernorm_backward(dh1, lc["ln1"], params[p + "ln1.gain"])
        grads[p + "ln1.gain"] += dg1
        grads[p + "ln1.bias"] += db1

        dattn = dres1
        if drop > 0.0:
            dattn = dattn * cache["drop"][f"attn{i}"] / (1.0 - drop)
        grads[p + "attn.wo"] += flat(lc["ctx"]).T @ flat(dattn)
        grads[p + "attn.bo"] += dattn.sum(axis=(0, 1))
        dctx = _split_heads(dattn @ params[p + "attn.wo"].T, config.num_heads)

        dprobs = dctx @ lc["v"].swapaxes(-1, -2)
        dv = lc["probs"].swapaxes(-1, -2) @ dctx
        dscores = lc["probs"] * (
            dprobs - np.sum(dprobs * lc["probs"], axis=-1, keepdims=True)
        )
        dq = (dscores @ lc["k"]) * scale
        dk = (dscores.swapaxes(-1, -2) @ lc["q"]) * scale

        dx = dres1
        x = lc["x"]
        for m, dm in (("q", dq), ("k", dk), ("v", dv)):
            dm_m = _merge_heads(dm)
            grads[p + f"attn.w{m}"] += flat(x).T @ flat(dm_m)
            grads[p + f"attn.b{m}"] += dm_m.sum(axis=(0, 1))
            dx = dx + dm_m @ params[p + f"attn.w{m}"].T
        dh = dx

    if drop > 0.0:
        dh = dh * cache["drop"]["emb"] / (1.0 - drop)
    ids = cache["ids"]
    s = ids.shape[1]
    np.add.at(grads["tok_emb"], ids.reshape(-1), dh.reshape(-1, d))
    grads["pos_emb"][:s] += dh.sum(axis=0)


def forward_encoder(
    enc: EncodedInput,
    params: ParameterSet,
    config: ModelConfig,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Single-input encoder pass: EncodedInput -> (seq_len, d) hidden states.

    Eval mode is deterministic; train mode applies seeded dropout.
    """
    if mode not in ("train", "eval"):
        raise InvalidConfig(f"mode must be 'train' or 'eval', got {mode!r}")
    params.check_shapes(config)
    params.check_finite()
    h = encoder_forward(
        enc.ids[None, :], enc.attention_mask[None, :], params, config,
        train=(mode == "train"), rng=rng,
    )
    return h[0]


def forward_mlm(hidden: np.ndarray, params: ParameterSet) -> np.ndarray:
    """Per-position vocabulary logits via the tied embedding projection."""
    tok_emb = params["tok_emb"]
    if hidden.shape[-1] != tok_emb.shape[1]:
        raise ShapeError(
            f"hidden dim {hidden.shape[-1]} != embedding dim {tok_emb.shape[1]}"
        )
    return hidden @ tok_emb.T + params["mlm_bias"]


def forward_classify(hidden: np.ndarray, params: ParameterSet) -> np.ndarray:
    """CLS pooling (linear + tanh) followed by the 2-way classifier."""
    if hidden.shape[-1] != params["pooler.w"].shape[0]:
        raise ShapeError(
            f"hidden dim {hidden.shape[-1]} != pooler dim "
            f"{params['pooler.w'].shape[0]}"
        )
    cls_h = hidden[..., 0, :]
    pooled = np.tanh(cls_h @ params["pooler.w"] + params["pooler.b"])
    return pooled @ params["cls.w"] + params["cls.b"]


def cross_entropy(
    logits: np.ndarray, targets: np.ndarray, ignore_index: int = IGNORE_INDEX
) -> float:
    """Mean -log softmax(logits)[target] over non-ignored positions."""
    loss, _ = _cross_entropy_with_grad(logits, targets, ignore_index)
    return loss


def _cross_entropy_with_grad(logits, targets, ignore_index=IGNORE_INDEX):
    logits = np.asarray(logits)
    targets = np.asarray(targets)
    if logits.shape[:-1] != targets.shape:
        raise ShapeError(
            f"logits {logits.shape} do not lead targets {targets.shape}"
        )
    flat = logits.reshape(-1, logits.shape[-1])
    tgt = targets.reshape(-1)
    kept = tgt != ignore_index
    n = int(kept.sum())
    if n == 0:
        raise EmptyBatch("all targets are ignored")

    # max-subtraction keeps exp in range for any logit magnitude
    m = flat.max(axis=-1, keepdims=True)
    shifted = flat - m
    lse = np.log(np.sum(np.exp(shifted), axis=-1))
    idx = np.where(kept, tgt, 0)
    nll = lse - shifted[np.arange(flat.shape[0]), idx]
    loss = float(np.sum(nll[kept]) / n)

    dflat = _softmax(flat)
    dflat[np.arange(flat.shape[0]), idx] -= 1.0
    dflat[~kept] = 0.0
    dflat /= n
    return loss, dflat.reshape(logits.shape)


def compute_gradients(
    batch: tuple[np.ndarray, np.ndarray, np.ndarray],
    params: ParameterSet,
    config: ModelConfig,
    objective: str,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Exact reverse-mode gradients of the scalar loss for one batch.

    batch is (ids, attention_mask, targets): per-position original-token
    targets with IGNORE_INDEX sentinels for "mlm", per-example class labels
    for "classify".  Gradients of parameters unused by the objective are
    zero.  Returns (loss, grads) with grads mirroring the parameter shapes.
    """
    if objective not in ("mlm", "classify"):
        raise InvalidConfig(f"unknown objective {objective!r}")
    ids, mask, targets = (np.asarray(x) for x in batch)
    hidden, cache = encoder_forward(
        ids, mask, params, config, train=train, rng=rng, want_cache=True
    )
    grads = params.zeros_like()

    if objective == "mlm":
        logits = forward_mlm(hidden, params)
        loss, dlogits = _cross_entropy_with_grad(logits, targets)
        dh = dlogits @ params["tok_emb"]
        # tied projection: the embedding matrix also collects the head grad
        grads["tok_emb"] += np.tensordot(dlogits, hidden, axes=([0, 1], [0, 1]))
        grads["mlm_bias"] += dlogits.sum(axis=(0, 1))
    else:
        cls_h = hidden[:, 0, :]
        pooled = np.tanh(cls_h @ params["pooler.w"] + params["pooler.b"])
        logits = pooled @ params["cls.w"] + params["cls.b"]
        loss, dlogits = _cross_entropy_with_grad(logits, targets)
        grads["cls.w"] += pooled.T @ dlogits
        grads["cls.b"] += dlogits.sum(axis=0)
        dpooled = dlogits @ params["cls.w"].T
        dz = dpooled * (1.0 - pooled**2)
        grads["pooler.w"] += cls_h.T @ dz
        grads["pooler.b"] += dz.sum(axis=0)
        dh = np.zeros_like(hidden)
        dh[:, 0, :] = dz @ params["pooler.w"].T

    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    encoder_backward(dh, cache, params, config, grads, train=train)
    return loss, grads


def batch_arrays(inputs: list[EncodedInput]) -> tuple[np.ndarray, np.ndarray]:
    """Stack EncodedInputs into (ids, attention_mask) batch arrays."""
    ids = np.stack([e.ids for e in inputs])
    mask = np.stack([e.attention_mask for e in inputs])
    return ids, mask
