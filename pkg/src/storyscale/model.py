"""Deterministic seed-initialized transformer used as the generation backbone.

Each step projects the running feature map, resampled to that step's grid,
into token space, adds a fixed 2-D sinusoidal positional code, and runs a
stack of blocks: non-causal self-attention (all tokens of the scale attend
to all tokens), cross-attention over the sample's prompt embedding rows,
and a gated feed-forward. A final head emits one logit per residual bit.

Self-attention exposes a hook point: just before the attention product, a
hook may rewrite the K/V tensors of every sample in the batch. All guidance
behavior lives in such hooks; with no hook (or a no-op hook) the forward
pass is plain attention, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ValidationError
from .prompts import EmbeddingBlock
from .scales import FeatureMap, logistic, resize_bilinear
from .rng import stream


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def silu(x: np.ndarray) -> np.ndarray:
    return x * logistic(x)


@dataclass
class BlockParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    cq: np.ndarray
    ck: np.ndarray
    cv: np.ndarray
    co: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass
class ModelParams:
    """All weights, reproducibly derived from the seed."""

    seed: int
    d_model: int
    n_heads: int
    n_blocks: int
    d_channels: int
    d_text: int
    in_proj: np.ndarray = field(repr=False, default=None)
    head_w: np.ndarray = field(repr=False, default=None)
    head_b: np.ndarray = field(repr=False, default=None)
    blocks: list[BlockParams] = field(repr=False, default=None)

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


def _weight(seed: int, name, shape) -> np.ndarray:
    w = stream("model", seed, *name).standard_normal(shape)
    return w / np.sqrt(shape[0])  # fan-in scaling


def init_model(
    seed: int,
    d_model: int = 32,
    n_heads: int = 2,
    n_blocks: int = 4,
    d_channels: int = 32,
    d_text: int = 32,
) -> ModelParams:
    """Deterministic weights; equal arguments give elementwise-equal params."""
    for label, v in (
        ("d_model", d_model),
        ("n_heads", n_heads),
        ("n_blocks", n_blocks),
        ("d_channels", d_channels),
        ("d_text", d_text),
    ):
        if v < 1:
            raise ValidationError(f"{label} must be positive, got {v}")
    if d_model % n_heads != 0:
        raise ValidationError(f"d_model {d_model} not divisible by n_heads {n_heads}")
    if d_model % 4 != 0:
        raise ValidationError("d_model must be divisible by 4 for the 2-D positional code")

    d_ff = 2 * d_model
    blocks = []
    for i in range(n_blocks):
        blocks.append(
            BlockParams(
                wq=_weight(seed, (i, "wq"), (d_model, d_model)),
                wk=_weight(seed, (i, "wk"), (d_model, d_model)),
                wv=_weight(seed, (i, "wv"), (d_model, d_model)),
                wo=_weight(seed, (i, "wo"), (d_model, d_model)),
                cq=_weight(seed, (i, "cq"), (d_model, d_model)),
                ck=_weight(seed, (i, "ck"), (d_text, d_model)),
                cv=_weight(seed, (i, "cv"), (d_text, d_model)),
                co=_weight(seed, (i, "co"), (d_model, d_model)),
                w1=_weight(seed, (i, "w1"), (d_model, d_ff)),
                b1=np.zeros(d_ff),
                w2=_weight(seed, (i, "w2"), (d_ff, d_model)),
                b2=np.zeros(d_model),
            )
        )
    return ModelParams(
        seed=seed,
        d_model=d_model,
        n_heads=n_heads,
        n_blocks=n_blocks,
        d_channels=d_channels,
        d_text=d_text,
        in_proj=_weight(seed, ("in_proj",), (d_channels, d_model)),
        head_w=_weight(seed, ("head_w",), (d_model, d_channels)),
        head_b=np.zeros(d_channels),
        blocks=blocks,
    )


# Positional amplitude below the unit sinusoid keeps the code from swamping
# the content features, whose scale is set by the sub-unit bit magnitude.
PE_AMPLITUDE = 0.5


def _sinusoid(n_pos: int, dim: int) -> np.ndarray:
    inv_freq = 1.0 / (10000.0 ** (np.arange(dim // 2) * 2.0 / dim))
    ang = np.arange(n_pos)[:, None] * inv_freq[None, :]
    out = np.empty((n_pos, dim))
    out[:, 0::2] = np.sin(ang)
    out[:, 1::2] = np.cos(ang)
    return out


@lru_cache(maxsize=64)
def positional_encoding(h: int, w: int, d_model: int) -> np.ndarray:
    """Fixed 2-D sinusoidal code: first half encodes row, second half column."""
    half = d_model // 2
    rows = _sinusoid(h, half)
    cols = _sinusoid(w, half)
    pe = np.empty((h, w, d_model))
    pe[:, :, :half] = rows[:, None, :]
    pe[:, :, half:] = cols[None, :, :]
    pe = PE_AMPLITUDE * pe.reshape(h * w, d_model)
    pe.setflags(write=False)
    return pe


@dataclass
class AttentionState:
    """Per-sample Q/K/V of one self-attention layer, exposed to hooks."""

    branch: str  # "cond" | "uncond"
    step: int
    layer: int
    sample_index: int  # batch slot; 0 is the reference
    q: np.ndarray  # (n_heads, tokens, d_head)
    k: np.ndarray
    v: np.ndarray
    recorded_alpha: float | None = None


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    tokens, d_model = x.shape
    return x.reshape(tokens, n_heads, d_model // n_heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    n_heads, tokens, d_head = x.shape
    return x.transpose(1, 0, 2).reshape(tokens, n_heads * d_head)


def self_attention(state: AttentionState, hook=None) -> np.ndarray:
    """Scaled dot-product attention over one sample's tokens.

    The hook (if any) runs first and may replace state.k and state.v. Heads
    are independent; the output projection is applied by the caller.
    """
    if hook is not None:
        hook([state])
    q, k, v = state.q, state.k, state.v
    if q.shape != k.shape or q.shape != v.shape:
        raise ValidationError(f"Q/K/V shapes differ: {q.shape}, {k.shape}, {v.shape}")
    d_head = q.shape[-1]
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(d_head)
    weights = softmax(scores, axis=-1)
    return _merge_heads(weights @ v)


def _cross_attention(x: np.ndarray, rows: np.ndarray, block: BlockParams, n_heads: int) -> np.ndarray:
    q = _split_heads(x @ block.cq, n_heads)
    k = _split_heads(rows @ block.ck, n_heads)
    v = _split_heads(rows @ block.cv, n_heads)
    d_head = q.shape[-1]
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(d_head)
    weights = softmax(scores, axis=-1)
    return _merge_heads(weights @ v)


def _prompt_rows(entry) -> np.ndarray:
    if entry is None:
        return np.zeros((0, 0))
    identity, expression = entry
    return np.vstack([identity.tokens, expression.tokens])


def forward_batch(
    features: list[FeatureMap],
    entries: list[tuple[EmbeddingBlock, EmbeddingBlock] | None],
    params: ModelParams,
    step: int,
    shape: tuple[int, int],
    branch: str,
    hook=None,
) -> list[np.ndarray]:
    """One generation step for a whole batch, with synchronized hook points.

    At every layer the Q/K/V of all samples are materialized first, the hook
    sees the full list of AttentionStates, and only then does each sample's
    attention product run. Entries of None encode the null prompt: their
    cross-attention is skipped. Each sample cross-attends only over its own
    prompt rows, so no padding mask is needed.

    Returns per-sample (h, w, d_channels) bit-logit arrays.
    """
    if len(features) != len(entries):
        raise ValidationError("features and embedding entries differ in length")
    h, w = shape
    xs = []
    pe = positional_encoding(h, w, params.d_model)
    for fmap in features:
        grid = resize_bilinear(fmap.data, (h, w))
        xs.append(grid.reshape(h * w, params.d_channels) @ params.in_proj + pe)

    for layer, block in enumerate(params.blocks):
        states = [
            AttentionState(
                branch=branch,
                step=step,
                layer=layer,
                sample_index=i,
                q=_split_heads(x @ block.wq, params.n_heads),
                k=_split_heads(x @ block.wk, params.n_heads),
                v=_split_heads(x @ block.wv, params.n_heads),
            )
            for i, x in enumerate(xs)
        ]
        if hook is not None:
            hook(states)
        for i, state in enumerate(states):
            x = xs[i]
            x = x + self_attention(state) @ block.wo
            rows = _prompt_rows(entries[i])
            if rows.shape[0] > 0:
                x = x + _cross_attention(x, rows, block, params.n_heads) @ block.co
            x = x + silu(x @ block.w1 + block.b1) @ block.w2 + block.b2
            xs[i] = x

    return [(x @ params.head_w + params.head_b).reshape(h, w, params.d_channels) for x in xs]


def forward_step(
    f_prev: FeatureMap,
    entry,
    params: ModelParams,
    step: int,
    shape: tuple[int, int],
    branch: str,
    hook=None,
) -> np.ndarray:
    """Single-sample forward pass; the batch-of-one case of forward_batch."""
    return forward_batch([f_prev], [entry], params, step, shape, branch, hook)[0]
