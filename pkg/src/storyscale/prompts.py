"""Story parsing, toy prompt encoding, and identity-embedding replacement.

A story is one shared identity phrase plus N per-scene expression phrases.
The toy encoder maps each whitespace token to a seeded unit vector, so the
identity rows of every sample are position-independent and reproducible.
Identity replacement swaps each sample's identity rows for the reference
sample's and rescales the expression rows by the identity-norm ratio, which
keeps the identity-to-expression magnitude proportion intact.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, SpecParseError, StateError, ValidationError
from .rng import stream

DEFAULT_TEXT_WIDTH = 32

_KNOWN_FIELDS = {"identity", "expressions", "seed"}


@dataclass(frozen=True)
class StorySpec:
    """One identity phrase and N expression phrases (N >= 1)."""

    identity_text: str
    expression_texts: tuple[str, ...]
    seed: int | None = None

    def __post_init__(self):
        if not self.identity_text.strip():
            raise ValidationError("identity text is empty")
        if len(self.expression_texts) < 1:
            raise ValidationError("story needs at least one expression")

    @property
    def n(self) -> int:
        return len(self.expression_texts)

    def full_prompt(self, index: int) -> str:
        """Complete prompt text for sample ``index`` (1-based)."""
        _check_index(index, self.n)
        expr = self.expression_texts[index - 1]
        return f"{self.identity_text} {expr}".strip()


def parse_story_spec(document: str) -> StorySpec:
    """Parse a story-spec document (JSON object, schema in README).

    Unknown fields are dropped with a warning naming them; a malformed
    document raises SpecParseError with the offending line.
    """
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SpecParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise SpecParseError("story document must be a JSON object")

    unknown = sorted(set(raw) - _KNOWN_FIELDS)
    if unknown:
        warnings.warn(f"ignoring unknown story fields: {', '.join(unknown)}")

    if "identity" not in raw:
        raise SpecParseError("missing required field 'identity'")
    identity = raw["identity"]
    if not isinstance(identity, str):
        raise SpecParseError("'identity' must be a string")

    if "expressions" not in raw:
        raise SpecParseError("missing required field 'expressions'")
    expressions = raw["expressions"]
    if not isinstance(expressions, list) or not all(isinstance(e, str) for e in expressions):
        raise SpecParseError("'expressions' must be an array of strings")
    if len(expressions) == 0:
        raise ValidationError("'expressions' must contain at least one entry")

    seed = raw.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise SpecParseError("'seed' must be an integer")

    return StorySpec(identity_text=identity, expression_texts=tuple(expressions), seed=seed)


def load_story_spec(path) -> StorySpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_story_spec(fh.read())


@dataclass
class EmbeddingBlock:
    """A block of token embeddings, one row per token."""

    tokens: np.ndarray  # (m, d_text) float64

    def __post_init__(self):
        arr = np.asarray(self.tokens, dtype=np.float64)
        if arr.ndim != 2:
            raise ValidationError(f"embedding block must be 2-D, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationError("embedding block contains non-finite entries")
        arr.setflags(write=False)
        self.tokens = arr

    @property
    def token_count(self) -> int:
        return self.tokens.shape[0]

    @property
    def width(self) -> int:
        return self.tokens.shape[1]


def empty_block(d_text: int = DEFAULT_TEXT_WIDTH) -> EmbeddingBlock:
    return EmbeddingBlock(np.zeros((0, d_text)))


def block_norm(block: EmbeddingBlock) -> float:
    """Frobenius norm of the block; 0.0 for an empty block."""
    if block.token_count == 0:
        return 0.0
    return float(np.linalg.norm(block.tokens))


def token_vector(token: str, seed: int, d_text: int = DEFAULT_TEXT_WIDTH) -> np.ndarray:
    """Unit vector for a (token, seed) pair, independent of position."""
    v = stream("token", seed, token).standard_normal(d_text)
    norm = np.linalg.norm(v)
    if norm == 0.0:  # unreachable in practice; keeps the unit-norm contract total
        v = np.zeros(d_text)
        v[0] = 1.0
        return v
    return v / norm


def encode_text(text: str, seed: int, d_text: int = DEFAULT_TEXT_WIDTH) -> EmbeddingBlock:
    """Encode whitespace tokens into a block; empty text gives a zero-row block."""
    words = text.split()
    if not words:
        return empty_block(d_text)
    rows = np.stack([token_vector(w, seed, d_text) for w in words])
    return EmbeddingBlock(rows)


def encode_prompt(
    spec: StorySpec, index: int, seed: int, d_text: int = DEFAULT_TEXT_WIDTH
) -> tuple[EmbeddingBlock, EmbeddingBlock]:
    """Encode sample ``index`` (1-based) into (identity, expression) blocks."""
    _check_index(index, spec.n)
    identity = encode_text(spec.identity_text, seed, d_text)
    expression = encode_text(spec.expression_texts[index - 1], seed, d_text)
    return identity, expression


@dataclass
class EmbeddingBatch:
    """Per-sample (identity, expression) blocks; slot 0 is the reference."""

    entries: list[tuple[EmbeddingBlock, EmbeddingBlock]]
    replaced: bool = False
    d_text: int = field(init=False)

    def __post_init__(self):
        if not self.entries:
            raise ValidationError("embedding batch has no entries")
        widths = {b.width for pair in self.entries for b in pair}
        if len(widths) != 1:
            raise ValidationError(f"mixed embedding widths in batch: {sorted(widths)}")
        self.d_text = widths.pop()

    def __len__(self) -> int:
        return len(self.entries)


def encode_batch(
    spec: StorySpec, indices: list[int], seed: int, d_text: int = DEFAULT_TEXT_WIDTH
) -> EmbeddingBatch:
    """Encode the given 1-based prompt indices, in batch-slot order."""
    return EmbeddingBatch([encode_prompt(spec, i, seed, d_text) for i in indices])


def null_entry(d_text: int = DEFAULT_TEXT_WIDTH) -> tuple[EmbeddingBlock, EmbeddingBlock]:
    """Null-prompt encoding used by the unconditional branch."""
    return empty_block(d_text), empty_block(d_text)


def apply_identity_replacement(batch: EmbeddingBatch) -> EmbeddingBatch:
    """Replace every identity block with the reference's and rescale expressions.

    Sample n keeps its expression direction but is scaled by
    ||identity_ref|| / ||identity_n||, so each sample's identity-to-expression
    norm ratio is preserved. Slot 0 passes through unchanged. Applying twice
    is a state error; a zero-norm identity block is degenerate.
    """
    if batch.replaced:
        raise StateError("identity replacement already applied to this batch")
    ref_identity, _ = batch.entries[0]
    ref_norm = block_norm(ref_identity)
    if ref_norm == 0.0:
        raise DegenerateInputError("reference identity block has zero norm")

    new_entries: list[tuple[EmbeddingBlock, EmbeddingBlock]] = [batch.entries[0]]
    for n, (identity, expression) in enumerate(batch.entries[1:], start=2):
        norm_n = block_norm(identity)
        if norm_n == 0.0:
            raise DegenerateInputError(f"identity block of sample {n} has zero norm")
        factor = ref_norm / norm_n
        if factor == 1.0:
            scaled = expression
        else:
            scaled = EmbeddingBlock(expression.tokens * factor)
        new_entries.append((ref_identity, scaled))
    return EmbeddingBatch(new_entries, replaced=True)


def _check_index(index: int, n: int) -> None:
    if not 1 <= index <= n:
        raise ValidationError(f"prompt index {index} outside 1..{n}")
