"""Evaluation harness: pluggable embedders, pairwise axes, harmonic score.

Scoring protocol: prompt fidelity is 2.5 times the cosine between an image
embedding and the embedding of its prompt prefixed with "A photo depicts"
(unclamped, so arithmetic on externally supplied score tables is exact);
identity and style are mean pairwise cosine similarities over the image
set, identity optionally after replacing background pixels with seeded
uniform noise; the headline number is the harmonic mean of prompt, identity
(twice: one slot distance-converted), and style scores.

Real perceptual backbones are out of scope. The default embedder is a
deterministic image statistic (per-channel histograms plus block means);
any deterministic embedder can be plugged in through EmbedderHandle. When
no perceptual-distance plugin is supplied, the distance slot is the proxy
1 - identity similarity and the report says so.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .rng import stream
from .scales import ImageRaster

PROMPT_PREFIX = "A photo depicts"
_TOY_DIM = 36  # 3 channels x 8 histogram bins + 4 blocks x 3 channel means


@dataclass(frozen=True)
class ScoreSet:
    """The four raw metric slots; dreamsim is a distance, the rest similarities."""

    clip_t: float
    clip_i: float
    dreamsim: float
    dino: float


def harmonic_score(scores: ScoreSet) -> float:
    """Harmonic mean of (clip_t, clip_i, 1 - dreamsim, dino)."""
    converted = (scores.clip_t, scores.clip_i, 1.0 - scores.dreamsim, scores.dino)
    for value in converted:
        if not np.isfinite(value):
            raise ValidationError(f"non-finite score {value}")
        if value <= 0.0:
            raise ValidationError(f"harmonic mean undefined for non-positive input {value}")
    return 4.0 / sum(1.0 / v for v in converted)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"vector dimensions differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector is undefined")
    return float(a @ b / (na * nb))


def pairwise_mean_similarity(vectors) -> float:
    """Mean cosine over all unordered pairs, reduced in sorted index order."""
    vectors = list(vectors)
    if len(vectors) < 2:
        raise ValidationError(f"pairwise similarity needs >= 2 vectors, got {len(vectors)}")
    total = 0.0
    count = 0
    for i in range(len(vectors)):
        for j in range(i + 1, len(vectors)):
            total += _cosine(vectors[i], vectors[j])
            count += 1
    return total / count


def text_image_score(image_vec, text_vec, prefix_applied: bool = True) -> float:
    """2.5 times the cosine similarity, unclamped (may be negative or above 1).

    ``prefix_applied`` asserts the text vector came from the prefixed prompt;
    it is recorded by callers, not used in the arithmetic.
    """
    return 2.5 * _cosine(image_vec, text_vec)


def apply_background_noise(image: ImageRaster, mask: np.ndarray, seed: int) -> ImageRaster:
    """Replace mask-0 pixels with seeded uniform 8-bit noise; keep mask-1 pixels."""
    mask = np.asarray(mask)
    if mask.shape != image.size:
        raise ValidationError(f"mask shape {mask.shape} does not match image {image.size}")
    h, w = image.size
    noise = stream("bgnoise", seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    keep = (mask != 0)[:, :, None]
    return ImageRaster(np.where(keep, image.pixels, noise))


def toy_embed_image(image: ImageRaster) -> np.ndarray:
    """Histogram-and-block-mean image statistic, L2-normalized.

    Per channel: an 8-bin intensity histogram as proportions, then the mean
    intensity (scaled to [0, 1]) of each 2x2 spatial block. Proportions make
    the vector invariant under integer nearest-neighbor enlargement.
    """
    pixels = image.pixels.astype(np.float64)
    h, w = image.size
    parts = []
    for c in range(3):
        hist, _ = np.histogram(pixels[:, :, c], bins=8, range=(0.0, 256.0))
        parts.append(hist / (h * w))
    for rows in np.array_split(pixels, 2, axis=0):
        for block in np.array_split(rows, 2, axis=1):
            parts.append(block.mean(axis=(0, 1)) / 255.0)
    vec = np.concatenate(parts)
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def toy_embed_text(text: str) -> np.ndarray:
    """Strictly positive unit vector keyed by the exact text."""
    raw = stream("metrics-text", text).random(_TOY_DIM) + 0.05
    return raw / np.linalg.norm(raw)


@dataclass(frozen=True)
class EmbedderHandle:
    """A named deterministic embedder; text support is optional."""

    name: str
    dimension: int
    embed_image: Callable[[ImageRaster], np.ndarray]
    embed_text: Callable[[str], np.ndarray] | None = None


def toy_embedder() -> EmbedderHandle:
    return EmbedderHandle(
        name="toy-histogram",
        dimension=_TOY_DIM,
        embed_image=toy_embed_image,
        embed_text=toy_embed_text,
    )


def evaluate_run(
    images,
    prompts,
    masks=None,
    identity_embedder: EmbedderHandle | None = None,
    style_embedder: EmbedderHandle | None = None,
    text_embedder: EmbedderHandle | None = None,
    dreamsim_distance: Callable | None = None,
    noise_seed: int = 0,
) -> tuple[ScoreSet, dict]:
    """Score an image set against its prompts.

    Identity similarity is computed over masked images when masks are given
    (background replaced by per-image seeded noise); style over the unmasked
    images. Without a perceptual-distance plugin the dreamsim slot is the
    proxy 1 - identity similarity, flagged in the report.
    """
    images = list(images)
    prompts = list(prompts)
    if len(images) < 2:
        raise ValidationError(f"evaluation needs >= 2 images, got {len(images)}")
    if len(prompts) != len(images):
        raise ValidationError("images and prompts differ in length")
    if masks is not None and len(masks) != len(images):
        raise ValidationError("images and masks differ in length")

    identity_embedder = identity_embedder or toy_embedder()
    style_embedder = style_embedder or toy_embedder()
    text_embedder = text_embedder or toy_embedder()
    if text_embedder.embed_text is None:
        raise ValidationError(f"embedder {text_embedder.name!r} cannot embed text")

    if masks is not None:
        # per-image seed offset: each image gets its own noise field
        identity_images = [
            apply_background_noise(img, mask, noise_seed + i)
            for i, (img, mask) in enumerate(zip(images, masks))
        ]
    else:
        identity_images = images

    identity_axis = pairwise_mean_similarity(
        [identity_embedder.embed_image(img) for img in identity_images]
    )
    style_axis = pairwise_mean_similarity([style_embedder.embed_image(img) for img in images])
    prompt_scores = [
        text_image_score(
            text_embedder.embed_image(img),
            text_embedder.embed_text(f"{PROMPT_PREFIX} {prompt}".strip()),
            prefix_applied=True,
        )
        for img, prompt in zip(images, prompts)
    ]
    prompt_axis = float(np.mean(prompt_scores))

    if dreamsim_distance is not None:
        dreamsim = float(dreamsim_distance(identity_images))
        proxy = False
    else:
        dreamsim = 1.0 - identity_axis
        proxy = True

    scores = ScoreSet(clip_t=prompt_axis, clip_i=identity_axis, dreamsim=dreamsim, dino=style_axis)
    warnings = []
    if prompt_axis > 1.0:
        warnings.append(f"prompt-fidelity score {prompt_axis:.4f} exceeds 1 (reported unclamped)")
    report = {
        "scores": {
            "clip_t": scores.clip_t,
            "clip_i": scores.clip_i,
            "dreamsim": scores.dreamsim,
            "dino": scores.dino,
            "s_h": harmonic_score(scores),
        },
        "embedders": {
            "identity": identity_embedder.name,
            "style": style_embedder.name,
            "text": text_embedder.name,
        },
        "dreamsim_proxy": proxy,
        "masked_identity": masks is not None,
        "warnings": warnings,
    }
    return scores, report


def compare_runs(images_a, images_b, prompts, **kwargs) -> dict:
    """Two-arm comparison: score both sets and report per-metric differences."""
    _, report_a = evaluate_run(images_a, prompts, **kwargs)
    _, report_b = evaluate_run(images_b, prompts, **kwargs)
    difference = {
        key: report_a["scores"][key] - report_b["scores"][key] for key in report_a["scores"]
    }
    return {"a": report_a, "b": report_b, "difference": difference}
