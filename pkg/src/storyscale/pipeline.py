"""End-to-end story generation: batching, the per-step guidance loop, decoding.

A story with N prompts is generated in batches. The anchor prompt (index 1)
sits in slot 0 of every batch and serves as the reference for identity
replacement and attention injection. Its random streams are keyed by prompt
index, not batch slot, and the injection leaves the reference untouched, so
the anchor's raster is byte-identical in every batch; later batches verify
this by digest instead of emitting a duplicate file.

Per step, the loop runs the conditional forward pass (style-injection hook),
the unconditional pass (synchronized hook, alphas read from the ledger),
combines them with classifier-free guidance, samples one bit per channel
per token, and accumulates the dequantized residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IntegrityError, ValidationError
from .guidance import AlphaLedger, GuidanceConfig, StyleInjectionHooks, apply_cfg
from .model import ModelParams, forward_batch, init_model
from .ppm import digest_bytes, ppm_bytes, write_ppm
from .prompts import EmbeddingBatch, StorySpec, apply_identity_replacement, encode_batch, null_entry
from .rng import stream, stream_id
from .scales import (
    FeatureMap,
    ImageRaster,
    ScaleSchedule,
    accumulate,
    decode_image,
    default_gamma,
    logistic,
    make_schedule,
    nearest_upscale,
    quantize_bits,
)


@dataclass(frozen=True)
class GenerationConfig:
    schedule: ScaleSchedule = field(default_factory=make_schedule)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    d_model: int = 32
    n_heads: int = 2
    n_blocks: int = 4
    d_channels: int = 32
    d_text: int = 32
    global_seed: int = 0
    batch_size: int = 4
    temperature: float = 0.0
    gamma: float | None = None  # residual bit magnitude; None means 1/sqrt(d_channels)
    upscale: int = 8  # nearest-neighbor factor for emitted files

    def __post_init__(self):
        if self.temperature < 0.0:
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if self.guidance.any_enabled and self.batch_size < 2:
            raise ValidationError("batch size must be >= 2 when guidance is enabled")
        if self.batch_size < 1:
            raise ValidationError("batch size must be >= 1")
        self.guidance.check_against(self.schedule.n_steps)

    @property
    def effective_gamma(self) -> float:
        return self.gamma if self.gamma is not None else default_gamma(self.d_channels)

    def build_model(self, seed: int) -> ModelParams:
        return init_model(
            seed,
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_blocks=self.n_blocks,
            d_channels=self.d_channels,
            d_text=self.d_text,
        )


def config_to_dict(config: GenerationConfig) -> dict:
    return {
        "schedule": {
            "sizes": [list(s) for s in config.schedule.sizes],
            "early_steps": sorted(config.schedule.early_steps),
        },
        "guidance": {
            "lambda": config.guidance.lam,
            "early_steps": list(config.guidance.early_steps),
            "cfg_scale": config.guidance.cfg_scale,
            "enable_ipr": config.guidance.enable_ipr,
            "enable_asi": config.guidance.enable_asi,
            "enable_sga": config.guidance.enable_sga,
            "alpha_scope": config.guidance.alpha_scope,
        },
        "model": {
            "d_model": config.d_model,
            "n_heads": config.n_heads,
            "n_blocks": config.n_blocks,
            "d_channels": config.d_channels,
            "d_text": config.d_text,
        },
        "global_seed": config.global_seed,
        "batch_size": config.batch_size,
        "temperature": config.temperature,
        "gamma": config.gamma,
        "upscale": config.upscale,
    }


@dataclass(frozen=True)
class BatchPlan:
    """Anchor-first batches of 1-based prompt indices."""

    batches: tuple[tuple[int, ...], ...]


def plan_batches(spec: StorySpec, batch_size: int) -> BatchPlan:
    """Single batch when the story fits; otherwise anchor + follower chunks."""
    if batch_size < 2:
        raise ValidationError(f"batch size must be >= 2, got {batch_size}")
    n = spec.n
    if n <= batch_size:
        return BatchPlan(batches=(tuple(range(1, n + 1)),))
    followers = list(range(2, n + 1))
    per_batch = batch_size - 1
    batches = []
    for start in range(0, len(followers), per_batch):
        batches.append(tuple([1] + followers[start : start + per_batch]))
    return BatchPlan(batches=tuple(batches))


# Gain on the prompt-derived initialization so it is commensurate with a few
# accumulated residual steps rather than vanishing under them.
F0_GAIN = 2.0


def _f0_features(entry, config: GenerationConfig, seed: int) -> FeatureMap:
    """Broadcast a seeded projection of the sample's mean token embedding."""
    identity, expression = entry
    rows = np.vstack([identity.tokens, expression.tokens])
    if rows.shape[0] == 0:
        mean = np.zeros(config.d_text)
    else:
        mean = rows.mean(axis=0)
    proj = stream("f0", seed).standard_normal((config.d_text, config.d_channels))
    proj *= F0_GAIN / np.sqrt(config.d_text)
    h, w = config.schedule.final_size
    data = np.broadcast_to(mean @ proj, (h, w, config.d_channels)).copy()
    return FeatureMap(data=data, step=0)


def _bit_source(
    guided: np.ndarray, temperature: float, seed: int, prompt_index: int, step: int
) -> np.ndarray:
    """Array whose sign gives the sampled bits (tie quantizes to 1)."""
    if temperature == 0.0:
        return guided
    p = logistic(guided / temperature)
    u = stream("bits", seed, prompt_index, step).random(guided.shape)
    return p - u  # bit = 1 iff u <= logistic(logit / temperature)


def generate_batch(
    indices: tuple[int, ...],
    embeddings: EmbeddingBatch,
    config: GenerationConfig,
    params: ModelParams | None = None,
    seed: int | None = None,
    ledger: AlphaLedger | None = None,
) -> tuple[list[ImageRaster], AlphaLedger]:
    """Generate one batch of latent-resolution rasters.

    ``embeddings`` must already have identity replacement applied when that
    toggle is on. Returns rasters in slot order plus the alpha ledger.
    """
    if len(indices) != len(embeddings):
        raise ValidationError("batch indices and embeddings differ in length")
    if seed is None:
        seed = config.global_seed
    if params is None:
        params = config.build_model(seed)
    if ledger is None:
        ledger = AlphaLedger()
    hooks = StyleInjectionHooks(config.guidance, ledger)
    schedule = config.schedule
    gamma = config.effective_gamma

    features = [_f0_features(entry, config, seed) for entry in embeddings.entries]
    nulls = [null_entry(config.d_text)] * len(indices)

    for step in range(1, schedule.n_steps + 1):
        shape = schedule.size_at(step)
        cond = forward_batch(
            features, embeddings.entries, params, step, shape, "cond", hook=hooks.conditional
        )
        uncond = forward_batch(
            features, nulls, params, step, shape, "uncond", hook=hooks.unconditional
        )
        for i, prompt_index in enumerate(indices):
            guided = apply_cfg(cond[i], uncond[i], config.guidance.cfg_scale)
            raw = _bit_source(guided, config.temperature, seed, prompt_index, step)
            residual = quantize_bits(raw, gamma)
            features[i] = accumulate(features[i], residual, step)

    rasters = [decode_image(f, seed, schedule.n_steps) for f in features]
    return rasters, ledger


@dataclass
class RunManifest:
    """Everything needed to audit and re-verify a run."""

    config: dict
    story: dict
    images: list[dict] = field(default_factory=list)
    alpha_records: list[dict] = field(default_factory=list)
    anchor_checks: list[dict] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        out = {
            "config": self.config,
            "story": self.story,
            "images": self.images,
            "alpha_records": self.alpha_records,
            "anchor_checks": self.anchor_checks,
        }
        if include_timings:
            out["timings"] = self.timings
        else:
            out["timings_path"] = "timings.json"
        return out


@dataclass
class StoryResult:
    manifest: RunManifest
    rasters: dict[int, ImageRaster]  # latent resolution, keyed by prompt index


def generate_story(
    spec: StorySpec,
    config: GenerationConfig,
    out_dir=None,
    config_echo: dict | None = None,
) -> StoryResult:
    """Generate every prompt of a story; optionally write PPMs under out_dir.

    The effective seed is the story's own seed override when present, else
    the config's global seed. The anchor is generated in every batch but
    emitted once; later batches must reproduce its digest exactly.
    """
    seed = spec.seed if spec.seed is not None else config.global_seed
    params = config.build_model(seed)
    plan = plan_batches(spec, config.batch_size)
    if out_dir is not None:
        out_dir = Path(out_dir)

    manifest = RunManifest(
        config=config_echo if config_echo is not None else config_to_dict(config),
        story={
            "identity": spec.identity_text,
            "expressions": list(spec.expression_texts),
            "seed": spec.seed,
        },
    )
    rasters: dict[int, ImageRaster] = {}
    anchor_digest = None
    batch_times = []
    image_times = {}
    t_start = time.perf_counter()

    for bi, batch_indices in enumerate(plan.batches):
        t_batch = time.perf_counter()
        entries = encode_batch(spec, list(batch_indices), seed, config.d_text)
        if config.guidance.enable_ipr:
            entries = apply_identity_replacement(entries)
        batch_rasters, ledger = generate_batch(batch_indices, entries, config, params, seed)
        elapsed = time.perf_counter() - t_batch
        batch_times.append(elapsed)

        for row in ledger.rows():
            row = dict(row)
            row["batch"] = bi
            row["prompt_index"] = batch_indices[row["sample"]]
            manifest.alpha_records.append(row)

        for slot, prompt_index in enumerate(batch_indices):
            out_raster = nearest_upscale(batch_rasters[slot], config.upscale)
            digest = digest_bytes(ppm_bytes(out_raster))
            if prompt_index == 1 and anchor_digest is not None:
                if digest != anchor_digest:
                    raise IntegrityError(
                        f"anchor raster diverged in batch {bi}: {digest} != {anchor_digest}"
                    )
                manifest.anchor_checks.append({"batch": bi, "digest_match": True})
                continue
            if prompt_index == 1:
                anchor_digest = digest
            rasters[prompt_index] = batch_rasters[slot]
            image_times[prompt_index] = elapsed / len(batch_indices)
            filename = f"story_{prompt_index}.ppm"
            if out_dir is not None:
                write_ppm(out_raster, out_dir / filename)
            manifest.images.append(
                {
                    "prompt_index": prompt_index,
                    "stream_id": stream_id("bits", seed, prompt_index),
                    "path": filename if out_dir is not None else None,
                    "digest": digest,
                }
            )

    manifest.images.sort(key=lambda row: row["prompt_index"])
    manifest.timings = {
        "total_s": time.perf_counter() - t_start,
        "batches_s": batch_times,
        "images_s": {str(k): v for k, v in sorted(image_times.items())},
    }
    return StoryResult(manifest=manifest, rasters=rasters)
