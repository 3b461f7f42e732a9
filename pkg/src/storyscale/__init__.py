"""Consistent multi-prompt image-set generation on a toy scale-wise engine.

Library layout:
    prompts   - story parsing, toy text encoding, identity replacement
    scales    - schedules, bilinear upsampling, residual quantization, decoding
    model     - seed-initialized transformer with attention hook points
    guidance  - style injection, branch synchronization, classifier-free guidance
    pipeline  - batching and the end-to-end generation loop
    metrics   - evaluation axes, harmonic score, background-noise masking
    ppm       - byte-exact PPM image I/O
    cli       - the storyscale command
"""

from .errors import (
    DegenerateInputError,
    IntegrityError,
    SpecParseError,
    StateError,
    StoryscaleError,
    SynchronizationError,
    ValidationError,
)
from .guidance import (
    AlphaLedger,
    AlphaRecord,
    GuidanceConfig,
    apply_cfg,
    compute_alpha,
    inject_style_conditional,
    inject_style_unconditional,
)
from .metrics import (
    EmbedderHandle,
    ScoreSet,
    apply_background_noise,
    compare_runs,
    evaluate_run,
    harmonic_score,
    pairwise_mean_similarity,
    text_image_score,
    toy_embed_image,
)
from .model import AttentionState, ModelParams, forward_batch, forward_step, init_model, self_attention
from .pipeline import (
    BatchPlan,
    GenerationConfig,
    RunManifest,
    StoryResult,
    generate_batch,
    generate_story,
    plan_batches,
)
from .prompts import (
    EmbeddingBatch,
    EmbeddingBlock,
    StorySpec,
    apply_identity_replacement,
    block_norm,
    encode_prompt,
    parse_story_spec,
)
from .scales import (
    FeatureMap,
    ImageRaster,
    ResidualMap,
    ScaleSchedule,
    accumulate,
    decode_image,
    make_schedule,
    quantize_bits,
    upsample_bilinear,
)

__version__ = "0.1.0"
