"""The scoring protocol on its own: harmonic mean, pairwise axes, masking.

The harmonic score is HM(prompt, identity, 1 - distance, style); feeding
reference score quadruples through it reproduces their headline numbers.
"""

import numpy as np

from storyscale import (
    ScoreSet,
    apply_background_noise,
    evaluate_run,
    harmonic_score,
    pairwise_mean_similarity,
    text_image_score,
)
from storyscale.scales import ImageRaster

# reference (clip_t, clip_i, dreamsim, dino) quadruples -> harmonic scores
for label, quad in [
    ("full method     ", (0.8732, 0.9267, 0.1834, 0.8089)),
    ("prompt baseline ", (0.8942, 0.9117, 0.1993, 0.7687)),
    ("vanilla backbone", (0.8836, 0.8955, 0.2780, 0.6965)),
]:
    s = harmonic_score(ScoreSet(*quad))
    print(f"{label} -> S_H = {s:.4f}")

# prompt fidelity: 2.5 x cosine, computed against the prefixed prompt text
image_vec = np.array([1.0, 0.0])
text_vec = np.array([0.36, np.sqrt(1 - 0.36**2)])
print("2.5 x cosine(0.36) =", text_image_score(image_vec, text_vec))

# pairwise similarity over a tiny set, by hand: (0 + 1/sqrt2 + 1/sqrt2) / 3
vecs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]) / np.sqrt(2)]
print("pairwise mean:", pairwise_mean_similarity(vecs))

# background masking: foreground bytes survive, background becomes seeded noise
rng = np.random.default_rng(0)
image = ImageRaster(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
mask = np.zeros((8, 8), dtype=np.uint8)
mask[2:6, 2:6] = 1
noisy = apply_background_noise(image, mask, seed=4)
print("foreground preserved:", bool(np.array_equal(noisy.pixels[2:6, 2:6], image.pixels[2:6, 2:6])))
print("background replaced: ", not np.array_equal(noisy.pixels[0, 0], image.pixels[0, 0]))

# full evaluation of an image set (identical copies: both pairwise axes hit 1)
copies = [ImageRaster(image.pixels.copy()) for _ in range(3)]
scores, report = evaluate_run(copies, ["a dog", "a dog", "a dog"])
print("identical-copy run:", {k: round(v, 4) for k, v in report["scores"].items()})
print("distance slot is a proxy here:", report["dreamsim_proxy"])
