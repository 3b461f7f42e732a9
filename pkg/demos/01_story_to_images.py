"""Generate a four-scene story and look at what comes out.

Run from the repository root:

    python demos/01_story_to_images.py
"""

import json
from pathlib import Path

from storyscale import GenerationConfig, generate_story, parse_story_spec

# a story is one identity phrase plus one expression phrase per scene
story = parse_story_spec(json.dumps({
    "identity": "a dog",
    "expressions": [
        "springing toward a frisbee",
        "on a porch swing with pillows",
        "chasing autumn leaves",
        "splashing in a lake",
    ],
}))
print(f"story: {story.identity_text!r}, {story.n} scenes")

config = GenerationConfig(global_seed=1)
print(f"schedule: {config.schedule.sizes}, injection at steps {sorted(config.schedule.early_steps)}")

out_dir = Path("demo_out/story")
out_dir.mkdir(parents=True, exist_ok=True)
result = generate_story(story, config, out_dir=out_dir)

for row in result.manifest.images:
    print(f"  scene {row['prompt_index']}: {row['path']}  {row['digest'][:23]}...")

# the alpha ledger records one interpolation weight per (step, layer, sample, branch)
records = result.manifest.alpha_records
print(f"{len(records)} interpolation weights recorded; a follower example:")
example = next(r for r in records if r["sample"] == 1 and r["branch"] == "cond")
print(f"  step {example['step']}, layer {example['layer']}: alpha = {example['alpha']:.4f}")

# the reference sample's weight is always exactly lambda
ref = next(r for r in records if r["sample"] == 0 and r["branch"] == "cond")
print(f"  reference alpha = {ref['alpha']} (the lambda of the run)")
