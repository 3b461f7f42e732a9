"""Sweep the injection coefficient through the command-line surface.

Writes one sub-run per lambda under demo_out/sweep/ plus a summary table,
exactly what `storyscale sweep` does from a shell.
"""

import json
from pathlib import Path

from storyscale.cli import main

out_dir = Path("demo_out/sweep")
story_path = Path("demo_out/sweep_story.json")
story_path.parent.mkdir(parents=True, exist_ok=True)
story_path.write_text(json.dumps({
    "identity": "a watercolor hedgehog",
    "expressions": [
        "at a rainy bus stop",
        "inside a greenhouse",
        "over a chess board",
        "near a tide pool",
    ],
}), encoding="utf-8")

code = main([
    "sweep",
    "--story", str(story_path),
    "--out", str(out_dir),
    "--seed", "3",
    "--sweep", "0,0.5,0.85,1",
])
print("exit status:", code)

summary = json.loads((out_dir / "sweep_summary.json").read_text(encoding="utf-8"))
print("per-lambda scores from the summary file:")
for row in summary["sweep"]:
    print(f"  lambda {row['lambda']:<5g} s_h {row['s_h']:.4f}  identity {row['clip_i']:.4f}  "
          f"style {row['dino']:.4f}")

# lambda 0 is the full-replacement limit: every follower alpha is exactly 0
manifest = json.loads((out_dir / "sweep_0" / "manifest.json").read_text(encoding="utf-8"))
alphas = {r["alpha"] for r in manifest["alpha_records"] if r["sample"] > 0}
print("follower alphas in the lambda=0 run:", alphas)
