"""Command-line surface: generate, sweep, evaluate, golden-check.

Configuration comes from an optional JSON config file plus flags; flags win.
The effective configuration is echoed into the run manifest so a run can be
audited and reproduced. Diagnostics go to stderr; machine-readable results
live in files (manifest.json, timings.json, report.json, sweep_summary.json).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import StoryscaleError
from .guidance import GuidanceConfig
from .metrics import ScoreSet, compare_runs, evaluate_run, harmonic_score
from .pipeline import GenerationConfig, generate_story
from .ppm import digest_file, read_mask, read_ppm
from .prompts import load_story_spec
from .scales import make_schedule

DEFAULT_SWEEP = (0.6, 0.7, 0.8, 0.85, 0.9)


@dataclass(frozen=True)
class RunConfig:
    """Effective command configuration; the manifest echoes exactly this."""

    story: str | None = None
    out: str = "out"
    seed: int = 0
    lam: float = 0.85
    early_steps: tuple[int, ...] = (2, 3)
    cfg_scale: float = 3.0
    batch_size: int = 4
    temperature: float = 0.0
    ipr: bool = True
    asi: bool = True
    sga: bool = True
    schedule: object = "toy"  # preset name or list of [h, w] pairs
    sweep: tuple[float, ...] | None = None
    upscale: int = 8
    alpha_scope: str = "per_layer"

    def to_dict(self) -> dict:
        return {
            "story": self.story,
            "out": self.out,
            "seed": self.seed,
            "lambda": self.lam,
            "early_steps": list(self.early_steps),
            "cfg_scale": self.cfg_scale,
            "batch_size": self.batch_size,
            "temperature": self.temperature,
            "ipr": self.ipr,
            "asi": self.asi,
            "sga": self.sga,
            "schedule": self.schedule if isinstance(self.schedule, str) else [list(s) for s in self.schedule],
            "sweep": list(self.sweep) if self.sweep is not None else None,
            "upscale": self.upscale,
            "alpha_scope": self.alpha_scope,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        schedule = raw.get("schedule", "toy")
        if not isinstance(schedule, str):
            schedule = tuple(tuple(s) for s in schedule)
        sweep = raw.get("sweep")
        return cls(
            story=raw.get("story"),
            out=raw.get("out", "out"),
            seed=raw.get("seed", 0),
            lam=raw.get("lambda", 0.85),
            early_steps=tuple(raw.get("early_steps", (2, 3))),
            cfg_scale=raw.get("cfg_scale", 3.0),
            batch_size=raw.get("batch_size", 4),
            temperature=raw.get("temperature", 0.0),
            ipr=raw.get("ipr", True),
            asi=raw.get("asi", True),
            sga=raw.get("sga", True),
            schedule=schedule,
            sweep=tuple(sweep) if sweep is not None else None,
            upscale=raw.get("upscale", 8),
            alpha_scope=raw.get("alpha_scope", "per_layer"),
        )

    def generation_config(self) -> GenerationConfig:
        schedule = make_schedule(self.schedule, early_steps=self.early_steps)
        guidance = GuidanceConfig(
            lam=self.lam,
            early_steps=self.early_steps,
            cfg_scale=self.cfg_scale,
            enable_ipr=self.ipr,
            enable_asi=self.asi,
            enable_sga=self.sga,
            alpha_scope=self.alpha_scope,
        )
        return GenerationConfig(
            schedule=schedule,
            guidance=guidance,
            global_seed=self.seed,
            batch_size=self.batch_size,
            temperature=self.temperature,
            upscale=self.upscale,
        )


def _parse_schedule_flag(text: str):
    if text in ("toy", "full"):
        return text
    pairs = []
    for chunk in text.split(","):
        h, _, w = chunk.strip().partition("x")
        pairs.append((int(h), int(w)))
    return tuple(pairs)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _merge_config(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            config = RunConfig.from_dict(json.load(fh))
    overrides = {}
    mapping = [
        ("story", "story"),
        ("out", "out"),
        ("seed", "seed"),
        ("lam", "lam"),
        ("early_steps", "early_steps"),
        ("cfg_scale", "cfg_scale"),
        ("batch_size", "batch_size"),
        ("temperature", "temperature"),
        ("schedule", "schedule"),
        ("sweep", "sweep"),
        ("upscale", "upscale"),
        ("alpha_scope", "alpha_scope"),
    ]
    for attr, name in mapping:
        value = getattr(args, attr, None)
        if value is not None:
            overrides[name] = value
    for flag, name in (("no_ipr", "ipr"), ("no_asi", "asi"), ("no_sga", "sga")):
        if getattr(args, flag, False):
            overrides[name] = False
    return replace(config, **overrides)


def _add_generation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--story", help="story-spec file (JSON)")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="global seed")
    parser.add_argument("--lambda", dest="lam", type=float, help="style-injection scale in [0, 1]")
    parser.add_argument("--early-steps", dest="early_steps", type=_parse_int_list,
                        help="comma-separated injection steps, e.g. 2,3")
    parser.add_argument("--cfg-scale", dest="cfg_scale", type=float, help="guidance scale w >= 0")
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--temperature", type=float, help="bit-sampling temperature; 0 = argmax")
    parser.add_argument("--no-ipr", dest="no_ipr", action="store_true",
                        help="disable identity prompt replacement")
    parser.add_argument("--no-asi", dest="no_asi", action="store_true",
                        help="disable adaptive style injection")
    parser.add_argument("--no-sga", dest="no_sga", action="store_true",
                        help="disable synchronized guidance adaptation")
    parser.add_argument("--schedule", type=_parse_schedule_flag,
                        help='"toy", "full", or custom like "1x1,2x2,4x4,8x8"')
    parser.add_argument("--upscale", type=int, help="nearest-neighbor output enlargement")
    parser.add_argument("--alpha-scope", dest="alpha_scope", choices=("per_layer", "per_step"))


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _run_story(config: RunConfig, out_dir: Path) -> dict:
    """Generate one run directory; returns the manifest dict."""
    if config.story is None:
        raise StoryscaleError("no story file given (use --story)")
    spec = load_story_spec(config.story)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = generate_story(spec, config.generation_config(), out_dir=out_dir,
                            config_echo=config.to_dict())
    manifest = result.manifest.to_dict()
    _write_json(out_dir / "manifest.json", manifest)
    _write_json(out_dir / "timings.json", result.manifest.timings)
    return manifest


def _verify_run(out_dir: Path, manifest: dict) -> list[str]:
    """Recompute file digests against the manifest; returns mismatch messages."""
    problems = []
    for row in manifest["images"]:
        path = out_dir / row["path"]
        if not path.exists():
            problems.append(f"missing output {path}")
        elif digest_file(path) != row["digest"]:
            problems.append(f"digest mismatch for {path}")
    return problems


def cmd_generate(args) -> int:
    config = _merge_config(args)
    out_dir = Path(config.out)
    manifest = _run_story(config, out_dir)
    problems = _verify_run(out_dir, manifest)
    for p in problems:
        print(f"error: {p}", file=sys.stderr)
    if problems:
        return 1
    print(f"wrote {len(manifest['images'])} images and manifest.json to {out_dir}",
          file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    config = _merge_config(args)
    sweep = config.sweep if config.sweep is not None else DEFAULT_SWEEP
    if len(sweep) == 0:
        raise StoryscaleError("sweep list is empty")
    for lam in sweep:
        if not 0.0 <= lam <= 1.0:
            raise StoryscaleError(f"sweep lambda {lam} outside [0, 1]")
    if config.story is None:
        raise StoryscaleError("no story file given (use --story)")

    spec = load_story_spec(config.story)
    base_out = Path(config.out)
    summary = []
    for lam in sweep:
        sub_config = replace(config, lam=lam, out=str(base_out / f"sweep_{lam:g}"))
        sub_dir = Path(sub_config.out)
        manifest = _run_story(sub_config, sub_dir)
        problems = _verify_run(sub_dir, manifest)
        if problems:
            for p in problems:
                print(f"error: {p}", file=sys.stderr)
            return 1
        images = [read_ppm(sub_dir / row["path"]) for row in manifest["images"]]
        prompts = [spec.full_prompt(row["prompt_index"]) for row in manifest["images"]]
        _, report = evaluate_run(images, prompts)
        summary.append({"lambda": lam, **report["scores"]})

    _write_json(base_out / "sweep_summary.json", {"sweep": summary})
    header = f"{'lambda':>8} {'clip_t':>8} {'clip_i':>8} {'dreamsim':>9} {'dino':>8} {'s_h':>8}"
    print(header)
    for row in summary:
        print(f"{row['lambda']:>8g} {row['clip_t']:>8.4f} {row['clip_i']:>8.4f} "
              f"{row['dreamsim']:>9.4f} {row['dino']:>8.4f} {row['s_h']:>8.4f}")
    return 0


def _load_run_images(run_dir: Path):
    """Images plus prompt indices, from the manifest when present."""
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        rows = sorted(manifest["images"], key=lambda r: r["prompt_index"])
        return [read_ppm(run_dir / r["path"]) for r in rows], [r["prompt_index"] for r in rows], manifest
    paths = sorted(run_dir.glob("story_*.ppm"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise StoryscaleError(f"no story_*.ppm images found in {run_dir}")
    return [read_ppm(p) for p in paths], [int(p.stem.split("_")[1]) for p in paths], None


def _load_masks(run_dir: Path, indices):
    masks = []
    for idx in indices:
        candidates = [run_dir / f"mask_{idx}.pgm", run_dir / f"mask_{idx}.ppm"]
        found = next((p for p in candidates if p.exists()), None)
        if found is None:
            return None  # masks are all-or-nothing
        masks.append(read_mask(found))
    return masks


def _prompts_for(indices, story_path, manifest) -> list[str]:
    if story_path is not None:
        spec = load_story_spec(story_path)
    elif manifest is not None:
        from .prompts import StorySpec

        spec = StorySpec(
            identity_text=manifest["story"]["identity"],
            expression_texts=tuple(manifest["story"]["expressions"]),
            seed=manifest["story"].get("seed"),
        )
    else:
        raise StoryscaleError("prompts unavailable: give --story or evaluate a run directory")
    return [spec.full_prompt(i) for i in indices]


def cmd_evaluate(args) -> int:
    if args.scores is not None:
        values = _parse_float_list(args.scores)
        if len(values) != 4:
            raise StoryscaleError("--scores needs exactly four values: clip_t,clip_i,dreamsim,dino")
        score = harmonic_score(ScoreSet(*values))
        print(f"{score:.4f}")
        return 0

    if args.compare is not None:
        dir_a, dir_b = (Path(d) for d in args.compare)
        images_a, indices, manifest_a = _load_run_images(dir_a)
        images_b, indices_b, _ = _load_run_images(dir_b)
        if indices != indices_b:
            raise StoryscaleError("compared runs contain different prompt indices")
        prompts = _prompts_for(indices, args.story, manifest_a)
        report = compare_runs(images_a, images_b, prompts)
        out_dir = Path(args.out) if args.out else dir_a
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(out_dir / "compare_report.json", report)
        print(f"wrote compare_report.json to {out_dir}", file=sys.stderr)
        return 0

    if args.images_dir is None:
        raise StoryscaleError("give an images directory, --scores, or --compare")
    run_dir = Path(args.images_dir)
    images, indices, manifest = _load_run_images(run_dir)
    prompts = _prompts_for(indices, args.story, manifest)
    masks = _load_masks(run_dir, indices)
    _, report = evaluate_run(images, prompts, masks=masks)
    for warning in report["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    out_dir = Path(args.out) if args.out else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", report)
    print(f"wrote report.json to {out_dir}", file=sys.stderr)
    return 0


def cmd_golden_check(args) -> int:
    run_dir = Path(args.out if args.out else ".")
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise StoryscaleError(f"no manifest.json in {run_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    problems = _verify_run(run_dir, manifest)
    for p in problems:
        print(f"error: {p}", file=sys.stderr)
    if problems:
        return 1
    print(f"all {len(manifest['images'])} image digests verified", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storyscale",
        description="Consistent story image-set generation on a toy scale-wise engine.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a story run directory")
    _add_generation_flags(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_sweep = sub.add_parser("sweep", help="one sub-run per lambda plus a summary")
    _add_generation_flags(p_sweep)
    p_sweep.add_argument("--sweep", type=_parse_float_list,
                         help="comma-separated lambda values, e.g. 0.6,0.7,0.8")
    p_sweep.set_defaults(func=cmd_sweep)

    p_eval = sub.add_parser("evaluate", help="score a run directory (or raw score quadruple)")
    p_eval.add_argument("images_dir", nargs="?", help="run directory with story_*.ppm files")
    p_eval.add_argument("--story", help="story file for prompt texts")
    p_eval.add_argument("--out", help="directory for report.json (default: images dir)")
    p_eval.add_argument("--scores", help="clip_t,clip_i,dreamsim,dino bypass: print the harmonic score")
    p_eval.add_argument("--compare", nargs=2, metavar=("DIR_A", "DIR_B"),
                        help="two-arm comparison of run directories")
    p_eval.set_defaults(func=cmd_evaluate)

    p_check = sub.add_parser("golden-check", help="re-verify a run directory against its manifest")
    p_check.add_argument("--out", help="run directory (default: current directory)")
    p_check.set_defaults(func=cmd_golden_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StoryscaleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
