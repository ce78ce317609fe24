from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from src.calibration import BurstStack, NoiseProfile, calibrate, mean_variance_samples
from src.config import BuildConfig, DefaultConfig, load_json
from src.core_types import BayerImage, Rng, RgbImage
from src.dataset_builder import build, require_manifest, summarize_build, summarize_verify, verify
from src.diversity import validate_batch
from src.errors import ConfigurationError, FsidError
from src.metrics import evaluate_set, load_pairs_jsonl
from src.noise_inject import InjectionConfig, inject_with_gain, synthesize_burst
from src.raw_io import load_display_image, read_image, write_image, write_png_preview
from src.renderer import render
from src.scene_gen import COMPOSITION_MODES, GeneratorConfig, sample_scene
from src.unprocess import IspParams, srgb_to_linear, unprocess

logger = logging.getLogger("fsidgen")

DISPLAY_SUFFIXES = (".png", ".jpg", ".jpeg")


def parse_range(text: str) -> tuple[float, float]:
    """Parse "low:high" into a float pair."""
    try:
        low, high = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW:HIGH, got {text!r}") from None
    return low, high


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    defaults = DefaultConfig()
    parser = argparse.ArgumentParser(
        prog="fsidgen",
        description="Fully synthetic clean/noisy Bayer RAW pair generator for denoiser training",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Sample and render procedural scenes")
    p.add_argument("--seed", type=int, default=0, help="Root seed (default: 0)")
    p.add_argument("--count", type=int, default=1, help="Number of scenes (default: 1)")
    p.add_argument("--config", type=Path, help="Generator config JSON")
    p.add_argument("--width", type=int, help="Override render width")
    p.add_argument("--height", type=int, help="Override render height")
    p.add_argument("--composition", choices=COMPOSITION_MODES, help="Override composition mode")
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser("analyze", help="Edge-ratio and colour-entropy gate over a folder")
    p.add_argument("--in", dest="input", type=Path, required=True, help="Folder of RGB .raw or PNG/JPEG files")
    p.add_argument(
        "--threshold",
        type=float,
        default=defaults.edge_threshold,
        help=f"Sobel magnitude threshold (default: {defaults.edge_threshold})",
    )
    p.add_argument(
        "--band",
        type=parse_range,
        default=defaults.edge_band,
        help="Accepted mean edge ratio LOW:HIGH (default: 0.08:0.45)",
    )
    p.add_argument("--report", type=Path, help="Write the report as JSON")
    p.add_argument("--plot", type=Path, help="Save the edge-ratio distribution figure")

    p = sub.add_parser("calibrate", help="Fit a noise profile from a burst of RAW frames")
    p.add_argument("--burst", type=Path, required=True, help="Folder of Bayer .raw frames")
    p.add_argument("--camera", default="unknown", help="Camera label")
    p.add_argument("--gain", default="unknown", help="Gain / ISO label")
    p.add_argument(
        "--bins",
        type=int,
        default=defaults.calibration_bins,
        help=f"Intensity bins (default: {defaults.calibration_bins})",
    )
    p.add_argument("--out", type=Path, required=True, help="Profile JSON path")
    p.add_argument("--plot", type=Path, help="Save the mean-variance figure")

    p = sub.add_parser("burst", help="Write a synthetic burst for a known profile")
    p.add_argument("--profile", type=Path, required=True, help="Noise profile JSON")
    p.add_argument("--frames", type=int, default=100, help="Frame count (default: 100)")
    p.add_argument("--width", type=int, default=defaults.test_width)
    p.add_argument("--height", type=int, default=defaults.test_height)
    p.add_argument("--pattern", default=defaults.pattern, help="CFA pattern (default: RGGB)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser("unprocess", help="Convert RGB frames to clean Bayer RAW")
    p.add_argument("--in", dest="input", type=Path, required=True, help="Folder of RGB .raw or PNG/JPEG files")
    p.add_argument("--isp", type=Path, help="ISP parameter JSON (identity if omitted)")
    p.add_argument("--pattern", default=defaults.pattern, help="CFA pattern (default: RGGB)")
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser("inject", help="Add calibrated noise to clean Bayer RAW")
    p.add_argument("--in", dest="input", type=Path, required=True, help="Folder of clean Bayer .raw files")
    p.add_argument("--profile", type=Path, required=True, help="Noise profile JSON")
    p.add_argument(
        "--gain-range",
        type=parse_range,
        default=defaults.gain_range,
        help="Log-uniform gain scale LOW:HIGH (default: 0.25:4)",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-clamp", action="store_true", help="Keep noisy values outside [0, 1] before quantization")
    p.add_argument("--out", type=Path, required=True, help="Output directory")

    p = sub.add_parser("build-dataset", help="Build a sharded clean/noisy pair dataset")
    p.add_argument("--config", type=Path, required=True, help="Build config JSON")
    p.add_argument("--out", type=Path, required=True, help="Dataset root")
    p.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1)")
    p.add_argument("--count", type=int, help="Override pair count")
    p.add_argument("--seed", type=int, help="Override root seed")

    p = sub.add_parser("verify", help="Check a dataset against its manifest")
    p.add_argument("manifest", type=Path, help="manifest.jsonl or dataset directory")
    p.add_argument(
        "--spot-check",
        type=float,
        default=defaults.spot_check_fraction,
        help="Share of clean frames to regenerate (default: 0.01)",
    )

    p = sub.add_parser("evaluate", help="PSNR/SSIM table grouped by lux and label")
    p.add_argument("--pairs", type=Path, required=True, help="JSON Lines list of pairs")
    p.add_argument("--out", type=Path, required=True, help="CSV output path")
    p.add_argument("--window", choices=["gaussian", "block"], default=defaults.ssim_window)

    return parser.parse_args(argv)


def _rgb_inputs(folder: Path) -> list[Path]:
    """RGB inputs of a folder; a .raw container wins over a preview with the same stem."""
    chosen: dict[str, Path] = {}
    for p in sorted(folder.iterdir()):
        suffix = p.suffix.lower()
        if suffix == ".raw" or (suffix in DISPLAY_SUFFIXES and p.stem not in chosen):
            chosen[p.stem] = p
    paths = sorted(chosen.values())
    if not paths:
        raise ConfigurationError(f"No .raw or PNG/JPEG files in {folder}.")
    return paths


def _load_rgb(path: Path, linearize: bool) -> tuple[RgbImage, bool]:
    """Returns the frame and whether it is display-referred."""
    if path.suffix.lower() == ".raw":
        img = read_image(path)
        if not isinstance(img, RgbImage):
            raise ConfigurationError(f"{path} is a Bayer frame, expected RGB.")
        return img, False
    display = load_display_image(path)
    return RgbImage(srgb_to_linear(display) if linearize else display), True


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = GeneratorConfig.from_dict(load_json(args.config)) if args.config else GeneratorConfig()
    overrides = {k: v for k, v in (("width", args.width), ("height", args.height), ("composition", args.composition)) if v}
    cfg = dataclasses.replace(cfg, **overrides)
    root = Rng(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        spec = sample_scene(root.derive_stream(f"scene:{i}"), cfg, scene_id=i)
        img = render(spec)
        stem = args.out / f"scene_{i:06d}"
        stem.with_suffix(".json").write_text(spec.to_json() + "\n")
        write_image(stem.with_suffix(".raw"), img)
        write_png_preview(stem.with_suffix(".png"), img)
        print(f"scene {i}: {len(spec.objects)} objects, digest {spec.digest():016x}")
    print(f"\nWrote {args.count} scenes to {args.out}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    paths = _rgb_inputs(args.input)
    # PNG baselines are compared in linear light, like the renders.
    imgs = [_load_rgb(p, linearize=True)[0] for p in paths]
    report = validate_batch(imgs, band=args.band, threshold=args.threshold)
    print(report.to_frame([p.name for p in paths]).to_string(float_format="%.4f"))
    print(
        f"\nMean edge ratio {report.mean_edge_ratio:.4f} ± {report.std_edge_ratio:.4f}, "
        f"mean colour entropy {report.mean_color_entropy:.3f} bits -> "
        f"{'ACCEPTED' if report.accepted else 'REJECTED'}"
    )
    if args.report:
        args.report.write_text(report.to_json() + "\n")
    if args.plot:
        from src.visualizations import plot_edge_ratio_distribution

        plot_edge_ratio_distribution(report).savefig(args.plot, dpi=120)
    return 0 if report.accepted else 1


def cmd_calibrate(args: argparse.Namespace) -> int:
    stack = BurstStack.from_directory(args.burst, args.camera, args.gain)
    profile = calibrate(stack, bins=args.bins)
    profile.save(args.out)
    for c, noise in sorted(profile.channels.items()):
        diag = profile.diagnostics[c]
        print(
            f"{c}: k={noise.k:.6g}  sigma2={noise.sigma2:.6g}  R2={diag.r_squared:.4f}  "
            f"bins={diag.bins_used}  samples={diag.sample_count:,}"
        )
    if args.plot:
        from src.visualizations import plot_mean_variance_fit

        plot_mean_variance_fit(mean_variance_samples(stack), profile, bins=args.bins).savefig(args.plot, dpi=120)
    print(f"\nProfile written to {args.out}")
    return 0


def cmd_burst(args: argparse.Namespace) -> int:
    profile = NoiseProfile.load(args.profile)
    stack = synthesize_burst(profile, args.frames, args.width, args.height, args.pattern, Rng(args.seed))
    args.out.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(stack.frames):
        write_image(args.out / f"frame_{i:05d}.raw", frame)
    print(f"Wrote {stack.frame_count} frames of {profile.label} to {args.out}")
    return 0


def cmd_unprocess(args: argparse.Namespace) -> int:
    params = IspParams.load(args.isp) if args.isp else IspParams()
    args.out.mkdir(parents=True, exist_ok=True)
    for path in _rgb_inputs(args.input):
        rgb, display = _load_rgb(path, linearize=False)
        frame_params = dataclasses.replace(params, assume_linear_input=False) if display else params
        bayer = unprocess(rgb, frame_params, args.pattern)
        write_image(args.out / f"{path.stem}.raw", bayer)
    print(f"Unprocessed frames written to {args.out}")
    return 0


def cmd_inject(args: argparse.Namespace) -> int:
    profile = NoiseProfile.load(args.profile)
    cfg = InjectionConfig(profile, args.gain_range, clamp=not args.no_clamp, seed=args.seed)
    root = Rng(args.seed)
    paths = sorted(args.input.glob("*.raw"))
    if not paths:
        raise ConfigurationError(f"No .raw files in {args.input}.")
    args.out.mkdir(parents=True, exist_ok=True)
    for path in paths:
        clean = read_image(path)
        if not isinstance(clean, BayerImage):
            raise ConfigurationError(f"{path} is an RGB frame, expected Bayer.")
        noisy, gain_scale = inject_with_gain(clean, cfg, root.derive_stream(f"image:{path.name}"))
        write_image(args.out / path.name, noisy)
        print(f"{path.name}: gain scale {gain_scale:.4f}")
    return 0


def cmd_build_dataset(args: argparse.Namespace) -> int:
    cfg = BuildConfig.load(args.config)
    overrides = {k: v for k, v in (("count", args.count), ("seed", args.seed)) if v is not None}
    cfg = dataclasses.replace(cfg, **overrides)
    print("\nBuilding dataset...")
    print("This may take a moment...\n")
    manifest = build(cfg, args.out, workers=args.workers)
    print(summarize_build(manifest))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    report = verify(require_manifest(args.manifest), spot_check_fraction=args.spot_check)
    print(summarize_verify(report))
    return 0 if report.passed else 1


def cmd_evaluate(args: argparse.Namespace) -> int:
    table = evaluate_set(load_pairs_jsonl(args.pairs), window=args.window)
    table.to_csv(args.out)
    print(table.by_lux.to_string(float_format="%.4f"))
    print(f"\nTable written to {args.out}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "analyze": cmd_analyze,
    "calibrate": cmd_calibrate,
    "burst": cmd_burst,
    "unprocess": cmd_unprocess,
    "inject": cmd_inject,
    "build-dataset": cmd_build_dataset,
    "verify": cmd_verify,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logger.debug("Running %s", args.command)
    try:
        return COMMANDS[args.command](args)
    except FsidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
