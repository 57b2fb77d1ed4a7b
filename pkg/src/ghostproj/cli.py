"""Command-line front end.

Subcommands: generate-mask, capture, plan, simulate, score, pipeline.
Exit status: 0 success, 2 usage, 3 validation, 4 numerical, 5 I/O.
All randomness derives from explicit seeds; ``--print-config`` dumps the
fully resolved configuration and exits.
"""

import argparse
import hashlib
import math
import sys
from pathlib import Path

from . import ensemble as ens
from . import maskgen, metrics, planner, simulator, targets
from .errors import GeometryError, NNLSIterationError, PlanningError, ValidationError
from .rng import derive_seed

EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4, 5

CLASS_ALIASES = {
    "binary": maskgen.MaskClass.RANDOM_BINARY,
    "gaussian": maskgen.MaskClass.GAUSSIAN_SMOOTHED,
    "lorentzian": maskgen.MaskClass.LORENTZIAN_SMOOTHED,
    "fractal": maskgen.MaskClass.RANDOM_FRACTAL,
    "legendre": maskgen.MaskClass.LEGENDRE,
}


class _Stage:
    """Tracks which pipeline stage is running, for error labels."""

    def __init__(self, name):
        self.name = name


def _dims(text):
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise argparse.ArgumentTypeError("dimensions must be positive")
    return w, h


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


# --------------------------------------------------------------------------
# argument groups shared between subcommands


def _add_mask_args(p, required_class=True):
    p.add_argument("--class", dest="mask_class", choices=sorted(CLASS_ALIASES), required=required_class,
                   default=None if required_class else "binary")
    p.add_argument("--size", type=int, help="square mask side in pixels")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--feature-size", type=int, default=1, help="plaquette side in pixels (default 1)")
    p.add_argument("--sigma", type=float, help="Gaussian smoothing sigma (plaquettes)")
    p.add_argument("--gamma", type=float, help="Lorentzian half-width (plaquettes)")
    p.add_argument("--alpha", type=float, help="fractal spectral exponent")
    p.add_argument("--beta", type=float, default=None, help="fractal origin regularizer")
    p.add_argument("--p", type=int, help="Legendre prime")
    p.add_argument("--low", type=float, default=0.08, help="low transmission (default 0.08)")
    p.add_argument("--high", type=float, default=1.0, help="high transmission (default 1.0)")
    p.add_argument("--pitch-um", type=float, default=20.0, help="mask pixel pitch in micrometers")


def _add_scaling_args(p):
    p.add_argument("--scaling", choices=("margin", "fixed"), default="margin")
    p.add_argument("--max-count", type=float, default=1000.0, help="detector saturation count (margin mode)")
    p.add_argument("--margin", type=float, default=0.8, help="fraction of saturation (margin mode)")
    p.add_argument("--total-ms", type=float, default=1000.0, help="integrated exposure (fixed mode)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--min-exposure-ms", type=float, default=None)
    p.add_argument("--pedestal", type=float, default=None, help="enforce this pedestal (contrast units)")
    p.add_argument("--order", action="store_true", help="reorder exposures to shorten stage travel")


def _add_noise_args(p):
    p.add_argument("--photon-budget", type=float, default=0.0, help="photons/ms/pixel; 0 = noiseless")
    p.add_argument("--position-jitter", type=float, default=0.0, help="stage jitter sigma in pixels")
    p.add_argument("--exposure-jitter", type=float, default=0.0, help="relative shutter-time jitter")
    p.add_argument("--hot-frac", type=float, default=0.0)
    p.add_argument("--dead-frac", type=float, default=0.0)
    p.add_argument("--flux-drift", type=float, default=0.0, help="relative ring-current wander")
    p.add_argument("--no-flux-correction", action="store_true")
    p.add_argument("--saturation", type=float, default=65535.0, help="hot-pixel count per frame")


def _add_target_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--target", type=Path, help="PBM/PGM target image")
    g.add_argument("--builtin-target", choices=sorted(targets.BUILTIN))


def build_parser():
    parser = argparse.ArgumentParser(prog="ghostproj", description=__doc__.splitlines()[0])
    parser.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-mask", help="generate a mask graymap and sidecar")
    _add_mask_args(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", type=Path, default=Path("mask.pgm"))

    p = sub.add_parser("capture", help="capture an illumination ensemble from a mask")
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--window", type=_dims, required=True, help="WIDTHxHEIGHT")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--max-offsets", type=int, default=None)
    p.add_argument("--counts-per-ms", type=float, default=1.0)
    p.add_argument("--ring-current", type=float, default=ens.REFERENCE_RING_MA)
    p.add_argument("--out", type=Path, default=Path("ensemble"))

    p = sub.add_parser("plan", help="solve an exposure plan for a target")
    p.add_argument("--ensemble", type=Path, required=True)
    _add_target_args(p)
    _add_scaling_args(p)
    p.add_argument("--out", type=Path, default=Path("plan.txt"))

    p = sub.add_parser("simulate", help="simulate a plan against a mask")
    p.add_argument("--mask", type=Path, required=True)
    p.add_argument("--plan", type=Path, required=True)
    _add_noise_args(p)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--keep-frames", action="store_true")
    p.add_argument("--out", type=Path, default=Path("simulation"))

    p = sub.add_parser("score", help="score a projection image against a target")
    p.add_argument("--projection", type=Path, required=True)
    _add_target_args(p)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("pipeline", help="mask -> ensemble -> plan -> simulation -> report")
    _add_target_args(p)
    p.add_argument("--mask", type=Path, default=None, help="existing mask graymap (default: generate one)")
    _add_mask_args(p, required_class=False)
    p.add_argument("--mask-margin", type=_dims, default=(78, 71),
                   help="generated mask exceeds the window by WxH pixels (default 78x71)")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--max-offsets", type=int, default=None)
    _add_scaling_args(p)
    _add_noise_args(p)
    p.add_argument("--seed", type=_seed, default=0, help="global seed")
    p.add_argument("--out", type=Path, default=Path("run"))
    return parser


# --------------------------------------------------------------------------
# helpers


def _mask_spec(args, parser, width, height, seed):
    cls = CLASS_ALIASES[args.mask_class]
    kw = dict(
        feature_size_px=args.feature_size,
        transmission_low=args.low,
        transmission_high=args.high,
        seed=seed,
    )
    if cls is maskgen.MaskClass.LEGENDRE:
        if args.p is None:
            parser.error("--class legendre requires --p")
        return maskgen.MaskSpec.legendre(args.p, **kw)
    if width is None or height is None:
        parser.error("mask size required: give --size or both --width and --height")
    if cls is maskgen.MaskClass.GAUSSIAN_SMOOTHED and args.sigma is None:
        parser.error("--class gaussian requires --sigma")
    if cls is maskgen.MaskClass.LORENTZIAN_SMOOTHED and args.gamma is None:
        parser.error("--class lorentzian requires --gamma")
    if cls is maskgen.MaskClass.RANDOM_FRACTAL:
        if args.alpha is None:
            parser.error("--class fractal requires --alpha")
        kw.update(alpha=args.alpha, beta=0.0 if args.beta is None else args.beta)
    kw.update(sigma=args.sigma, gamma=args.gamma)
    return maskgen.MaskSpec(cls, width, height, **kw)


def _size(args):
    if args.size is not None:
        return args.size, args.size
    return args.width, args.height


def _scaling(args):
    if args.scaling == "fixed":
        return planner.FixedIntegratedMs(args.total_ms)
    return planner.DetectorMargin(args.max_count, args.margin)


def _noise(args, seed):
    return simulator.NoiseConfig(
        photon_budget_per_ms_per_pixel=args.photon_budget,
        position_jitter_sigma_px=args.position_jitter,
        exposure_jitter_frac=args.exposure_jitter,
        hot_pixel_frac=args.hot_frac,
        dead_pixel_frac=args.dead_frac,
        flux_drift_amplitude=args.flux_drift,
        flux_correction=not args.no_flux_correction,
        saturation_count=args.saturation,
        seed=seed,
    )


def _target(args, pedestal=None):
    img = targets.builtin(args.builtin_target) if args.builtin_target else targets.load_target_image(args.target)
    return planner.TargetPattern.from_image(img, pedestal=pedestal)


def _require_file(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"input file not found: {path}")


def _require_dir(path):
    if not Path(path).is_dir():
        raise FileNotFoundError(f"input directory not found: {path}")


def _require_writable_parent(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise FileNotFoundError(f"output location does not exist: {parent}")


def _file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _config_lines(args):
    out = []
    for key in sorted(vars(args)):
        if key == "print_config":
            continue
        out.append(f"{key}={getattr(args, key)}")
    return out


# --------------------------------------------------------------------------
# commands


def cmd_generate_mask(args, parser, stage):
    width, height = _size(args)
    spec = _mask_spec(args, parser, width, height, args.seed)
    _require_writable_parent(args.out)
    stage.name = "maskgen"
    mask = maskgen.generate_mask(spec, args.pitch_um)
    stage.name = "write"
    maskgen.save_mask(mask, args.out)
    print(f"{args.out} sha256={_file_digest(args.out)}")
    return 0


def cmd_capture(args, parser, stage):
    _require_file(args.mask)
    _require_writable_parent(args.out)
    stage.name = "capture"
    mask = maskgen.load_mask(args.mask)
    w, h = args.window
    geometry = ens.WindowGeometry.raster(mask.width, mask.height, w, h, args.step, args.max_offsets)
    beam = ens.BeamModel(args.counts_per_ms, None, args.ring_current)
    ensemble = ens.capture_ensemble(mask, geometry, beam)
    stage.name = "write"
    ens.save_ensemble(ensemble, args.out)
    print(f"{args.out} N={ensemble.n_patterns} window={w}x{h}")
    return 0


def _plan(args, ensemble, target, stage):
    stage.name = "plan"
    plan = planner.make_plan(ensemble, target, _scaling(args), args.tol, args.max_iter, args.min_exposure_ms)
    if args.order and plan.entries:
        plan = planner.order_exposures(plan)
    return plan


def cmd_plan(args, parser, stage):
    _require_dir(args.ensemble)
    if args.target is not None:
        _require_file(args.target)
    _require_writable_parent(args.out)
    stage.name = "load"
    ensemble = ens.load_ensemble(args.ensemble)
    target = _target(args, args.pedestal)
    plan = _plan(args, ensemble, target, stage)
    stage.name = "write"
    planner.save_plan(plan, args.out)
    print(f"{args.out} N'={plan.n_selected} of N={ensemble.n_patterns} SNRpred={_fmt(plan.predicted_snr)} "
          f"pedestal={plan.predicted_pedestal:.6g}")
    return 0


def cmd_simulate(args, parser, stage):
    _require_file(args.mask)
    _require_file(args.plan)
    _require_writable_parent(args.out)
    stage.name = "load"
    mask = maskgen.load_mask(args.mask)
    plan = planner.load_plan(args.plan)
    stage.name = "simulate"
    result = simulator.simulate_exposure(mask, plan, _noise(args, args.seed), keep_frames=args.keep_frames,
                                         plan_ref=str(args.plan))
    stage.name = "write"
    path = simulator.save_accumulated(result, args.out)
    if args.keep_frames:
        simulator.save_frames(result, Path(args.out) / "frames")
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{path} frames={result.frames_applied}")
    return 0


def cmd_score(args, parser, stage):
    _require_file(args.projection)
    if args.target is not None:
        _require_file(args.target)
    stage.name = "score"
    projection = simulator.load_accumulated(args.projection)
    report = metrics.score_projection(projection, _target(args))
    text = report.to_text()
    if args.out is not None:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_pipeline(args, parser, stage):
    if args.target is not None:
        _require_file(args.target)
    if args.mask is not None:
        _require_file(args.mask)
    out = Path(args.out)
    _require_writable_parent(out)

    stage.name = "target"
    target = _target(args, args.pedestal)
    out.mkdir(parents=True, exist_ok=True)

    stage.name = "maskgen"
    if args.mask is not None:
        mask = maskgen.load_mask(args.mask)
    else:
        mw, mh = _size(args)
        if mw is None or mh is None:
            mw = target.window_width + args.mask_margin[0]
            mh = target.window_height + args.mask_margin[1]
        spec = _mask_spec(args, parser, mw, mh, derive_seed(args.seed, "mask"))
        mask = maskgen.generate_mask(spec, args.pitch_um)
        maskgen.save_mask(mask, out / "mask.pgm")

    stage.name = "capture"
    geometry = ens.WindowGeometry.raster(mask.width, mask.height, target.window_width, target.window_height,
                                         args.step, args.max_offsets)
    ensemble = ens.capture_ensemble(mask, geometry)

    plan = _plan(args, ensemble, target, stage)
    planner.save_plan(plan, out / "plan.txt")

    stage.name = "simulate"
    noise = _noise(args, derive_seed(args.seed, "noise"))
    result = simulator.simulate_exposure(mask, plan, noise, keep_frames=True, plan_ref="plan.txt")
    simulator.save_accumulated(result, out)
    for c, img in zip(simulator.buildup_checkpoints(result.frames_applied),
                      simulator.accumulate_sequence(result, simulator.buildup_checkpoints(result.frames_applied))):
        simulator.save_image(out / f"buildup_{c:05d}.pgm", img)

    stage.name = "score"
    report = metrics.score_projection(result.accumulated, target, plan.residual_norm)
    (out / "report.txt").write_text(report.to_text())
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"N'={plan.n_selected} SNR={_fmt(report.snr)} pedestal={report.pedestal_measured:.6g}")
    return 0


def _fmt(v):
    return "inf" if math.isinf(v) else f"{v:.4g}"


COMMANDS = {
    "generate-mask": cmd_generate_mask,
    "capture": cmd_capture,
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "score": cmd_score,
    "pipeline": cmd_pipeline,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_config:
        print("\n".join(_config_lines(args)))
        return 0
    stage = _Stage(args.command)
    try:
        return COMMANDS[args.command](args, parser, stage)
    except (GeometryError, ValidationError) as exc:
        print(f"error [{stage.name}]: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NNLSIterationError, PlanningError) as exc:
        print(f"error [{stage.name}]: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error [{stage.name}]: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # unparseable input files
        print(f"error [{stage.name}]: malformed input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
