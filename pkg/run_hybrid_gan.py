#!/usr/bin/env python3
"""
Hybrid GAN command-line runner

Subcommands:
    train            train a generator/discriminator pair, write logs, checkpoints and a sample grid
    sample           draw images from a checkpoint into a PPM grid (and optional per-image tiles)
    fid              FID-proxy between two image sets
    inception-score  IS-proxy of an image set over the fixed-seed classifier
    spectrum         azimuthal power-spectrum statistics of one or two image sets as CSV
    benchmark        swap discriminators under a fixed generator and tabulate the results

Examples:
    python run_hybrid_gan.py train --config toy.cfg --data synthetic:two_mode --out runs/toy --seed 1
    python run_hybrid_gan.py sample --checkpoint runs/toy/checkpoints/final.hgan --n 64 --out grid.ppm
    python run_hybrid_gan.py fid --real data/cifar --fake samples/ --extractor smallcnn
    python run_hybrid_gan.py spectrum --set-a data/cifar --set-b samples/ --out profile.csv --normalize
    python run_hybrid_gan.py benchmark --config toy.cfg --discriminators sngan,sngan_no_sn,dcgan --out bench/

Image sets are CIFAR-10 .bin files, .npy arrays, .ppm files or directories of
them; --data additionally accepts synthetic:<kind>[:<n>].

Exit status: 0 when the requested artifact was written, 2 for usage and
configuration errors, 1 for any other failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from dataio import ImageBatch, load_image_set, make_synthetic, save_image_grid, save_image_tiles
from discriminator import BENCHMARK_VARIANTS
from errors import ConfigError, HybridGanError
from generator import generate, sample_latents
from metrics import EXTRACTORS, SmallCNNClassifier, fid, get_extractor, inception_score
from run_config import RunConfig, load_run_config
from spectrum import plot_profiles, profile_stats, write_spectrum_csv
from training import TrainingRun, derive_seeds, load_state, run_benchmark, save_benchmark

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'
# log files carry no timestamps: identical runs write identical logs
FILE_LOG_FORMAT = '%(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(log_file: Optional[Path], verbose: bool) -> None:
    """Console logging plus an optional log file, reconfigured on every command"""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if log_file is not None:
        file_handler = logging.FileHandler(log_file, mode='w')
        file_handler.setFormatter(logging.Formatter(FILE_LOG_FORMAT))
        handlers.insert(0, file_handler)
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT,
                        handlers=handlers, force=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='run_hybrid_gan',
                                     description='Transformer generator / convolutional discriminator GAN toolkit')
    parser.add_argument('--verbose', '-v', action='store_true', help='Verbose logging')
    sub = parser.add_subparsers(dest='command', required=True, metavar='command')

    train = sub.add_parser('train', help='Train a GAN')
    train.add_argument('--config', required=True, help='Run configuration file')
    train.add_argument('--data', required=True, help='Image set path or synthetic:<kind>[:<n>]')
    train.add_argument('--out', required=True, help='Output directory')
    train.add_argument('--seed', type=int, help='Overrides the config seed')
    train.add_argument('--no-progress', action='store_true', help='Hide the progress bar')

    sample = sub.add_parser('sample', help='Sample images from a checkpoint')
    sample.add_argument('--checkpoint', required=True, help='HGAN checkpoint file')
    sample.add_argument('--n', type=int, default=64, help='Number of images')
    sample.add_argument('--out', required=True, help='Output grid (.ppm or .png)')
    sample.add_argument('--cols', type=int, default=8, help='Grid columns')
    sample.add_argument('--tiles', help='Also write each image as its own PPM into this directory')
    sample.add_argument('--seed', type=int, help='Latent seed (default: the checkpoint run seed)')

    fid_cmd = sub.add_parser('fid', help='FID-proxy between two image sets')
    fid_cmd.add_argument('--real', required=True, help='Reference image set')
    fid_cmd.add_argument('--fake', required=True, help='Generated image set')
    fid_cmd.add_argument('--extractor', choices=EXTRACTORS, default='smallcnn', help='Feature extractor')
    fid_cmd.add_argument('--seed', type=int, default=0, help='Extractor weight seed')

    score = sub.add_parser('inception-score', help='IS-proxy of an image set')
    score.add_argument('--images', required=True, help='Image set')
    score.add_argument('--splits', type=int, default=10, help='Number of splits')
    score.add_argument('--seed', type=int, default=0, help='Classifier weight seed')

    spectrum = sub.add_parser('spectrum', help='Azimuthal power-spectrum statistics')
    spectrum.add_argument('--set-a', required=True, help='First image set')
    spectrum.add_argument('--set-b', help='Optional second image set')
    spectrum.add_argument('--out', required=True, help='Output CSV')
    spectrum.add_argument('--normalize', action='store_true', help='Normalize each profile by its DC bin')
    spectrum.add_argument('--plot', help='Also save a PNG plot of the profiles')

    bench = sub.add_parser('benchmark', help='Discriminator swap benchmark')
    bench.add_argument('--config', required=True, help='Run configuration file')
    bench.add_argument('--discriminators', default=','.join(BENCHMARK_VARIANTS),
                       help='Comma-separated discriminator variants')
    bench.add_argument('--out', required=True, help='Output directory')
    bench.add_argument('--data', default='synthetic:two_mode', help='Image set path or synthetic:<kind>[:<n>]')
    bench.add_argument('--seed', type=int, help='Overrides the config seed')
    bench.add_argument('--workers', type=int, help='Parallel variant runs (default: config benchmark_workers)')
    bench.add_argument('--no-progress', action='store_true', help='Hide the progress bar')
    return parser


def resolve_data(spec: str, config: RunConfig) -> ImageBatch:
    """Load --data: an image set path or synthetic:<kind>[:<n>] at the generator's resolution"""
    if spec.startswith('synthetic:'):
        parts = spec.split(':')
        if len(parts) not in (2, 3):
            raise ConfigError(f"--data: expected synthetic:<kind>[:<n>], got '{spec}'")
        try:
            n = int(parts[2]) if len(parts) == 3 else config.train.synthetic_samples
        except ValueError as e:
            raise ConfigError(f"--data: sample count must be an integer, got '{parts[2]}'") from e
        return make_synthetic(parts[1], n, config.generator.resolution, derive_seeds(config.train.seed, 5)[4])
    images = load_image_set(spec)
    expected = (config.generator.out_channels, config.generator.resolution, config.generator.resolution)
    if images.images.shape[1:] != expected:
        raise ConfigError(f"--data: images have shape {images.images.shape[1:]}, generator expects {expected}")
    return images


def _load_config(args) -> RunConfig:
    overrides = {'seed': str(args.seed)} if args.seed is not None else None
    return load_run_config(args.config, overrides=overrides)


def cmd_train(args) -> int:
    config = _load_config(args)
    images = resolve_data(args.data, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    setup_logging(out / 'train.log', args.verbose)
    logger.info(f"Loaded {len(images)} training images ({args.data}) for config {args.config}")

    run = TrainingRun(config.generator, config.discriminator, config.train, images, out,
                      config_extra=config.echo())
    state = run.run(show_progress=not args.no_progress)

    print(f"\n{'⚠️  Run collapsed' if state.collapsed else '✅ Training complete'} after {state.step} steps")
    if run.final_metrics:
        print(f"   FID-proxy: {run.initial_metrics.get('fid_proxy', float('nan')):.4f} → "
              f"{run.final_metrics['fid_proxy']:.4f}")
    print(f"Results saved to:\n  {out}/runlog.jsonl\n  {out}/checkpoints/final.hgan")
    if state.collapsed:
        print(f"❌ No sample grid written: training collapsed after step {state.step}", file=sys.stderr)
        logger.error(f"train failed: run collapsed after step {state.step}, {out / 'samples.ppm'} not written")
        return 1
    print(f"  {out}/samples.ppm")
    return 0


def cmd_sample(args) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    if args.cols < 1:
        raise ConfigError(f"--cols must be >= 1, got {args.cols}")
    state, config = load_state(args.checkpoint)
    setup_logging(None, args.verbose)

    seed = config.seed if args.seed is None else args.seed
    rng = np.random.default_rng([seed, 1])
    latents = sample_latents(rng, args.n, state.generator.spec)
    images = generate(state.generator, latents).data
    path = save_image_grid(images, args.out, cols=args.cols)
    logger.info(f"Sampled {args.n} images from {args.checkpoint} (step {state.step}, seed {seed})")
    if args.tiles:
        count = save_image_tiles(images, args.tiles)
        print(f"✅ Wrote {count} tiles to {args.tiles}")
    print(f"✅ Saved {args.n} samples to {path}")
    return 0


def cmd_fid(args) -> int:
    real = load_image_set(args.real)
    fake = load_image_set(args.fake)
    setup_logging(None, args.verbose)
    value = fid(real, fake, get_extractor(args.extractor, seed=args.seed))
    logger.info(f"FID-proxy ({args.extractor}) real={args.real} ({len(real)}) "
                f"fake={args.fake} ({len(fake)}): {value:.6f}")
    print(f"{value:.6f}")
    return 0


def cmd_inception_score(args) -> int:
    images = load_image_set(args.images)
    setup_logging(None, args.verbose)
    mean, std = inception_score(images, SmallCNNClassifier(seed=args.seed), n_splits=args.splits)
    logger.info(f"IS-proxy of {args.images} ({len(images)} images, {args.splits} splits): {mean:.6f} ± {std:.6f}")
    print(f"{mean:.6f} {std:.6f}")
    return 0


def cmd_spectrum(args) -> int:
    set_a = load_image_set(args.set_a)
    set_b = load_image_set(args.set_b) if args.set_b else None
    profile_a = profile_stats(set_a, normalize=args.normalize)
    profile_b = profile_stats(set_b, normalize=args.normalize) if set_b is not None else None
    if profile_b is not None and profile_b.resolution != profile_a.resolution:
        raise ConfigError(f"--set-a is {profile_a.resolution}x{profile_a.resolution} but --set-b is "
                          f"{profile_b.resolution}x{profile_b.resolution}")

    setup_logging(None, args.verbose)
    path = write_spectrum_csv(args.out, profile_a, profile_b)
    if args.plot:
        plot_profiles(args.plot, profile_a, profile_b, labels=(args.set_a, args.set_b or ''))
    print(f"✅ Spectrum profile ({len(profile_a.bins)} bins) saved to {path}")
    return 0


def cmd_benchmark(args) -> int:
    config = _load_config(args)
    variants = [v.strip() for v in args.discriminators.split(',') if v.strip()]
    if not variants:
        raise ConfigError("--discriminators: no variants given")
    for variant in variants:
        if variant not in BENCHMARK_VARIANTS:
            raise ConfigError(f"--discriminators: unknown variant '{variant}', "
                              f"expected some of {list(BENCHMARK_VARIANTS)}")
    workers = args.workers if args.workers is not None else config.train.benchmark_workers
    if workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {workers}")
    images = resolve_data(args.data, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    setup_logging(out / 'benchmark.log', args.verbose)
    rows = run_benchmark(variants, config.generator, config.train, images.images, scale=config.disc_scale,
                         workers=workers, show_progress=not args.no_progress)
    csv_path, json_path = save_benchmark(rows, out)

    print("\n" + "=" * 60)
    print(f"{'discriminator':<16}{'params':>14}{'FID-proxy':>14}{'collapsed':>12}")
    print("=" * 60)
    for row in rows:
        fid_text = '✗' if row.fid_proxy is None else f"{row.fid_proxy:.4f}"
        print(f"{row.discriminator:<16}{row.params:>14,}{fid_text:>14}{str(row.collapsed):>12}")
    print(f"\nResults saved to:\n  {csv_path}\n  {json_path}")
    return 0


COMMANDS = {
    'train': cmd_train,
    'sample': cmd_sample,
    'fid': cmd_fid,
    'inception-score': cmd_inception_score,
    'spectrum': cmd_spectrum,
    'benchmark': cmd_benchmark,
}


def run_command(argv: Sequence[str]) -> int:
    """
    Parse argv and run one subcommand

    Args:
        argv: arguments without the program name

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\n⚠️  Interrupted by user")
        return 1
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        logger.error(f"Configuration error: {e}")
        return 2
    except (HybridGanError, OSError) as e:
        print(f"❌ Error during {args.command}: {e}", file=sys.stderr)
        logger.error(f"{args.command} failed: {e}")
        return 1


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == '__main__':
    main()
