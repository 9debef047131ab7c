#!/usr/bin/env python3
"""
Inspect an HGAN checkpoint without rebuilding the training state

Prints the step, the collapse flag, the generator/discriminator presets
recorded in the config echo and per-group parameter totals. With --tensors,
every manifest entry is listed with its shape and dtype.
"""

import argparse
import os
import sys
from typing import Dict

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dataio import Checkpoint, load_checkpoint
from errors import HybridGanError


def group_sizes(checkpoint: Checkpoint) -> Dict[str, int]:
    """Element count per top-level manifest group (gen, disc, adam_g, adam_d, sn)"""
    sizes = {}
    for name, array in checkpoint.tensors.items():
        group = name.split('/', 1)[0]
        sizes[group] = sizes.get(group, 0) + int(array.size)
    return sizes


def summarize_checkpoint(path) -> Dict:
    checkpoint = load_checkpoint(path)
    echo = checkpoint.config
    train = echo.get('train', {})
    return {
        'path': str(path),
        'version': checkpoint.version,
        'step': checkpoint.step,
        'collapsed': bool(echo.get('collapsed', False)),
        'generator': train.get('generator'),
        'discriminator': echo.get('discriminator', {}).get('variant'),
        'use_sn': echo.get('discriminator', {}).get('use_sn'),
        'n_tensors': len(checkpoint.tensors),
        'groups': group_sizes(checkpoint),
        'has_rng_state': checkpoint.rng_state is not None,
        'tensors': {name: (tuple(a.shape), str(a.dtype)) for name, a in checkpoint.tensors.items()},
    }


def print_summary(summary: Dict, show_tensors: bool = False) -> None:
    print("=" * 60)
    print(f"CHECKPOINT {summary['path']}")
    print("=" * 60)
    print(f"  Format version: {summary['version']}")
    print(f"  Step: {summary['step']}")
    print(f"  Collapsed: {summary['collapsed']}")
    print(f"  Generator preset: {summary['generator']}")
    print(f"  Discriminator: {summary['discriminator']} (use_sn={summary['use_sn']})")
    print(f"  Tensors: {summary['n_tensors']}")
    print(f"  RNG state stored: {summary['has_rng_state']}")
    print("\nParameters per group:")
    for group, size in sorted(summary['groups'].items()):
        print(f"  {group:<8} {size:>12,}")

    if show_tensors:
        print("\nManifest:")
        for name, (shape, dtype) in summary['tensors'].items():
            print(f"  {name:<48} {str(shape):<20} {dtype}")


def main():
    parser = argparse.ArgumentParser(description='Summarize an HGAN training checkpoint')
    parser.add_argument('checkpoint', help='Path to a .hgan file')
    parser.add_argument('--tensors', action='store_true', help='List every manifest entry')
    args = parser.parse_args()

    try:
        summary = summarize_checkpoint(args.checkpoint)
    except (HybridGanError, OSError) as e:
        print(f"❌ {e}")
        return 1
    print_summary(summary, args.tensors)
    return 0


if __name__ == '__main__':
    sys.exit(main())
