#!/usr/bin/env python3
"""
Plot training curves from a runlog.jsonl

Top panel: discriminator and generator hinge losses per logged step.
Bottom panel: FID-proxy at evaluation steps (if any were recorded).
Collapsed steps are marked with a red line.
"""

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from errors import FormatError, HybridGanError


def read_runlog(path) -> List[Dict]:
    """Parse one JSON object per line; blank lines are skipped"""
    records = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{lineno}: not a JSON record ({e.msg})") from e
            if not isinstance(record, dict) or 'step' not in record:
                raise FormatError(f"{path}:{lineno}: record has no 'step'")
            records.append(record)
    return records


def plot_runlog(records: List[Dict], output_path, title: Optional[str] = None) -> Path:
    """Render loss and FID-proxy curves to a PNG"""
    if not records:
        raise FormatError("runlog holds no records")
    output_path = Path(output_path)

    steps = [r['step'] for r in records]
    evals = [(r['step'], r['metrics']['fid_proxy']) for r in records
             if r.get('metrics') and r['metrics'].get('fid_proxy') is not None]

    fig, (ax_loss, ax_fid) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    for key, label in (('loss_d', 'discriminator'), ('loss_g', 'generator')):
        # null entries (collapsed steps) become gaps
        values = [r.get(key) if r.get(key) is not None else float('nan') for r in records]
        ax_loss.plot(steps, values, label=label, linewidth=1)
    for r in records:
        if r.get('collapsed'):
            ax_loss.axvline(r['step'], color='red', linewidth=0.8)
    ax_loss.set_ylabel('hinge loss')
    ax_loss.legend()
    ax_loss.grid(True, alpha=0.3)

    if evals:
        ax_fid.plot([s for s, _ in evals], [v for _, v in evals], marker='o', color='purple')
    else:
        ax_fid.text(0.5, 0.5, 'no evaluations recorded', ha='center', va='center', transform=ax_fid.transAxes)
    ax_fid.set_xlabel('step')
    ax_fid.set_ylabel('FID-proxy')
    ax_fid.grid(True, alpha=0.3)

    if title:
        fig.suptitle(title)
    fig.tight_layout()
    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_path, dpi=150, facecolor='white')
    plt.close(fig)
    return output_path


def main():
    parser = argparse.ArgumentParser(description='Plot loss and FID-proxy curves from a runlog.jsonl')
    parser.add_argument('runlog', help='Path to runlog.jsonl')
    parser.add_argument('--out', default=None, help='Output PNG (default: next to the runlog)')
    parser.add_argument('--title', default=None)
    args = parser.parse_args()

    output = args.out or str(Path(args.runlog).with_name('runlog.png'))
    try:
        records = read_runlog(args.runlog)
        path = plot_runlog(records, output, args.title)
    except (HybridGanError, OSError) as e:
        print(f"❌ {e}")
        return 1
    print(f"✅ Plotted {len(records)} records to: {path}")
    return 0


if __name__ == '__main__':
    sys.exit(main())
