#!/usr/bin/env python3
"""
Tests for the runlog plotter and checkpoint inspector in utils/
"""

import sys

import pytest

from discriminator import discriminator_preset
from errors import FormatError
from training import RunRecord, init_train_state, save_state
from utils.inspect_checkpoint import main as inspect_main
from utils.inspect_checkpoint import summarize_checkpoint
from utils.plot_runlog import plot_runlog, read_runlog


@pytest.fixture
def runlog(tmp_path):
    records = [
        RunRecord(step=1, loss_d=2.0, loss_g=0.1, grad_norm_d=1.0, grad_norm_g=0.5,
                  metrics={'fid_proxy': 3.5}),
        RunRecord(step=2, loss_d=1.8, loss_g=0.2, grad_norm_d=0.9, grad_norm_g=0.4),
        RunRecord(step=3, loss_d=float('nan'), loss_g=None, grad_norm_d=None, grad_norm_g=None,
                  collapsed=True),
    ]
    path = tmp_path / 'runlog.jsonl'
    path.write_text(''.join(r.to_json() + '\n' for r in records))
    return path


class TestPlotRunlog:
    def test_read(self, runlog):
        records = read_runlog(runlog)
        assert [r['step'] for r in records] == [1, 2, 3]
        assert records[2]['loss_d'] is None
        assert records[0]['metrics'] == {'fid_proxy': 3.5}

    def test_bad_line_names_location(self, tmp_path):
        path = tmp_path / 'runlog.jsonl'
        path.write_text('{"step": 1}\nnot json\n')
        with pytest.raises(FormatError, match='runlog.jsonl:2'):
            read_runlog(path)

    def test_record_without_step(self, tmp_path):
        path = tmp_path / 'runlog.jsonl'
        path.write_text('{"loss_d": 1.0}\n')
        with pytest.raises(FormatError, match="no 'step'"):
            read_runlog(path)

    def test_plot(self, runlog, tmp_path):
        path = plot_runlog(read_runlog(runlog), tmp_path / 'plots' / 'curves.png', title='toy')
        assert path.exists() and path.stat().st_size > 0

    def test_plot_empty(self, tmp_path):
        with pytest.raises(FormatError):
            plot_runlog([], tmp_path / 'curves.png')


class TestInspectCheckpoint:
    @pytest.fixture
    def checkpoint(self, tiny_spec, toy_config, tmp_path):
        state = init_train_state(tiny_spec, discriminator_preset('sngan', 8, 'toy'), toy_config)
        return save_state(state, tmp_path / 'state.hgan', toy_config)

    def test_summary(self, checkpoint):
        summary = summarize_checkpoint(checkpoint)
        assert summary['step'] == 0
        assert summary['generator'] == 'tiny'
        assert summary['discriminator'] == 'sngan'
        assert summary['use_sn'] is True
        assert not summary['collapsed']
        assert summary['has_rng_state']
        assert summary['groups']['gen'] == 8_343
        assert summary['groups']['disc'] == 65_793
        assert summary['groups']['adam_g'] == 2 * 8_343
        assert summary['n_tensors'] == len(summary['tensors'])

    def test_main_prints_manifest(self, checkpoint, monkeypatch, capsys):
        monkeypatch.setattr(sys, 'argv', ['inspect_checkpoint.py', str(checkpoint), '--tensors'])
        assert inspect_main() == 0
        out = capsys.readouterr().out
        assert 'Step: 0' in out
        assert 'gen/input.weight' in out

    def test_main_reports_corruption(self, tmp_path, monkeypatch, capsys):
        path = tmp_path / 'bad.hgan'
        path.write_bytes(b'XXXX' + bytes(20))
        monkeypatch.setattr(sys, 'argv', ['inspect_checkpoint.py', str(path)])
        assert inspect_main() == 1
        assert 'bad magic' in capsys.readouterr().out


if __name__ == '__main__':
    sys.exit(pytest.main([__file__, '-v']))
