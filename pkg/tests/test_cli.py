# fix problems with pythons terrible import system
import os
import sys
file_dir = os.path.dirname(os.path.realpath(__file__))
sys.path.append(os.path.join(file_dir, '..'))

import numpy as np
import pytest
import torch

import cyclesr
from src.imaging.python.image import load_image
from src.models.python.model import ParameterSet
from src.train.python.checkpoint import save_checkpoint, load_checkpoint
import src.utils.python.util as _utils
from synthetic import tiny_config, write_corpus, write_run_config


def _checkpoint(path, noise_scale=0.):
    """Identity-start parameters; a nonzero noise_scale gives the decoder
    a small random output conv so the denoiser is no longer the identity."""
    params = ParameterSet.initialize(tiny_config(alpha=2), seed=0)
    if noise_scale:
        gen = torch.Generator().manual_seed(1)
        with torch.no_grad():
            tail = params.decoder.tail.weight
            tail.copy_(torch.randn(tail.shape, generator=gen) * noise_scale)
    save_checkpoint(params, None, {'iteration': 0, 'phase': 'dae'}, path)
    return path


def _pixels(directory, name):
    return np.round(load_image(os.path.join(directory, name)).data * 255).astype(int)


@pytest.fixture
def images(tmp_path):
    directory = str(tmp_path / 'images')
    names = write_corpus(directory, 2, 20, 28)
    return directory, names


def test_degrade(images, tmp_path):
    in_dir, names = images
    out_dir = str(tmp_path / 'low')
    status = cyclesr.run(['degrade', '-i', in_dir, '-o', out_dir, '-s', '4', '-n', '0.05',
                          '-b', '1.0', '-rs', '3'])
    assert status == 0
    for name in names:
        assert load_image(os.path.join(out_dir, name)).shape == (5, 7, 3)

    with open(os.path.join(in_dir, 'zz_broken.png'), 'wb') as handle:
        handle.write(b'broken')
    status = cyclesr.run(['degrade', '-i', in_dir, '-o', str(tmp_path / 'low2'), '-s', '2'])
    assert status == cyclesr.FILE_FAILURE_EXIT_STATUS


def test_infer_modes(images, tmp_path):
    in_dir, names = images
    ckpt = _checkpoint(str(tmp_path / 'identity.pt'))

    # identity-start denoiser returns its input
    out = str(tmp_path / 'denoised')
    assert cyclesr.run(['infer', '-k', ckpt, '-i', in_dir, '-o', out, '-m', 'denoise']) == 0
    for name in names:
        assert np.array_equal(_pixels(out, name), _pixels(in_dir, name))

    out = str(tmp_path / 'sr')
    assert cyclesr.run(['infer', '-k', ckpt, '-i', in_dir, '-o', out, '-m', 'sr']) == 0
    assert load_image(os.path.join(out, names[0])).shape == (40, 56, 3)

    out = str(tmp_path / 'bicubic')
    assert cyclesr.run(['infer', '-i', in_dir, '-o', out, '-m', 'bicubic', '--alpha', '3']) == 0
    assert load_image(os.path.join(out, names[0])).shape == (60, 84, 3)
    manifest = _utils.read_run_manifest(os.path.join(out, 'manifest.json'))
    assert manifest['subcommand'] == 'infer' and sorted(manifest['outputs']) == names

    with pytest.raises(ValueError):
        cyclesr.run(['infer', '-i', in_dir, '-o', str(tmp_path / 'x'), '-m', 'denoise'])


def test_infer_combined_matches_split(images, tmp_path):
    in_dir, names = images
    ckpt = _checkpoint(str(tmp_path / 'random.pt'), noise_scale=1e-4)
    combined = str(tmp_path / 'combined')
    assert cyclesr.run(['infer', '-k', ckpt, '-i', in_dir, '-o', combined]) == 0

    denoised = str(tmp_path / 'denoised')
    split = str(tmp_path / 'split')
    assert cyclesr.run(['infer', '-k', ckpt, '-i', in_dir, '-o', denoised, '-m', 'denoise']) == 0
    assert cyclesr.run(['infer', '-k', ckpt, '-i', denoised, '-o', split, '-m', 'sr']) == 0
    for name in names:
        diff = np.abs(_pixels(combined, name) - _pixels(split, name))
        assert diff.shape == (40, 56, 3)
        assert diff.mean() <= 1. and diff.max() <= 2


def test_infer_prior_sample_is_seeded(images, tmp_path):
    in_dir, names = images
    ckpt = _checkpoint(str(tmp_path / 'random.pt'), noise_scale=1e-4)
    outs = []
    for run_name in ('a', 'b'):
        out = str(tmp_path / run_name)
        assert cyclesr.run(['infer', '-k', ckpt, '-i', in_dir, '-o', out, '-m', 'denoise',
                            '--latent-mode', 'prior-sample', '-rs', '7']) == 0
        outs.append(out)
    for name in names:
        assert np.array_equal(_pixels(outs[0], name), _pixels(outs[1], name))


def test_evaluate_and_plot(images, tmp_path):
    in_dir, names = images
    eval_dir = str(tmp_path / 'eval')
    assert cyclesr.run(['evaluate', '-p', in_dir, '-r', in_dir, '-o', eval_dir]) == 0
    assert os.path.isfile(os.path.join(eval_dir, 'metrics.csv'))

    fig_dir = str(tmp_path / 'figures')
    assert cyclesr.run(['plot', '-o', fig_dir, '--report', os.path.join(eval_dir, 'metrics.csv'),
                        '--compare', in_dir, in_dir]) == 0
    assert os.path.isfile(os.path.join(fig_dir, 'psnr_y.png'))


def test_replay_degrade(images, tmp_path):
    in_dir, _ = images
    first = str(tmp_path / 'first')
    assert cyclesr.run(['degrade', '-i', in_dir, '-o', first, '-s', '2', '-n', '0.1']) == 0
    second = str(tmp_path / 'second')
    assert cyclesr.run(['replay', os.path.join(first, 'manifest.json'), '-o', second]) == 0
    a = _utils.read_run_manifest(os.path.join(first, 'manifest.json'))
    b = _utils.read_run_manifest(os.path.join(second, 'manifest.json'))
    assert a['checksums'] == b['checksums']


def _train_dirs(tmp_path):
    target, source = str(tmp_path / 'target'), str(tmp_path / 'source')
    write_corpus(target, 2, 48, 48)
    write_corpus(source, 2, 24, 24, seed=5)
    return write_run_config(str(tmp_path / 'run.cfg'), source, target)


def test_train_and_replay(tmp_path):
    config = _train_dirs(tmp_path)
    first = str(tmp_path / 'dae')
    assert cyclesr.run(['train', '--phase', 'dae', '-o', first, '-c', config,
                        '--iterations', '2', '--kl-weight', '0.2']) == 0
    ckpt = load_checkpoint(os.path.join(first, 'checkpoint.pt'))
    assert ckpt.iteration == 2
    assert ckpt.train_config['weights']['kl_weight'] == .2

    # the replay uses the stored configuration, not the (edited) config file
    with open(config, 'a') as handle:
        handle.write('\n[loss]\nkl_weight = 0.9\n')
    second = str(tmp_path / 'replayed')
    assert cyclesr.run(['replay', os.path.join(first, 'manifest.json'), '-o', second]) == 0
    replayed = load_checkpoint(os.path.join(second, 'checkpoint.pt'))
    for name, tensor in ckpt.params.named_arrays().items():
        assert torch.equal(replayed.params.named_arrays()[name], tensor)
    assert _utils.sha256_file(os.path.join(first, 'losses.jsonl')) == \
        _utils.sha256_file(os.path.join(second, 'losses.jsonl'))


def test_train_exit_statuses(tmp_path):
    config = _train_dirs(tmp_path)
    status = cyclesr.run(['train', '--phase', 'dae', '-o', str(tmp_path / 'a'),
                          '-c', str(tmp_path / 'missing.cfg')])
    assert status == cyclesr.BAD_ARG_EXIT_STATUS
    status = cyclesr.run(['train', '--phase', 'sr', '-o', str(tmp_path / 'b'), '-c', config])
    assert status == cyclesr.BAD_ARG_EXIT_STATUS
    status = cyclesr.run(['train', '--phase', 'dae', '-o', str(tmp_path / 'c'), '-c', config,
                          '--preset', 'nonexistent'])
    assert status == cyclesr.BAD_ARG_EXIT_STATUS

    start = str(tmp_path / 'start')
    assert cyclesr.run(['train', '--phase', 'dae', '-o', start, '-c', config,
                        '--iterations', '1']) == 0
    ckpt = load_checkpoint(os.path.join(start, 'checkpoint.pt'))
    with torch.no_grad():
        ckpt.params.decoder.tail.bias.fill_(float('nan'))
    bad = str(tmp_path / 'nan.pt')
    save_checkpoint(ckpt.params, ckpt.train_config, ckpt.meta, bad, ckpt.optimizers)
    status = cyclesr.run(['train', '--phase', 'dae', '-o', str(tmp_path / 'd'), '-c', config,
                          '--resume', bad])
    assert status == cyclesr.DIVERGED_EXIT_STATUS
    assert os.path.isfile(str(tmp_path / 'd' / 'diverged.json'))
