# fix problems with pythons terrible import system
import os
import sys
file_dir = os.path.dirname(os.path.realpath(__file__))
sys.path.append(os.path.join(file_dir, '..'))

import pytest
import torch

from src.models.python.model import ParameterSet
from src.train.python.checkpoint import (save_checkpoint, load_checkpoint, CheckpointError,
                                         FORMAT_VERSION)
from src.train.python.trainer import TrainConfig, build_optimizer
from synthetic import tiny_config


def _saved(tmp_path, seed=0, **model):
    params = ParameterSet.initialize(tiny_config(**model), seed=seed, identity_start=False)
    path = str(tmp_path / 'ckpt.pt')
    meta = {'iteration': 7, 'seed': seed, 'phase': 'dae',
            'loss_history': [{'iteration': 6, 'total': .5}]}
    save_checkpoint(params, TrainConfig(lr_patch=16, alpha=2), meta, path)
    return params, path


def test_round_trip_is_exact(tmp_path):
    params, path = _saved(tmp_path)
    ckpt = load_checkpoint(path)
    assert ckpt.config == params.config
    assert ckpt.iteration == 7 and ckpt.phase == 'dae'
    assert ckpt.meta['loss_history'] == [{'iteration': 6, 'total': .5}]
    assert TrainConfig.from_dict(ckpt.train_config) == TrainConfig(lr_patch=16, alpha=2)
    loaded = ckpt.params.named_arrays()
    for name, tensor in params.named_arrays().items():
        assert torch.equal(loaded[name], tensor)
    # frozen networks stay frozen after loading
    assert not any(p.requires_grad for p in ckpt.params.features.parameters())


def test_optimizer_state_round_trip(tmp_path):
    params = ParameterSet.initialize(tiny_config(), seed=0)
    cfg = TrainConfig(lr_patch=16, alpha=2)
    opt = build_optimizer(params.trainable_parameters('srsn'), cfg)
    params.srsn(torch.rand(1, 3, 8, 8)).sum().backward()
    opt.step()
    path = str(tmp_path / 'ckpt.pt')
    save_checkpoint(params, cfg, {'iteration': 1}, path, optimizers={'generator': opt})

    ckpt = load_checkpoint(path)
    restored = build_optimizer(ckpt.params.trainable_parameters('srsn'), cfg)
    restored.load_state_dict(ckpt.optimizers['generator'])
    for key, state in opt.state_dict()['state'].items():
        for name, value in state.items():
            assert torch.equal(restored.state_dict()['state'][key][name], value)


def test_expected_config_mismatch_names_array(tmp_path):
    _, path = _saved(tmp_path)
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(path, expected_config=tiny_config(srsn_channels=16))
    assert 'srsn.' in str(err.value)
    # the matching config loads
    load_checkpoint(path, expected_config=tiny_config())


def test_truncated_and_garbage_files(tmp_path):
    _, path = _saved(tmp_path)
    with open(path, 'rb') as handle:
        data = handle.read()
    truncated = str(tmp_path / 'truncated.pt')
    with open(truncated, 'wb') as handle:
        handle.write(data[:len(data) // 2])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)

    garbage = str(tmp_path / 'garbage.pt')
    with open(garbage, 'wb') as handle:
        handle.write(b'not a checkpoint')
    with pytest.raises(CheckpointError):
        load_checkpoint(garbage)

    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / 'missing.pt'))


def test_foreign_containers_rejected(tmp_path):
    _, path = _saved(tmp_path)
    container = torch.load(path, weights_only=True)

    container['format_version'] = FORMAT_VERSION + 1
    newer = str(tmp_path / 'newer.pt')
    torch.save(container, newer)
    with pytest.raises(CheckpointError):
        load_checkpoint(newer)

    container['format_version'] = FORMAT_VERSION
    del container['arrays']['decoder.tail.bias']
    missing = str(tmp_path / 'missing_array.pt')
    torch.save(container, missing)
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(missing)
    assert 'decoder.tail.bias' in str(err.value)

    plain = str(tmp_path / 'plain.pt')
    torch.save({'weights': torch.zeros(3)}, plain)
    with pytest.raises(CheckpointError):
        load_checkpoint(plain)


def test_save_leaves_no_temporary_files(tmp_path):
    _saved(tmp_path)
    assert sorted(os.listdir(str(tmp_path))) == ['ckpt.pt']
