"""Saving and loading trained parameters together with their
configuration, optimizer state and training metadata."""
import logging
import os
from dataclasses import dataclass, field

import torch

from src.models.python.model import ModelConfig, ParameterSet, manifest_mismatch
import src.utils.python.util as _utils

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, truncated, incompatible or mismatched checkpoint."""


@dataclass
class Checkpoint(object):
    params: ParameterSet
    train_config: dict = None
    meta: dict = field(default_factory=dict)
    optimizers: dict = field(default_factory=dict)

    @property
    def config(self):
        return self.params.config

    @property
    def iteration(self):
        return int(self.meta.get('iteration', 0))

    @property
    def phase(self):
        return self.meta.get('phase')


def save_checkpoint(params, cfg, meta, path, optimizers=None):
    """Atomically write a checkpoint.

    Parameters
    ----------
    params : ParameterSet
    cfg : TrainConfig or dict or None
    meta : dict
        iteration, seed, phase and loss_history
    path : str
    optimizers : dict
        group name -> torch optimizer or its state dict
    """
    if cfg is not None and not isinstance(cfg, dict):
        cfg = cfg.to_dict()
    container = {
        'format_version': FORMAT_VERSION,
        'model_config': params.config.to_dict(),
        'train_config': cfg,
        'arrays': {name: t.detach().to(torch.float32).cpu().clone()
                   for name, t in params.named_arrays().items()},
        'optimizers': {name: (opt.state_dict() if hasattr(opt, 'state_dict') else opt)
                       for name, opt in (optimizers or {}).items()},
        'meta': dict(meta),
    }
    _utils.atomic_write(path, lambda handle: torch.save(container, handle))
    logger.info('Saved checkpoint (iteration {0}) to {1}'.format(meta.get('iteration', 0), path))


def load_checkpoint(path, expected_config=None):
    """Read and validate a checkpoint.

    Parameters
    ----------
    path : str
    expected_config : ModelConfig or None
        when given, every stored array must match this config's manifest

    Returns
    -------
    ckpt : Checkpoint
    """
    if not os.path.isfile(path):
        raise CheckpointError('checkpoint not found: {0}'.format(path))
    try:
        container = torch.load(path, map_location='cpu', weights_only=True)
    except Exception as e:
        raise CheckpointError('{0}: unreadable or truncated checkpoint ({1})'.format(path, e))
    if not isinstance(container, dict) or 'format_version' not in container:
        raise CheckpointError('{0}: not a cyclesr checkpoint'.format(path))
    if container['format_version'] != FORMAT_VERSION:
        raise CheckpointError('{0}: format version {1}, expected {2}'.format(
            path, container['format_version'], FORMAT_VERSION))
    try:
        config = ModelConfig.from_dict(container['model_config'])
        arrays = container['arrays']
        problem = manifest_mismatch(expected_config or config, arrays)
        if problem:
            raise CheckpointError('{0}: {1}'.format(path, problem))
        params = ParameterSet(config)
        params.load_arrays(arrays)
    except CheckpointError:
        raise
    except Exception as e:
        raise CheckpointError('{0}: invalid checkpoint contents ({1})'.format(path, e))
    return Checkpoint(params=params,
                      train_config=container.get('train_config'),
                      meta=dict(container.get('meta') or {}),
                      optimizers=dict(container.get('optimizers') or {}))
