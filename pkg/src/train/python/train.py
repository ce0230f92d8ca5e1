"""The train sub-command: resolve the run configuration, run one phase
and write the checkpoint, loss log, loss curves and run manifest."""
import dataclasses
import json
import logging
import os

from src.degradation.python.degradation import DegradationSpec
from src.losses.python.losses import LossWeights
from src.models.python.model import ModelConfig
from src.train.python.checkpoint import save_checkpoint, load_checkpoint
from src.train.python.dataset import DatasetHandle
from src.train.python.trainer import (TrainConfig, TrainingDivergedError,
                                      train_dae, train_sr, train_joint)
import src.train.python.plot_data as plot_data
import src.utils.python.util as _utils

logger = logging.getLogger(__name__)

SCHEMA = {'model': ModelConfig,
          'train': TrainConfig,
          'loss': LossWeights,
          'degradation': DegradationSpec,
          'data': None}

# command line options that override a run configuration key
FLAG_SECTIONS = {
    'source_dir': 'data', 'target_dir': 'data',
    'latent_len': 'model', 'denoiser_kind': 'model', 'encoder_kind': 'model',
    'encoder_weights': 'model',
    'lr': 'train', 'batch': 'train', 'iterations': 'train', 'weight_decay': 'train',
    'decoupled_weight_decay': 'train', 'lr_patch': 'train', 'ref_patch': 'train',
    'alpha': 'train', 'seed': 'train', 'phase': 'train', 'pairing': 'train',
    'train_decoder': 'train', 'log_every': 'train', 'deterministic': 'train',
    'lambda_feat': 'loss', 'eta_adv': 'loss', 'kl_weight': 'loss',
    'non_saturating': 'loss',
    'blur_sigma': 'degradation', 'noise_sigma': 'degradation',
}


def flag_layer(opts):
    """Command line overrides as a config layer; unset flags are skipped."""
    layer = {}
    for key, section in FLAG_SECTIONS.items():
        if opts.get(key) is not None:
            layer.setdefault(section, {})[key] = opts[key]
    return layer


def resolve_config(opts):
    """Merge defaults < preset < config file < flags.

    A stored snapshot (opts['config_snapshot'], used by replay) replaces
    the preset and config file layers.

    Returns
    -------
    run : dict
        model, train, loss, degradation and data sections, typed
    """
    if opts.get('config_snapshot'):
        layers = [opts['config_snapshot']]
    else:
        layers = [_utils.read_config_file(_utils.preset_path(opts.get('preset') or 'desk'))]
        if opts.get('config'):
            layers.append(_utils.read_config_file(opts['config']))
    layers.append(flag_layer(opts))
    merged = _utils.merge_run_config(SCHEMA, layers)

    typed, problems = {}, []
    for section, cls in SCHEMA.items():
        try:
            if cls is None:
                typed[section] = {k: str(v) for k, v in merged[section].items()}
            else:
                typed[section] = _utils.coerce_section(cls, merged[section], section)
        except _utils.ConfigError as e:
            problems.extend(e.problems)
    if problems:
        raise _utils.ConfigError(problems)
    return typed


def build_configs(run):
    """Dataclasses of a resolved run configuration."""
    try:
        weights = LossWeights(**run['loss'])
        train_cfg = TrainConfig(weights=weights, **run['train'])
        model_kwargs = dict(run['model'])
        if model_kwargs.get('alpha', train_cfg.alpha) != train_cfg.alpha:
            raise ValueError('model.alpha {0} differs from train.alpha {1}'.format(
                model_kwargs['alpha'], train_cfg.alpha))
        model_kwargs['alpha'] = train_cfg.alpha
        model_cfg = ModelConfig(**model_kwargs)
        deg = DegradationSpec(**run['degradation'])
    except (TypeError, ValueError) as e:
        raise _utils.ConfigError(str(e))
    return model_cfg, train_cfg, deg


def snapshot(model_cfg, train_cfg, deg, data):
    """Resolved configuration in the run configuration layout."""
    train = train_cfg.to_dict()
    loss = train.pop('weights')
    return {'model': model_cfg.to_dict(), 'train': train, 'loss': loss,
            'degradation': dataclasses.asdict(deg), 'data': dict(data)}


def write_divergence_report(err, out_dir):
    """Keep the last good parameters and the last loss records."""
    cfg_opts = _utils.get_output_config('train')
    ckpt = err.checkpoint
    ckpt_path = os.path.join(out_dir, cfg_opts['checkpoint'])
    save_checkpoint(ckpt.params, ckpt.train_config, ckpt.meta, ckpt_path, ckpt.optimizers)
    report_path = os.path.join(out_dir, cfg_opts['diverged'])
    report = {'iteration': err.iteration, 'recent': err.recent}
    text = json.dumps(report, indent=2, default=str)
    _utils.atomic_write(report_path, lambda h: h.write(text), mode='w')
    logger.error('Training diverged; last good checkpoint {0}, diagnostics {1}'.format(
        ckpt_path, report_path))
    return [ckpt_path, report_path]


def main(opts):
    """Train one phase.

    opts holds the command line options: phase, out_dir, preset, config,
    resume, init and any config overrides (see FLAG_SECTIONS).
    """
    run = resolve_config(opts)
    model_cfg, cfg, deg = build_configs(run)
    out_dir = opts['out_dir']
    _utils.make_result_dir(out_dir)
    cfg_opts = _utils.get_output_config('train')

    ds = DatasetHandle.from_dirs(run['data'].get('source_dir', ''),
                                 run['data'].get('target_dir', ''))
    resume = load_checkpoint(opts['resume']) if opts.get('resume') else None
    init = load_checkpoint(opts['init']) if opts.get('init') else None
    if cfg.phase != 'dae' and resume is None and init is None:
        raise _utils.ConfigError('phase {0} needs --init (or --resume)'.format(cfg.phase))

    try:
        if cfg.phase == 'dae':
            ckpt = train_dae(ds, cfg, deg, model_config=model_cfg, resume=resume)
        elif cfg.phase == 'sr':
            ckpt = train_sr(ds, cfg, init, deg=deg, resume=resume)
        else:
            ckpt = train_joint(ds, cfg, deg, init, resume=resume)
    except TrainingDivergedError as err:
        write_divergence_report(err, out_dir)
        raise

    ckpt_path = os.path.join(out_dir, cfg_opts['checkpoint'])
    save_checkpoint(ckpt.params, cfg, ckpt.meta, ckpt_path, ckpt.optimizers)

    # only the iterations of this invocation; the checkpoint keeps them all
    records = ckpt.meta['loss_history'][len(ckpt.meta['loss_history']) - cfg.iterations:]
    log_path = os.path.join(out_dir, cfg_opts['loss_log'])
    plot_data.write_loss_log(records, log_path)
    outputs = [ckpt_path, log_path]
    if records:
        plot_path = os.path.join(out_dir, cfg_opts['loss_plot'])
        plot_data.loss_curves(plot_data.read_loss_log(log_path), plot_path,
                              title='{0} phase'.format(cfg.phase))
        outputs.append(plot_path)

    inputs = [p for p in (run['data'].get('source_dir'), run['data'].get('target_dir'),
                          opts.get('resume'), opts.get('init')) if p]
    _utils.write_run_manifest(out_dir, 'train', opts, outputs,
                              inputs=inputs,
                              config=snapshot(ckpt.config, cfg, deg, run['data']),
                              seed=cfg.seed)
    return ckpt
