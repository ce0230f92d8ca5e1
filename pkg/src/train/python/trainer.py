"""Optimization schedules: DAE pre-training, adversarial SR training with
the cycle objective, and joint fine-tuning.

Each iteration first runs every forward pass of the step, checks that all
losses are finite and only then updates parameters, so an abort leaves
the parameters of the last completed iteration.
"""
import logging
import math
from dataclasses import dataclass, field, asdict, replace

import torch

from src.degradation.python.degradation import DegradationSpec, degrade
from src.imaging.python.image import images_to_tensor
from src.losses.python.losses import (LossWeights, LossBreakdown, dae_loss, cycle_terms,
                                      feature_loss, adversarial_loss_generator,
                                      discriminator_loss, total_generator_loss,
                                      mean_absolute_error, NonFiniteError)
from src.models.python.model import (ModelConfig, ParameterSet, LatentDistribution,
                                     encode, sample_latent, denoise, denoise_inference,
                                     super_resolve, discriminate, extract_features,
                                     DECODER_STRIDE, DISCRIMINATOR_STRIDE)
from src.train.python.checkpoint import Checkpoint
from src.train.python.dataset import sample_crop, step_seed

logger = logging.getLogger(__name__)

PHASES = ('dae', 'sr', 'joint')
PAIRINGS = ('synthetic-paired', 'unpaired-reference', 'supervised-hr')
# number of loss records carried by a divergence report
RECENT_RECORDS = 10


class TrainingDivergedError(RuntimeError):
    """A loss became non-finite. Carries the last loss records and the
    parameters as they were before the failing update."""

    def __init__(self, iteration, recent, checkpoint):
        self.iteration = iteration
        self.recent = recent
        self.checkpoint = checkpoint
        super(TrainingDivergedError, self).__init__(
            'non-finite loss at iteration {0}'.format(iteration))


@dataclass(frozen=True)
class TrainConfig(object):
    lr: float = 1e-4
    batch: int = 16
    iterations: int = 1000
    adam_beta1: float = .9
    adam_beta2: float = .999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = False
    lr_patch: int = 128
    ref_patch: int = 512
    alpha: int = 4
    seed: int = 0
    phase: str = 'dae'
    pairing: str = 'synthetic-paired'
    train_decoder: bool = False
    log_every: int = 100
    deterministic: bool = True
    weights: LossWeights = field(default_factory=LossWeights, metadata={'section': 'loss'})

    def __post_init__(self):
        problems = []
        if not self.lr > 0:
            problems.append('lr must be > 0')
        if self.batch < 1:
            problems.append('batch must be >= 1')
        if self.iterations < 0:
            problems.append('iterations must be >= 0')
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            problems.append('adam betas must lie in [0, 1)')
        if self.weight_decay < 0:
            problems.append('weight_decay must be >= 0')
        if self.lr_patch < DECODER_STRIDE or self.lr_patch % DECODER_STRIDE:
            problems.append('lr_patch must be a positive multiple of {0}'.format(DECODER_STRIDE))
        if self.ref_patch < 16:
            problems.append('ref_patch must be >= 16')
        if self.alpha < 1:
            problems.append('alpha must be >= 1')
        if self.phase not in PHASES:
            problems.append('phase must be one of {0}'.format(PHASES))
        if self.pairing not in PAIRINGS:
            problems.append('pairing must be one of {0}'.format(PAIRINGS))
        if self.phase != 'dae' and self.alpha * self.lr_patch < DISCRIMINATOR_STRIDE:
            problems.append('alpha * lr_patch must be >= {0} for the discriminator'.format(
                DISCRIMINATOR_STRIDE))
        if self.log_every < 1:
            problems.append('log_every must be >= 1')
        if problems:
            raise ValueError('; '.join(problems))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        if isinstance(values.get('weights'), dict):
            values['weights'] = LossWeights(**values['weights'])
        return cls(**values)

    def replace(self, **changes):
        return replace(self, **changes)


def configure_determinism(cfg):
    if cfg.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def build_optimizer(parameters, cfg):
    """Adam with L2-coupled weight decay, or AdamW when decay is decoupled."""
    opt_cls = torch.optim.AdamW if cfg.decoupled_weight_decay else torch.optim.Adam
    return opt_cls(parameters, lr=cfg.lr,
                   betas=(cfg.adam_beta1, cfg.adam_beta2),
                   eps=cfg.adam_eps,
                   weight_decay=cfg.weight_decay)


def _batch(images):
    return images_to_tensor(images, dtype=torch.float32)


def _crops(ds, files, size_h, size_w, cfg, stream, iteration):
    return [sample_crop(ds, files, size_h, size_w,
                        step_seed(cfg.seed, stream, iteration, i)).image
            for i in range(cfg.batch)]


def _noisy_pairs(ds, cfg, deg, iteration):
    """Clean target crops and their blur+noise degradations (scale 1)."""
    targets = _crops(ds, ds.target_files, cfg.lr_patch, cfg.lr_patch, cfg, 'target', iteration)
    noisy = [degrade(t, deg.replace(scale=1, seed=step_seed(cfg.seed, 'noise', iteration, i)))
             for i, t in enumerate(targets)]
    return _batch(noisy), _batch(targets)


def _latent(params, reference, cfg, iteration):
    """Posterior and reparameterized sample; the plain denoiser reports a
    standard-normal posterior and takes no latent."""
    n = reference.shape[0]
    if params.config.denoiser_kind == 'plain-cnn':
        return LatentDistribution.standard_normal(n, params.config.latent_len, reference.dtype), None
    dist = encode(reference, params)
    return dist, sample_latent(dist, seed=step_seed(cfg.seed, 'latent', iteration))


class _Schedule(object):
    """Bookkeeping shared by every phase: the optimizers, the loss
    history and the divergence check."""

    def __init__(self, params, cfg, optimizers, start_iteration, history):
        self.params = params
        self.cfg = cfg
        self.optimizers = optimizers
        self.start = start_iteration
        self.history = list(history)
        self.records = []

    def diverged(self, iteration, record):
        recent = (self.history + self.records)[-(RECENT_RECORDS - 1):] + [record]
        logger.error('Non-finite loss at iteration {0}: {1}'.format(iteration, record))
        return TrainingDivergedError(iteration, recent, self.checkpoint(iteration))

    def check(self, iteration, breakdown, d_loss=0.):
        record = breakdown.to_record(iteration, d_loss)
        if not (breakdown.is_finite() and math.isfinite(record['discriminator'])):
            raise self.diverged(iteration, record)
        return record

    def descend(self, name, loss):
        opt = self.optimizers[name]
        opt.zero_grad(set_to_none=True)
        loss.backward()
        opt.step()

    def log(self, iteration, record):
        self.records.append(record)
        done = iteration - self.start + 1
        terms = ', '.join('{0}={1:.5g}'.format(k, record[k])
                          for k in LossBreakdown.terms() + ('total', 'discriminator'))
        msg = 'iteration {0}: {1}'.format(iteration + 1, terms)
        if done % self.cfg.log_every == 0 or done == self.cfg.iterations:
            logger.info(msg)
        else:
            logger.debug(msg)

    def run(self, step):
        for iteration in range(self.start, self.start + self.cfg.iterations):
            try:
                record = step(iteration)
            except NonFiniteError as e:
                raise self.diverged(iteration, {'iteration': iteration, 'error': str(e)})
            self.log(iteration, record)
        return self.checkpoint(self.start + self.cfg.iterations)

    def checkpoint(self, iteration):
        meta = {'iteration': iteration,
                'seed': self.cfg.seed,
                'phase': self.cfg.phase,
                'loss_history': self.history + self.records}
        optimizers = {name: opt.state_dict() for name, opt in self.optimizers.items()}
        return Checkpoint(params=self.params.snapshot(),
                          train_config=self.cfg.to_dict(),
                          meta=meta,
                          optimizers=optimizers)


def _resume_state(resume, optimizers, phase):
    """Restore optimizer state from a checkpoint of the same phase."""
    if resume is None:
        return 0, []
    if resume.phase != phase:
        raise ValueError('cannot resume phase {0} from a {1} checkpoint'.format(phase, resume.phase))
    for name, opt in optimizers.items():
        if name not in resume.optimizers:
            raise ValueError('checkpoint has no optimizer state for {0}'.format(name))
        opt.load_state_dict(resume.optimizers[name])
    logger.info('Resuming {0} training from iteration {1}'.format(phase, resume.iteration))
    return resume.iteration, resume.meta.get('loss_history', [])


def _dae_networks(params):
    if params.config.denoiser_kind == 'plain-cnn':
        return ('decoder',)
    return ('encoder', 'decoder')


def train_dae(ds, cfg, deg, model_config=None, resume=None):
    """Pre-train the denoiser.

    Parameters
    ----------
    ds : DatasetHandle
    cfg : TrainConfig
        phase must be dae
    deg : DegradationSpec
        blur and noise of the synthetic pairs; its scale is ignored
    model_config : ModelConfig
        architecture of a fresh run
    resume : Checkpoint
        continue a DAE run; cfg.iterations more iterations are made

    Returns
    -------
    ckpt : Checkpoint
    """
    if cfg.phase != 'dae':
        raise ValueError('train_dae needs phase dae, got {0}'.format(cfg.phase))
    configure_determinism(cfg)
    if cfg.pairing == 'unpaired-reference':
        ds.require('source', 'target')
    else:
        ds.require('target')

    params = resume.params.snapshot() if resume else ParameterSet.initialize(model_config or ModelConfig(), cfg.seed)
    networks = _dae_networks(params)
    params.set_trainable(*networks)
    optimizers = {'dae': build_optimizer(params.trainable_parameters(*networks), cfg)}
    start, history = _resume_state(resume, optimizers, 'dae')
    schedule = _Schedule(params, cfg, optimizers, start, history)

    def step(iteration):
        if cfg.pairing == 'unpaired-reference':
            noisy = _batch(_crops(ds, ds.source_files, cfg.lr_patch, cfg.lr_patch, cfg, 'lr', iteration))
            target = noisy
            reference = _batch(_crops(ds, ds.target_files, cfg.ref_patch, cfg.ref_patch,
                                      cfg, 'ref', iteration))
        else:
            noisy, target = _noisy_pairs(ds, cfg, deg, iteration)
            reference = target
        dist, z = _latent(params, reference, cfg, iteration)
        breakdown = dae_loss(denoise(noisy, z, params), target, dist, cfg.weights)
        record = schedule.check(iteration, breakdown)
        schedule.descend('dae', breakdown.total)
        return record

    logger.info('Training DAE for {0} iterations . . .'.format(cfg.iterations))
    ckpt = schedule.run(step)
    logger.info('Finished DAE training.')
    return ckpt


def _generator_terms(params, denoised, cfg, hr=None):
    """Cycle, feature and adversarial terms of a denoised LR batch."""
    alpha = cfg.alpha
    cycle, sr = cycle_terms(denoised, lambda x: super_resolve(x, params, alpha), alpha)
    feature = feature_loss(sr, denoised, lambda x: extract_features(x, params), alpha)
    adversarial = adversarial_loss_generator(discriminate(sr, params), cfg.weights.non_saturating)
    components = {'feature': feature, 'adversarial': adversarial,
                  'cycle_lowfreq': cycle.cycle_lowfreq,
                  'cycle_backproj': cycle.cycle_backproj}
    if hr is not None:
        components['reconstruction'] = mean_absolute_error(sr, hr)
    return total_generator_loss(components, cfg.weights), sr


def _discriminator_objective(params, ds, sr, cfg, iteration):
    h, w = sr.shape[-2:]
    real = _batch(_crops(ds, ds.target_files, h, w, cfg, 'real', iteration))
    return discriminator_loss(discriminate(real, params), discriminate(sr.detach(), params))


def _check_alpha(params, cfg):
    if params.config.alpha != cfg.alpha:
        raise ValueError('train alpha {0} does not match model alpha {1}'.format(
            cfg.alpha, params.config.alpha))


def train_sr(ds, cfg, dae_ckpt, deg=None, resume=None):
    """Adversarial SR training with the cycle objective.

    Each iteration makes one generator update (SRSN, plus the decoder
    when cfg.train_decoder) followed by one discriminator update.

    Parameters
    ----------
    ds : DatasetHandle
    cfg : TrainConfig
        phase must be sr
    dae_ckpt : Checkpoint
        pre-trained denoiser; ignored when resuming
    deg : DegradationSpec
        degradation used to synthesize LR inputs in supervised-hr pairing
    resume : Checkpoint
        continue an SR run

    Returns
    -------
    ckpt : Checkpoint
    """
    if cfg.phase != 'sr':
        raise ValueError('train_sr needs phase sr, got {0}'.format(cfg.phase))
    configure_determinism(cfg)
    ds.require('target')
    supervised = cfg.pairing == 'supervised-hr'
    if not supervised:
        ds.require('source')
    if supervised:
        deg = (deg or DegradationSpec()).replace(scale=cfg.alpha)

    if resume:
        params = resume.params.snapshot()
    else:
        params = ParameterSet.initialize(dae_ckpt.config, cfg.seed)
        params.encoder.load_state_dict(dae_ckpt.params.encoder.state_dict())
        params.decoder.load_state_dict(dae_ckpt.params.decoder.state_dict())
    _check_alpha(params, cfg)
    generator = ('srsn', 'decoder') if cfg.train_decoder else ('srsn',)
    params.set_trainable(*(generator + ('discriminator',)))
    optimizers = {'generator': build_optimizer(params.trainable_parameters(*generator), cfg),
                  'discriminator': build_optimizer(params.trainable_parameters('discriminator'), cfg)}
    start, history = _resume_state(resume, optimizers, 'sr')
    schedule = _Schedule(params, cfg, optimizers, start, history)

    def step(iteration):
        hr = None
        if supervised:
            size = cfg.alpha * cfg.lr_patch
            hr_images = _crops(ds, ds.target_files, size, size, cfg, 'hr', iteration)
            noisy = _batch([degrade(img, deg.replace(seed=step_seed(cfg.seed, 'noise', iteration, i)))
                            for i, img in enumerate(hr_images)])
            hr = _batch(hr_images)
        else:
            noisy = _batch(_crops(ds, ds.source_files, cfg.lr_patch, cfg.lr_patch, cfg, 'lr', iteration))
        denoised = denoise_inference(noisy, params)
        generator_loss, sr = _generator_terms(params, denoised, cfg, hr)
        d_loss = _discriminator_objective(params, ds, sr, cfg, iteration)
        record = schedule.check(iteration, generator_loss, d_loss)
        schedule.descend('generator', generator_loss.total)
        schedule.descend('discriminator', d_loss)
        return record

    logger.info('Training SR network for {0} iterations . . .'.format(cfg.iterations))
    ckpt = schedule.run(step)
    logger.info('Finished SR training.')
    return ckpt


def train_joint(ds, cfg, deg, init_ckpt, resume=None):
    """Fine-tune denoiser and SR network together on the summed DAE and
    generator objectives, alternating with discriminator updates."""
    if cfg.phase != 'joint':
        raise ValueError('train_joint needs phase joint, got {0}'.format(cfg.phase))
    configure_determinism(cfg)
    ds.require('target')

    params = (resume or init_ckpt).params.snapshot()
    _check_alpha(params, cfg)
    generator = _dae_networks(params) + ('srsn',)
    params.set_trainable(*(generator + ('discriminator',)))
    optimizers = {'generator': build_optimizer(params.trainable_parameters(*generator), cfg),
                  'discriminator': build_optimizer(params.trainable_parameters('discriminator'), cfg)}
    start, history = _resume_state(resume, optimizers, 'joint')
    schedule = _Schedule(params, cfg, optimizers, start, history)

    def step(iteration):
        noisy, target = _noisy_pairs(ds, cfg, deg, iteration)
        dist, z = _latent(params, target, cfg, iteration)
        denoised = denoise(noisy, z, params)
        dae = dae_loss(denoised, target, dist, cfg.weights)
        generator_loss, sr = _generator_terms(params, denoised, cfg)
        combined = dae.merge(generator_loss, cfg.weights)
        d_loss = _discriminator_objective(params, ds, sr, cfg, iteration)
        record = schedule.check(iteration, combined, d_loss)
        schedule.descend('generator', combined.total)
        schedule.descend('discriminator', d_loss)
        return record

    logger.info('Joint training for {0} iterations . . .'.format(cfg.iterations))
    ckpt = schedule.run(step)
    logger.info('Finished joint training.')
    return ckpt
