"""Model configuration, the ParameterSet holding every network, and the
forward operations (encode, sample_latent, decode_noise, denoise,
denoise_inference, super_resolve, discriminate, extract_features).

All operations act on batched (N, 3, H, W) tensors.
"""
import copy
import logging
import math
from dataclasses import dataclass, asdict
from functools import lru_cache
from typing import Tuple

import torch
import torch.nn as nn

from src.imaging.python.resample import resize_tensor
from src.models.python.networks import (ConvEncoder, NoiseDecoder, PlainDenoiser,
                                        SRSN, Discriminator, FeatureExtractor,
                                        DECONV_KERNEL, DECONV_STRIDE, DECONV_PADDING)

logger = logging.getLogger(__name__)

NETWORKS = ('encoder', 'decoder', 'srsn', 'discriminator', 'features')
ENCODER_KINDS = ('small-conv', 'frozen-pretrained')
DENOISER_KINDS = ('cvae', 'plain-cnn')
INFERENCE_MODES = ('prior-mean', 'prior-sample')

ENCODER_STRIDE = 16
DECODER_STRIDE = 16
DISCRIMINATOR_STRIDE = 32
FEATURE_STRIDE = 16

# the feature extractor is never trained; its weights depend only on this
FEATURE_SEED = 2020


@dataclass(frozen=True)
class ModelConfig(object):
    latent_len: int = 512
    srsn_blocks: int = 4
    srsn_channels: int = 64
    alpha: int = 4
    decoder_channels: int = 64
    decoder_resblocks: int = 3
    encoder_kind: str = 'small-conv'
    encoder_channels: Tuple[int, ...] = (32, 64, 128, 128)
    encoder_weights: str = ''
    discriminator_channels: Tuple[int, ...] = (32, 64, 128, 256, 512)
    feature_channels: Tuple[int, ...] = (16, 32, 64, 64)
    denoiser_kind: str = 'cvae'
    plain_layers: int = 8
    plain_channels: int = 64

    def __post_init__(self):
        problems = []
        if self.alpha < 1:
            problems.append('alpha must be >= 1')
        if self.latent_len < 1:
            problems.append('latent_len must be >= 1')
        if len(self.encoder_channels) != 4:
            problems.append('encoder_channels needs 4 stages (total stride 16)')
        if len(self.discriminator_channels) != 5:
            problems.append('discriminator_channels needs 5 stages (total stride 32)')
        if len(self.feature_channels) != 4:
            problems.append('feature_channels needs 4 stages (total stride 16)')
        if self.encoder_kind not in ENCODER_KINDS:
            problems.append('encoder_kind must be one of {0}'.format(ENCODER_KINDS))
        if self.encoder_kind == 'frozen-pretrained' and not self.encoder_weights:
            problems.append('frozen-pretrained encoder needs encoder_weights')
        if self.denoiser_kind not in DENOISER_KINDS:
            problems.append('denoiser_kind must be one of {0}'.format(DENOISER_KINDS))
        if self.plain_layers < 2:
            problems.append('plain_layers must be >= 2')
        if problems:
            raise ValueError('; '.join(problems))

    @property
    def decoder_deconv(self):
        """(layers, kernel, stride, padding) of the decoder up-sampling path."""
        return (2, DECONV_KERNEL, DECONV_STRIDE, DECONV_PADDING)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        values = dict(values)
        for key in ('encoder_channels', 'discriminator_channels', 'feature_channels'):
            if key in values:
                values[key] = tuple(values[key])
        return cls(**values)


@dataclass
class LatentDistribution(object):
    """Diagonal Gaussian posterior, (N, L) mean and log-variance."""
    mean: torch.Tensor
    log_variance: torch.Tensor

    @property
    def latent_len(self):
        return self.mean.shape[-1]

    @classmethod
    def standard_normal(cls, batch, latent_len, dtype=torch.float32):
        zeros = torch.zeros(batch, latent_len, dtype=dtype)
        return cls(zeros, zeros.clone())


def _he_init(module, generator):
    """Fan-in scaled normal weights, zero biases."""
    with torch.no_grad():
        for _, p in module.named_parameters():
            if p.dim() > 1:
                fan_in = p.shape[1] * int(math.prod(p.shape[2:]))
                std = math.sqrt(2. / fan_in)
                p.copy_(torch.randn(p.shape, generator=generator, dtype=p.dtype) * std)
            else:
                p.zero_()


class ParameterSet(nn.Module):
    """Every trainable and frozen array of the system, grouped by the
    owning network. Array names are '<network>.<layer path>'."""

    def __init__(self, config):
        super(ParameterSet, self).__init__()
        self.config = config
        self.encoder = ConvEncoder(config.encoder_channels, config.latent_len)
        if config.denoiser_kind == 'plain-cnn':
            self.decoder = PlainDenoiser(config.plain_channels, config.plain_layers)
        else:
            self.decoder = NoiseDecoder(config.latent_len, config.decoder_channels,
                                        config.decoder_resblocks)
        self.srsn = SRSN(config.srsn_channels, config.srsn_blocks)
        self.discriminator = Discriminator(config.discriminator_channels)
        self.features = FeatureExtractor(config.feature_channels)
        self.features.requires_grad_(False)
        if config.encoder_kind == 'frozen-pretrained':
            self.encoder.stages.requires_grad_(False)

    @classmethod
    def initialize(cls, config, seed, identity_start=True):
        """Fresh parameters.

        Parameters
        ----------
        config : ModelConfig
        seed : int
            seed of every trainable network's initialization
        identity_start : bool
            zero the output convs of the decoder and SRSN so denoise is the
            identity and super_resolve is plain bicubic at step 0
        """
        params = cls(config)
        gen = torch.Generator().manual_seed(seed)
        for name in ('encoder', 'decoder', 'srsn', 'discriminator'):
            _he_init(getattr(params, name), gen)
        _he_init(params.features, torch.Generator().manual_seed(FEATURE_SEED))
        if identity_start:
            with torch.no_grad():
                for tail in (params.decoder.tail, params.srsn.tail):
                    tail.weight.zero_()
                    tail.bias.zero_()
        if config.encoder_kind == 'frozen-pretrained':
            params.load_encoder_weights(config.encoder_weights)
        return params

    def load_encoder_weights(self, path):
        """Load and freeze the encoder conv stack from a weight container
        (name -> tensor, names as in encoder.stages)."""
        weights = torch.load(path, map_location='cpu', weights_only=True)
        expected = self.encoder.stages.state_dict()
        for name, tensor in expected.items():
            if name not in weights:
                raise ValueError('encoder weights missing array {0}'.format(name))
            if tuple(weights[name].shape) != tuple(tensor.shape):
                raise ValueError('encoder weights array {0} has shape {1}, expected {2}'.format(
                    name, tuple(weights[name].shape), tuple(tensor.shape)))
        self.encoder.stages.load_state_dict({k: weights[k] for k in expected})
        self.encoder.stages.requires_grad_(False)
        logger.info('Loaded frozen encoder weights from {0}'.format(path))

    @staticmethod
    def owner(name):
        network = name.split('.', 1)[0]
        if network not in NETWORKS:
            raise KeyError('array {0} belongs to no network'.format(name))
        return network

    def named_arrays(self):
        return self.state_dict()

    def network_parameters(self, *networks):
        return [p for n in networks for p in getattr(self, n).parameters()]

    def set_trainable(self, *networks):
        """Enable gradients for the listed networks only."""
        for name in NETWORKS:
            getattr(self, name).requires_grad_(name in networks and name != 'features')
        if self.config.encoder_kind == 'frozen-pretrained':
            self.encoder.stages.requires_grad_(False)

    def trainable_parameters(self, *networks):
        return [p for p in self.network_parameters(*networks) if p.requires_grad]

    def parameter_count(self, network=None):
        modules = [getattr(self, network)] if network else [self]
        return sum(p.numel() for m in modules for p in m.parameters())

    def snapshot(self):
        """Independent copy for evaluation while training continues."""
        return copy.deepcopy(self)

    def load_arrays(self, arrays):
        """Load named arrays after checking them against the manifest."""
        problem = manifest_mismatch(self.config, arrays)
        if problem:
            raise ValueError(problem)
        with torch.no_grad():
            own = self.state_dict()
            for name, tensor in arrays.items():
                own[name].copy_(tensor.to(own[name].dtype))


@lru_cache(maxsize=16)
def _manifest(config):
    return tuple((name, tuple(t.shape)) for name, t in ParameterSet(config).state_dict().items())


def shape_manifest(config):
    """name -> shape of every array implied by a ModelConfig."""
    return dict(_manifest(config))


def manifest_mismatch(config, arrays):
    """Describe the first array that disagrees with the manifest, or ''."""
    manifest = shape_manifest(config)
    for name, shape in manifest.items():
        if name not in arrays:
            return 'missing array {0}'.format(name)
        if tuple(arrays[name].shape) != shape:
            return 'array {0} has shape {1}, expected {2}'.format(
                name, tuple(arrays[name].shape), shape)
    for name in arrays:
        if name not in manifest:
            return 'unexpected array {0}'.format(name)
    return ''


def _check_batch(x, minimum, what, multiple=None):
    if x.dim() != 4 or x.shape[1] != 3:
        raise ValueError('{0} expects (N, 3, H, W) input, got {1}'.format(what, tuple(x.shape)))
    height, width = x.shape[-2:]
    if height < minimum or width < minimum:
        raise ValueError('{0} needs inputs of at least {1}x{1}, got {2}x{3}'.format(
            what, minimum, height, width))
    if multiple and (height % multiple or width % multiple):
        raise ValueError('{0} needs dimensions divisible by {1}, got {2}x{3}'.format(
            what, multiple, height, width))


def encode(reference, params):
    """Approximate posterior of the latent given a clean reference."""
    _check_batch(reference, ENCODER_STRIDE, 'encode')
    mean, log_variance = params.encoder(reference)
    return LatentDistribution(mean, log_variance)


def sample_latent(dist, epsilon=None, seed=0):
    """Reparameterized draw z = mean + eps * exp(0.5 * log_variance).

    Parameters
    ----------
    dist : LatentDistribution
    epsilon : torch.Tensor or None
        exogenous noise with last dimension latent_len; drawn from a
        standard normal seeded by seed when None. No gradient flows
        through it.
    seed : int
    """
    if epsilon is None:
        gen = torch.Generator().manual_seed(seed)
        epsilon = torch.randn(dist.mean.shape, generator=gen, dtype=dist.mean.dtype)
    else:
        epsilon = torch.as_tensor(epsilon, dtype=dist.mean.dtype)
        if epsilon.shape[-1] != dist.latent_len:
            raise ValueError('epsilon has length {0}, latent length is {1}'.format(
                epsilon.shape[-1], dist.latent_len))
    return dist.mean + epsilon.detach() * torch.exp(.5 * dist.log_variance)


def decode_noise(noisy, z, params):
    """Full-resolution noise estimate of noisy conditioned on z."""
    _check_batch(noisy, DECODER_STRIDE, 'decode_noise', multiple=DECODER_STRIDE)
    if params.config.denoiser_kind == 'cvae':
        if z.dim() == 1:
            z = z.unsqueeze(0).expand(noisy.shape[0], -1)
        if z.shape != (noisy.shape[0], params.config.latent_len):
            raise ValueError('z must be (N, {0}), got {1}'.format(
                params.config.latent_len, tuple(z.shape)))
    return params.decoder(noisy, z)


def denoise(noisy, z, params):
    """noisy - decode_noise(noisy, z)."""
    return noisy - decode_noise(noisy, z, params)


def denoise_inference(noisy, params, mode='prior-mean', seed=0):
    """Denoise without an encoder: z is the prior mean (0) or a draw
    from the standard-normal prior."""
    if mode not in INFERENCE_MODES:
        raise ValueError('mode must be one of {0}, got {1}'.format(INFERENCE_MODES, mode))
    prior = LatentDistribution.standard_normal(noisy.shape[0], params.config.latent_len,
                                               dtype=noisy.dtype)
    if mode == 'prior-mean':
        z = sample_latent(prior, epsilon=torch.zeros_like(prior.mean))
    else:
        z = sample_latent(prior, seed=seed)
    return denoise(noisy, z, params)


def super_resolve(clean_lr, params, alpha=None):
    """B + SRSN(B) with B the bicubic alpha-times upsampling."""
    if alpha is None:
        alpha = params.config.alpha
    if alpha != params.config.alpha:
        raise ValueError('alpha {0} does not match the model (alpha={1})'.format(
            alpha, params.config.alpha))
    _check_batch(clean_lr, 1, 'super_resolve')
    upsampled = resize_tensor(clean_lr, alpha)
    return upsampled + params.srsn(upsampled)


def discriminate(patch, params):
    """Probability in (0, 1) that each patch is a real reference crop."""
    return torch.sigmoid(discriminator_logits(patch, params))


def discriminator_logits(patch, params):
    _check_batch(patch, DISCRIMINATOR_STRIDE, 'discriminate')
    return params.discriminator(patch)


def extract_features(img, params):
    """Frozen feature map at 1/16 resolution."""
    _check_batch(img, FEATURE_STRIDE, 'extract_features')
    return params.features(img)
