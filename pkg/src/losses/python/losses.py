"""Training objectives: the DAE evidence bound, the cycle MAE terms, the
feature and adversarial terms of the generator, and the discriminator
objective.

Every function accepts and returns torch tensors so gradients flow into
whichever networks produced the inputs. Losses never clamp images.
"""
import logging
import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction

import torch

from src.imaging.python.resample import resize_tensor

logger = logging.getLogger(__name__)

# guard for the logarithms of probabilities that saturate in float32
LOG_EPS = 1e-7


class NonFiniteError(ValueError):
    """A loss input holds NaN or infinite values."""


@dataclass(frozen=True)
class LossWeights(object):
    lambda_feat: float = 1.0
    eta_adv: float = 5e-3
    kl_weight: float = 0.1
    non_saturating: bool = False

    def __post_init__(self):
        for name in ('lambda_feat', 'eta_adv', 'kl_weight'):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError('{0} must be finite and >= 0, got {1}'.format(name, value))


@dataclass
class LossBreakdown(object):
    """Every loss term of one step, unweighted, plus the weighted total

        total = reconstruction + kl_weight*kl + cycle_lowfreq
                + cycle_backproj + lambda_feat*feature + eta_adv*adversarial

    Terms a phase does not use are 0. Values are tensors while training
    and floats once detached.
    """
    kl: object = 0.
    reconstruction: object = 0.
    cycle_lowfreq: object = 0.
    cycle_backproj: object = 0.
    feature: object = 0.
    adversarial: object = 0.
    total: object = 0.

    @staticmethod
    def terms():
        return tuple(f.name for f in fields(LossBreakdown) if f.name != 'total')

    def weighted_total(self, weights):
        return (self.reconstruction + weights.kl_weight * self.kl
                + self.cycle_lowfreq + self.cycle_backproj
                + weights.lambda_feat * self.feature
                + weights.eta_adv * self.adversarial)

    def with_total(self, weights):
        return replace(self, total=self.weighted_total(weights))

    def merge(self, other, weights):
        """Term-wise sum of two breakdowns (joint phase)."""
        summed = {name: getattr(self, name) + getattr(other, name) for name in self.terms()}
        return LossBreakdown(**summed).with_total(weights)

    def detached(self):
        return LossBreakdown(**{f.name: _as_float(getattr(self, f.name)) for f in fields(self)})

    def is_finite(self):
        return all(math.isfinite(_as_float(getattr(self, f.name))) for f in fields(self))

    def to_record(self, iteration, discriminator=0.):
        record = {'iteration': int(iteration)}
        record.update({f.name: _as_float(getattr(self, f.name)) for f in fields(self)})
        record['discriminator'] = _as_float(discriminator)
        return record

    @classmethod
    def from_record(cls, record):
        return cls(**{f.name: float(record[f.name]) for f in fields(cls)})


def _as_float(value):
    if isinstance(value, torch.Tensor):
        return float(value.detach().cpu())
    return float(value)


def _check_finite(x, what):
    if not bool(torch.isfinite(x).all()):
        raise NonFiniteError('{0} contains non-finite values'.format(what))


def _as_probability(p, what):
    p = torch.as_tensor(p, dtype=p.dtype if isinstance(p, torch.Tensor) else torch.float64)
    _check_finite(p, what)
    if bool(((p < 0) | (p > 1)).any()):
        raise ValueError('{0} must lie in [0, 1]'.format(what))
    return p


def mean_absolute_error(a, b):
    if a.shape != b.shape:
        raise ValueError('shape mismatch: {0} vs {1}'.format(tuple(a.shape), tuple(b.shape)))
    return (a - b).abs().mean()


def downsample(x, alpha):
    """The reduction operator s: antialiased bicubic 1/alpha resampling."""
    if alpha == 1:
        return x
    return resize_tensor(x, Fraction(1, alpha), antialias=True)


def kl_divergence(dist):
    """KL(q || N(0, I)) summed over latent components, averaged over the
    batch when the distribution is batched."""
    mean, log_variance = dist.mean, dist.log_variance
    _check_finite(mean, 'latent mean')
    _check_finite(log_variance, 'latent log-variance')
    per_item = .5 * (torch.exp(log_variance) + mean ** 2 - 1. - log_variance).sum(dim=-1)
    return per_item.mean() if per_item.dim() else per_item


def dae_loss(denoised, clean_target, dist, weights):
    """MAE reconstruction plus kl_weight times the KL term."""
    reconstruction = mean_absolute_error(denoised, clean_target)
    kl = kl_divergence(dist)
    return LossBreakdown(kl=kl, reconstruction=reconstruction).with_total(weights)


def cycle_terms(denoised, srsn, alpha):
    """Cycle terms given g(X) already computed.

    Returns
    -------
    breakdown : LossBreakdown
        cycle_lowfreq = mean|s(Y) - g(X)|, cycle_backproj = mean|Y - f(s(Y))|
    sr : torch.Tensor
        Y = f(g(X))
    """
    sr = srsn(denoised)
    reduced = downsample(sr, alpha)
    lowfreq = mean_absolute_error(reduced, denoised)
    backproj = mean_absolute_error(sr, srsn(reduced))
    return LossBreakdown(cycle_lowfreq=lowfreq, cycle_backproj=backproj,
                         total=lowfreq + backproj), sr


def cycle_loss(X, srsn, dae, alpha):
    """Cycle loss of a noisy LR batch X.

    Parameters
    ----------
    X : torch.Tensor
        (N, 3, h, w) noisy low resolution batch
    srsn : callable
        f, maps a clean LR batch to an SR batch alpha times larger
    dae : callable
        g, maps a noisy batch to a denoised batch of the same size
    alpha : int
        magnification

    Returns
    -------
    breakdown : LossBreakdown
    sr : torch.Tensor
    """
    if alpha < 1:
        raise ValueError('alpha must be >= 1, got {0}'.format(alpha))
    return cycle_terms(dae(X), srsn, alpha)


def feature_loss(sr, denoised_lr, extractor, alpha):
    """Mean |s(phi(sr)) - phi(denoised_lr)|; the SR-side feature map is
    reduced by alpha to match the LR-side map."""
    if tuple(sr.shape[-2:]) != (alpha * denoised_lr.shape[-2], alpha * denoised_lr.shape[-1]):
        raise ValueError('sr {0} is not {1}x the LR input {2}'.format(
            tuple(sr.shape[-2:]), alpha, tuple(denoised_lr.shape[-2:])))
    sr_features = downsample(extractor(sr), alpha)
    lr_features = extractor(denoised_lr)
    if sr_features.shape != lr_features.shape:
        raise ValueError('feature maps disagree after reduction: {0} vs {1}'.format(
            tuple(sr_features.shape), tuple(lr_features.shape)))
    return mean_absolute_error(sr_features, lr_features)


def adversarial_loss_generator(d_fake, non_saturating=False):
    """Batch mean of log(1 - D(fake)); minimizing drives D(fake) to 1.

    With non_saturating the substitute -log(D(fake)) is returned.
    """
    d_fake = _as_probability(d_fake, 'd_fake')
    if non_saturating:
        return -torch.log(torch.clamp(d_fake, min=LOG_EPS)).mean()
    return torch.log(torch.clamp(1. - d_fake, min=LOG_EPS)).mean()


def discriminator_loss(d_real, d_fake):
    """Batch mean of -[log D(real) + log(1 - D(fake))]."""
    d_real = _as_probability(d_real, 'd_real')
    d_fake = _as_probability(d_fake, 'd_fake')
    return -(torch.log(torch.clamp(d_real, min=LOG_EPS)).mean()
             + torch.log(torch.clamp(1. - d_fake, min=LOG_EPS)).mean())


GENERATOR_TERMS = ('feature', 'adversarial', 'cycle_lowfreq', 'cycle_backproj')


def total_generator_loss(components, weights):
    """Weighted generator objective.

    Parameters
    ----------
    components : LossBreakdown, dict or sequence
        feature, adversarial, cycle_lowfreq and cycle_backproj terms
        (a sequence gives them in that order); a reconstruction term is
        added when present
    weights : LossWeights

    Returns
    -------
    breakdown : LossBreakdown
        every term unweighted plus the weighted total
    """
    if isinstance(components, LossBreakdown):
        values = {name: getattr(components, name) for name in LossBreakdown.terms()}
    elif isinstance(components, dict):
        values = dict(components)
    else:
        values = dict(zip(GENERATOR_TERMS, components))
        if len(values) != len(GENERATOR_TERMS):
            raise ValueError('expected {0} components'.format(len(GENERATOR_TERMS)))
    for name, value in values.items():
        if not math.isfinite(_as_float(value)):
            raise NonFiniteError('generator loss component {0} is not finite'.format(name))
    return LossBreakdown(**values).with_total(weights)
