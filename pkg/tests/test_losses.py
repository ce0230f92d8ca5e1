# fix problems with pythons terrible import system
import os
import sys
import math
from fractions import Fraction
file_dir = os.path.dirname(os.path.realpath(__file__))
sys.path.append(os.path.join(file_dir, '..'))

import numpy as np
import pytest
import torch
from scipy import integrate, stats

from src.imaging.python.resample import resize_tensor
from src.models.python.model import (ParameterSet, LatentDistribution, super_resolve,
                                     extract_features, denoise)
from src.losses.python.losses import (LossWeights, LossBreakdown, kl_divergence, dae_loss,
                                      cycle_loss, downsample, feature_loss,
                                      adversarial_loss_generator, discriminator_loss,
                                      total_generator_loss, mean_absolute_error)
import src.utils.python.math as mymath
from synthetic import tiny_config


def _dist(mean, log_variance):
    return LatentDistribution(torch.as_tensor(mean, dtype=torch.float64),
                              torch.as_tensor(log_variance, dtype=torch.float64))


def test_kl_examples():
    assert float(kl_divergence(_dist([0., 0.], [0., 0.]))) == 0.
    assert float(kl_divergence(_dist([1.], [0.]))) == pytest.approx(.5)
    # batched inputs are averaged over the batch
    batched = _dist([[1.], [0.]], [[0.], [0.]])
    assert float(kl_divergence(batched)) == pytest.approx(.25)
    with pytest.raises(ValueError):
        kl_divergence(_dist([float('nan')], [0.]))


def test_kl_matches_quadrature():
    prng = np.random.RandomState(0)
    grid = np.linspace(-12, 12, 100000)
    prior = stats.norm.logpdf(grid)
    for _ in range(200):
        mean = prng.uniform(-2, 2)
        log_variance = prng.uniform(np.log(.3 ** 2), np.log(2. ** 2))
        q = stats.norm(mean, np.exp(.5 * log_variance))
        log_q = q.logpdf(grid)
        numeric = integrate.trapezoid(np.exp(log_q) * (log_q - prior), grid)
        closed = float(kl_divergence(_dist([mean], [log_variance])))
        assert abs(closed - numeric) < 1e-4


def test_kl_non_negative():
    prng = np.random.RandomState(1)
    for _ in range(1000):
        n = prng.randint(1, 9)
        mean, log_variance = prng.normal(0, 2, n), prng.normal(0, 2, n)
        kl = float(kl_divergence(_dist(mean, log_variance)))
        assert kl > 0
        assert kl == pytest.approx(mymath.gaussian_kl_to_standard(mean, log_variance).sum(), rel=1e-12)
    assert float(kl_divergence(_dist(np.zeros(5), np.zeros(5)))) == 0.


def test_dae_loss():
    weights = LossWeights(kl_weight=.1)
    target = torch.rand(2, 3, 16, 16, generator=torch.Generator().manual_seed(0),
                        dtype=torch.float64)
    std = _dist(np.zeros((2, 4)), np.zeros((2, 4)))
    assert float(dae_loss(target, target, std, weights).total) == 0.

    offset = dae_loss(target + .1, target, std, weights)
    assert float(offset.reconstruction) == pytest.approx(.1)

    noisy = target + .05 * torch.randn(target.shape, generator=torch.Generator().manual_seed(1),
                                       dtype=torch.float64)
    dist = _dist(np.ones((2, 4)), np.zeros((2, 4)))
    breakdown = dae_loss(noisy, target, dist, weights)
    expected = np.abs((noisy - target).numpy()).mean() + .1 * 2.
    assert abs(float(breakdown.total) - expected) < 1e-6
    assert float(breakdown.kl) == pytest.approx(2.)

    with pytest.raises(ValueError):
        dae_loss(target[..., :8], target, std, weights)


def test_cycle_loss_degenerate():
    x = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(2), dtype=torch.float64)
    breakdown, sr = cycle_loss(x, lambda t: t, lambda t: t, 1)
    assert float(breakdown.cycle_lowfreq) == 0. and float(breakdown.cycle_backproj) == 0.
    assert torch.equal(sr, x)

    const = torch.full((1, 3, 16, 16), .4, dtype=torch.float64)
    breakdown, sr = cycle_loss(const, lambda t: resize_tensor(t, 4), lambda t: t, 4)
    assert sr.shape == (1, 3, 64, 64)
    assert float(breakdown.cycle_lowfreq) < 1e-12
    assert float(breakdown.cycle_backproj) < 1e-12

    with pytest.raises(ValueError):
        cycle_loss(x, lambda t: t, lambda t: t, 0)


def test_cycle_loss_matches_recomputation():
    params = ParameterSet.initialize(tiny_config(alpha=2), seed=1, identity_start=False)
    x = torch.rand(1, 3, 16, 16, generator=torch.Generator().manual_seed(3))
    z = torch.zeros(1, params.config.latent_len)
    f = lambda t: super_resolve(t, params)
    g = lambda t: denoise(t, z, params)
    breakdown, sr = cycle_loss(x, f, g, 2)

    clean = g(x)
    y = f(clean)
    reduced = resize_tensor(y, Fraction(1, 2), antialias=True)
    lowfreq = (reduced - clean).abs().mean()
    backproj = (y - f(reduced)).abs().mean()
    assert torch.equal(sr, y)
    assert abs(float(breakdown.cycle_lowfreq) - float(lowfreq)) < 1e-6
    assert abs(float(breakdown.cycle_backproj) - float(backproj)) < 1e-6
    assert float(breakdown.cycle_lowfreq) > 0 and float(breakdown.cycle_backproj) > 0


def test_feature_loss():
    params = ParameterSet.initialize(tiny_config(), seed=0)
    extractor = lambda t: extract_features(t, params)
    lr = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(4))
    assert float(feature_loss(lr, lr, extractor, 1)) == 0.

    sr = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(5))
    expected = (downsample(extractor(sr), 2) - extractor(lr)).abs().mean()
    assert abs(float(feature_loss(sr, lr, extractor, 2)) - float(expected)) < 1e-6

    with pytest.raises(ValueError):
        feature_loss(sr[..., :48], lr, extractor, 2)


def test_mae_non_negative_and_shape_checked():
    a = torch.rand(2, 3, 4, 4, generator=torch.Generator().manual_seed(6))
    assert float(mean_absolute_error(a, a)) == 0.
    assert float(mean_absolute_error(a, a + 1e-3)) > 0
    with pytest.raises(ValueError):
        mean_absolute_error(a, a[:1])


def test_adversarial_generator():
    half = torch.tensor([.5], dtype=torch.float64)
    assert float(adversarial_loss_generator(half)) == pytest.approx(-0.6931, abs=1e-4)
    value = torch.tensor([1 - 1 / math.e], dtype=torch.float64)
    assert float(adversarial_loss_generator(value)) == pytest.approx(-1., abs=1e-12)
    tiny = torch.tensor([1e-9], dtype=torch.float64)
    assert -1e-8 < float(adversarial_loss_generator(tiny)) <= 0
    assert float(adversarial_loss_generator(half, non_saturating=True)) == \
        pytest.approx(math.log(2))
    # saturated probabilities stay finite
    assert math.isfinite(float(adversarial_loss_generator(torch.tensor([1.]))))
    for bad in ([1.5], [-.1], [float('nan')]):
        with pytest.raises(ValueError):
            adversarial_loss_generator(torch.tensor(bad))


def test_discriminator_loss():
    half = torch.tensor([.5, .5], dtype=torch.float64)
    assert float(discriminator_loss(half, half)) == pytest.approx(2 * math.log(2), abs=1e-12)
    eps = 1e-6
    perfect = discriminator_loss(torch.tensor([1 - eps], dtype=torch.float64),
                                 torch.tensor([eps], dtype=torch.float64))
    assert 0 <= float(perfect) < 1e-5

    prng = np.random.RandomState(7)
    d_real, d_fake = prng.uniform(.01, .99, 8), prng.uniform(.01, .99, 8)
    expected = -(np.log(d_real).mean() + np.log(1 - d_fake).mean())
    out = discriminator_loss(torch.from_numpy(d_real), torch.from_numpy(d_fake))
    assert abs(float(out) - expected) < 1e-9
    with pytest.raises(ValueError):
        discriminator_loss(torch.tensor([2.]), half)


def test_saturated_probabilities_are_clamped():
    # float32 sigmoid rounds to exactly 0 and 1 for large logits
    saturated = torch.sigmoid(torch.tensor([40., -200.]))
    assert saturated.tolist() == [1., 0.]
    one, zero = saturated[:1], saturated[1:]
    log_eps = math.log(1e-7)
    assert float(discriminator_loss(zero, one)) == pytest.approx(-2 * log_eps, rel=1e-5)
    assert float(discriminator_loss(one, zero)) == pytest.approx(0., abs=1e-6)
    assert float(adversarial_loss_generator(one)) == pytest.approx(log_eps, rel=1e-5)
    assert float(adversarial_loss_generator(zero, non_saturating=True)) == \
        pytest.approx(-log_eps, rel=1e-5)
    for bad in ([1. + 1e-6], [-1e-6]):
        with pytest.raises(ValueError):
            discriminator_loss(torch.tensor(bad, dtype=torch.float64),
                               torch.tensor([.5], dtype=torch.float64))


def test_total_generator_loss():
    weights = LossWeights(lambda_feat=1., eta_adv=5e-3)
    breakdown = total_generator_loss((.2, -.69, .1, .05), weights)
    assert breakdown.total == pytest.approx(.34655, abs=1e-12)
    assert breakdown.feature == .2 and breakdown.adversarial == -.69

    assert total_generator_loss((0, 0, 0, 0), weights).total == 0
    zeroed = LossWeights(lambda_feat=0, eta_adv=0)
    assert total_generator_loss((.2, -.69, .1, .05), zeroed).total == pytest.approx(.15)

    with pytest.raises(ValueError):
        total_generator_loss((float('inf'), 0, 0, 0), weights)
    with pytest.raises(ValueError):
        total_generator_loss((.1, .2), weights)


@pytest.mark.parametrize('term,slope', [('feature', 2.), ('adversarial', .01),
                                        ('cycle_lowfreq', 1.), ('cycle_backproj', 1.)])
def test_total_generator_loss_is_affine(term, slope):
    weights = LossWeights(lambda_feat=2., eta_adv=.01)
    base = {'feature': .3, 'adversarial': -.4, 'cycle_lowfreq': .2, 'cycle_backproj': .1}
    bumped = dict(base)
    bumped[term] += .5
    diff = total_generator_loss(bumped, weights).total - total_generator_loss(base, weights).total
    assert diff == pytest.approx(.5 * slope, abs=1e-12)


def test_breakdown_consistency():
    weights = LossWeights(lambda_feat=.7, eta_adv=.02, kl_weight=.3)
    prng = np.random.RandomState(8)
    for _ in range(20):
        parts = dict(zip(LossBreakdown.terms(), prng.uniform(-1, 1, 6)))
        breakdown = LossBreakdown(**parts).with_total(weights)
        recomputed = (parts['reconstruction'] + .3 * parts['kl'] + parts['cycle_lowfreq']
                      + parts['cycle_backproj'] + .7 * parts['feature']
                      + .02 * parts['adversarial'])
        assert abs(breakdown.total - recomputed) < 1e-9
        record = breakdown.to_record(5, discriminator=1.2)
        assert record['iteration'] == 5 and record['discriminator'] == 1.2
        assert LossBreakdown.from_record(record) == breakdown

    merged = LossBreakdown(kl=1.).merge(LossBreakdown(feature=2.), weights)
    assert merged.total == pytest.approx(.3 + 1.4)
    assert not LossBreakdown(kl=float('nan')).is_finite()


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda_feat=-1)
    with pytest.raises(ValueError):
        LossWeights(eta_adv=float('nan'))
