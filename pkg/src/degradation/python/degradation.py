"""Synthetic degradation X = sKY + mu: Gaussian blur (K), bicubic
down-sampling (s) and additive Gaussian noise (mu), applied in that order.
"""
import dataclasses
import logging
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage

from src.imaging.python.image import Image, load_image, save_image
from src.imaging.python.resample import bicubic_resize
from src.utils.python.math import gaussian_kernel1d
import src.utils.python.util as _utils

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DegradationSpec(object):
    """Parameters of one synthetic degradation.

    noise_sigma is on the [0, 1] scale (sigma=15 on the 0-255 scale is
    15/255 here).
    """
    blur_sigma: float = 0.
    scale: int = 1
    noise_sigma: float = 0.
    seed: int = 0

    def __post_init__(self):
        if not self.blur_sigma >= 0:
            raise ValueError('blur_sigma must be >= 0, got {0}'.format(self.blur_sigma))
        if not self.noise_sigma >= 0:
            raise ValueError('noise_sigma must be >= 0, got {0}'.format(self.noise_sigma))
        if int(self.scale) != self.scale or self.scale < 1:
            raise ValueError('scale must be an integer >= 1, got {0}'.format(self.scale))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def gaussian_blur(img, sigma):
    """Separable Gaussian blur with radius ceil(3*sigma) and replicated
    borders. sigma = 0 returns an unchanged copy."""
    if not sigma >= 0:
        raise ValueError('blur sigma must be >= 0, got {0}'.format(sigma))
    if sigma == 0:
        return img.copy()
    kernel = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(img.data, kernel, axis=0, mode='nearest')
    out = ndimage.correlate1d(out, kernel, axis=1, mode='nearest')
    return Image(out)


def add_gaussian_noise(img, sigma, seed):
    """Add i.i.d. N(0, sigma^2) noise per pixel and channel. The result is
    not clamped.

    Parameters
    ----------
    img : Image
    sigma : float
        standard deviation on the [0, 1] scale
    seed : int or sequence of int
        seed of the noise generator; equal seeds give identical output
    """
    if not sigma >= 0:
        raise ValueError('noise sigma must be >= 0, got {0}'.format(sigma))
    if sigma == 0:
        return img.copy()
    prng = np.random.RandomState(seed)
    return Image(img.data + prng.normal(0., sigma, size=img.data.shape))


def crop_to_multiple(img, scale):
    """Center crop so both dimensions are multiples of scale."""
    height = img.height - img.height % scale
    width = img.width - img.width % scale
    if height < 1 or width < 1:
        raise ValueError('image {0}x{1} is smaller than the scale factor {2}'.format(
            img.height, img.width, scale))
    top = (img.height - height) // 2
    left = (img.width - width) // 2
    if (height, width) == (img.height, img.width):
        return img
    return img.crop(top, left, height, width)


def degrade(img, spec):
    """Apply X = s(K(Y)) + mu.

    Returns an image of exactly (H/scale, W/scale) after the
    crop-to-multiple step.
    """
    img = crop_to_multiple(img, spec.scale)
    out = gaussian_blur(img, spec.blur_sigma)
    if spec.scale != 1:
        out = bicubic_resize(out, Fraction(1, spec.scale), antialias=True)
    return add_gaussian_noise(out, spec.noise_sigma, spec.seed)


@_utils.log_error_decorator
def _degrade_file(in_dir, out_dir, name, spec):
    out_path = os.path.join(out_dir, name)
    save_image(degrade(load_image(os.path.join(in_dir, name)), spec), out_path)
    return out_path


def main(opts):
    """Degrade every PNG of a directory (the degrade sub-command)."""
    in_dir, out_dir = opts['in_dir'], opts['out_dir']
    names = _utils.list_pngs(in_dir)
    if not names:
        raise ValueError('no PNG images found in {0}'.format(in_dir))
    _utils.make_result_dir(out_dir)

    base = DegradationSpec(blur_sigma=opts['blur_sigma'],
                           scale=opts['scale'],
                           noise_sigma=opts['noise_sigma'],
                           seed=opts['seed'])
    logger.info('Degrading {0} images with {1} . . .'.format(len(names), base))

    outputs, failures = [], []
    for name in names:
        spec = base.replace(seed=_utils.stable_seed(base.seed, name))
        try:
            outputs.append(_degrade_file(in_dir, out_dir, name, spec))
        except Exception:
            failures.append(name)

    _utils.write_run_manifest(out_dir, 'degrade', opts, outputs,
                              inputs=[in_dir],
                              config=dataclasses.asdict(base),
                              seed=base.seed)
    logger.info('Finished degrading ({0} written, {1} failed).'.format(
        len(outputs), len(failures)))
    return failures
