"""Training corpora and seeded patch sampling."""
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from src.imaging.python.image import load_image
import src.utils.python.util as _utils

logger = logging.getLogger(__name__)


def step_seed(seed, stream, iteration, index=0):
    """Seed of one random draw of one training step.

    Depends only on the run seed, the named stream (lr, ref, noise,
    latent, ...), the iteration and the position in the batch, so a
    resumed run repeats the draws of an uninterrupted one.
    """
    return _utils.stable_seed(seed, '{0}:{1}:{2}'.format(stream, iteration, index))


@dataclass
class PatchCrop(object):
    """A sampled patch and where it came from."""
    path: str
    top: int
    left: int
    image: object


@dataclass
class DatasetHandle(object):
    """Source (degraded / LR) and target (clean reference) image domains."""
    source_dir: str = ''
    target_dir: str = ''
    source_files: list = field(default_factory=list)
    target_files: list = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dirs(cls, source_dir='', target_dir=''):
        source = [os.path.join(source_dir, f) for f in _utils.list_pngs(source_dir)] if source_dir else []
        target = [os.path.join(target_dir, f) for f in _utils.list_pngs(target_dir)] if target_dir else []
        logger.info('Dataset: {0} source and {1} target images'.format(len(source), len(target)))
        return cls(source_dir, target_dir, source, target)

    def require(self, *domains):
        """Raise if a domain needed by a training phase has no images."""
        for domain in domains:
            files = self.source_files if domain == 'source' else self.target_files
            if not files:
                directory = self.source_dir if domain == 'source' else self.target_dir
                raise ValueError('no {0} images available (directory "{1}")'.format(domain, directory))

    def image(self, path):
        if path not in self._cache:
            self._cache[path] = load_image(path)
        return self._cache[path]


def sample_crop(ds, files, height, width, seed):
    """Uniformly pick an image large enough for the crop, then a uniform
    top-left corner.

    Parameters
    ----------
    ds : DatasetHandle
    files : list of str
        candidate image paths
    height : int
    width : int
    seed : int

    Returns
    -------
    crop : PatchCrop
    """
    eligible = [p for p in files
                if ds.image(p).height >= height and ds.image(p).width >= width]
    if not eligible:
        raise ValueError('no image is at least {0}x{1}'.format(height, width))
    prng = np.random.RandomState(seed)
    path = eligible[prng.randint(len(eligible))]
    img = ds.image(path)
    top = prng.randint(img.height - height + 1)
    left = prng.randint(img.width - width + 1)
    return PatchCrop(path, top, left, img.crop(top, left, height, width))


def sample_lr_patch(ds, size, seed):
    """size x size crop from the source domain."""
    ds.require('source')
    return sample_crop(ds, ds.source_files, size, size, seed).image


def sample_reference_patch(ds, h, w, seed):
    """h x w crop from the target domain."""
    ds.require('target')
    return sample_crop(ds, ds.target_files, h, w, seed).image
