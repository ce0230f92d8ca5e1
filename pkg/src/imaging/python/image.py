"""Image container, PNG input/output and color conversion.

Every image in cyclesr is an H x W x 3 array of reals on the [0, 1]
scale. Values may leave the range during computation; clamping happens
only when an image is saved or enters a metric.
"""
import os
import logging
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image as PILImage

logger = logging.getLogger(__name__)

# BT.601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


class ImageFormatError(ValueError):
    """The file is not an 8-bit RGB (or grayscale) PNG."""


@dataclass
class Image(object):
    """H x W x 3 raster of real values."""
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError('image data must be H x W x 3, got shape {0}'.format(self.data.shape))
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError('image must have at least one row and column')

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def crop(self, top, left, height, width):
        return Image(self.data[top:top+height, left:left+width].copy())

    def copy(self):
        return Image(self.data.copy())


@dataclass
class LumaPlane(object):
    """H x W plane of luma values."""
    data: np.ndarray

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]


def load_image(path):
    """Read an 8-bit PNG as an Image with values v/255.

    Grayscale files are promoted to RGB by channel replication.

    Parameters
    ----------
    path : str
        path to a PNG file

    Returns
    -------
    img : Image
    """
    if not os.path.isfile(path):
        raise FileNotFoundError('image not found: {0}'.format(path))
    try:
        pil_img = PILImage.open(path)
    except Exception as e:
        raise ImageFormatError('{0}: unreadable image ({1})'.format(path, e))
    with pil_img:
        if pil_img.format != 'PNG':
            raise ImageFormatError('{0}: expected PNG, found {1}'.format(path, pil_img.format))
        if pil_img.mode == 'L':
            pil_img = pil_img.convert('RGB')
        elif pil_img.mode != 'RGB':
            # palette, alpha, 16-bit and 1-bit files
            raise ImageFormatError('{0}: unsupported mode {1}, need 8-bit RGB or '
                                   'grayscale'.format(path, pil_img.mode))
        width, height = pil_img.size
        if width < 1 or height < 1:
            raise ImageFormatError('{0}: zero-dimension image'.format(path))
        arr = np.asarray(pil_img, dtype=np.uint8)
    return Image(arr.astype(np.float64) / 255.)


def quantize(data):
    """Clamp to [0, 1] and map to 8-bit with round-half-up."""
    clamped = np.clip(data, 0., 1.)
    return np.floor(clamped * 255. + .5).astype(np.uint8)


def save_image(img, path):
    """Write an Image as an 8-bit RGB PNG (values clamped, then
    quantized by round(v*255))."""
    arr = quantize(img.data)
    PILImage.fromarray(arr).save(path, format='PNG')


def rgb_to_luma(img):
    """BT.601 luma: Y = 0.299 R + 0.587 G + 0.114 B."""
    return LumaPlane(img.data @ LUMA_WEIGHTS)


def image_to_tensor(img, dtype=torch.float32):
    """Image -> (1, 3, H, W) tensor."""
    arr = np.ascontiguousarray(img.data.transpose(2, 0, 1))
    return torch.from_numpy(arr).to(dtype).unsqueeze(0)


def images_to_tensor(images, dtype=torch.float32):
    """List of equally sized Images -> (N, 3, H, W) tensor."""
    return torch.cat([image_to_tensor(img, dtype) for img in images], dim=0)


def tensor_to_image(tensor, index=0):
    """One sample of an (N, 3, H, W) tensor (or a (3, H, W) tensor) -> Image."""
    t = tensor.detach().cpu()
    if t.dim() == 4:
        t = t[index]
    return Image(t.to(torch.float64).numpy().transpose(1, 2, 0))
