"""Separable bicubic resampling, the down-sampling operator s of cyclesr.

The kernel is the cubic convolution kernel with a = -0.5. Each output
sample at position i maps to the source coordinate (i + 0.5)/scale - 0.5.
When antialiasing a reduction (scale < 1) the kernel is stretched by
1/scale. Source coordinates outside the image are clamped to the border.

Resampling is expressed as two weight matrices (rows, columns) so the
same operator acts on numpy images and, differentiably, on torch tensors.
"""
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
import torch

from src.imaging.python.image import Image
from src.utils.python.math import cubic_weight

KERNEL_SUPPORT = 2.


def output_size(size, scale):
    """round(size * scale), rounding halves up."""
    return int(math.floor(Fraction(size) * Fraction(scale) + Fraction(1, 2)))


def _check_scale(scale):
    if not scale > 0:
        raise ValueError('scale must be positive, got {0}'.format(scale))


@lru_cache(maxsize=256)
def _weights(in_size, out_size, scale, antialias):
    support = KERNEL_SUPPORT
    kernel_scale = 1.
    if antialias and scale < 1:
        support = KERNEL_SUPPORT / scale
        kernel_scale = scale

    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    for i in range(out_size):
        center = (i + .5) / scale - .5
        taps = np.arange(int(math.floor(center - support)),
                         int(math.ceil(center + support)) + 1)
        w = cubic_weight((taps - center) * kernel_scale)
        np.add.at(matrix[i], np.clip(taps, 0, in_size - 1), w)
        matrix[i] /= matrix[i].sum()
    matrix.setflags(write=False)
    return matrix


def weight_matrix(in_size, out_size, scale, antialias=False):
    """Resampling matrix of shape (out_size, in_size); each row sums to 1.

    Parameters
    ----------
    in_size : int
        source length along one axis
    out_size : int
        destination length along that axis
    scale : float
        destination/source magnification used for coordinate mapping
    antialias : bool
        widen the kernel by 1/scale when reducing

    Returns
    -------
    matrix : np.array (read-only)
    """
    _check_scale(scale)
    return _weights(int(in_size), int(out_size), float(scale), bool(antialias))


def _target_dims(height, width, scale):
    _check_scale(scale)
    out_h, out_w = output_size(height, scale), output_size(width, scale)
    if out_h < 1 or out_w < 1:
        raise ValueError('scale {0} maps {1}x{2} to an empty image'.format(scale, height, width))
    return out_h, out_w


def resize_array(data, scale, antialias=False):
    """Resample an H x W x C array by scale."""
    height, width = data.shape[:2]
    out_h, out_w = _target_dims(height, width, scale)
    rows = weight_matrix(height, out_h, scale, antialias)
    cols = weight_matrix(width, out_w, scale, antialias)
    tmp = np.einsum('oh,hwc->owc', rows, data)
    return np.einsum('pw,owc->opc', cols, tmp)


def bicubic_resize(img, scale, antialias=False):
    """Bicubic resampling of an Image.

    Parameters
    ----------
    img : Image
    scale : float or Fraction
        magnification; output dims are round(H*scale) x round(W*scale)
    antialias : bool
        widen the kernel when scale < 1

    Returns
    -------
    resized : Image
    """
    return Image(resize_array(img.data, scale, antialias))


def resize_tensor(x, scale, antialias=False):
    """Differentiable bicubic resampling of an (N, C, H, W) tensor."""
    height, width = x.shape[-2:]
    out_h, out_w = _target_dims(height, width, scale)
    rows = torch.from_numpy(np.array(weight_matrix(height, out_h, scale, antialias))).to(x)
    cols = torch.from_numpy(np.array(weight_matrix(width, out_w, scale, antialias))).to(x)
    tmp = torch.einsum('oh,nchw->ncow', rows, x)
    return torch.einsum('pw,ncow->ncop', cols, tmp)
