"""The infer sub-command: denoise, super-resolve, or both, every PNG of a
directory with a trained checkpoint."""
import logging
import os

import torch
import torch.nn.functional as F

from src.imaging.python.image import load_image, save_image, image_to_tensor, tensor_to_image
from src.imaging.python.resample import bicubic_resize
from src.models.python.model import denoise_inference, super_resolve, DECODER_STRIDE
from src.train.python.checkpoint import load_checkpoint
import src.utils.python.util as _utils

logger = logging.getLogger(__name__)

MODES = ('denoise', 'sr', 'denoise+sr', 'bicubic')


def pad_to_multiple(x, multiple=DECODER_STRIDE):
    """Replicate-pad the bottom and right edges of an (N, C, H, W) batch
    up to the next multiple."""
    height, width = x.shape[-2:]
    pad_h = -height % multiple
    pad_w = -width % multiple
    if not (pad_h or pad_w):
        return x
    return F.pad(x, (0, pad_w, 0, pad_h), mode='replicate')


def denoise_image(img, params, latent_mode='prior-mean', seed=0):
    x = image_to_tensor(img)
    out = denoise_inference(pad_to_multiple(x), params, mode=latent_mode, seed=seed)
    return tensor_to_image(out[..., :img.height, :img.width])


def super_resolve_image(img, params):
    return tensor_to_image(super_resolve(image_to_tensor(img), params))


def restore(img, params, mode, latent_mode='prior-mean', seed=0, alpha=None):
    """Apply one inference mode to an Image.

    Parameters
    ----------
    img : Image
    params : ParameterSet or None
        not needed by the bicubic mode
    mode : str
        denoise, sr, denoise+sr or bicubic
    latent_mode : str
        prior-mean or prior-sample
    seed : int
        seed of the prior sample
    alpha : int
        magnification of the bicubic mode (defaults to the model's)
    """
    if mode not in MODES:
        raise ValueError('mode must be one of {0}, got {1}'.format(MODES, mode))
    with torch.no_grad():
        if mode == 'bicubic':
            if alpha is None:
                alpha = params.config.alpha if params is not None else 4
            return bicubic_resize(img, alpha)
        if mode in ('denoise', 'denoise+sr'):
            img = denoise_image(img, params, latent_mode, seed)
        if mode in ('sr', 'denoise+sr'):
            img = super_resolve_image(img, params)
    return img


def main(opts):
    """Run inference over a directory.

    Returns
    -------
    failures : list of str
        names of the files that could not be processed
    """
    mode = opts['mode']
    if mode not in MODES:
        raise ValueError('mode must be one of {0}, got {1}'.format(MODES, mode))
    params = None
    if opts.get('checkpoint'):
        params = load_checkpoint(opts['checkpoint']).params
        params.eval()
    elif mode != 'bicubic':
        raise ValueError('mode {0} needs a checkpoint'.format(mode))

    in_dir, out_dir = opts['in_dir'], opts['out_dir']
    names = _utils.list_pngs(in_dir)
    if not names:
        raise ValueError('no PNG images found in {0}'.format(in_dir))
    _utils.make_result_dir(out_dir)
    latent_mode = opts.get('latent_mode') or 'prior-mean'
    seed = opts.get('seed') or 0
    logger.info('Running {0} inference on {1} images . . .'.format(mode, len(names)))

    outputs, failures = [], []
    for name in names:
        try:
            img = load_image(os.path.join(in_dir, name))
            out = restore(img, params, mode,
                          latent_mode=latent_mode,
                          seed=_utils.stable_seed(seed, name),
                          alpha=opts.get('alpha'))
            out_path = os.path.join(out_dir, name)
            save_image(out, out_path)
            outputs.append(out_path)
            logger.debug('{0}: {1}x{2} -> {3}x{4}'.format(name, img.height, img.width,
                                                          out.height, out.width))
        except Exception as e:
            logger.error('{0}: {1}'.format(name, e))
            failures.append(name)

    inputs = [in_dir] + ([opts['checkpoint']] if opts.get('checkpoint') else [])
    _utils.write_run_manifest(out_dir, 'infer', opts, outputs, inputs=inputs, seed=seed)
    logger.info('Finished inference ({0} written, {1} failed).'.format(
        len(outputs), len(failures)))
    return failures
