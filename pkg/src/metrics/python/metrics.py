"""Image quality metrics (PSNR, SSIM), corpus evaluation and the
evaluate sub-command.

Metrics clamp their inputs to [0, 1]; losses never do.
"""
import json
import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import signal

from src.imaging.python.image import Image, LUMA_WEIGHTS, load_image, rgb_to_luma
from src.utils.python.math import gaussian_window2d
import src.utils.python.util as _utils

logger = logging.getLogger(__name__)

PSNR_CAP = 100.
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = .01, .03
CHANNELS = ('luma', 'rgb')
COLUMNS = ['psnr_y', 'psnr_rgb', 'ssim']


class CorpusMismatchError(ValueError):
    """Prediction and reference directories do not pair up."""

    def __init__(self, pred_dir, ref_dir, unmatched):
        self.unmatched = list(unmatched)
        msg = 'no matching reference for {0} between {1} and {2}'.format(
            ', '.join(self.unmatched) or 'any file', pred_dir, ref_dir)
        super(CorpusMismatchError, self).__init__(msg)


def _check_dims(a, b):
    if a.shape != b.shape:
        raise ValueError('image dimensions differ: {0} vs {1}'.format(a.shape, b.shape))


def psnr(a, b, channel='luma'):
    """Peak signal-to-noise ratio in dB (peak 1.0), capped at 100 dB.

    Parameters
    ----------
    a : Image
    b : Image
    channel : str, ['luma' | 'rgb']
        compare BT.601 luma or all three channels

    Returns
    -------
    value : float
    """
    if channel not in CHANNELS:
        raise ValueError('channel must be one of {0}'.format(CHANNELS))
    _check_dims(a, b)
    x = np.clip(a.data, 0., 1.)
    y = np.clip(b.data, 0., 1.)
    if channel == 'luma':
        x, y = x @ LUMA_WEIGHTS, y @ LUMA_WEIGHTS
    mse = np.mean((x - y) ** 2)
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10. * math.log10(1. / mse))


def ssim(a, b):
    """Luma SSIM with an 11x11 Gaussian window (sigma 1.5), averaged over
    the valid window positions."""
    _check_dims(a, b)
    if min(a.height, a.width) < SSIM_WINDOW:
        raise ValueError('SSIM needs images of at least {0}x{0}'.format(SSIM_WINDOW))
    x = rgb_to_luma(Image(np.clip(a.data, 0., 1.))).data
    y = rgb_to_luma(Image(np.clip(b.data, 0., 1.))).data
    window = gaussian_window2d(SSIM_WINDOW, SSIM_SIGMA)

    def filt(img):
        return signal.convolve2d(img, window, mode='valid')

    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    mu_x, mu_y = filt(x), filt(y)
    var_x = filt(x * x) - mu_x ** 2
    var_y = filt(y * y) - mu_y ** 2
    cov = filt(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


@dataclass
class MetricReport(object):
    """Per-image metrics (data frame indexed by filename) and their means."""
    rows: pd.DataFrame

    @property
    def means(self):
        return self.rows[COLUMNS].mean()

    @property
    def count(self):
        return len(self.rows)

    def to_table(self):
        table = self.rows[COLUMNS].copy()
        table.loc['MEAN'] = self.means
        table.index.name = 'filename'
        return table

    def summary(self):
        means = self.means
        return {'count': self.count,
                'psnr_y': float(means['psnr_y']),
                'psnr_rgb': float(means['psnr_rgb']),
                'ssim': float(means['ssim'])}


def evaluate_pair(pred, ref):
    return {'psnr_y': psnr(pred, ref, 'luma'),
            'psnr_rgb': psnr(pred, ref, 'rgb'),
            'ssim': ssim(pred, ref)}


def evaluate_corpus(pred_dir, ref_dir):
    """Metrics for every prediction with a same-named reference.

    Raises CorpusMismatchError listing prediction files without a
    reference, or naming both directories when nothing matches.
    """
    preds = _utils.list_pngs(pred_dir)
    refs = set(_utils.list_pngs(ref_dir))
    matched = [f for f in preds if f in refs]
    unmatched = [f for f in preds if f not in refs]
    if not matched or unmatched:
        raise CorpusMismatchError(pred_dir, ref_dir, unmatched)

    rows = {}
    for name in matched:
        rows[name] = evaluate_pair(load_image(os.path.join(pred_dir, name)),
                                   load_image(os.path.join(ref_dir, name)))
        logger.debug('{0}: {1}'.format(name, rows[name]))
    df = pd.DataFrame.from_dict(rows, orient='index')[COLUMNS]
    df.index.name = 'filename'
    return MetricReport(df)


def read_report(table_path):
    """Metric table CSV -> MetricReport (the MEAN row is dropped)."""
    df = pd.read_csv(table_path, index_col=0)
    return MetricReport(df.drop('MEAN', errors='ignore'))


def main(opts):
    """The evaluate sub-command."""
    cfg_opts = _utils.get_output_config('evaluate')
    out_dir = opts['out_dir']
    _utils.make_result_dir(out_dir)

    logger.info('Evaluating {0} against {1} . . .'.format(opts['pred_dir'], opts['ref_dir']))
    report = evaluate_corpus(opts['pred_dir'], opts['ref_dir'])

    table_path = os.path.join(out_dir, cfg_opts['table'])
    report.to_table().to_csv(table_path)
    summary_path = os.path.join(out_dir, cfg_opts['summary'])
    with open(summary_path, 'w') as handle:
        json.dump(report.summary(), handle, indent=2)
    logger.info('Mean over {count} images: PSNR-Y {psnr_y:.3f} dB, PSNR-RGB {psnr_rgb:.3f} dB, '
                'SSIM {ssim:.4f}'.format(**report.summary()))

    _utils.write_run_manifest(out_dir, 'evaluate', opts, [table_path, summary_path],
                              inputs=[opts['pred_dir'], opts['ref_dir']])
    return report
