import src.utils.python.plot as myplt
import src.utils.python.util as _utils
import src.train.python.plot_data as train_plot
from src.imaging.python.image import load_image
from src.metrics.python.metrics import read_report
import logging
import os

logger = logging.getLogger(__name__)


def metric_barplots(report, psnr_path, ssim_path):
    """Per-image PSNR-Y and SSIM bars of a metric report."""
    logger.info('Plotting metric bars for {0} images . . .'.format(report.count))
    myplt.barplot(report.rows[['psnr_y']],
                  psnr_path,
                  title='PSNR (Y channel), mean {0:.2f} dB'.format(report.means['psnr_y']),
                  xlabel='Image',
                  ylabel='PSNR (dB)')
    myplt.barplot(report.rows[['ssim']],
                  ssim_path,
                  title='SSIM, mean {0:.4f}'.format(report.means['ssim']),
                  xlabel='Image',
                  ylabel='SSIM')


def comparison_strips(dirs, out_dir, suffix):
    """One side-by-side figure per file name present in every directory.

    Panels are shown in the order of dirs (e.g. input | output | reference)
    and scaled to a common height.
    """
    if not 1 <= len(dirs) <= 3:
        raise ValueError('comparison needs one to three directories, got {0}'.format(len(dirs)))
    names = set(_utils.list_pngs(dirs[0]))
    for d in dirs[1:]:
        names &= set(_utils.list_pngs(d))
    if not names:
        raise ValueError('no file name is shared by {0}'.format(', '.join(dirs)))

    titles = [os.path.basename(os.path.normpath(d)) for d in dirs]
    outputs = []
    for name in sorted(names):
        panels = [load_image(os.path.join(d, name)).data for d in dirs]
        height = max(p.shape[0] for p in panels)
        path = os.path.join(out_dir, os.path.splitext(name)[0] + suffix)
        myplt.image_strip(panels, titles, path, height=height)
        outputs.append(path)
    logger.info('Wrote {0} comparison figures.'.format(len(outputs)))
    return outputs


def main(opts):
    """The plot sub-command."""
    cfg_opts = _utils.get_output_config('plot')
    out_dir = opts['out_dir']
    _utils.make_result_dir(out_dir)
    outputs = []

    if opts.get('loss_log'):
        path = os.path.join(out_dir, cfg_opts['loss_plot'])
        train_plot.loss_curves(train_plot.read_loss_log(opts['loss_log']), path,
                               window=opts.get('window') or 100)
        outputs.append(path)
    if opts.get('report'):
        psnr_path = os.path.join(out_dir, cfg_opts['psnr_plot'])
        ssim_path = os.path.join(out_dir, cfg_opts['ssim_plot'])
        metric_barplots(read_report(opts['report']), psnr_path, ssim_path)
        outputs.extend([psnr_path, ssim_path])
    if opts.get('compare'):
        outputs.extend(comparison_strips(opts['compare'], out_dir, cfg_opts['comparison_suffix']))
    if not outputs:
        raise ValueError('nothing to plot: give --loss-log, --report or --compare')

    inputs = [p for p in [opts.get('loss_log'), opts.get('report')] + list(opts.get('compare') or []) if p]
    _utils.write_run_manifest(out_dir, 'plot', opts, [p for p in outputs if os.path.isfile(p)],
                              inputs=inputs)
    return outputs
