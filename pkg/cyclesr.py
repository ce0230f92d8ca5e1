#!/usr/bin/env python
# import print function for printing to stderr
from __future__ import print_function
# force project root directory to be in path. Otherwise
# package imports will fail if cyclesr.py is ran from another
# directory.
import os
import sys
sys.path.append(os.path.abspath(os.path.dirname(__file__)))

# regular imports
import logging
import traceback
import argparse

# import all the modules for cyclesr
import src
import src.utils.python.util as _utils
import src.degradation.python.degradation
import src.train.python.train
import src.infer.python.infer
import src.metrics.python.metrics
import src.metrics.python.plot_data
from src.train.python.trainer import TrainingDivergedError

# define exit status
EXCEPTION_EXIT_STATUS = 1
BAD_ARG_EXIT_STATUS = 2
FILE_FAILURE_EXIT_STATUS = 3
DIVERGED_EXIT_STATUS = 4


def handle_uncaught_exceptions(t, ex, tb):
    """Handle any uncaught exceptions."""
    traceback_contents = ''.join(traceback.format_list(traceback.extract_tb(tb)))
    print('*'*40, file=sys.stderr)
    print('AN ERROR HAS OCCURRED: check the log file', file=sys.stderr)
    print('*'*40, file=sys.stderr)
    logging.error('Type: ' + str(t))
    logging.error('Exception: ' + str(ex))
    logging.error('Traceback:\n ' + traceback_contents)
    sys.exit(EXCEPTION_EXIT_STATUS)


def _file_status(failures):
    """Exit status of a corpus command given its failed file names."""
    if failures:
        logging.error('{0} file(s) failed: {1}'.format(len(failures), ', '.join(failures)))
        return FILE_FAILURE_EXIT_STATUS
    return 0


def _degrade(opts):
    """Wrapper function to call the degradation main function."""
    return _file_status(src.degradation.python.degradation.main(opts))


def _train(opts):
    """Wrapper function to call script in the train folder."""
    src.train.python.train.main(opts)
    return 0


def _infer(opts):
    """Wrapper function to call script in the infer folder."""
    return _file_status(src.infer.python.infer.main(opts))


def _evaluate(opts):
    """Wrapper function to call the metrics main function."""
    src.metrics.python.metrics.main(opts)
    return 0


def _plot(opts):
    """Wrapper function to call the plotting main function."""
    src.metrics.python.plot_data.main(opts)
    return 0


def _replay(opts):
    """Re-execute a sub-command from its run manifest."""
    manifest = _utils.read_run_manifest(opts['manifest'])
    subcommand = manifest['subcommand']
    if subcommand not in COMMANDS or subcommand == 'replay':
        raise _utils.ConfigError('manifest holds no replayable sub-command: {0}'.format(subcommand))
    replay_opts = dict(manifest['options'])
    if opts.get('out_dir'):
        replay_opts['out_dir'] = opts['out_dir']
    if subcommand == 'train' and manifest.get('config'):
        replay_opts['config_snapshot'] = manifest['config']
    logging.info('Replaying "{0}" from {1}'.format(subcommand, opts['manifest']))
    return COMMANDS[subcommand](replay_opts)


COMMANDS = {'degrade': _degrade, 'train': _train, 'infer': _infer,
            'evaluate': _evaluate, 'plot': _plot, 'replay': _replay}


def build_parser():
    parser = argparse.ArgumentParser(description='Run the cyclesr joint denoising and '
                                     'super-resolution pipeline')
    parser.add_argument('-ll', '--log-level',
                        type=str,
                        action='store',
                        default='',
                        help='Write a log file (--log-level=DEBUG for debug mode, '
                        '--log-level=INFO for info mode)')
    parser.add_argument('-l', '--log',
                        type=str,
                        action='store',
                        default='stdout',
                        help='Path to log file. (accepts stdout)')
    parser.add_argument('-v', '--verbose',
                        action='store_true',
                        default=False,
                        help='Flag for more verbose log output')
    subparser = parser.add_subparsers(dest='command', help='sub-command help')
    subparser.required = True

    # degrade sub-command
    help_string = ('Synthesize degraded images (blur, bicubic down-sampling, '
                   'additive Gaussian noise) from a directory of PNGs.')
    parser_degrade = subparser.add_parser('degrade',
                                          help=help_string,
                                          description=help_string)
    parser_degrade.add_argument('-i', '--in-dir',
                                type=str, required=True,
                                help='Directory of clean PNG images')
    parser_degrade.add_argument('-o', '--out-dir',
                                type=str, required=True,
                                help='Output directory for degraded images')
    parser_degrade.add_argument('-b', '--blur-sigma',
                                type=float, default=0.,
                                help='Gaussian blur std-dev in pixels (default: 0)')
    parser_degrade.add_argument('-s', '--scale',
                                type=int, default=1,
                                help='Integer down-sampling factor (default: 1)')
    parser_degrade.add_argument('-n', '--noise-sigma',
                                type=float, default=0.,
                                help='Noise std-dev on the [0, 1] scale, e.g. 0.0588 '
                                'for sigma=15 on the 0-255 scale (default: 0)')
    parser_degrade.add_argument('-rs', '--seed',
                                type=int, default=0,
                                help='Base seed; per-file seeds derive from it (default: 0)')
    parser_degrade.set_defaults(func=_degrade)

    # train sub-command
    help_string = ('Train one phase: dae (denoiser pre-training), sr (cycle + '
                   'adversarial SR training) or joint (fine-tune both).')
    parser_train = subparser.add_parser('train',
                                        help=help_string,
                                        description=help_string)
    parser_train.add_argument('-p', '--phase',
                              type=str, required=True,
                              choices=['dae', 'sr', 'joint'],
                              help='Training phase')
    parser_train.add_argument('-o', '--out-dir',
                              type=str, required=True,
                              help='Output directory for checkpoint, loss log and plots')
    parser_train.add_argument('--preset',
                              type=str, default='desk',
                              help='Named configuration preset in config/presets (default: desk)')
    parser_train.add_argument('-c', '--config',
                              type=str, default=None,
                              help='Run configuration file overriding the preset')
    parser_train.add_argument('-r', '--resume',
                              type=str, default=None,
                              help='Continue training from a checkpoint of the same phase')
    parser_train.add_argument('--init',
                              type=str, default=None,
                              help='Checkpoint of the previous phase (dae for sr, sr for joint)')
    parser_train.add_argument('--source-dir', type=str, default=None,
                              help='Degraded / LR domain images')
    parser_train.add_argument('--target-dir', type=str, default=None,
                              help='Clean reference domain images')
    for flag, kind in [('--lr', float), ('--batch', int), ('--iterations', int),
                       ('--weight-decay', float), ('--lr-patch', int), ('--ref-patch', int),
                       ('--alpha', int), ('--seed', int), ('--log-every', int),
                       ('--latent-len', int), ('--lambda-feat', float), ('--eta-adv', float),
                       ('--kl-weight', float), ('--blur-sigma', float), ('--noise-sigma', float)]:
        parser_train.add_argument(flag, type=kind, default=None,
                                  help='Override the configuration value')
    parser_train.add_argument('--pairing', type=str, default=None,
                              choices=['synthetic-paired', 'unpaired-reference', 'supervised-hr'],
                              help='How DAE / SR training inputs are paired')
    parser_train.add_argument('--denoiser-kind', type=str, default=None,
                              choices=['cvae', 'plain-cnn'],
                              help='Denoiser architecture')
    parser_train.add_argument('--encoder-kind', type=str, default=None,
                              choices=['small-conv', 'frozen-pretrained'],
                              help='Encoder architecture')
    parser_train.add_argument('--encoder-weights', type=str, default=None,
                              help='Weight file of a frozen-pretrained encoder')
    parser_train.add_argument('--train-decoder', action='store_true', default=None,
                              help='Also update the denoiser during SR training')
    parser_train.add_argument('--decoupled-weight-decay', action='store_true', default=None,
                              help='Use decoupled (AdamW) weight decay')
    parser_train.add_argument('--non-saturating', action='store_true', default=None,
                              help='Use -log(D) as the generator adversarial term')
    parser_train.set_defaults(func=_train)

    # infer sub-command
    help_string = 'Denoise and/or super-resolve a directory of PNGs.'
    parser_infer = subparser.add_parser('infer',
                                        help=help_string,
                                        description=help_string)
    parser_infer.add_argument('-k', '--checkpoint',
                              type=str, default=None,
                              help='Trained checkpoint (not needed for bicubic)')
    parser_infer.add_argument('-i', '--in-dir', type=str, required=True,
                              help='Directory of input PNG images')
    parser_infer.add_argument('-o', '--out-dir', type=str, required=True,
                              help='Output directory')
    parser_infer.add_argument('-m', '--mode', type=str, default='denoise+sr',
                              choices=['denoise', 'sr', 'denoise+sr', 'bicubic'],
                              help='Inference mode (default: denoise+sr)')
    parser_infer.add_argument('--latent-mode', type=str, default='prior-mean',
                              choices=['prior-mean', 'prior-sample'],
                              help='Latent used by the denoiser (default: prior-mean)')
    parser_infer.add_argument('--alpha', type=int, default=None,
                              help='Magnification of bicubic mode (default: model alpha or 4)')
    parser_infer.add_argument('-rs', '--seed', type=int, default=0,
                              help='Seed of prior-sample mode (default: 0)')
    parser_infer.set_defaults(func=_infer)

    # evaluate sub-command
    help_string = 'Compute PSNR (Y and RGB) and SSIM of predictions against references.'
    parser_evaluate = subparser.add_parser('evaluate',
                                           help=help_string,
                                           description=help_string)
    parser_evaluate.add_argument('-p', '--pred-dir', type=str, required=True,
                                 help='Directory of predicted PNG images')
    parser_evaluate.add_argument('-r', '--ref-dir', type=str, required=True,
                                 help='Directory of reference PNG images (same file names)')
    parser_evaluate.add_argument('-o', '--out-dir', type=str, required=True,
                                 help='Output directory for the metric table and summary')
    parser_evaluate.set_defaults(func=_evaluate)

    # plot sub-command
    help_string = 'Plot loss curves, metric bars and side-by-side comparisons.'
    parser_plot = subparser.add_parser('plot',
                                       help=help_string,
                                       description=help_string)
    parser_plot.add_argument('-o', '--out-dir', type=str, required=True,
                             help='Output directory for figures')
    parser_plot.add_argument('--loss-log', type=str, default=None,
                             help='Loss log written by train')
    parser_plot.add_argument('-w', '--window', type=int, default=100,
                             help='Moving average window of loss curves (default: 100)')
    parser_plot.add_argument('--report', type=str, default=None,
                             help='Metric table written by evaluate')
    parser_plot.add_argument('--compare', type=str, nargs='+', default=None,
                             help='One to three directories to show side by side')
    parser_plot.set_defaults(func=_plot)

    # replay sub-command
    help_string = 'Re-run a sub-command from the run manifest it wrote.'
    parser_replay = subparser.add_parser('replay',
                                         help=help_string,
                                         description=help_string)
    parser_replay.add_argument('manifest', type=str,
                               help='Run manifest (manifest.json)')
    parser_replay.add_argument('-o', '--out-dir', type=str, default=None,
                               help='Write to this directory instead of the original one')
    parser_replay.set_defaults(func=_replay)
    return parser


def run(argv):
    """Parse arguments, run the sub-command and return the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)  # parse the command line options

    # handle logging
    if args.log_level or args.log:
        if args.log:
            log_file = args.log
        else:
            log_file = ''  # auto-name the log file
    else:
        log_file = os.devnull
    log_level = args.log_level or 'INFO'
    _utils.start_logging(log_file=log_file,
                         log_level=log_level,
                         verbose=args.verbose)  # start logging

    # log user entered command
    logging.info('Version: {0}'.format(src.__version__))
    logging.info('Command: {0}'.format(' '.join(['cyclesr.py'] + list(argv))))

    opts = vars(args)  # create a dictionary for CLI options
    try:
        status = args.func(opts)  # run function corresponding to user's command
    except _utils.ConfigError as e:
        logging.error('Bad configuration: {0}'.format(e))
        print('ERROR: {0}'.format(e), file=sys.stderr)
        return BAD_ARG_EXIT_STATUS
    except TrainingDivergedError as e:
        logging.error(str(e))
        return DIVERGED_EXIT_STATUS
    if status == 0:
        logging.info('FINISHED SUCCESSFULLY!')
    return status


if __name__ == '__main__':
    # initializations
    sys.excepthook = handle_uncaught_exceptions  # handle exceptions
    sys.exit(run(sys.argv[1:]))
