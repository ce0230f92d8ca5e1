import src.utils.python.plot as myplt
import src.utils.python.math as mymath
from src.losses.python.losses import LossBreakdown
import pandas as pd
import logging
import io

logger = logging.getLogger(__name__)


def read_loss_log(path):
    """Loss log (JSON lines) -> data frame indexed by iteration."""
    with open(path) as handle:
        text = handle.read()
    if not text.strip():
        return pd.DataFrame()
    df = pd.read_json(io.StringIO(text), lines=True)
    return df.set_index('iteration')


def write_loss_log(records, path):
    df = pd.DataFrame(records, columns=['iteration'] + list(LossBreakdown.terms())
                      + ['discriminator', 'total'])
    df.to_json(path, orient='records', lines=True)


def loss_curves(loss_df, save_path, window=100, title=''):
    """Plot every loss term that is not identically zero: the raw values
    dotted and their trailing moving average solid."""
    if loss_df.empty:
        logger.info('Loss log is empty, no loss curves plotted.')
        return
    logger.info('Plotting loss curves . . .')
    terms = [c for c in list(LossBreakdown.terms()) + ['total', 'discriminator']
             if c in loss_df.columns and (loss_df[c] != 0).any()]
    if not terms:
        logger.info('Every loss term is zero, no loss curves plotted.')
        return
    plot_df = pd.DataFrame(index=loss_df.index)
    style = {}
    for term in terms:
        plot_df[term] = loss_df[term]
        plot_df[term + ' (avg)'] = mymath.moving_average(loss_df[term].values, window)
        style[term] = ':'
        style[term + ' (avg)'] = '-'
    # adversarial terms are negative
    myplt.line(plot_df, save_path,
               style=[style[c] for c in plot_df.columns],
               title=title,
               xlabel='Iteration',
               ylabel='Loss',
               logy=True)
    logger.info('Finished plotting loss curves.')
