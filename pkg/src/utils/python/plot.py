"""Matplotlib primitives shared by the plot_data modules. Every function
writes one figure to file_path and closes it."""

import matplotlib
matplotlib.use('agg')
import matplotlib.pyplot as plt
import numpy as np


def line(data,
         file_path,
         style=None,
         title='',
         xlabel='',
         ylabel='',
         logy=False):
    """Line plot of every column of data against its index.

    Parameters
    ----------
    data : pd.DataFrame
        one column per curve, index holds the x values
    file_path : str
        path to save figure
    style : list of str
        matplotlib line style per column
    logy : bool
        symmetric log y-axis, for curves that go negative
    """
    ax = data.plot(kind='line', style=style, figsize=(8, 5))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logy:
        ax.set_yscale('symlog', linthresh=1e-3)
    ax.legend(fontsize='small', ncol=2)
    plt.tight_layout()
    plt.savefig(file_path)
    plt.close(ax.figure)


def barplot(df,
            file_path,
            title='',
            xlabel='',
            ylabel=''):
    """One bar per row of a single-column data frame, with the column
    mean drawn as a dashed line."""
    ax = df.plot(kind='bar', legend=False, figsize=(max(4, .5 * len(df) + 2), 4))
    ax.axhline(df.iloc[:, 0].mean(), color='red', linestyle='--')
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    plt.tight_layout()
    plt.savefig(file_path)
    plt.close(ax.figure)


def image_strip(panels, titles, file_path, height=256):
    """Save images side by side with a title above each panel.

    Parameters
    ----------
    panels : list of np.array
        H x W x 3 arrays in [0, 1]; each is nearest-neighbour scaled
        to the common height
    titles : list of str
        caption per panel
    file_path : str
        path to save figure
    height : int
        display height in pixels of every panel
    """
    scaled = []
    for p in panels:
        p = np.clip(p, 0, 1)
        factor = max(1, int(round(float(height) / p.shape[0])))
        scaled.append(np.repeat(np.repeat(p, factor, axis=0), factor, axis=1))
    fig, axes = plt.subplots(1, len(scaled), figsize=(4 * len(scaled), 4.4))
    axes = np.atleast_1d(axes)
    for ax, panel, title in zip(axes, scaled, titles):
        ax.imshow(panel, interpolation='nearest')
        ax.set_title(title)
        ax.axis('off')
    plt.tight_layout()
    plt.savefig(file_path)
    plt.clf()
    plt.close(fig)
