"""
charts.py

SVG charts for the result tables. Output bytes depend only on the data: the SVG
id salt is fixed and no date is embedded.
"""

import logging
import os

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

logging.getLogger('matplotlib').setLevel(logging.WARNING)
matplotlib.rcParams['svg.hashsalt'] = 'tilearray'
matplotlib.rcParams['svg.fonttype'] = 'none'


def _save(fig, path):
    directory = os.path.dirname(path)
    if directory and not os.path.isdir(directory):
        os.makedirs(directory)
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)
    logging.info("wrote %s", path)
    return path


def line_chart(table, x, y, series, path, title='', xlabel=None, ylabel=None, logx=False):
    """
    One polyline per value of the series column
    :param table: pandas DataFrame
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name, group in table.groupby(series, sort=True):
        group = group.sort_values(x)
        ax.plot(group[x], group[y], marker='o' if len(group) < 20 else None, markersize=3, label=str(name))
    if logx:
        ax.set_xscale('log', base=2)
    ax.set_title(title)
    ax.set_xlabel(xlabel or x)
    ax.set_ylabel(ylabel or y)
    ax.grid(True, linestyle=':', linewidth=0.5)
    ax.legend(fontsize='small')
    return _save(fig, path)


def bar_chart(labels, values, path, title='', ylabel=''):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(range(len(values)), values, color='tab:blue')
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha='right')
    for i, value in enumerate(values):
        ax.annotate("%.3f" % value, (i, value), ha='center', va='bottom', fontsize='x-small')
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0, max(list(values) + [1.0]) * 1.1)
    fig.tight_layout()
    return _save(fig, path)


def occupancy_heatmap(occupancy, path, title=''):
    """
    Per-PE busy fraction, array rows top to bottom
    :param occupancy: rows x cols numpy array in [0, 1]
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    image = ax.imshow(occupancy, vmin=0.0, vmax=1.0, cmap='viridis', aspect='auto', interpolation='nearest')
    fig.colorbar(image, ax=ax, label='busy fraction')
    ax.set_xlabel('column')
    ax.set_ylabel('row')
    ax.set_title(title)
    return _save(fig, path)
