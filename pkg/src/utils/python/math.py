import math

import numpy as np


def cubic_weight(x, a=-0.5):
    """Cubic convolution kernel evaluated element-wise.

    With a = -0.5 this is the Catmull-Rom spline: it interpolates
    (w(0) = 1, w(+-1) = w(+-2) = 0) and has support [-2, 2].

    Parameters
    ----------
    x : np.array
        kernel offsets
    a : float
        kernel parameter

    Returns
    -------
    weights : np.array
    """
    absx = np.abs(np.asarray(x, dtype=np.float64))
    absx2 = absx * absx
    absx3 = absx2 * absx
    near = (a + 2.) * absx3 - (a + 3.) * absx2 + 1.
    far = a * absx3 - 5. * a * absx2 + 8. * a * absx - 4. * a
    return np.where(absx <= 1., near, np.where(absx < 2., far, 0.))


def gaussian_kernel1d(sigma):
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma).

    Parameters
    ----------
    sigma : float
        standard deviation in pixels (> 0)

    Returns
    -------
    kernel : np.array
        2*radius+1 weights summing to 1
    """
    radius = int(math.ceil(3 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_window2d(size, sigma):
    """Normalized 2-D Gaussian window of odd side length size."""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.
    g = np.exp(-0.5 * (offsets / sigma) ** 2)
    window = np.outer(g, g)
    return window / window.sum()


def gaussian_kl_to_standard(mean, log_variance):
    """KL divergence KL(N(mean, exp(log_variance)) || N(0, 1)) per component.

    Parameters
    ----------
    mean : np.array
    log_variance : np.array

    Returns
    -------
    kl : np.array
        element-wise divergence in nats
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_variance = np.asarray(log_variance, dtype=np.float64)
    return .5 * (np.exp(log_variance) + mean ** 2 - 1. - log_variance)


def moving_average(values, window):
    """Trailing moving average; the first window-1 points average what is
    available so the output has the same length as the input."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        return values
    csum = np.cumsum(np.insert(values, 0, 0.))
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(idx - window, 0)
    return (csum[idx] - csum[lo]) / (idx - lo)
