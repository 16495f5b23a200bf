"""Parameter initialization schemes shared by the network components."""

import numpy as np

from syntag.autodiff import parameter


def glorot_uniform(rng, fan_out, fan_in, blocks=1, name=None):
    """A ``(blocks * fan_out, fan_in)`` parameter whose entries are drawn
    from U(-a, a) with ``a = sqrt(6 / (fan_in + fan_out))``.

    Stacked gate matrices pass ``blocks=4`` so that every gate block gets
    the bound of a ``fan_out x fan_in`` matrix.
    """

    a = np.sqrt(6.0 / (fan_in + fan_out))
    return parameter(
        rng.uniform(-a, a, size=(blocks * fan_out, fan_in)), name=name
    )


def zeros(shape, name=None):
    return parameter(np.zeros(shape), name=name)


def small_uniform(rng, shape, bound=0.01, name=None):
    return parameter(rng.uniform(-bound, bound, size=shape), name=name)
