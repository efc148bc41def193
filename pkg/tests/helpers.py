import numpy as np

from semcom.nn_core import Network, NetworkSpec
from semcom.transceiver import TscModel


def fd_grad(f, x, h=1e-5):
    """Central finite differences of a scalar function."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def identity_encoder(m):
    return Network(NetworkSpec((m, m), (), "feature"), [np.eye(m)], [np.zeros(m)])


def linear_model(w, b=None, signal_power=1.0):
    """Identity encoder with a single linear decoder layer ``z @ w + b``."""
    w = np.asarray(w, dtype=np.float64)
    m, c = w.shape
    dec = Network(NetworkSpec((m, c), (), "linear_logits"), [w], [np.zeros(c) if b is None else b])
    return TscModel(identity_encoder(m), dec, 10.0, signal_power, frozen=True)
