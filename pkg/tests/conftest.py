import numpy as np
import pytest

from distillab.tensor import GradientTape, Tensor, backward


def central_difference(f, x, step=1e-5):
    """Elementwise central finite differences of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f(x)
        flat[i] = orig - step
        down = f(x)
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return grad


def grad_rel_err(g_auto, g_numeric):
    """Infinity-norm relative disagreement between two gradients."""
    g_auto = np.asarray(g_auto)
    g_numeric = np.asarray(g_numeric)
    scale = max(np.abs(g_numeric).max(), 1e-12)
    return np.abs(g_auto - g_numeric).max() / scale


def autodiff_input_grad(loss_fn, x):
    """Gradient of a scalar loss with respect to one input array."""
    t = Tensor(np.asarray(x, dtype=np.float64))
    with GradientTape() as tape:
        tape.watch(t)
        loss = loss_fn(t)
    return backward(loss)[t].values


@pytest.fixture
def rng():
    return np.random.default_rng(0)
