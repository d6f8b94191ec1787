"""Central finite-difference gradient checking for the autograd engine."""

import numpy as np

EPS = 1e-5


def numeric_grad(loss_fn, tensor, eps=EPS):
    """d loss / d tensor by central differences, perturbing ``tensor.data`` in place."""
    g = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = float(loss_fn().data)
        flat[i] = old - eps
        down = float(loss_fn().data)
        flat[i] = old
        g.reshape(-1)[i] = (up - down) / (2 * eps)
    return g


def relative_error(a, b):
    """||a - b|| / max(||a|| + ||b||, tiny): scale-free and stable near zero."""
    num = float(np.linalg.norm(a - b))
    den = float(np.linalg.norm(a) + np.linalg.norm(b))
    return num / max(den, 1e-12)


def check(loss_fn, tensors):
    """Largest relative error between analytic and numeric gradients over ``tensors``."""
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.array(t.grad, copy=True) for t in tensors]
    return max(relative_error(a, numeric_grad(loss_fn, t)) for a, t in zip(analytic, tensors))
