import numpy as np
import pytest

from clothfold import autodiff as ad


def finite_difference(fn, tensors, h=1e-5):
    """Independent central-difference oracle over a list of tensors.

    ``fn`` evaluates the scalar loss from current tensor values; gradients are
    estimated entry by entry without touching the tape machinery.
    """
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        for i in range(t.data.size):
            orig = t.data.flat[i]
            t.data.flat[i] = orig + h
            fp = fn()
            t.data.flat[i] = orig - h
            fm = fn()
            t.data.flat[i] = orig
            g.flat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def tape_grad():
    """Run fn under a fresh tape and return (loss_value, {tensor: grad})."""

    def runner(fn, tensors):
        for t in tensors:
            t.grad = None
        with ad.Tape() as tape:
            loss = fn()
            tape.backward(loss)
        return loss.item(), [t.grad.copy() for t in tensors]

    return runner
