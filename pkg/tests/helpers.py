import numpy as np


def numeric_grad(f, arr, h=1e-4):
    """Central differences of scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    out = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        plus = f()
        arr[i] = old - h
        minus = f()
        arr[i] = old
        out[i] = (plus - minus) / (2 * h)
    return out


def max_rel_error(analytic, numeric, floor=1e-7):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


def gradient_check(store, loss_fn, names=None, h=1e-4):
    """Worst relative error per parameter: analytic backward vs central differences."""
    store.zero_grad()
    loss_fn().backward()
    analytic = {n: store[n].grad.copy() for n in (names or store.names())}
    errors = {}
    for name, g in analytic.items():
        num = numeric_grad(lambda: loss_fn().item(), store[name].data, h)
        errors[name] = max_rel_error(g, num)
    return errors
