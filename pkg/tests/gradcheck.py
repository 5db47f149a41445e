"""Central finite-difference oracle for gradient verification.

Independent of the reverse-mode machinery: it only calls the forward pass,
perturbing raw parameter arrays in place.
"""

import numpy as np


def numeric_grad(f, arrays, h=1e-5):
    """Central-difference gradients of scalar ``f()`` w.r.t. numpy ``arrays``.

    ``f`` must read the current contents of each array on every call.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * h)
        grads.append(g)
    return grads


def rel_error(a, b, floor=1e-8):
    num = np.abs(a - b)
    den = np.maximum(np.abs(a) + np.abs(b), floor)
    return float((num / den).max()) if num.size else 0.0


def assert_grads_close(f, tensors, tol=1e-4, h=1e-5):
    """Check reverse-mode grads on ``tensors`` against central differences."""
    for t in tensors:
        t.grad = None
    out = f()
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]
    numeric = numeric_grad(lambda: f().item(), [t.data for t in tensors], h=h)
    worst = max(rel_error(a, n) for a, n in zip(analytic, numeric))
    assert worst <= tol, f"gradient mismatch: max rel err {worst:.3e} > {tol}"
    return worst
