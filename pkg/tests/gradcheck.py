"""Central finite-difference gradient oracle, independent of the analytic backward."""

import numpy as np

from cmolab.training import soft_cross_entropy


def loss_only(model, x, y_b, y_f, lam, class_weights=None) -> float:
    loss, _ = soft_cross_entropy(model.forward(x), y_b, y_f, lam, class_weights=class_weights)
    return loss


def finite_difference_grads(model, x, y_b, y_f, lam, class_weights=None, h=1e-5):
    """Perturb every parameter entry by +-h and take the centered difference."""
    grads = {}
    for name, p in model.params.items():
        flat = p.ravel()
        g = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_only(model, x, y_b, y_f, lam, class_weights)
            flat[i] = orig - h
            down = loss_only(model, x, y_b, y_f, lam, class_weights)
            flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads[name] = g.reshape(p.shape)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-10)
    return float(np.linalg.norm(analytic - numeric) / denom)


def max_param_relative_error(model, x, y_b, y_f, lam, class_weights=None) -> float:
    loss, dlogits = soft_cross_entropy(
        model.forward(x), y_b, y_f, lam, class_weights=class_weights
    )
    analytic = model.backward(dlogits)
    numeric = finite_difference_grads(model, x, y_b, y_f, lam, class_weights)
    assert np.isfinite(loss)
    return max(relative_error(analytic[name], numeric[name]) for name in model.params)
