"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.exceptions import NotFittedError


def check_array(X, name="X", ndim=2):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {X.shape}")
    if X.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or Inf")
    return X


def check_sequence_pair(X, interventions):
    """Validate an observation sequence plus aligned intervention targets.

    Row t of ``interventions`` flags the targets of the step into state t;
    consecutive rows of ``X`` form the training tuples (x_t, x_{t+1}, I_{t+1}).
    """
    X = check_array(X, "X")
    I = np.asarray(interventions)
    if I.ndim != 2 or I.shape[0] != X.shape[0]:
        raise ValueError(f"interventions shape {I.shape} does not align with "
                         f"X shape {X.shape}")
    if not np.isin(I, (0, 1)).all():
        raise ValueError("interventions must be binary")
    if X.shape[0] < 2:
        raise ValueError("need at least two consecutive observations")
    return X, I.astype(np.float64)


def check_is_fitted(estimator, attr):
    if getattr(estimator, attr, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; call fit first")
