"""Central finite differences for checking hand-written gradients."""

from typing import Callable, Iterable, Optional

import numpy as np


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, coords: Optional[Iterable[int]] = None, h: float = 1e-5) -> np.ndarray:
    """
    (f(x + h e_i) - f(x - h e_i)) / 2h for the requested flat coordinates.

    Args:
        f: scalar function of a flat vector
        x: point of evaluation (not modified)
        coords: flat indices to probe; all of them when None
        h: step size

    Returns:
        Array of numerical partial derivatives, one per coordinate
    """
    x = np.array(x, dtype=np.float64)
    coords = range(x.size) if coords is None else list(coords)
    grads = []
    for i in coords:
        old = x.flat[i]
        x.flat[i] = old + h
        f_plus = f(x)
        x.flat[i] = old - h
        f_minus = f(x)
        x.flat[i] = old
        grads.append((f_plus - f_minus) / (2.0 * h))
    return np.array(grads)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def sample_coordinates(rng: np.random.Generator, size: int, n: int = 200) -> np.ndarray:
    """n distinct flat indices (all of them if the vector is shorter)."""
    return np.sort(rng.choice(size, size=min(n, size), replace=False))
