"""Gauss-Legendre helpers shared by the time and mark integrals."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

TIME_NODES = 16


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def composite_nodes(breaks, n: int = TIME_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Composite rule with ``n`` nodes on each interval between ``breaks``.

    Returns flat arrays ``(nodes, weights)``; zero-length intervals contribute
    nothing.
    """
    b = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(n)
    h = np.diff(b)
    keep = h > 0
    a, h = b[:-1][keep], h[keep]
    nodes = a[:, None] + h[:, None] * x[None, :]
    weights = h[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


def interval_nodes(a, h, n: int = TIME_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval nodes for intervals ``[a_i, a_i + h_i]``, shape ``(len(a), n)``."""
    x, w = gauss_legendre(n)
    a = np.asarray(a, dtype=float)[..., None]
    h = np.asarray(h, dtype=float)[..., None]
    return a + h * x, h * w
