"""Batched exact maximization of a quadratic over a Euclidean ball.

Solves ``max a^T Q a - 2 b^T a`` subject to ``||a|| <= R`` for a batch of
symmetric ``Q`` (possibly indefinite) via an eigendecomposition and bisection
on the secular equation, including the so-called hard case.
"""

from __future__ import annotations

import numpy as np

BISECT_ITERS = 200


def maximize_quadratic_on_ball(Q: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    """Maximizers ``a`` (P, n) for ``Q`` (P, n, n) and ``b`` (P, n)."""
    Q = np.asarray(Q, dtype=float)
    b = np.asarray(b, dtype=float)
    P, n = b.shape
    if radius <= 0:
        return np.zeros((P, n))
    # minimize a^T H a + 2 g^T a with H = -Q, g = b
    H = -0.5 * (Q + np.swapaxes(Q, 1, 2))
    mu, V = np.linalg.eigh(H)
    gam = np.einsum("pji,pj->pi", V, b)
    scale = np.maximum(np.max(np.abs(mu), axis=1), 1e-300)
    tol = 1e-12 * scale

    # interior solution when H is positive definite and the Newton point is inside
    pd = mu[:, 0] > tol
    safe_mu = np.where(pd[:, None], mu, 1.0)
    interior = -gam / safe_mu
    inside = pd & (np.linalg.norm(interior, axis=1) <= radius)

    lower = np.maximum(0.0, -mu[:, 0])
    gnorm = np.linalg.norm(b, axis=1)
    upper = np.maximum(lower, gnorm / radius - mu[:, 0]) + tol + 1e-300

    # hard case: the secular function stays below R^2 even at the pole
    at_pole = np.abs(mu + lower[:, None]) <= tol[:, None]
    denom = np.where(at_pole, 1.0, mu + lower[:, None])
    partial = np.where(at_pole, 0.0, -gam / denom)
    pole_mass = np.sum(np.where(at_pole, gam * gam, 0.0), axis=1)
    hard = (~inside) & (np.sum(partial * partial, axis=1) <= radius * radius) & (
        pole_mass <= (1e-12 * np.maximum(gnorm, 1e-300)) ** 2
    )

    lo, hi = lower.copy(), upper.copy()
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        phi = np.sum((gam / np.maximum(mu + mid[:, None], 1e-300)) ** 2, axis=1)
        too_long = phi > radius * radius
        lo = np.where(too_long, mid, lo)
        hi = np.where(too_long, hi, mid)
    lam = hi
    boundary = -gam / np.maximum(mu + lam[:, None], 1e-300)

    # hard case: fill the remaining length along the bottom eigenvector
    fill = np.sqrt(np.maximum(radius * radius - np.sum(partial * partial, axis=1), 0.0))
    hard_sol = partial.copy()
    hard_sol[:, 0] += fill

    coords = np.where(inside[:, None], interior, np.where(hard[:, None], hard_sol, boundary))
    a = np.einsum("pij,pj->pi", V, coords)
    norm = np.linalg.norm(a, axis=1, keepdims=True)
    return a * np.minimum(1.0, radius / np.maximum(norm, 1e-300))
