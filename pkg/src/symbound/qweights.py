"""Sample weights over the usable horizon t = k+1..T, kept on the probability simplex."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from symbound.errors import InvalidArgumentError

SUM_TOL = 1e-12


class WeightVector:
    """Nonnegative weights summing to one; entry h belongs to time index k+1+h."""

    def __init__(self, values):
        v = np.array(values, dtype=float).reshape(-1)
        if v.size == 0:
            raise InvalidArgumentError("weight vector must be nonempty")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise InvalidArgumentError("weights must be finite and nonnegative")
        if abs(v.sum() - 1.0) > SUM_TOL:
            raise InvalidArgumentError(f"weights must sum to 1, got {v.sum()!r}")
        v.setflags(write=False)
        self.values = v

    def __len__(self):
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, WeightVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"WeightVector({self.values.tolist()})"

    def tolist(self):
        return self.values.tolist()


def as_weights(q) -> np.ndarray:
    return q.values if isinstance(q, WeightVector) else np.asarray(q, dtype=float)


def uniform_q(horizon: int) -> WeightVector:
    if horizon < 1:
        raise InvalidArgumentError(f"horizon must be >= 1, got {horizon}")
    return WeightVector(np.full(horizon, 1.0 / horizon))


def exp_decay_q(horizon: int, lam: float) -> WeightVector:
    """``q_t`` proportional to ``lam**(T - t)``: the newest window weighs most."""
    if horizon < 1:
        raise InvalidArgumentError(f"horizon must be >= 1, got {horizon}")
    if not 0 < lam <= 1:
        raise InvalidArgumentError(f"decay must lie in (0, 1], got {lam}")
    w = lam ** np.arange(horizon - 1, -1, -1, dtype=float)
    return WeightVector(_renormalize(w / w.sum()))


def one_hot_last_q(horizon: int) -> WeightVector:
    if horizon < 1:
        raise InvalidArgumentError(f"horizon must be >= 1, got {horizon}")
    q = np.zeros(horizon)
    q[-1] = 1.0
    return WeightVector(q)


def norms(q) -> tuple[float, float]:
    v = as_weights(q)
    return float(np.sum(np.abs(v))), float(np.sqrt(v @ v))


def _renormalize(v: np.ndarray) -> np.ndarray:
    # pushes the rounding residue into the largest entry so the sum is exactly 1
    v = np.maximum(v, 0.0)
    v = v / v.sum()
    i = int(np.argmax(v))
    v[i] += 1.0 - v.sum()
    return v


def project_simplex(y) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(y - tau, 0.0)


def confidence_coeff(M: float, delta: float) -> float:
    """Multiplier of ||q||_2 in the confidence term, with half of delta assigned to it."""
    return M * np.sqrt(8.0 * np.log(2.0 / delta)) + 1.0


@dataclass(frozen=True)
class QOptConfig:
    lr: float = 0.05
    iters: int = 100
    fd_step: float = 1e-3


def q_objective(disc_oracle: Callable, q: np.ndarray, M: float, delta: float) -> float:
    return 2.0 * float(disc_oracle(q)) + float(np.linalg.norm(q)) * confidence_coeff(M, delta)


def optimize_q(disc_oracle: Callable, M: float, delta: float, N: int, T: int,
               config: QOptConfig = QOptConfig(), horizon: int | None = None) -> WeightVector:
    """Minimize ``2 disc(q) + ||q||_2 (M sqrt(8 log(2/delta)) + 1)`` over the simplex.

    ``N`` enters the bound only through a q-independent addend and does not
    affect the minimizer. ``horizon`` defaults to ``T`` when the oracle is
    defined on all T time indices. The disc gradient is taken by central
    differences on re-projected points; the best iterate, starting from
    uniform, is returned.
    """
    H = T if horizon is None else horizon
    if H < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    h = config.fd_step
    coeff = confidence_coeff(M, delta)
    q = np.full(H, 1.0 / H)
    best_q, best_val = q.copy(), q_objective(disc_oracle, q, M, delta)
    for _ in range(config.iters):
        grad = coeff * q / max(np.linalg.norm(q), np.finfo(float).tiny)
        for i in range(H):
            e = np.zeros(H)
            e[i] = h
            up = float(disc_oracle(project_simplex(q + e)))
            down = float(disc_oracle(project_simplex(q - e)))
            grad[i] += 2.0 * (up - down) / (2.0 * h)
        q = project_simplex(q - config.lr * grad)
        val = q_objective(disc_oracle, q, M, delta)
        if val < best_val:
            best_q, best_val = q.copy(), val
    return WeightVector(_renormalize(best_q))
