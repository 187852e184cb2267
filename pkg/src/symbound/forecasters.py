"""Linear lag forecasters, the clipped squared loss and the three parameter spaces.

A forecaster with lag matrices W_1..W_k predicts ``sum_j W_j X_{t-j}``.
Internally parameters are often handled in *stacked* form, the ``d x kd``
matrix ``[W_1 | ... | W_k]`` acting on the flattened window
``[X_{t-1}; ...; X_{t-k}]``. Every helper accepts leading batch axes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from symbound.dynamics import Sample
from symbound.errors import InvalidArgumentError
from symbound.group_algebra import FiniteGroup, act_on_sample, spectral_norm

FULL = "full"
EQUIVARIANT = "equivariant"
APPROX = "approx_equivariant"
SPACE_KINDS = (FULL, EQUIVARIANT, APPROX)


def to_stacked(lags: np.ndarray) -> np.ndarray:
    """(..., k, d, d) lag matrices -> (..., d, k*d)."""
    k, d = lags.shape[-3], lags.shape[-1]
    return np.swapaxes(lags, -3, -2).reshape(*lags.shape[:-3], d, k * d)


def from_stacked(stacked: np.ndarray, k: int) -> np.ndarray:
    d = stacked.shape[-2]
    return np.swapaxes(stacked.reshape(*stacked.shape[:-2], d, k, d), -3, -2)


@dataclass(frozen=True, eq=False)
class LinearForecaster:
    lag_matrices: np.ndarray  # (k, d, d); lag_matrices[0] multiplies the newest state

    def __post_init__(self):
        # C order keeps reductions identical whether or not the object was pickled
        W = np.array(self.lag_matrices, dtype=float, order="C")
        if W.ndim != 3 or W.shape[1] != W.shape[2] or W.shape[0] < 1:
            raise InvalidArgumentError(f"lag matrices must have shape (k, d, d), got {W.shape}")
        if not np.all(np.isfinite(W)):
            raise InvalidArgumentError("lag matrices must be finite")
        W.setflags(write=False)
        object.__setattr__(self, "lag_matrices", W)

    @property
    def k(self) -> int:
        return self.lag_matrices.shape[0]

    @property
    def d(self) -> int:
        return self.lag_matrices.shape[1]

    @property
    def stacked(self) -> np.ndarray:
        return to_stacked(self.lag_matrices)

    @classmethod
    def from_stacked(cls, stacked: np.ndarray, k: int) -> LinearForecaster:
        return cls(from_stacked(np.asarray(stacked, dtype=float), k))

    @classmethod
    def zeros(cls, k: int, d: int) -> LinearForecaster:
        return cls(np.zeros((k, d, d)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.lag_matrices))

    def __eq__(self, other):
        if not isinstance(other, LinearForecaster):
            return NotImplemented
        return np.array_equal(self.lag_matrices, other.lag_matrices)

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "d": self.d, "lag_matrices": self.lag_matrices.tolist()})

    @classmethod
    def from_json(cls, text: str) -> LinearForecaster:
        obj = json.loads(text)
        W = np.asarray(obj["lag_matrices"], dtype=float)
        if W.shape != (obj["k"], obj["d"], obj["d"]):
            raise InvalidArgumentError(f"lag_matrices shape {W.shape} disagrees with k/d header")
        return cls(W)


@dataclass(frozen=True)
class LossSpec:
    clip_bound: float = 16.0
    lipschitz_const: float | None = None

    def __post_init__(self):
        if self.clip_bound <= 0:
            raise InvalidArgumentError("clip_bound must be positive")


@dataclass(frozen=True, eq=False)
class ParameterSpace:
    kind: str = FULL
    radius: float = 2.0
    ee_budget: float = 0.0
    group: FiniteGroup | None = None
    domain_bound: float = 1.0
    _lifted: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in SPACE_KINDS:
            raise InvalidArgumentError(f"unknown space kind {self.kind!r}; expected one of {SPACE_KINDS}")
        if self.radius < 0:
            raise InvalidArgumentError("radius must be nonnegative")
        if self.ee_budget < 0:
            raise InvalidArgumentError("ee_budget must be nonnegative")
        if self.kind != FULL and self.group is None:
            raise InvalidArgumentError(f"{self.kind} space needs a group")

    @classmethod
    def full(cls, radius, domain_bound=1.0):
        return cls(FULL, radius, 0.0, None, domain_bound)

    @classmethod
    def equivariant(cls, radius, group, domain_bound=1.0):
        return cls(EQUIVARIANT, radius, 0.0, group, domain_bound)

    @classmethod
    def approx_equivariant(cls, radius, group, ee_budget, domain_bound=1.0):
        return cls(APPROX, radius, ee_budget, group, domain_bound)

    def lifted(self, k: int) -> np.ndarray:
        """``kron(I_k, rho(g))`` for every g: the action on flattened windows."""
        if k not in self._lifted:
            self._lifted[k] = lift_group(self.group.elements, k)
        return self._lifted[k]

    def contains(self, theta: LinearForecaster, tol: float = 1e-9) -> bool:
        if theta.norm() > self.radius + 1e-12:
            return False
        if self.kind == FULL:
            return True
        ee = equivariance_error(theta, self.group, self.domain_bound)
        budget = 0.0 if self.kind == EQUIVARIANT else self.ee_budget
        return ee <= budget + tol


def lift_group(elements: np.ndarray, k: int) -> np.ndarray:
    return np.stack([np.kron(np.eye(k), g) for g in elements])


# -- prediction and loss ------------------------------------------------------


def predict(theta: LinearForecaster, window) -> np.ndarray:
    window = np.asarray(window, dtype=float)
    if window.shape[-2] != theta.k:
        raise InvalidArgumentError(f"window has {window.shape[-2]} lags, forecaster expects {theta.k}")
    return np.einsum("jab,...jb->...a", theta.lag_matrices, window)


def loss(theta: LinearForecaster, Z: Sample, spec: LossSpec) -> float:
    r = predict(theta, Z.window) - np.asarray(Z.target, dtype=float)
    return float(min(r @ r, spec.clip_bound))


def loss_grad(theta: LinearForecaster, Z: Sample, spec: LossSpec) -> np.ndarray:
    """Gradient w.r.t. the lag matrices, shape (k, d, d); zero where the clip is active."""
    window = np.asarray(Z.window, dtype=float)
    r = predict(theta, window) - np.asarray(Z.target, dtype=float)
    if r @ r > spec.clip_bound:
        return np.zeros_like(theta.lag_matrices)
    return 2.0 * np.einsum("a,jb->jab", r, window)


def orbit_averaged_loss(theta: LinearForecaster, Z: Sample, group: FiniteGroup, spec: LossSpec) -> float:
    return float(np.mean([loss(theta, act_on_sample(g, Z), spec) for g in group]))


# -- equivariance error -------------------------------------------------------


def stacked_commutators(stacked: np.ndarray, elements: np.ndarray, lifted: np.ndarray) -> np.ndarray:
    """``[W_1 rho - rho W_1 | ... ]`` per group element: (|G|, ..., d, kd)."""
    right = np.einsum("...ab,gbc->g...ac", stacked, lifted)
    left = np.einsum("gab,...bc->g...ac", elements, stacked)
    return right - left


def stacked_ee(stacked: np.ndarray, elements: np.ndarray, lifted: np.ndarray, domain_bound: float) -> np.ndarray:
    comm = stacked_commutators(stacked, elements, lifted)
    return domain_bound * np.max(spectral_norm(comm), axis=0)


def equivariance_error(theta: LinearForecaster, group: FiniteGroup, domain_bound: float) -> float:
    """Exact equivariance error of a linear forecaster.

    The supremum runs over windows whose flattened norm is at most
    ``domain_bound``; it equals ``domain_bound`` times the largest singular
    value of the concatenated commutator block, maximized over g.
    """
    lifted = lift_group(group.elements, theta.k)
    return float(stacked_ee(theta.stacked, group.elements, lifted, domain_bound))


def sampled_ee(theta: LinearForecaster, group: FiniteGroup, domain_bound: float,
               n_samples: int = 2000, seed: int = 0) -> float:
    """Random-search lower bound on :func:`equivariance_error`."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_samples, theta.k * theta.d))
    x *= domain_bound / np.linalg.norm(x, axis=1, keepdims=True)
    lifted = lift_group(group.elements, theta.k)
    comm = stacked_commutators(theta.stacked, group.elements, lifted)
    dev = np.einsum("gab,sb->gsa", comm, x)
    return float(np.max(np.linalg.norm(dev, axis=-1)))


# -- projection -----------------------------------------------------------------


def _ball_scale(stacked: np.ndarray, radius: float) -> np.ndarray:
    norm = np.linalg.norm(stacked, axis=(-2, -1), keepdims=True)
    scale = np.where(norm > radius, radius / np.maximum(norm, np.finfo(float).tiny), 1.0)
    return stacked * scale


def reynolds_stacked(stacked: np.ndarray, elements: np.ndarray, lifted: np.ndarray) -> np.ndarray:
    return np.einsum("gba,...bc,gcd->...ad", elements, stacked, lifted) / elements.shape[0]


def project_stacked(stacked: np.ndarray, space: ParameterSpace, k: int) -> np.ndarray:
    """Batched projection of stacked parameters onto ``space``.

    The approximately-equivariant case is a retraction: the residual outside
    the commutant is shrunk until the equivariance error meets the budget.
    """
    if space.kind == FULL:
        return _ball_scale(stacked, space.radius)
    elements = space.group.elements
    lifted = space.lifted(k)
    sym = reynolds_stacked(stacked, elements, lifted)
    if space.kind == EQUIVARIANT:
        return _ball_scale(sym, space.radius)
    res = stacked - sym
    e = stacked_ee(res, elements, lifted, space.domain_bound)[..., None, None]
    shrink = np.where(e > space.ee_budget, space.ee_budget / np.maximum(e, np.finfo(float).tiny), 1.0)
    return _ball_scale(sym + shrink * res, space.radius)


def project(theta: LinearForecaster, space: ParameterSpace) -> LinearForecaster:
    if space.kind != FULL and space.group.dim != theta.d:
        raise InvalidArgumentError("group dimension does not match forecaster dimension")
    if space.contains(theta, tol=1e-12):
        return theta
    return LinearForecaster.from_stacked(project_stacked(theta.stacked, space, theta.k), theta.k)


def lipschitz_bound(space: ParameterSpace | None, domain_bound: float, k: int, M: float) -> float:
    """Lipschitz constant of the clipped squared loss in the parameters.

    Inside the clip region ``||dL/dtheta|| = 2 ||r|| ||window|| <= 2 sqrt(M) B_x sqrt(k)``
    and outside it the gradient is zero; the loss is continuous across the
    boundary, so the bound holds globally. It does not depend on the space.
    """
    return 2.0 * np.sqrt(M) * domain_bound * np.sqrt(k)
