"""Finite groups of orthogonal matrices and the linear algebra around them.

A group is stored extensionally as a stack of ``d x d`` orthogonal matrices.
The same representation acts on every state of a lag window and on the target,
so orbit sums are exact finite sums.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from symbound.dynamics import Sample
from symbound.errors import InvalidArgumentError

ALGEBRA_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class FiniteGroup:
    elements: np.ndarray  # (|G|, d, d)
    identity_index: int = 0

    def __post_init__(self):
        mats = np.array(self.elements, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise InvalidArgumentError(f"group elements must have shape (n, d, d), got {mats.shape}")
        mats.setflags(write=False)
        object.__setattr__(self, "elements", mats)
        n, d, _ = mats.shape
        if not 0 <= self.identity_index < n:
            raise InvalidArgumentError("identity_index out of range")
        eye = np.eye(d)
        if np.max(np.abs(mats[self.identity_index] - eye)) > ALGEBRA_TOL:
            raise InvalidArgumentError("element at identity_index is not the identity")
        gram = np.einsum("gji,gjk->gik", mats, mats)
        if np.max(np.abs(gram - eye)) > ALGEBRA_TOL:
            raise InvalidArgumentError("group elements must be orthogonal")
        if self.closure_table() is None:
            raise InvalidArgumentError("element set is not closed under multiplication")

    @property
    def order(self) -> int:
        return self.elements.shape[0]

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def __len__(self):
        return self.order

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def closure_table(self):
        """Cayley table ``table[i, j] = m`` with ``g_i g_j = g_m``; None if not closed."""
        prods = np.einsum("iab,jbc->ijac", self.elements, self.elements)
        diff = np.abs(prods[:, :, None] - self.elements[None, None])
        hit = np.max(diff, axis=(-2, -1)) <= ALGEBRA_TOL
        if not np.all(hit.any(axis=-1)):
            return None
        return np.argmax(hit, axis=-1)

    def inverse_index(self, i: int) -> int:
        target = self.elements[i].T
        diffs = np.max(np.abs(self.elements - target), axis=(1, 2))
        return int(np.argmin(diffs))


def rotation_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def make_cyclic_rotation_group(order: int, dim: int = 2) -> FiniteGroup:
    """C_order acting by planar rotations of ``2*pi*j/order``.

    For ``dim > 2`` the same rotation acts on every consecutive coordinate plane.
    """
    if int(order) != order or order < 1:
        raise InvalidArgumentError(f"order must be a positive integer, got {order!r}")
    if int(dim) != dim or dim < 2 or dim % 2:
        raise InvalidArgumentError(f"dim must be an even positive integer, got {dim!r}")
    mats = []
    for j in range(order):
        block = rotation_matrix(2.0 * np.pi * j / order)
        mats.append(np.kron(np.eye(dim // 2), block))
    return FiniteGroup(np.stack(mats), identity_index=0)


def trivial_group(dim: int = 2) -> FiniteGroup:
    return FiniteGroup(np.eye(dim)[None], identity_index=0)


def act_on_sample(g: np.ndarray, sample: Sample) -> Sample:
    """Return ``gZ``: ``g`` applied to every lag state and to the target."""
    g = np.asarray(g, dtype=float)
    window = np.asarray(sample.window, dtype=float)
    target = np.asarray(sample.target, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise InvalidArgumentError("group element must be a square matrix")
    if window.shape[-1] != g.shape[0] or target.shape[-1] != g.shape[0]:
        raise InvalidArgumentError(
            f"state dimension {target.shape[-1]} does not match group dimension {g.shape[0]}"
        )
    return replace(sample, window=window @ g.T, target=g @ target)


def act_on_arrays(elements: np.ndarray, windows: np.ndarray, targets: np.ndarray):
    """Vectorized action of every group element on stacked samples.

    ``windows`` is (..., k, d) and ``targets`` is (..., d); results carry a
    leading group axis.
    """
    gw = np.einsum("gab,...kb->g...ka", elements, windows)
    gt = np.einsum("gab,...b->g...a", elements, targets)
    return gw, gt


def reynolds_project(W: np.ndarray, group: FiniteGroup) -> np.ndarray:
    """Orbit average ``(1/|G|) sum_g rho(g)^-1 W rho(g)``; works on stacks (..., d, d)."""
    W = np.asarray(W, dtype=float)
    if W.shape[-2:] != (group.dim, group.dim):
        raise InvalidArgumentError(f"matrix shape {W.shape[-2:]} does not match group dimension {group.dim}")
    rho = group.elements
    conj = np.einsum("gba,...bc,gcd->g...ad", rho, W, rho)
    return conj.mean(axis=0)


def commutant_basis(group: FiniteGroup) -> list[np.ndarray]:
    d = group.dim
    elementary = np.eye(d * d).reshape(d * d, d, d)
    projected = reynolds_project(elementary, group).reshape(d * d, d * d)
    u, s, _ = np.linalg.svd(projected.T)
    rank = int(np.sum(s > ALGEBRA_TOL * max(1.0, s[0])))
    return [u[:, r].reshape(d, d) for r in range(rank)]


def commutators(W: np.ndarray, group: FiniteGroup) -> np.ndarray:
    """``W rho(g) - rho(g) W`` for every g; shape (|G|, ..., d, d)."""
    rho = group.elements
    return np.einsum("...ab,gbc->g...ac", W, rho) - np.einsum("gab,...bc->g...ac", rho, W)


def spectral_norm(A: np.ndarray) -> np.ndarray:
    return np.linalg.svd(A, compute_uv=False)[..., 0]


def commutator_norm(W: np.ndarray, group: FiniteGroup) -> float:
    """``max_g ||W rho(g) - rho(g) W||_2``."""
    W = np.asarray(W, dtype=float)
    if W.shape != (group.dim, group.dim):
        raise InvalidArgumentError(f"matrix shape {W.shape} does not match group dimension {group.dim}")
    return float(np.max(spectral_norm(commutators(W, group))))
