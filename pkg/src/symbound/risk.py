"""Batched weighted-loss objectives over a fixed sample set.

A :class:`LossTerms` holds flattened windows ``phi`` (S, kd), targets (S, d),
a slot index per sample (the time index within the usable horizon) and a
per-sample scale (``1/N``, or ``1/(N|G|)`` for orbit-expanded sets). For a
coefficient vector ``c`` over slots the objective is

    F(theta) = sum_s scale_s * c[slot_s] * min(||theta phi_s - y_s||^2, M).

When no sample can reach the clip level for any parameter in a ball of radius
R, F is exactly quadratic and is evaluated from per-slot sufficient
statistics; otherwise the per-sample path is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from symbound.dynamics import Dataset
from symbound.group_algebra import FiniteGroup


@dataclass(frozen=True, eq=False)
class LossTerms:
    phi: np.ndarray
    y: np.ndarray
    slot: np.ndarray
    scale: np.ndarray
    n_slots: int
    clip_bound: float

    @classmethod
    def from_arrays(cls, windows, targets, clip_bound: float, group: FiniteGroup | None = None):
        """Terms for windows (n, H, k, d) / targets (n, H, d), scaled by 1/n.

        With ``group`` every sample is replaced by its full orbit at weight
        ``1/(n|G|)``, which realizes the orbit-averaged loss.
        """
        windows = np.asarray(windows, dtype=float)
        targets = np.asarray(targets, dtype=float)
        n, H, k, d = windows.shape
        if group is not None:
            windows = np.einsum("gab,...b->g...a", group.elements, windows)
            targets = np.einsum("gab,...b->g...a", group.elements, targets)
            reps = group.order
        else:
            windows, targets, reps = windows[None], targets[None], 1
        phi = windows.reshape(reps * n * H, k * d)
        y = targets.reshape(reps * n * H, d)
        slot = np.tile(np.arange(H), reps * n)
        scale = np.full(reps * n * H, 1.0 / (n * reps))
        return cls(phi, y, slot, scale, H, float(clip_bound))

    @classmethod
    def from_dataset(cls, dataset: Dataset, clip_bound: float, group: FiniteGroup | None = None):
        return cls.from_arrays(dataset.windows, dataset.targets, clip_bound, group)

    def clip_free(self, radius: float) -> bool:
        """True when ``||theta phi - y||^2 <= M`` for every sample and ``||theta||_F <= radius``."""
        worst = radius * np.max(np.linalg.norm(self.phi, axis=1)) + np.max(np.linalg.norm(self.y, axis=1))
        return worst * worst <= self.clip_bound

    def stats(self):
        """Per-slot (A, B, C): sum scale*phi phi^T, sum scale*y phi^T, sum scale*||y||^2."""
        if not hasattr(self, "_stats"):
            H, kd, d = self.n_slots, self.phi.shape[1], self.y.shape[1]
            A = np.zeros((H, kd, kd))
            B = np.zeros((H, d, kd))
            C = np.zeros(H)
            sp = self.scale[:, None] * self.phi
            S = self.slot.size
            if S % H == 0 and np.array_equal(self.slot, np.tile(np.arange(H), S // H)):
                # samples laid out as (blocks, H): reduce over blocks directly
                A = np.einsum("nha,nhb->hab", sp.reshape(-1, H, kd), self.phi.reshape(-1, H, kd))
                B = np.einsum("nha,nhb->hab", self.y.reshape(-1, H, d), sp.reshape(-1, H, kd))
                C = np.einsum("nh,nh->h", self.scale.reshape(-1, H),
                              np.einsum("sa,sa->s", self.y, self.y).reshape(-1, H))
            else:
                np.add.at(A, self.slot, np.einsum("sa,sb->sab", sp, self.phi))
                np.add.at(B, self.slot, np.einsum("sa,sb->sab", self.y, sp))
                np.add.at(C, self.slot, self.scale * np.einsum("sa,sa->s", self.y, self.y))
            object.__setattr__(self, "_stats", (A, B, C))
        return self._stats

    # -- exact per-sample path ------------------------------------------------

    def _weights(self, coeffs):
        return np.asarray(coeffs, dtype=float)[..., self.slot] * self.scale

    def value(self, stacked, coeffs) -> np.ndarray:
        """Objective for stacked params (P, d, kd) with coeffs (P, H) or (H,)."""
        r = np.einsum("pab,sb->psa", stacked, self.phi) - self.y
        sq = np.minimum(np.einsum("psa,psa->ps", r, r), self.clip_bound)
        w = np.broadcast_to(self._weights(coeffs), sq.shape)
        return np.einsum("ps,ps->p", w, sq)

    def value_and_grad(self, stacked, coeffs):
        r = np.einsum("pab,sb->psa", stacked, self.phi) - self.y
        sq = np.einsum("psa,psa->ps", r, r)
        inside = sq <= self.clip_bound
        w = np.broadcast_to(self._weights(coeffs), sq.shape)
        val = np.einsum("ps,ps->p", w, np.minimum(sq, self.clip_bound))
        grad = 2.0 * np.einsum("ps,psa,sb->pab", w * inside, r, self.phi)
        return val, grad

    # -- quadratic path ---------------------------------------------------------

    def quad_value_and_grad(self, stacked, coeffs):
        A, B, C = self.stats()
        coeffs = np.broadcast_to(np.asarray(coeffs, dtype=float), (stacked.shape[0], self.n_slots))
        Ac = np.einsum("ph,hab->pab", coeffs, A)
        Bc = np.einsum("ph,hab->pab", coeffs, B)
        TA = np.einsum("pab,pbc->pac", stacked, Ac)
        val = np.einsum("pab,pab->p", TA - 2.0 * Bc, stacked) + coeffs @ C
        return val, 2.0 * (TA - Bc)

    def smoothness(self, coeffs) -> np.ndarray:
        """Upper bound on the gradient Lipschitz constant of the unclipped objective."""
        A, _, _ = self.stats()
        normA = np.linalg.norm(A, ord=2, axis=(1, 2))
        return 2.0 * np.abs(np.asarray(coeffs, dtype=float)) @ normA


class Objective:
    """``F`` above for a fixed coefficient batch; picks the quadratic path when exact."""

    def __init__(self, terms: LossTerms, coeffs, radius: float, sign: float = 1.0):
        self.terms = terms
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.sign = sign
        self.quadratic = terms.clip_free(radius)

    def __call__(self, stacked):
        if self.quadratic:
            val, grad = self.terms.quad_value_and_grad(stacked, self.coeffs)
        else:
            val, grad = self.terms.value_and_grad(stacked, self.coeffs)
        return self.sign * val, self.sign * grad

    def exact_value(self, stacked):
        return self.sign * self.terms.value(stacked, self.coeffs)
