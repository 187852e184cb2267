"""Monte-Carlo estimates of the bound ingredients and assembly of the bounds.

Every supremum over parameters is approximated by multi-start projected
gradient ascent, so sup-based quantities (discrepancy, sequential Rademacher
complexity, the variance-reduction term) are lower bounds on the analytic
values. Reports carry a ``sup_approximation`` caveat to that effect. When the
clip cannot activate the objective is an exact quadratic; the ascent then also
starts from the exact maximizer over the largest ball-shaped linear subspace
of the space (the whole ball, or the equivariant ball), which makes sups over
full and equivariant balls exact up to rounding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from symbound.dynamics import Dataset, GeneratorSpec, fresh_samples
from symbound.errors import BudgetError, InvalidArgumentError, NumericError
from symbound.forecasters import (
    FULL,
    LinearForecaster,
    LossSpec,
    ParameterSpace,
    project_stacked,
    reynolds_stacked,
)
from symbound.group_algebra import FiniteGroup, trivial_group
from symbound.qweights import as_weights, confidence_coeff
from symbound.risk import LossTerms, Objective
from symbound.trust_region import maximize_quadratic_on_ball
from symbound.seeding import (
    STREAM_ASCENT,
    STREAM_BOOTSTRAP,
    STREAM_FRESH_DISC,
    STREAM_SIGMA,
    derive_seed,
)

REPORT_SCHEMA = "symbound-report/1"
MAX_W1_POINTS = 1024
ROUNDING_RESOLUTION = 1e-12


@dataclass(frozen=True)
class MCConfig:
    n_sigma: int = 256
    n_fresh: int = 512
    sup_restarts: int = 4
    sup_iters: int = 150
    n_bootstrap: int = 200
    seed: int = 0

    def __post_init__(self):
        for name in ("n_sigma", "n_fresh", "sup_restarts", "sup_iters", "n_bootstrap"):
            if getattr(self, name) < 1:
                raise InvalidArgumentError(f"{name} must be positive")


class MCEstimate(NamedTuple):
    mean: float
    stderr: float
    draws: np.ndarray


def _estimate(draws: np.ndarray) -> MCEstimate:
    draws = np.asarray(draws, dtype=float)
    se = float(np.std(draws, ddof=1) / np.sqrt(draws.size)) if draws.size > 1 else 0.0
    return MCEstimate(float(np.mean(draws)), se, draws)


# -- sup by projected gradient ascent ------------------------------------------


def subspace_basis(space: ParameterSpace, d: int, k: int) -> np.ndarray:
    """Frobenius-orthonormal basis (m, d, kd) of the linear span inside ``space``.

    The full space spans everything; the (approximately) equivariant spaces
    contain the equivariant ball, spanned by the stacked commutant.
    """
    kd = k * d
    eye = np.eye(d * kd).reshape(d * kd, d, kd)
    if space.kind == FULL:
        return eye
    sym = reynolds_stacked(eye, space.group.elements, space.lifted(k)).reshape(d * kd, d * kd)
    u, s, _ = np.linalg.svd(sym.T, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1.0)))
    return u[:, :rank].T.reshape(rank, d, kd)


def exact_quadratic_sup(terms: LossTerms, coeffs: np.ndarray, basis: np.ndarray, radius: float) -> np.ndarray:
    """Exact maximizers of the unclipped objective over the ball within ``span(basis)``."""
    A, B, _ = terms.stats()
    Ac = np.einsum("ph,hab->pab", coeffs, A)
    Bc = np.einsum("ph,hab->pab", coeffs, B)
    Q = np.einsum("bij,pjk,cik->pbc", basis, Ac, basis)
    lin = np.einsum("bij,pij->pb", basis, Bc)
    a = maximize_quadratic_on_ball(Q, lin, radius)
    return np.einsum("pb,bij->pij", a, basis)


def sup_ascent(terms: LossTerms, coeffs: np.ndarray, space: ParameterSpace, k: int,
               restarts: int, iters: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Maximize ``F_c(theta)`` over ``space`` for each row ``c`` of ``coeffs``.

    Returns the best objective value per row and the maximizing stacked
    parameters. All rows and restarts run as one batch with step size ``1/L_c``
    (the exact gradient Lipschitz constant on the quadratic path, a bound
    otherwise). On the quadratic path one extra start per row is the exact
    subspace maximizer from :func:`exact_quadratic_sup`.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    P = coeffs.shape[0]
    d = terms.y.shape[1]
    kd = terms.phi.shape[1]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((restarts, d, kd))
    x /= np.linalg.norm(x, axis=(1, 2), keepdims=True)
    x *= space.radius * rng.uniform(size=(restarts, 1, 1)) ** (1.0 / (d * kd))
    x = np.broadcast_to(x[None], (P, restarts, d, kd))
    quadratic = terms.clip_free(space.radius)
    if quadratic:
        exact = exact_quadratic_sup(terms, coeffs, subspace_basis(space, d, k), space.radius)
        x = np.concatenate([x, exact[:, None]], axis=1)
    starts = x.shape[1]
    x = project_stacked(x.reshape(P * starts, d, kd), space, k)
    c = np.repeat(coeffs, starts, axis=0)
    obj = Objective(terms, c, space.radius)
    if quadratic:
        A, _, _ = terms.stats()
        eig = np.linalg.eigvalsh(np.einsum("ph,hab->pab", coeffs, A))
        smooth = np.repeat(2.0 * np.max(np.abs(eig), axis=1), starts)
    else:
        smooth = terms.smoothness(c)
    eta = (1.0 / np.maximum(smooth, 1e-12))[:, None, None]
    best_val = np.full(P * starts, -np.inf)
    best_x = x.copy()
    for it in range(iters + 1):
        val, grad = obj(x)
        if not np.all(np.isfinite(val)):
            raise NumericError(f"ascent diverged at iteration {it}")
        better = val > best_val
        best_val = np.where(better, val, best_val)
        best_x[better] = x[better]
        if it == iters:
            break
        nxt = project_stacked(x + eta * grad, space, k)
        if np.max(np.abs(nxt - x)) <= 1e-13:
            break
        x = nxt
    best_val = best_val.reshape(P, starts)
    pick = np.argmax(best_val, axis=1)
    xs = best_x.reshape(P, starts, d, kd)[np.arange(P), pick]
    return best_val[np.arange(P), pick], xs


def rademacher_signs(n_sigma: int, horizon: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(seed, STREAM_SIGMA))
    return rng.choice(np.array([-1.0, 1.0]), size=(n_sigma, horizon))


def _draw_sups(terms: LossTerms, q: np.ndarray, space: ParameterSpace, k: int, mc: MCConfig) -> np.ndarray:
    sigma = rademacher_signs(mc.n_sigma, q.size, mc.seed)
    coeffs = sigma * q
    vals, _ = sup_ascent(terms, coeffs, space, k, mc.sup_restarts, mc.sup_iters,
                         derive_seed(mc.seed, STREAM_ASCENT))
    return vals


def _check_q(dataset: Dataset, q) -> np.ndarray:
    qv = as_weights(q)
    if qv.shape != (dataset.horizon,):
        raise InvalidArgumentError(f"q has length {qv.size}, expected horizon {dataset.horizon}")
    return qv


def estimate_seq_rademacher(dataset: Dataset, q, space: ParameterSpace, mc: MCConfig,
                            loss_variant: str = "plain", group: FiniteGroup | None = None,
                            loss_spec: LossSpec = LossSpec()) -> MCEstimate:
    """``E_sigma sup_theta (1/N) sum_i sum_t sigma_t q_t L(theta, Z_t^i)``.

    One sign per time index is shared by all series. ``loss_variant="orbit"``
    swaps in the orbit-averaged loss over ``group``. The per-draw sups are in
    ``draws``; the same ``mc.seed`` reproduces the same signs.
    """
    qv = _check_q(dataset, q)
    if loss_variant == "orbit":
        if group is None:
            raise InvalidArgumentError("orbit-averaged variant needs a group")
        terms = LossTerms.from_dataset(dataset, loss_spec.clip_bound, group)
    elif loss_variant == "plain":
        terms = LossTerms.from_dataset(dataset, loss_spec.clip_bound)
    else:
        raise InvalidArgumentError(f"unknown loss variant {loss_variant!r}")
    return _estimate(_draw_sups(terms, qv, space, dataset.k, mc))


def estimate_delta(dataset: Dataset, q, group: FiniteGroup, space: ParameterSpace, mc: MCConfig,
                   loss_spec: LossSpec = LossSpec()) -> MCEstimate:
    """Variance-reduction term: sup of the orbit average minus the orbit average of sups.

    Both terms use the same sign draws, so ``draws`` holds paired differences.
    """
    qv = _check_q(dataset, q)
    first = estimate_seq_rademacher(dataset, q, space, mc, "orbit", group, loss_spec).draws
    gw = np.einsum("gab,...b->g...a", group.elements, dataset.windows)
    gt = np.einsum("gab,...b->g...a", group.elements, dataset.targets)
    per_g = [
        _draw_sups(LossTerms.from_arrays(gw[i], gt[i], loss_spec.clip_bound), qv, space, dataset.k, mc)
        for i in range(group.order)
    ]
    second = np.mean(per_g, axis=0)
    return _estimate(first - second)


class LemmaCheck(NamedTuple):
    r_eq: MCEstimate
    r_bar: MCEstimate
    difference: MCEstimate
    passed: bool


def check_lemma1(dataset: Dataset, q, group: FiniteGroup, mc: MCConfig, radius: float = 1.0,
                 domain_bound: float = 1.0, loss_spec: LossSpec = LossSpec()) -> LemmaCheck:
    """Compare complexity over the equivariant ball with the orbit-averaged loss over the full ball."""
    eq = ParameterSpace.equivariant(radius, group, domain_bound)
    full = ParameterSpace.full(radius, domain_bound)
    r_eq = estimate_seq_rademacher(dataset, q, eq, mc, "plain", None, loss_spec)
    r_bar = estimate_seq_rademacher(dataset, q, full, mc, "orbit", group, loss_spec)
    raw = r_eq.draws - r_bar.draws
    # both sups are exact up to rounding on the quadratic path; gaps below the
    # rounding resolution carry no sign information and count as zero
    scale = np.maximum(np.abs(r_eq.draws), np.abs(r_bar.draws))
    diff = _estimate(np.where(np.abs(raw) <= ROUNDING_RESOLUTION * scale, 0.0, raw))
    return LemmaCheck(r_eq, r_bar, diff, diff.mean <= 2.0 * diff.stderr)


# -- discrepancy ------------------------------------------------------------------


class DiscrepancyOracle:
    """Discrepancy estimates for many weight vectors over one fixed set of fresh series.

    Expectations are averages over ``mc.n_fresh`` new series covering
    t = k+1..T+1. Both signs of the difference are maximized and the larger
    is kept. Calling the oracle returns the point estimate only, which is the
    form :func:`symbound.qweights.optimize_q` expects.
    """

    def __init__(self, spec: GeneratorSpec, space: ParameterSpace, mc: MCConfig,
                 loss_spec: LossSpec = LossSpec(), k: int = 1, T: int = 2):
        self.space, self.mc, self.k, self.T = space, mc, k, T
        self.clip_bound = loss_spec.clip_bound
        self.windows, self.targets = fresh_samples(spec, mc.n_fresh, T, k,
                                                   derive_seed(mc.seed, STREAM_FRESH_DISC))
        self.terms = LossTerms.from_arrays(self.windows, self.targets, loss_spec.clip_bound)

    def _coeffs(self, q) -> np.ndarray:
        qv = as_weights(q)
        if qv.size != self.T - self.k:
            raise InvalidArgumentError(f"q has length {qv.size}, expected T-k = {self.T - self.k}")
        return np.concatenate([qv, [-1.0]])

    def _sup(self, c):
        vals, xs = sup_ascent(self.terms, np.stack([c, -c]), self.space, self.k, self.mc.sup_restarts,
                              self.mc.sup_iters, derive_seed(self.mc.seed, STREAM_ASCENT))
        best = int(np.argmax(vals))
        return float(max(vals[best], 0.0)), xs[best], (1.0 if best == 0 else -1.0)

    def __call__(self, q) -> float:
        return self._sup(self._coeffs(q))[0]

    def estimate(self, q) -> MCEstimate:
        """Point estimate plus a bootstrap over series at the maximizing parameters."""
        c = self._coeffs(q)
        value, theta, sign = self._sup(c)
        w = self.windows.reshape(*self.windows.shape[:2], -1)
        r = np.einsum("ab,nhb->nha", theta, w) - self.targets
        per_series = np.minimum(np.einsum("nha,nha->nh", r, r), self.clip_bound) @ (sign * c)
        rng = np.random.default_rng(derive_seed(self.mc.seed, STREAM_BOOTSTRAP))
        n = self.mc.n_fresh
        idx = rng.integers(0, n, size=(self.mc.n_bootstrap, n))
        boot = np.abs(per_series[idx].mean(axis=1))
        se = float(np.std(boot, ddof=1)) if boot.size > 1 else 0.0
        return MCEstimate(value, se, boot)


def estimate_discrepancy(spec: GeneratorSpec, q, space: ParameterSpace, mc: MCConfig,
                         loss_spec: LossSpec = LossSpec(), k: int = 1, T: int | None = None) -> MCEstimate:
    """``sup_theta |sum_t q_t E L(theta, Z_t) - E L(theta, Z_{T+1})|`` from fresh series.

    ``T`` defaults to ``len(q) + k``. ``draws`` holds the bootstrap replicates
    of the absolute difference at the maximizer.
    """
    if T is None:
        T = as_weights(q).size + k
    return DiscrepancyOracle(spec, space, mc, loss_spec, k, T).estimate(q)


# -- Wasserstein terms ----------------------------------------------------------------


def wasserstein_w1(samples_a, samples_b) -> float:
    """Exact W1 between two uniform empirical measures of equal size (optimal assignment)."""
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    a = a.reshape(a.shape[0], -1)
    b = b.reshape(b.shape[0], -1)
    if a.shape[0] != b.shape[0]:
        raise InvalidArgumentError(f"W1 needs equal counts, got {a.shape[0]} and {b.shape[0]}")
    if a.shape[0] > MAX_W1_POINTS:
        raise BudgetError(f"{a.shape[0]} points exceeds the exact-assignment budget of "
                          f"{MAX_W1_POINTS}; subsample first")
    if a.shape[0] == 0:
        return 0.0
    cost = cdist(a, b)
    rows, cols = linear_sum_assignment(cost)
    # fsum is order independent, so swapping the arguments gives the same bits
    return math.fsum(cost[rows, cols]) / a.shape[0]


def _flatten_samples(windows: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return np.concatenate([windows.reshape(*windows.shape[:-2], -1), targets], axis=-1)


def orbit_w1(windows: np.ndarray, targets: np.ndarray, group: FiniteGroup) -> float:
    """``(1/|G|) sum_g W1(Z, gZ)`` for a pooled sample set; the identity term is 0."""
    pts = _flatten_samples(windows, targets)
    total = 0.0
    for i, g in enumerate(group.elements):
        if i == group.identity_index:
            continue
        moved = _flatten_samples(windows @ g.T, targets @ g.T)
        total += wasserstein_w1(pts, moved)
    return total / group.order


def symmetry_bias_terms(dataset: Dataset, group: FiniteGroup, q, lip: float) -> tuple[float, float]:
    """Lipschitz-scaled orbit Wasserstein terms for the target and the worst training time.

    Empirical measures pool the N series at each time index.
    """
    qv = _check_q(dataset, q)
    w_target = lip * orbit_w1(dataset.target_windows, dataset.target_states, group)
    per_t = [
        qv[h] * orbit_w1(dataset.windows[:, h], dataset.targets[:, h], group)
        for h in range(dataset.horizon)
    ]
    return float(w_target), float(lip * max(per_t))


# -- assembly --------------------------------------------------------------------------


def complexity_coeff(M: float, T: int) -> float:
    if T < 2:
        raise InvalidArgumentError(f"T must be >= 2 for the log T factor, got {T}")
    return 6.0 * M * math.sqrt(4.0 * math.pi * math.log(T))


def confidence_terms(q_l2: float, M: float, delta: float, N: int) -> tuple[float, float]:
    """The two confidence addends, with delta split evenly between them."""
    if not 0 < delta < 1:
        raise InvalidArgumentError("delta must lie in (0, 1)")
    return math.sqrt(2.0 * math.log(2.0 / delta) / N), q_l2 * confidence_coeff(M, delta)


@dataclass(frozen=True)
class Assembly:
    rhs: float
    addends: dict


def _require(**kw):
    missing = [k for k, v in kw.items() if v is None]
    if missing:
        raise InvalidArgumentError(f"missing bound inputs: {missing}")


def assemble_theorem1(disc, r_seq, q_l2, M, delta, N, T) -> Assembly:
    _require(disc=disc, r_seq=r_seq, q_l2=q_l2)
    c1, c2 = confidence_terms(q_l2, M, delta, N)
    add = {
        "discrepancy": 2.0 * disc,
        "complexity": complexity_coeff(M, T) * r_seq,
        "confidence_n": c1,
        "confidence_q": c2,
    }
    return Assembly(sum(add.values()), add)


def assemble_cor_da(disc, r_seq_bar, w_target, w_train_max, q_l2, M, delta, N, T) -> Assembly:
    _require(disc=disc, r_seq_bar=r_seq_bar, w_target=w_target, w_train_max=w_train_max, q_l2=q_l2)
    base = assemble_theorem1(disc, r_seq_bar, q_l2, M, delta, N, T).addends
    add = {**base, "bias_target": w_target, "bias_train": w_train_max}
    return Assembly(sum(add.values()), add)


def assemble_cor_eq(disc, r_seq_eq, w_target, q_l2, M, delta, N, T) -> Assembly:
    _require(disc=disc, r_seq_eq=r_seq_eq, w_target=w_target, q_l2=q_l2)
    base = assemble_theorem1(disc, r_seq_eq, q_l2, M, delta, N, T).addends
    add = {**base, "bias_target": w_target}
    return Assembly(sum(add.values()), add)


def assemble_cor_ae(disc, r_seq_ae, w_target, q_l1, ee_hat, xi, q_l2, M, delta, N, T) -> Assembly:
    _require(disc=disc, r_seq_ae=r_seq_ae, w_target=w_target, q_l1=q_l1, ee_hat=ee_hat, xi=xi, q_l2=q_l2)
    base = assemble_theorem1(disc, r_seq_ae, q_l2, M, delta, N, T).addends
    add = {**base, "bias_target": w_target, "ee_credit": -q_l1 * ee_hat, "xi": 2.0 * xi}
    return Assembly(sum(add.values()), add)


# -- decomposition diagnostics ---------------------------------------------------------


def _mean_losses(theta: LinearForecaster, windows, targets, M) -> np.ndarray:
    """Per-slot mean clipped loss over the leading (series) axis."""
    r = np.einsum("jab,...jb->...a", theta.lag_matrices, windows) - targets
    return np.minimum(np.einsum("...a,...a->...", r, r), M).mean(axis=0)


def _orbit_mean_losses(theta, windows, targets, group, M) -> np.ndarray:
    return np.mean([_mean_losses(theta, windows @ g.T, targets @ g.T, M) for g in group.elements], axis=0)


def diagnostic_terms(theta_hat: LinearForecaster, theta_star: LinearForecaster, dataset: Dataset, q,
                     spec: LossSpec, group: FiniteGroup | None, fresh_windows, fresh_targets,
                     convergence_tol: float = 1e-6) -> dict:
    """Empirical values of the excess-risk decomposition terms.

    ``fresh_*`` cover t = k+1..T+1 for new series (last slot = target time).
    I..IV telescope to the measured gap; V is the training-set gap between the
    loss and the orbit-averaged loss of the surrogate and VI the same gap at the
    target in expectation. Both vanish for the trivial group.
    """
    qv = _check_q(dataset, q)
    group = group or trivial_group(dataset.dim)
    M = spec.clip_bound
    train_hat = _mean_losses(theta_hat, dataset.windows, dataset.targets, M) @ qv
    train_star = _mean_losses(theta_star, dataset.windows, dataset.targets, M) @ qv
    fresh_hat = _mean_losses(theta_hat, fresh_windows, fresh_targets, M)
    fresh_star = _mean_losses(theta_star, fresh_windows, fresh_targets, M)
    if group.order == 1:
        train_star_orbit, target_star_orbit = train_star, fresh_star[-1]
    else:
        train_star_orbit = _orbit_mean_losses(theta_star, dataset.windows, dataset.targets, group, M) @ qv
        target_star_orbit = _orbit_mean_losses(theta_star, fresh_windows[:, -1:], fresh_targets[:, -1:], group, M)[0]
    terms = {
        "I": float(fresh_hat[-1] - train_hat),
        "II": float(train_hat - train_star),
        "III": float(train_star - fresh_star[:-1] @ qv),
        "IV": float(fresh_star[:-1] @ qv - fresh_star[-1]),
        "V": float(train_star - train_star_orbit),
        "VI": float(target_star_orbit - fresh_star[-1]),
    }
    terms["gap"] = float(fresh_hat[-1] - fresh_star[-1])
    terms["II_within_tol"] = bool(terms["II"] <= convergence_tol)
    return terms


# -- report ----------------------------------------------------------------------------


@dataclass
class BoundReport:
    seed: int
    kind: str
    disc: float
    r_seq: float
    r_seq_bar: float
    r_seq_eq: float
    r_seq_ae: float
    delta: float
    w_target: float
    w_train_max: float
    xi: float
    ee_hat: float
    ee_star: float
    q_l1: float
    q_l2: float
    conf_terms: float
    rhs_theorem1: float
    rhs_cor_da: float
    rhs_cor_eq: float
    rhs_cor_ae: float
    measured_gap: float
    test_risk: float
    train_risk: float
    stderr: dict = field(default_factory=dict)
    addends: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    caveats: dict = field(default_factory=dict)

    @property
    def theorem1_holds(self) -> bool:
        return self.measured_gap <= self.rhs_theorem1

    def to_json(self) -> str:
        body = {"schema": REPORT_SCHEMA, **asdict(self)}
        return json.dumps(body, indent=2, sort_keys=True, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> BoundReport:
        body = json.loads(text)
        if body.pop("schema", None) != REPORT_SCHEMA:
            raise InvalidArgumentError(f"expected schema {REPORT_SCHEMA!r}")
        return cls(**body)
