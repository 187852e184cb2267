"""Weighted empirical risk minimization for the four estimators and the population surrogate."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from symbound.dynamics import Dataset, GeneratorSpec, make_dataset
from symbound.errors import InvalidArgumentError, NumericError
from symbound.forecasters import (
    APPROX,
    EQUIVARIANT,
    FULL,
    LinearForecaster,
    LossSpec,
    ParameterSpace,
    project,
    project_stacked,
)
from symbound.group_algebra import FiniteGroup
from symbound.qweights import as_weights, uniform_q
from symbound.risk import LossTerms, Objective
from symbound.seeding import STREAM_POOL, STREAM_TRAIN, derive_seed

VANILLA = "vanilla"
DATA_AUG = "data_aug"
EQUIV = "equivariant"
APPROX_EQUIV = "approx_equivariant"
ESTIMATOR_KINDS = (VANILLA, DATA_AUG, EQUIV, APPROX_EQUIV)

SPACE_FOR_KIND = {VANILLA: FULL, DATA_AUG: FULL, EQUIV: EQUIVARIANT, APPROX_EQUIV: APPROX}
MAX_HALVINGS = 30


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 4.0
    lr_decay: float = 0.0
    max_iters: int = 500
    n_restarts: int = 5
    seed: int = 0
    convergence_tol: float = 1e-9
    init_scale: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.max_iters < 1 or self.n_restarts < 1:
            raise InvalidArgumentError("max_iters and n_restarts must be >= 1")


@dataclass
class TrainTrace:
    rows: list = field(default_factory=list)  # (iter, objective, grad_norm, step_size)
    restart: int = 0
    converged: bool = False

    @property
    def objectives(self):
        return [r[1] for r in self.rows]

    @property
    def monotone_violations(self) -> int:
        obj = self.objectives
        return sum(b > a for a, b in zip(obj, obj[1:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "objective", "grad_norm", "step_size"])
            for it, obj, gn, eta in self.rows:
                w.writerow([it, format(obj, ".17g"), format(gn, ".17g"), format(eta, ".17g")])


def _check_q(dataset: Dataset, q) -> np.ndarray:
    qv = as_weights(q)
    if qv.shape != (dataset.horizon,):
        raise InvalidArgumentError(
            f"q has length {qv.size}, expected horizon T-k = {dataset.horizon}"
        )
    return qv


def loss_terms(dataset: Dataset, kind: str, group: FiniteGroup | None, spec: LossSpec) -> LossTerms:
    if kind == DATA_AUG:
        if group is None:
            raise InvalidArgumentError("data augmentation needs a group")
        return LossTerms.from_dataset(dataset, spec.clip_bound, group)
    return LossTerms.from_dataset(dataset, spec.clip_bound)


def weighted_risk(theta: LinearForecaster, dataset: Dataset, q, kind: str = VANILLA,
                  group: FiniteGroup | None = None, spec: LossSpec = LossSpec()) -> float:
    """``(1/N) sum_i sum_t q_t L(theta, Z_t^i)``, with the orbit-averaged loss for data augmentation."""
    qv = _check_q(dataset, q)
    terms = loss_terms(dataset, kind, group, spec)
    return float(terms.value(theta.stacked[None], qv)[0])


def _descend(obj: Objective, x0: np.ndarray, space: ParameterSpace, k: int,
             config: TrainConfig, trace: TrainTrace) -> tuple[np.ndarray, float]:
    x = project_stacked(x0[None], space, k)
    val, grad = obj(x)
    for it in range(config.max_iters):
        if not np.isfinite(val[0]):
            raise NumericError(f"non-finite objective at iteration {it}")
        gnorm = float(np.linalg.norm(grad))
        eta = config.learning_rate / (1.0 + config.lr_decay * it)
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = project_stacked(x - eta * grad, space, k)
            cval, cgrad = obj(cand)
            if cval[0] < val[0]:
                accepted = True
                break
            eta *= 0.5
        trace.rows.append((it, float(val[0]), gnorm, eta if accepted else 0.0))
        if not accepted:
            trace.converged = True
            break
        mapping = np.linalg.norm(x - cand) / eta
        x, val, grad = cand, cval, cgrad
        if mapping <= config.convergence_tol:
            trace.converged = True
            break
    if not np.isfinite(val[0]):
        raise NumericError(f"non-finite objective at iteration {config.max_iters}")
    return x[0], float(val[0])


def weighted_erm(dataset: Dataset, q, space: ParameterSpace, kind: str,
                 config: TrainConfig = TrainConfig(), spec: LossSpec = LossSpec(),
                 group: FiniteGroup | None = None) -> tuple[LinearForecaster, TrainTrace]:
    """Multi-restart projected gradient descent with backtracking.

    Each restart starts from i.i.d. uniform entries in ``[-init_scale, init_scale]``;
    the restart with the lowest final objective wins (ties go to the earlier one).
    """
    if kind not in ESTIMATOR_KINDS:
        raise InvalidArgumentError(f"unknown estimator kind {kind!r}")
    if SPACE_FOR_KIND[kind] != space.kind:
        raise InvalidArgumentError(f"estimator {kind!r} needs a {SPACE_FOR_KIND[kind]!r} space, got {space.kind!r}")
    qv = _check_q(dataset, q)
    if kind == DATA_AUG and group is None:
        group = space.group
    terms = loss_terms(dataset, kind, group, spec)
    obj = Objective(terms, qv, space.radius)
    k, d = dataset.k, dataset.dim
    best = None
    for r in range(config.n_restarts):
        rng = np.random.default_rng(derive_seed(config.seed, STREAM_TRAIN, r))
        x0 = rng.uniform(-config.init_scale, config.init_scale, size=(d, k * d))
        trace = TrainTrace(restart=r)
        x, val = _descend(obj, x0, space, k, config, trace)
        if best is None or val < best[1]:
            best = (x, val, trace)
    theta = LinearForecaster.from_stacked(best[0], k)
    if not space.contains(theta):
        theta = project(theta, space)
    return theta, best[2]


def fit_population_surrogate(spec: GeneratorSpec, pool_N: int, T: int, k: int, space: ParameterSpace,
                             config: TrainConfig = TrainConfig(), loss_spec: LossSpec = LossSpec(),
                             experiment_N: int | None = None) -> LinearForecaster:
    """Stand-in for the population minimizer: uniform-weight ERM on a large fresh pool.

    The fit always runs over the full ball with the radius of ``space``; its own
    Monte-Carlo error shrinks like ``1/sqrt(pool_N)``.
    """
    if experiment_N is not None and pool_N < 50 * experiment_N:
        raise InvalidArgumentError(f"pool_N={pool_N} is below 50 x N={experiment_N}")
    pool = make_dataset(spec, pool_N, T, k, derive_seed(config.seed, STREAM_POOL))
    full = ParameterSpace.full(space.radius, space.domain_bound)
    theta, _ = weighted_erm(pool, uniform_q(pool.horizon), full, VANILLA, config, loss_spec)
    return theta


def xi_bound(theta_star: LinearForecaster, dataset: Dataset, q, spec: LossSpec = LossSpec()) -> float:
    """Weighted empirical risk of the population surrogate on the training set."""
    return weighted_risk(theta_star, dataset, q, VANILLA, None, spec)


def underfit_check(theta_hat: LinearForecaster, theta_star: LinearForecaster, dataset: Dataset, q,
                   space: ParameterSpace, kind: str, spec: LossSpec, tol: float,
                   group: FiniteGroup | None = None) -> tuple[bool, float]:
    """Compare the trained objective with the surrogate projected into the same space.

    Returns ``(ok, margin)`` where ``margin = R(theta_hat) - R(P theta_star)``.
    """
    if kind == DATA_AUG and group is None:
        group = space.group
    star = project(theta_star, space)
    margin = (weighted_risk(theta_hat, dataset, q, kind, group, spec)
              - weighted_risk(star, dataset, q, kind, group, spec))
    return margin <= tol, margin
