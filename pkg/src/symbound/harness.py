"""End-to-end experiments: per-seed bound ingredients, four estimators, reports.

A run has three stages. The shared stage builds, for each seed, the dataset,
the population surrogate and every estimator-independent bound ingredient.
The training stage fits one estimator per (seed, kind) and measures its test
risk. The assembly stage combines both into one :class:`BoundReport` per
(seed, kind). The first two stages fan out over a process pool; results are
collected in fixed key order, so outputs do not depend on ``jobs``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from symbound.bound_lab import (
    BoundReport,
    DiscrepancyOracle,
    MCEstimate,
    assemble_cor_ae,
    assemble_cor_da,
    assemble_cor_eq,
    assemble_theorem1,
    check_lemma1,
    confidence_terms,
    diagnostic_terms,
    estimate_delta,
    estimate_seq_rademacher,
    symmetry_bias_terms,
)
from symbound.config import ExperimentConfig, axis_aliases, serialize_config, set_value
from symbound.dynamics import Dataset, fresh_samples, make_dataset
from symbound.errors import IntegrityError, InvalidArgumentError, SymboundError
from symbound.forecasters import (
    LinearForecaster,
    LossSpec,
    ParameterSpace,
    equivariance_error,
    lipschitz_bound,
)
from symbound.group_algebra import FiniteGroup, make_cyclic_rotation_group, trivial_group
from symbound.qweights import QOptConfig, exp_decay_q, norms, one_hot_last_q, optimize_q, uniform_q
from symbound.seeding import (
    STREAM_DATASET,
    STREAM_EXPERIMENT,
    STREAM_FRESH_TEST,
    STREAM_SIGMA,
    STREAM_TRAIN,
    derive_seed,
)
from symbound.trainers import (
    APPROX_EQUIV,
    DATA_AUG,
    EQUIV,
    ESTIMATOR_KINDS,
    VANILLA,
    TrainConfig,
    fit_population_surrogate,
    underfit_check,
    weighted_erm,
    weighted_risk,
    xi_bound,
)

RESULTS_FILE = "results.csv"
TIMINGS_FILE = "timings.csv"
VIOLATIONS_FILE = "violations.csv"
AGGREGATE_FILE = "aggregate.csv"
VERDICTS_FILE = "verdicts.json"
CONFIG_FILE = "config.ini"
FAILURE_SHARE = 0.2

BOUND_FOR_KIND = {
    VANILLA: "rhs_theorem1",
    DATA_AUG: "rhs_cor_da",
    EQUIV: "rhs_cor_eq",
    APPROX_EQUIV: "rhs_cor_ae",
}
ADDENDS_FOR_KIND = {VANILLA: "theorem1", DATA_AUG: "cor_da", EQUIV: "cor_eq", APPROX_EQUIV: "cor_ae"}

RESULT_COLUMNS = [
    "seed", "kind", "status", "test_risk", "train_risk", "measured_gap", "rhs",
    "rhs_theorem1", "rhs_cor_da", "rhs_cor_eq", "rhs_cor_ae", "bound_holds",
    "ee", "report", "error",
]

# errors that fail one row without stopping the run
ROW_ERRORS = (SymboundError, ArithmeticError, ValueError, np.linalg.LinAlgError)


def make_group(config: ExperimentConfig) -> FiniteGroup:
    order, dim = config.experiment.group_order, config.generator.dim
    return trivial_group(dim) if order == 1 else make_cyclic_rotation_group(order, dim)


def loss_spec(config: ExperimentConfig) -> LossSpec:
    return LossSpec(config.experiment.clip_bound)


def seed_value(config: ExperimentConfig, index: int) -> int:
    return derive_seed(config.experiment.seed, STREAM_EXPERIMENT, index)


def seeded_train_config(config: ExperimentConfig, index: int) -> TrainConfig:
    return replace(config.train, seed=derive_seed(seed_value(config, index), STREAM_TRAIN, config.train.seed))


def seeded_mc(config: ExperimentConfig, index: int):
    return replace(config.mc, seed=derive_seed(seed_value(config, index), STREAM_SIGMA, config.mc.seed))


def build_dataset(config: ExperimentConfig, index: int) -> Dataset:
    ex = config.experiment
    return make_dataset(config.generator, ex.N, ex.T, ex.k, derive_seed(seed_value(config, index), STREAM_DATASET))


def spaces(config: ExperimentConfig, group: FiniteGroup, ee_budget: float) -> dict:
    R, B = config.experiment.radius, config.generator.state_bound
    return {
        VANILLA: ParameterSpace.full(R, B),
        DATA_AUG: ParameterSpace.full(R, B),
        EQUIV: ParameterSpace.equivariant(R, group, B),
        APPROX_EQUIV: ParameterSpace.approx_equivariant(R, group, ee_budget, B),
    }


def _err(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def _est(e: MCEstimate) -> tuple[float, float]:
    return float(e.mean), float(e.stderr)


@dataclass
class SeedContext:
    """Everything the training and assembly stages need for one seed."""

    index: int
    error: str = ""
    dataset: Dataset | None = None
    q: np.ndarray | None = None
    theta_star: LinearForecaster | None = None
    ee_star: float = 0.0
    ee_budget: float = 0.0
    xi: float = 0.0
    lip: float = 0.0
    terms: dict = field(default_factory=dict)  # name -> (mean, stderr)
    lemma: dict = field(default_factory=dict)
    fresh_windows: np.ndarray | None = None
    fresh_targets: np.ndarray | None = None
    test_risk_star: float = 0.0
    seconds: float = 0.0


def choose_q(config: ExperimentConfig, oracle_factory) -> np.ndarray:
    ex = config.experiment
    H = ex.T - ex.k
    if ex.q_scheme == "uniform":
        return uniform_q(H).values
    if ex.q_scheme == "exp_decay":
        return exp_decay_q(H, ex.q_decay).values
    if ex.q_scheme == "last":
        return one_hot_last_q(H).values
    return optimize_q(oracle_factory(), ex.clip_bound, ex.delta, ex.N, ex.T, QOptConfig(), horizon=H).values


def _test_losses(theta: LinearForecaster, windows, targets, M) -> np.ndarray:
    r = np.einsum("jab,njb->na", theta.lag_matrices, windows[:, -1]) - targets[:, -1]
    return np.minimum(np.einsum("na,na->n", r, r), M)


def prepare_seed(config: ExperimentConfig, index: int) -> SeedContext:
    """Shared stage: dataset, surrogate, and all estimator-independent bound terms."""
    start = time.perf_counter()
    ctx = SeedContext(index=index)
    try:
        ex, gen = config.experiment, config.generator
        spec = loss_spec(config)
        group = make_group(config)
        mc = seeded_mc(config, index)
        train_cfg = seeded_train_config(config, index)
        ds = build_dataset(config, index)
        ctx.dataset = ds
        full = ParameterSpace.full(ex.radius, gen.state_bound)
        oracle = None

        def oracle_factory():
            nonlocal oracle
            if oracle is None:
                oracle = DiscrepancyOracle(gen, full, mc, spec, ex.k, ex.T)
            return oracle

        q = choose_q(config, oracle_factory)
        ctx.q = q
        ctx.theta_star = fit_population_surrogate(gen, ex.pool_factor * ex.N, ex.T, ex.k, full, train_cfg, spec,
                                                  experiment_N=ex.N)
        ctx.ee_star = equivariance_error(ctx.theta_star, group, gen.state_bound)
        ctx.ee_budget = ctx.ee_star if ex.ee_budget is None else ex.ee_budget
        sp = spaces(config, group, ctx.ee_budget)
        ctx.xi = xi_bound(ctx.theta_star, ds, q, spec)
        ctx.lip = lipschitz_bound(full, gen.state_bound, ex.k, ex.clip_bound)
        w_target, w_train_max = symmetry_bias_terms(ds, group, q, ctx.lip)
        t = ctx.terms
        t["disc"] = _est(oracle_factory().estimate(q))
        t["r_seq"] = _est(estimate_seq_rademacher(ds, q, full, mc, "plain", None, spec))
        t["r_seq_bar"] = _est(estimate_seq_rademacher(ds, q, full, mc, "orbit", group, spec))
        t["r_seq_eq"] = _est(estimate_seq_rademacher(ds, q, sp[EQUIV], mc, "plain", None, spec))
        t["r_seq_ae"] = _est(estimate_seq_rademacher(ds, q, sp[APPROX_EQUIV], mc, "plain", None, spec))
        t["delta"] = _est(estimate_delta(ds, q, group, full, mc, spec))
        t["w_target"] = (w_target, 0.0)
        t["w_train_max"] = (w_train_max, 0.0)
        lemma = check_lemma1(ds, q, group, mc, ex.radius, gen.state_bound, spec)
        ctx.lemma = {
            "lemma_r_eq": lemma.r_eq.mean,
            "lemma_r_bar": lemma.r_bar.mean,
            "lemma_difference": lemma.difference.mean,
            "lemma_difference_stderr": lemma.difference.stderr,
            "lemma_passed": bool(lemma.passed),
        }
        fw, ft = fresh_samples(gen, ex.n_test, ex.T, ex.k, derive_seed(seed_value(config, index), STREAM_FRESH_TEST))
        ctx.fresh_windows, ctx.fresh_targets = fw, ft
        ctx.test_risk_star = float(_test_losses(ctx.theta_star, fw, ft, ex.clip_bound).mean())
    except ROW_ERRORS as exc:
        ctx.error = _err(exc)
    ctx.seconds = time.perf_counter() - start
    return ctx


@dataclass
class KindResult:
    index: int
    kind: str
    error: str = ""
    theta: LinearForecaster | None = None
    train_risk: float = 0.0
    test_risk: float = 0.0
    test_stderr: float = 0.0
    ee: float = 0.0
    underfit_ok: bool = True
    underfit_margin: float = 0.0
    converged: bool = False
    diagnostics: dict = field(default_factory=dict)
    seconds: float = 0.0


def train_kind(config: ExperimentConfig, ctx: SeedContext, kind: str) -> KindResult:
    """Training stage for one (seed, kind)."""
    start = time.perf_counter()
    res = KindResult(ctx.index, kind)
    if ctx.error:
        res.error = f"shared stage failed: {ctx.error}"
        return res
    try:
        ex = config.experiment
        spec = loss_spec(config)
        group = make_group(config)
        space = spaces(config, group, ctx.ee_budget)[kind]
        aug = group if kind == DATA_AUG else None
        theta, trace = weighted_erm(ctx.dataset, ctx.q, space, kind, seeded_train_config(config, ctx.index), spec,
                                    aug)
        res.theta = theta
        res.converged = trace.converged
        res.train_risk = weighted_risk(theta, ctx.dataset, ctx.q, VANILLA, None, spec)
        losses = _test_losses(theta, ctx.fresh_windows, ctx.fresh_targets, ex.clip_bound)
        res.test_risk = float(losses.mean())
        res.test_stderr = float(losses.std(ddof=1) / math.sqrt(losses.size))
        res.ee = equivariance_error(theta, group, config.generator.state_bound)
        res.underfit_ok, res.underfit_margin = underfit_check(theta, ctx.theta_star, ctx.dataset, ctx.q, space,
                                                              kind, spec, config.train.convergence_tol, aug)
        res.diagnostics = diagnostic_terms(theta, ctx.theta_star, ctx.dataset, ctx.q, spec, group,
                                           ctx.fresh_windows, ctx.fresh_targets, config.train.convergence_tol)
    except ROW_ERRORS as exc:
        res.error = _err(exc)
    res.seconds = time.perf_counter() - start
    return res


def assemble_reports(config: ExperimentConfig, ctx: SeedContext, results: dict) -> dict:
    """Assembly stage: one report per kind whose row did not fail."""
    ex = config.experiment
    t = {name: v[0] for name, v in ctx.terms.items()}
    q_l1, q_l2 = norms(ctx.q)
    c1, c2 = confidence_terms(q_l2, ex.clip_bound, ex.delta, ex.N)
    ae = results.get(APPROX_EQUIV)
    ae_ok = ae is not None and not ae.error
    ee_hat = ae.ee if ae_ok else 0.0
    args = (q_l2, ex.clip_bound, ex.delta, ex.N, ex.T)
    th1 = assemble_theorem1(t["disc"], t["r_seq"], *args)
    da = assemble_cor_da(t["disc"], t["r_seq_bar"], t["w_target"], t["w_train_max"], *args)
    eq = assemble_cor_eq(t["disc"], t["r_seq_eq"], t["w_target"], *args)
    cae = assemble_cor_ae(t["disc"], t["r_seq_ae"], t["w_target"], q_l1, ee_hat, ctx.xi, *args)
    reports = {}
    for kind, res in results.items():
        if res.error:
            continue
        reports[kind] = BoundReport(
            seed=ctx.index, kind=kind,
            disc=t["disc"], r_seq=t["r_seq"], r_seq_bar=t["r_seq_bar"], r_seq_eq=t["r_seq_eq"],
            r_seq_ae=t["r_seq_ae"], delta=t["delta"], w_target=t["w_target"], w_train_max=t["w_train_max"],
            xi=ctx.xi, ee_hat=ee_hat, ee_star=ctx.ee_star, q_l1=q_l1, q_l2=q_l2, conf_terms=c1 + c2,
            rhs_theorem1=th1.rhs, rhs_cor_da=da.rhs, rhs_cor_eq=eq.rhs, rhs_cor_ae=cae.rhs,
            measured_gap=res.test_risk - ctx.test_risk_star, test_risk=res.test_risk, train_risk=res.train_risk,
            stderr={**{name: v[1] for name, v in ctx.terms.items()}, "test_risk": res.test_stderr},
            addends={"theorem1": th1.addends, "cor_da": da.addends, "cor_eq": eq.addends, "cor_ae": cae.addends},
            diagnostics={**res.diagnostics, **ctx.lemma, "underfit_margin": res.underfit_margin,
                         "ee_estimator": res.ee, "ee_budget": ctx.ee_budget,
                         "test_risk_star": ctx.test_risk_star, "converged": res.converged},
            caveats={
                "sup_approximation": True,
                "population_surrogate": True,
                "cor_ae_precondition_ok": bool(ae_ok and ee_hat <= ctx.ee_star + 1e-9),
                "cor_ae_estimator_available": bool(ae_ok),
                "underfit_flagged": not res.underfit_ok,
            },
        )
    return reports


# -- execution ---------------------------------------------------------------------


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


@dataclass
class RunResult:
    rows: list
    reports: dict  # (seed, kind) -> BoundReport
    contexts: list
    failed: int

    @property
    def failure_share(self) -> float:
        return self.failed / max(len(self.rows), 1)

    @property
    def exit_code(self) -> int:
        return 2 if self.failure_share > FAILURE_SHARE else 0


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1, kinds=ESTIMATOR_KINDS) -> RunResult:
    """Run all stages for ``n_seeds`` seeds and write results under ``out_dir``.

    Writes ``results.csv`` (one row per (seed, kind)), one JSON report per
    successful row under ``reports/``, ``violations.csv`` and, separately,
    wall-clock ``timings.csv`` (kept out of the results so reruns compare
    byte for byte).
    """
    n = config.experiment.n_seeds
    contexts = _map(prepare_seed, [(config, i) for i in range(n)], jobs)
    tasks = [(config, ctx, kind) for ctx in contexts for kind in kinds]
    trained = _map(train_kind, tasks, jobs)
    by_seed: dict[int, dict] = {}
    for res in trained:
        by_seed.setdefault(res.index, {})[res.kind] = res
    rows, reports, failed = [], {}, 0
    for ctx in contexts:
        results = by_seed.get(ctx.index, {})
        try:
            seed_reports = assemble_reports(config, ctx, results) if not ctx.error else {}
        except ROW_ERRORS as exc:
            for res in results.values():
                res.error = res.error or f"assembly failed: {_err(exc)}"
            seed_reports = {}
        for kind in kinds:
            res = results[kind]
            rep = seed_reports.get(kind)
            row = {c: "" for c in RESULT_COLUMNS}
            row.update(seed=ctx.index, kind=kind)
            if rep is None:
                failed += 1
                row.update(status="error", error=res.error or "no report")
            else:
                reports[(ctx.index, kind)] = rep
                rhs = getattr(rep, BOUND_FOR_KIND[kind])
                row.update(
                    status="ok" if not rep.caveats["underfit_flagged"] else "underfit",
                    test_risk=rep.test_risk, train_risk=rep.train_risk, measured_gap=rep.measured_gap,
                    rhs=rhs, rhs_theorem1=rep.rhs_theorem1, rhs_cor_da=rep.rhs_cor_da,
                    rhs_cor_eq=rep.rhs_cor_eq, rhs_cor_ae=rep.rhs_cor_ae,
                    bound_holds=rep.measured_gap <= rhs, ee=res.ee,
                    report=f"reports/seed{ctx.index}_{kind}.json",
                )
            rows.append(row)
    result = RunResult(rows, reports, contexts, failed)
    if out_dir is not None:
        write_run(config, result, Path(out_dir), trained)
    return result


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def dominating_addend(report: BoundReport, kind: str) -> str:
    addends = report.addends[ADDENDS_FOR_KIND[kind]]
    return max(sorted(addends), key=lambda name: addends[name])


def write_run(config: ExperimentConfig, result: RunResult, out: Path, trained=()) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    (out / CONFIG_FILE).write_text(serialize_config(config), encoding="utf-8")
    (out / RESULTS_FILE).write_text(_csv_text(RESULT_COLUMNS, result.rows), encoding="utf-8")
    for (seed, kind), rep in sorted(result.reports.items()):
        (out / "reports" / f"seed{seed}_{kind}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
    vrows = []
    for (seed, kind), rep in sorted(result.reports.items()):
        rhs = getattr(rep, BOUND_FOR_KIND[kind])
        if rep.measured_gap > rhs:
            vrows.append({"seed": seed, "kind": kind, "measured_gap": rep.measured_gap, "rhs": rhs,
                          "dominating_term": dominating_addend(rep, kind),
                          "report": f"reports/seed{seed}_{kind}.json"})
    vcols = ["seed", "kind", "measured_gap", "rhs", "dominating_term", "report"]
    (out / VIOLATIONS_FILE).write_text(_csv_text(vcols, vrows), encoding="utf-8")
    shared = {ctx.index: ctx.seconds for ctx in result.contexts}
    trows = [{"seed": r.index, "kind": r.kind, "shared_seconds": shared.get(r.index, 0.0),
              "train_seconds": r.seconds} for r in trained]
    (out / TIMINGS_FILE).write_text(_csv_text(["seed", "kind", "shared_seconds", "train_seconds"], trows),
                                    encoding="utf-8")


# -- sweeps --------------------------------------------------------------------------


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _accepted(rows, kind):
    return [r for r in rows if r["kind"] == kind and r["status"] == "ok"]


def aggregate_rows(axis: str, value, result: RunResult) -> list[dict]:
    out = []
    for kind in ESTIMATOR_KINDS:
        acc = _accepted(result.rows, kind)
        if not acc and not any(r["kind"] == kind for r in result.rows):
            continue
        reps = [result.reports[(r["seed"], kind)] for r in acc]
        row = {"axis": axis, "value": value, "kind": kind, "n": len(acc)}
        for name, vals in (
            ("gap", [r.measured_gap for r in reps]),
            ("test_risk", [r.test_risk for r in reps]),
            ("rhs", [getattr(r, BOUND_FOR_KIND[kind]) for r in reps]),
            ("w_train_max", [r.w_train_max for r in reps]),
        ):
            row[f"mean_{name}"], row[f"se_{name}"] = _mean_se(vals)
        row["violations"] = sum(r.measured_gap > getattr(r, BOUND_FOR_KIND[kind]) for r in reps)
        out.append(row)
    return out


AGGREGATE_COLUMNS = ["axis", "value", "kind", "n", "mean_gap", "se_gap", "mean_test_risk", "se_test_risk",
                     "mean_rhs", "se_rhs", "mean_w_train_max", "se_w_train_max", "violations"]


def sweep_verdicts(axis_key: str, values: list, agg: list[dict], results: list[RunResult]) -> dict:
    """Qualitative predictions checked on the sweep's aggregates."""

    def series(kind, col):
        return [next((r[col] for r in agg if r["value"] == v and r["kind"] == kind), math.nan) for v in values]

    verdicts = {}
    vanilla = [r for res in results for r in _accepted(res.rows, VANILLA)]
    if vanilla:
        cover = sum(r["bound_holds"] for r in vanilla) / len(vanilla)
        verdicts["theorem1_coverage"] = {"value": float(cover), "passed": bool(cover >= 0.85)}
    lemma = [ctx.lemma["lemma_passed"] for res in results for ctx in res.contexts if ctx.lemma]
    if lemma:
        share = float(sum(lemma) / len(lemma))
        verdicts["lemma_pass_share"] = {"value": share, "passed": bool(share >= 0.9)}
    deltas = [ctx.terms["delta"] for res in results for ctx in res.contexts if "delta" in ctx.terms]
    if deltas:
        share = float(sum(m <= 2 * s for m, s in deltas) / len(deltas))
        verdicts["delta_nonpositive_share"] = {"value": share, "passed": bool(share >= 0.9)}
    leaf = axis_key.split(".")[-1]
    if leaf == "sym_break":
        w = series(DATA_AUG, "mean_w_train_max")
        verdicts["w_train_max_positive_increasing"] = {
            "value": [float(x) for x in w], "passed": bool(all(x > 0 for x in w) and all(b > a for a, b in zip(w, w[1:])))}
    if leaf == "N":
        ok = True
        for kind in ESTIMATOR_KINDS:
            m, s = series(kind, "mean_gap"), series(kind, "se_gap")
            ok &= all(m[i + 1] <= m[i] + s[i] + s[i + 1] for i in range(len(m) - 1))
        verdicts["gap_nonincreasing_in_N"] = {"value": None, "passed": bool(ok)}
    return verdicts


def sweep(base: ExperimentConfig, axis: str, values, out_dir, jobs: int = 1) -> tuple[list[RunResult], dict]:
    """One run per value of ``axis`` in ``out_dir/<axis>=<value>``, plus aggregate and verdict files."""
    aliases = axis_aliases()
    if axis not in aliases:
        raise InvalidArgumentError(f"unknown sweep axis {axis!r}; valid axes: {', '.join(sorted(aliases))}")
    values = list(values)
    if not values:
        raise InvalidArgumentError("sweep needs at least one value")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    leaf = aliases[axis].split(".")[-1]
    results, agg = [], []
    for v in values:
        cfg = set_value(base, axis, v)
        res = run_experiment(cfg, out / f"{leaf}={_fmt(v)}", jobs)
        results.append(res)
        agg.extend(aggregate_rows(leaf, v, res))
    (out / AGGREGATE_FILE).write_text(_csv_text(AGGREGATE_COLUMNS, agg), encoding="utf-8")
    verdicts = sweep_verdicts(aliases[axis], values, agg, results)
    (out / VERDICTS_FILE).write_text(json.dumps(verdicts, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return results, verdicts


# -- reporting -----------------------------------------------------------------------


def _read_csv(path: Path) -> list[dict]:
    if not path.is_file():
        raise IntegrityError(f"missing file {path}")
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, csv.Error, UnicodeDecodeError) as exc:
        raise IntegrityError(f"corrupt file {path}: {exc}") from None
    for r in rows:
        if None in r or any(v is None for v in r.values()):
            raise IntegrityError(f"corrupt file {path}: ragged row")
    return rows


def _load_report(path: Path) -> BoundReport:
    try:
        return BoundReport.from_json(path.read_text(encoding="utf-8"))
    except (OSError, ValueError, TypeError) as exc:
        raise IntegrityError(f"corrupt report {path}: {exc}") from None


def _run_dirs(root: Path) -> list[tuple[str, Path]]:
    if (root / RESULTS_FILE).is_file():
        return [("all", root)]
    subs = sorted((p for p in root.iterdir() if p.is_dir() and (p / RESULTS_FILE).is_file()), key=lambda p: p.name)
    return [(p.name.split("=", 1)[-1], p) for p in subs]


def report(results_dir, stream=None) -> dict:
    """Summarize a run or sweep directory.

    Prints a per-kind table and one ``VIOLATION`` line per bound violation,
    writes ``plot_gap.csv``, ``plot_test_risk.csv`` and ``plot_rhs.csv``
    (columns x, kind, mean, stderr) and returns the summary rows.
    """
    root = Path(results_dir)
    if not root.is_dir():
        raise IntegrityError(f"missing results directory {root}")
    runs = _run_dirs(root)
    if not runs:
        raise IntegrityError(f"no {RESULTS_FILE} found in {root}")
    lines, tables, violations = [], {"gap": [], "test_risk": [], "rhs": []}, []
    summary = []
    for x, d in runs:
        rows = _read_csv(d / RESULTS_FILE)
        missing = set(RESULT_COLUMNS) - set(rows[0].keys() if rows else RESULT_COLUMNS)
        if missing:
            raise IntegrityError(f"corrupt file {d / RESULTS_FILE}: missing columns {sorted(missing)}")
        lines.append(f"== {d.name if x != 'all' else root.name}")
        lines.append(f"{'kind':<20}{'n':>4}{'gap':>24}{'rhs':>24}{'viol':>6}")
        for kind in ESTIMATOR_KINDS:
            kr = [r for r in rows if r["kind"] == kind]
            if not kr:
                continue
            ok = [r for r in kr if r["status"] == "ok"]
            stats = {}
            for col in ("measured_gap", "test_risk", "rhs"):
                try:
                    stats[col] = _mean_se([float(r[col]) for r in ok])
                except ValueError:
                    raise IntegrityError(f"corrupt file {d / RESULTS_FILE}: non-numeric {col}") from None
            nviol = 0
            for r in ok:
                if float(r["measured_gap"]) > float(r["rhs"]):
                    nviol += 1
                    rep = _load_report(d / r["report"])
                    violations.append(
                        f"VIOLATION x={x} seed={r['seed']} kind={kind} gap={float(r['measured_gap']):.6g} "
                        f"rhs={float(r['rhs']):.6g} dominating={dominating_addend(rep, kind)}")
            g, rh = stats["measured_gap"], stats["rhs"]
            lines.append(f"{kind:<20}{len(ok):>4}{g[0]:>14.6g} ± {g[1]:<7.2g}{rh[0]:>14.6g} ± {rh[1]:<7.2g}"
                         f"{nviol:>6}")
            summary.append({"x": x, "kind": kind, "n": len(ok), "failed": len(kr) - len(ok),
                            "mean_gap": g[0], "se_gap": g[1], "mean_rhs": rh[0], "se_rhs": rh[1],
                            "violations": nviol})
            for name, col in (("gap", "measured_gap"), ("test_risk", "test_risk"), ("rhs", "rhs")):
                m, s = stats[col]
                tables[name].append({"x": x, "kind": kind, "mean": m, "stderr": s})
    lines.extend(violations)
    for name, trows in tables.items():
        (root / f"plot_{name}.csv").write_text(_csv_text(["x", "kind", "mean", "stderr"], trows), encoding="utf-8")
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return {"rows": summary, "violations": violations, "text": text}
