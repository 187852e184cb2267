"""Acceptance checks, one test per criterion.

Each test prints a single ``CRITERION <n>: PASS|FAIL`` line (visible even
under output capture) and then asserts. Run alone with
``pytest tests/test_acceptance.py``; skip with ``-m "not acceptance"``.
"""

import itertools
import math
import time

import numpy as np
import pytest

from symbound import harness
from symbound.bound_lab import (
    ROUNDING_RESOLUTION,
    MCConfig,
    check_lemma1,
    estimate_delta,
    symmetry_bias_terms,
    wasserstein_w1,
)
from symbound.cli import main
from symbound.config import parse_config
from symbound.dynamics import GeneratorSpec, Sample, make_dataset
from symbound.forecasters import LinearForecaster, LossSpec, ParameterSpace, loss, loss_grad
from symbound.group_algebra import (
    commutant_basis,
    commutator_norm,
    make_cyclic_rotation_group,
    reynolds_project,
)
from symbound.qweights import uniform_q
from symbound.seeding import derive_seed

pytestmark = pytest.mark.acceptance

C4 = make_cyclic_rotation_group(4)


@pytest.fixture
def verdict(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if passed else 'FAIL'} - {detail}", flush=True)
        assert passed, detail

    return emit


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


# 1 ---------------------------------------------------------------------------------------


def test_criterion_01_algebra(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    failures = []
    for n in (1, 2, 3, 4, 6, 8):
        G = make_cyclic_rotation_group(n)
        if G.closure_table() is None:
            failures.append(f"C{n} not closed")
        for _ in range(50):
            A, B = rng.standard_normal((2, 2, 2))
            P = reynolds_project(A, G)
            if np.max(np.abs(reynolds_project(P, G) - P)) > 1e-12:
                failures.append(f"C{n} not idempotent")
            # self-adjoint in the Frobenius inner product
            if abs(np.sum(P * B) - np.sum(A * reynolds_project(B, G))) > 1e-12:
                failures.append(f"C{n} not self-adjoint")
        basis = commutant_basis(G)
        for E in basis:
            if commutator_norm(E, G) > 1e-12:
                failures.append(f"C{n} basis element not equivariant")
        gram = np.einsum("iab,jab->ij", basis, basis)
        if np.max(np.abs(gram - np.eye(len(basis)))) > 1e-12:
            failures.append(f"C{n} basis not orthonormal")
        expected = 4 if n <= 2 else 2
        if len(basis) != expected:
            failures.append(f"C{n} commutant dimension {len(basis)} != {expected}")
    for eps in (0.0, 0.1, 0.3, 1.0):
        got = commutator_norm(np.diag([1 + eps, 1.0]), C4)
        if abs(got - eps) > 1e-12:
            failures.append(f"diag(1+{eps},1) commutator {got}")
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 5
    verdict(1, ok, f"{len(failures)} failures {failures[:3]}, {elapsed:.2f}s (< 5s)")


# 2 ---------------------------------------------------------------------------------------


def test_criterion_02_gradient(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    spec, h, worst = LossSpec(16.0), 1e-6, 0.0
    for case in range(100):
        k = 1 + case % 2
        W = rng.standard_normal((k, 2, 2))
        z = Sample(rng.uniform(-0.7, 0.7, (k, 2)), rng.uniform(-0.7, 0.7, 2))
        fd = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            up, dn = W.copy(), W.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (loss(LinearForecaster(up), z, spec) - loss(LinearForecaster(dn), z, spec)) / (2 * h)
        g = loss_grad(LinearForecaster(W), z, spec)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))
    elapsed = time.perf_counter() - start
    verdict(2, worst < 1e-5 and elapsed < 5, f"max relative error {worst:.2e} (< 1e-5), {elapsed:.2f}s (< 5s)")


# 3 ---------------------------------------------------------------------------------------


def test_criterion_03_transport(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, axiom_failures = 0.0, 0
    for n in range(1, 7):
        perms = np.array(list(itertools.permutations(range(n))))
        for _ in range(100):
            a, b, c = rng.standard_normal((3, n, 4))
            cost = np.linalg.norm(a[:, None] - b[None], axis=-1)
            brute = cost[np.arange(n), perms].sum(axis=1).min() / n
            ab = wasserstein_w1(a, b)
            worst = max(worst, abs(ab - brute))
            if ab != wasserstein_w1(b, a) or ab <= 0 or wasserstein_w1(a, a[rng.permutation(n)]) != 0.0:
                axiom_failures += 1
            if wasserstein_w1(a, c) > ab + wasserstein_w1(b, c) + 1e-9:
                axiom_failures += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and axiom_failures == 0 and elapsed < 30
    verdict(3, ok, f"max |assignment - brute force| {worst:.1e} over 600 instances, "
                   f"{axiom_failures} axiom failures, {elapsed:.1f}s (< 30s)")


# 4 ---------------------------------------------------------------------------------------


def test_criterion_04_realizability(verdict):
    start = time.perf_counter()
    cfg = parse_config("", ["sym_break=0", "noise_std=0", "omega_drift=0", "damping_drift=0", "omega_spread=0",
                            "damping_spread=0", "n_seeds=3"])
    res = harness.run_experiment(cfg)
    train = max(float(r["train_risk"]) for r in res.rows)
    test = max(float(r["test_risk"]) for r in res.rows)
    elapsed = time.perf_counter() - start
    ok = res.failed == 0 and train < 1e-6 and test < 1e-4 and elapsed < 120
    verdict(4, ok, f"max train risk {train:.1e} (< 1e-6), max test risk {test:.1e} (< 1e-4) "
                   f"over 3 seeds x 4 estimators, {elapsed:.0f}s (< 120s)")


# 5, 6 ------------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def symmetric_runs():
    start = time.perf_counter()
    lemma, delta = [], []
    for s in range(20):
        ds = make_dataset(GeneratorSpec(), 32, 32, 1, derive_seed(5, s))
        mc = MCConfig(n_sigma=256, seed=s)
        q = uniform_q(ds.horizon)
        lemma.append(check_lemma1(ds, q, C4, mc, radius=1.0))
        delta.append(estimate_delta(ds, q, C4, ParameterSpace.full(1.0), mc))
    return lemma, delta, time.perf_counter() - start


def test_criterion_05_lemma(verdict, symmetric_runs):
    lemma, _, elapsed = symmetric_runs
    passed = sum(bool(c.passed) for c in lemma)
    worst = max(c.difference.mean - 2 * c.difference.stderr for c in lemma)
    verdict(5, passed >= 18 and elapsed < 1800,
            f"{passed}/20 seeds with difference <= 2 paired stderr (need 18), "
            f"max(diff - 2se) {worst:.2e}, {elapsed:.0f}s (< 1800s)")


def test_criterion_06_delta(verdict, symmetric_runs):
    _, delta, _ = symmetric_runs
    passed = sum(d.mean <= 2 * d.stderr for d in delta)
    m = np.mean([d.mean for d in delta])
    verdict(6, passed >= 18, f"{passed}/20 seeds with delta <= 2 paired stderr (need 18), mean delta {m:.2e}")


# 7 ---------------------------------------------------------------------------------------


def test_criterion_07_theorem1(verdict, tmp_path):
    start = time.perf_counter()
    cfg = parse_config("", ["n_seeds=50", "delta=0.1"])
    res = harness.run_experiment(cfg, tmp_path)
    vanilla = [r for r in res.rows if r["kind"] == "vanilla" and r["status"] == "ok"]
    held = sum(r["bound_holds"] for r in vanilla)
    share = held / len(vanilla)
    emitted = (tmp_path / harness.VIOLATIONS_FILE).read_text().count("\n") - 1
    all_reports = all((tmp_path / r["report"]).is_file() for r in vanilla)
    elapsed = time.perf_counter() - start
    ok = len(vanilla) >= 50 * 0.8 and share >= 0.85 and all_reports and elapsed < 3600
    verdict(7, ok, f"gap <= rhs in {held}/{len(vanilla)} accepted runs ({share:.0%}, need 85%), "
                   f"{emitted} violations written to violations.csv, {elapsed:.0f}s (< 3600s)")


# 8 ---------------------------------------------------------------------------------------


def test_criterion_08_exact_symmetry(verdict):
    # small N and T: with more data the two test risks agree to within MC noise
    cfg = parse_config("", ["sym_break=0", "N=8", "T=8", "k=2", "n_seeds=20"])
    res = harness.run_experiment(cfg)
    seeds = sorted({r["seed"] for r in res.rows if r["status"] == "ok" and r["kind"] == "vanilla"}
                   & {r["seed"] for r in res.rows if r["status"] == "ok" and r["kind"] == "equivariant"})
    eq = [res.reports[(s, "equivariant")].test_risk for s in seeds]
    van = [res.reports[(s, "vanilla")].test_risk for s in seeds]
    order_fail = 0
    for s in seeds:
        rep = res.reports[(s, "vanilla")]
        a_eq, a_da = rep.addends["cor_eq"], rep.addends["cor_da"]
        complexity_ok = a_eq["complexity"] <= a_da["complexity"] + ROUNDING_RESOLUTION * abs(a_da["complexity"])
        bias_ok = a_eq["bias_target"] <= a_da["bias_target"] + a_da["bias_train"]
        order_fail += not (complexity_ok and bias_ok)
    me, se_e = mean_se(eq)
    mv, se_v = mean_se(van)
    ok = len(seeds) >= 20 and me <= mv and order_fail == 0
    verdict(8, ok, f"mean test risk E {me:.6g} +- {se_e:.1g} vs vanilla {mv:.6g} +- {se_v:.1g}; "
                   f"complexity/bias ordering violated on {order_fail}/{len(seeds)} seeds")


# 9 ---------------------------------------------------------------------------------------


def test_criterion_09_approximate_symmetry(verdict):
    cfg = parse_config("", ["sym_break=0.3", "n_seeds=30", "ee_budget=auto"])
    res = harness.run_experiment(cfg)
    risks = {}
    for kind in ("approx_equivariant", "equivariant", "data_aug"):
        risks[kind] = mean_se([r["test_risk"] for r in res.rows if r["kind"] == kind and r["status"] == "ok"])
    ae, se_ae = risks["approx_equivariant"]
    margins = {}
    for other in ("equivariant", "data_aug"):
        m, se = risks[other]
        margins[other] = (m - ae) / math.hypot(se, se_ae)
    n_ok = min(sum(r["kind"] == k and r["status"] == "ok" for r in res.rows) for k in risks)

    # DA bias term against the symmetry-breaking strength, same datasets per seed index
    eps_grid = (0.0, 0.1, 0.2, 0.3, 0.4)
    w = []
    for eps in eps_grid:
        c = parse_config("", [f"sym_break={eps}", "n_seeds=30"])
        vals = []
        for i in range(30):
            ds = harness.build_dataset(c, i)
            vals.append(symmetry_bias_terms(ds, C4, uniform_q(ds.horizon), 1.0)[1])
        w.append(float(np.mean(vals)))
    w_ok = all(x > 0 for x in w) and all(b > a for a, b in zip(w, w[1:]))
    ok = n_ok >= 30 and all(v > 1 for v in margins.values()) and w_ok
    verdict(9, ok, f"AE {ae:.6g} vs E {risks['equivariant'][0]:.6g} ({margins['equivariant']:.1f} pooled se), "
                   f"vs DA {risks['data_aug'][0]:.6g} ({margins['data_aug']:.1f} pooled se), "
                   f"w_train_max/Lip over eps {eps_grid}: {[f'{x:.4f}' for x in w]}")


# 10 --------------------------------------------------------------------------------------


NUMERIC = ["test_risk", "train_risk", "measured_gap", "rhs", "rhs_theorem1", "rhs_cor_da", "rhs_cor_eq",
           "rhs_cor_ae", "ee"]


def test_criterion_10_trivial_group(verdict):
    cfg = parse_config("", ["group_order=1", "sym_break=0.3", "n_seeds=3"])
    res = harness.run_experiment(cfg)
    diffs = 0
    for s in range(3):
        v = next(r for r in res.rows if r["seed"] == s and r["kind"] == "vanilla")
        d = next(r for r in res.rows if r["seed"] == s and r["kind"] == "data_aug")
        diffs += sum(v[c] != d[c] for c in NUMERIC)
    reps = list(res.reports.values())
    w_zero = all(r.w_target == 0.0 and r.w_train_max == 0.0 for r in reps)
    delta_zero = all(r.delta == 0.0 for r in reps)
    # per-draw check as well
    ds = make_dataset(GeneratorSpec(sym_break=0.3), 16, 16, 1, 10)
    per_draw = estimate_delta(ds, uniform_q(ds.horizon), make_cyclic_rotation_group(1), ParameterSpace.full(2.0),
                              MCConfig(n_sigma=64))
    delta_zero &= bool(np.all(per_draw.draws == 0.0))
    ok = res.failed == 0 and diffs == 0 and w_zero and delta_zero
    verdict(10, ok, f"{diffs} differing numeric cells between vanilla and data_aug rows, "
                    f"bias terms zero: {w_zero}, delta zero (incl. per draw): {delta_zero}")


# 11 --------------------------------------------------------------------------------------


def test_criterion_11_determinism(verdict, tmp_path):
    common = ["--seed", "42", "--set", "N=8", "--set", "T=10", "--set", "k=2", "--set", "n_seeds=3",
              "--set", "sym_break=0.2", "--set", "n_sigma=32", "--set", "n_test=256"]
    # same config (including the output path) for every run; each result is moved aside afterwards
    out = tmp_path / "out"
    dirs = {}
    for name, jobs in (("jobs1", "1"), ("jobs1_again", "1"), ("jobs8", "8")):
        assert main(["run", "--jobs", jobs, "--out", str(out), *common]) == 0
        kept = out.rename(tmp_path / name)
        dirs[name] = {p.relative_to(kept).as_posix(): p.read_bytes()
                      for p in sorted(kept.rglob("*")) if p.is_file() and p.name != harness.TIMINGS_FILE}
    ref = dirs["jobs1"]
    same = all(d == ref for d in dirs.values())
    verdict(11, same and len(ref) > 10, f"{len(ref)} output files byte-identical across two --jobs 1 runs and "
                                        f"one --jobs 8 run (timings.csv excluded): {same}")
