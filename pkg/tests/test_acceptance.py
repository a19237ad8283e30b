"""Acceptance gate: eleven checks, one verdict line each.

Verdict lines are echoed in the terminal summary (see conftest).  The
expensive high-dimensional instance is built once and shared by the two
checks that need it (communication-pass reduction, backend equivalence).
"""

import dataclasses
import time

import numpy as np
import pytest

from fadl import (
    ApproxFamily,
    InnerConfig,
    LineSearchConfig,
    LossKind,
    Method,
    Objective,
    RunConfig,
    armijo_wolfe_search,
    run,
    solve_reference,
    synth_classification,
    verify,
)
from fadl.comm_cost import fadl_faster

from conftest import dense_gradient, dense_hessian, dense_value


def _verdict(report, num, ok, detail):
    line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}: {detail}"
    report.append(line)
    print(line)
    assert ok, line


def _timed_property(name, cap_seconds):
    start = time.perf_counter()
    res = verify.run_property(name)
    elapsed = time.perf_counter() - start
    ok = res.passed and elapsed < cap_seconds
    return ok, f"{res.detail} [{elapsed:.1f}s < {cap_seconds:.0f}s]"


@pytest.fixture(scope="session")
def big_instance():
    """n=5000, m=50000, density 1e-3 squared-hinge instance plus reference."""
    start = time.perf_counter()
    ds, _ = synth_classification(
        5000, 50000, 0.001, 0.9, seed=42, feature_skew=8.0, row_normalize=True
    )
    obj = Objective(ds, LossKind.SQUARED_HINGE, lam=1e-4)
    _, f_star = solve_reference(obj, tol=1e-8, max_iter=400)
    return obj, f_star, time.perf_counter() - start


def test_criterion_01_gradient_consistency(acceptance_report):
    ok, detail = _timed_property("gradient-consistency", 5.0)
    _verdict(acceptance_report, 1, ok, detail)


def test_criterion_02_minimizer_angle(acceptance_report):
    ok, detail = _timed_property("minimizer-angle", 10.0)
    _verdict(acceptance_report, 2, ok, detail)


def test_criterion_03_inner_budget_angle(acceptance_report):
    ok, detail = _timed_property("inner-budget-angle", 30.0)
    _verdict(acceptance_report, 3, ok, detail)


def test_criterion_04_rate_envelope(acceptance_report):
    ok, detail = _timed_property("rate-envelope", 60.0)
    _verdict(acceptance_report, 4, ok, detail)


def test_criterion_05_linesearch_interval(acceptance_report):
    ok, detail = _timed_property("linesearch-interval", 1.0)
    _verdict(acceptance_report, 5, ok, detail)


def test_criterion_06_svrg_identity(acceptance_report):
    ok, detail = _timed_property("svrg-identity", 1.0)
    _verdict(acceptance_report, 6, ok, detail)


def test_criterion_07_single_node_equals_newton(acceptance_report):
    """P=1 quadratic-family runs must track damped Newton with the same
    line search, iterate by iterate."""
    start = time.perf_counter()
    ds, _ = synth_classification(200, 20, 0.5, 0.7, seed=3)
    obj = Objective(ds, LossKind.LOGISTIC, lam=1.0)

    w = np.zeros(20)
    oracle = [w.copy()]
    ls = LineSearchConfig()
    for _ in range(5):
        g = dense_gradient(obj, w)
        d = -np.linalg.solve(dense_hessian(obj, w), g)

        def phi(t, w=w, d=d):
            wt = w + t * d
            return dense_value(obj, wt), float(dense_gradient(obj, wt) @ d)

        res = armijo_wolfe_search(phi, float(g @ d), ls)
        w = w + res.t * d
        oracle.append(w.copy())

    worst = 0.0
    for k in range(1, 6):
        cfg = RunConfig(
            method=Method.FADL,
            family=ApproxFamily.QUADRATIC,
            nodes=1,
            eps_g=0.0,
            max_outer=k,
            inner=InnerConfig(budget=60, cg_tol=1e-12, cg_max=400),
            run_id=f"c7-{k}",
        )
        got = run(obj, cfg).weights
        worst = max(worst, float(np.max(np.abs(got - oracle[k]))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5.0
    _verdict(
        acceptance_report, 7,
        ok, f"five iterates vs dense Newton, max |dw| {worst:.2e} <= 1e-08 "
            f"[{elapsed:.1f}s < 5s]",
    )


def test_criterion_08_comm_pass_reduction(acceptance_report, big_instance):
    obj, f_star, build_s = big_instance
    start = time.perf_counter()

    fadl_cfg = RunConfig(
        method=Method.FADL,
        family=ApproxFamily.QUADRATIC,
        nodes=8,
        eps_g=1e-6,
        max_outer=220,
        inner=InnerConfig(budget=10, cg_max=25),
        f_star=f_star,
        run_id="c8-fadl",
    )
    sqm_cfg = RunConfig(
        method=Method.SQM,
        nodes=8,
        eps_g=1e-6,
        max_outer=230,
        inner=InnerConfig(cg_max=100),
        f_star=f_star,
        run_id="c8-sqm",
    )
    res_f = run(obj, fadl_cfg)
    res_s = run(obj, sqm_cfg)

    def first_hit(res):
        for rec in res.records:
            if rec.rel_gap is not None and rec.rel_gap <= 1e-4:
                return rec
        return None

    hit_f = first_hit(res_f)
    hit_s = first_hit(res_s)
    elapsed = time.perf_counter() - start
    total = build_s + elapsed
    ok = (
        hit_f is not None
        and hit_s is not None
        and hit_f.comm_passes < hit_s.comm_passes
        and total < 300.0
    )
    if hit_f is None or hit_s is None:
        detail = (
            f"rel gap 1e-4 not reached (fadl hit {hit_f is not None}, "
            f"sqm hit {hit_s is not None}) [{total:.0f}s]"
        )
    else:
        detail = (
            f"comm passes to rel gap 1e-4: fadl {hit_f.comm_passes} "
            f"(outer {hit_f.outer_iter}) < sqm {hit_s.comm_passes} "
            f"(outer {hit_s.outer_iter}), ratio "
            f"{hit_s.comm_passes / hit_f.comm_passes:.1f}x "
            f"[{total:.0f}s < 300s]"
        )
    _verdict(acceptance_report, 8, ok, detail)


def test_criterion_09_cost_model_truth_table(acceptance_report):
    start = time.perf_counter()
    from fadl.comm_cost import BENCHMARK_DIMS

    names = ["kdd2010", "url", "webspam", "mnist8m", "rcv"]
    got100 = [
        fadl_faster(*BENCHMARK_DIMS[n], gamma=100.0, nodes=8, khat=10)
        for n in names
    ]
    got1000 = [
        fadl_faster(*BENCHMARK_DIMS[n], gamma=1000.0, nodes=8, khat=10)
        for n in names
    ]
    want100 = [True, False, False, False, False]
    want1000 = [True, True, True, False, False]
    elapsed = time.perf_counter() - start
    ok = got100 == want100 and got1000 == want1000 and elapsed < 1.0
    _verdict(
        acceptance_report, 9,
        ok, f"nnz/m vs threshold 40 at gamma=100: {got100}; "
            f"threshold 400 at gamma=1000: {got1000} [{elapsed:.2f}s < 1s]",
    )


def test_criterion_10_determinism_and_monotonicity(acceptance_report):
    ds, _ = synth_classification(200, 30, 0.3, 0.7, seed=9)
    obj = Objective(ds, LossKind.LOGISTIC, lam=0.1)

    def strip(rec):
        d = dataclasses.asdict(rec)
        d.pop("elapsed_seconds")
        return d

    ok = True
    notes = []
    for method in (Method.FADL, Method.SQM):
        cfg = RunConfig(
            method=method, nodes=3, eps_g=1e-5, max_outer=150, seed=7,
            run_id="c10",
        )
        a = run(obj, cfg)
        b = run(obj, cfg)
        same = np.array_equal(a.weights, b.weights) and [
            strip(r) for r in a.records
        ] == [strip(r) for r in b.records]
        fs = np.array([r.f for r in a.records])
        decreasing = bool(np.all(np.diff(fs) < 0.0))
        ok = ok and same and decreasing and a.converged
        notes.append(
            f"{method.value}: rerun identical {same}, "
            f"f strictly decreasing over {len(fs)} rows {decreasing}"
        )
    _verdict(acceptance_report, 10, ok, "; ".join(notes))


def test_criterion_11_backend_equivalence(acceptance_report, big_instance):
    obj, f_star, _ = big_instance
    start = time.perf_counter()
    base = RunConfig(
        method=Method.FADL,
        family=ApproxFamily.QUADRATIC,
        nodes=8,
        eps_g=1e-6,
        max_outer=40,
        inner=InnerConfig(budget=10, cg_max=25),
        f_star=f_star,
        run_id="c11",
    )
    res_seq = run(obj, dataclasses.replace(base, backend="sequential"))
    res_thr = run(
        obj, dataclasses.replace(base, backend="threads", max_workers=4)
    )
    elapsed = time.perf_counter() - start
    same_w = np.array_equal(res_seq.weights, res_thr.weights)
    same_f = [r.f for r in res_seq.records] == [r.f for r in res_thr.records]
    same_c = [r.comm_passes for r in res_seq.records] == [
        r.comm_passes for r in res_thr.records
    ]
    same_t = res_seq.step_sizes == res_thr.step_sizes
    ok = same_w and same_f and same_c and same_t and elapsed < 300.0
    _verdict(
        acceptance_report, 11,
        ok, f"sequential vs threads over 40 outer iterations: weights "
            f"identical {same_w}, f rows identical {same_f}, comm counts "
            f"identical {same_c}, steps identical {same_t} "
            f"[{elapsed:.0f}s < 300s]",
    )
