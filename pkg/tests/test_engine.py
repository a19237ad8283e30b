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
    StagnationError,
    armijo_wolfe_search,
    run,
    run_fadl,
    run_sqm,
    solve_reference,
    synth_classification,
    warm_start_average,
)
from fadl.engine import combine_directions
from fadl.local_opt import TrustRegionNewton

from conftest import dense_gradient, dense_hessian, random_instance


def small_objective(seed=11, n=120, m=12, loss=LossKind.LOGISTIC, lam=0.5):
    ds, _ = synth_classification(n, m, density=0.6, separability=0.9, seed=seed)
    return Objective(ds, loss, lam)


def test_fadl_converges_small():
    obj = small_objective()
    cfg = RunConfig(method=Method.FADL, family=ApproxFamily.QUADRATIC, nodes=3,
                    eps_g=1e-4, max_outer=200, run_id="conv")
    res = run_fadl(obj, cfg)
    assert res.converged
    g0 = np.linalg.norm(obj.gradient(np.zeros(12)))
    assert res.records[-1].grad_norm <= 1e-4 * g0


@pytest.mark.parametrize("family", list(ApproxFamily))
def test_fadl_all_families_descend(family):
    obj = small_objective()
    cfg = RunConfig(method=Method.FADL, family=family, nodes=3,
                    eps_g=1e-3, max_outer=80, run_id="fam")
    res = run_fadl(obj, cfg)
    fs = [r.f for r in res.records]
    assert all(b < a for a, b in zip(fs, fs[1:]))
    assert res.status in ("converged", "max_outer")


def test_f_monotone_and_passes_increasing():
    obj = small_objective()
    cfg = RunConfig(method=Method.FADL, family=ApproxFamily.LINEAR, nodes=4,
                    eps_g=1e-3, max_outer=60, run_id="mono")
    res = run_fadl(obj, cfg)
    passes = [r.comm_passes for r in res.records]
    assert all(b > a for a, b in zip(passes, passes[1:]))
    # two vector reductions per completed outer iteration, one on the stop row
    if res.converged:
        assert passes[-1] == 2 * (len(passes) - 1) + 1


def test_rel_gap_monotone_when_reference_supplied():
    obj = small_objective()
    _, f_star = solve_reference(obj)
    cfg = RunConfig(method=Method.FADL, family=ApproxFamily.QUADRATIC, nodes=2,
                    eps_g=1e-5, max_outer=100, f_star=f_star, run_id="gap")
    res = run_fadl(obj, cfg)
    gaps = [r.rel_gap for r in res.records]
    assert all(g is not None for g in gaps)
    assert all(b <= a + 1e-15 for a, b in zip(gaps, gaps[1:]))


def test_determinism_bitwise():
    obj = small_objective()
    cfg = RunConfig(method=Method.FADL, family=ApproxFamily.HYBRID, nodes=3,
                    eps_g=1e-4, max_outer=50, seed=7, run_id="det")
    r1 = run_fadl(obj, cfg)
    r2 = run_fadl(obj, cfg)
    assert np.array_equal(r1.weights, r2.weights)
    for a, b in zip(r1.records, r2.records):
        assert a.f == b.f and a.grad_norm == b.grad_norm
        assert a.comm_passes == b.comm_passes and a.probes == b.probes


def test_threads_backend_bitwise_equal():
    obj = small_objective()
    base = dict(method=Method.FADL, family=ApproxFamily.QUADRATIC, nodes=4,
                eps_g=1e-4, max_outer=40, run_id="thr")
    seq = run_fadl(obj, RunConfig(backend="sequential", **base))
    thr = run_fadl(obj, RunConfig(backend="threads", max_workers=2, **base))
    assert np.array_equal(seq.weights, thr.weights)
    assert [r.f for r in seq.records] == [r.f for r in thr.records]


def test_replicated_shards_match_single_node():
    # every node holding the full dataset gives the P-fold region the same
    # direction as one node, so the first iterate must coincide
    obj = small_objective(n=40, m=6)
    n = obj.data.n_examples

    from fadl.approx import build_approx
    from fadl.local_opt import InnerConfig as IC, minimize_inner

    w0 = np.zeros(6)
    g0 = obj.gradient(w0)
    shard = np.arange(n)
    d_single = minimize_inner(
        build_approx(ApproxFamily.QUADRATIC, obj, shard, w0, g0, 1),
        IC(budget=30),
    ).w - w0
    # replicated: same shard on each of 3 "nodes" with node_count = 1 each
    dirs = []
    for _ in range(3):
        res = minimize_inner(
            build_approx(ApproxFamily.QUADRATIC, obj, shard, w0, g0, 1),
            IC(budget=30),
        )
        dirs.append(res.w - w0)
    combined = combine_directions(g0, dirs)
    assert np.allclose(combined, d_single, rtol=1e-12, atol=1e-14)


def test_combine_directions_requires_descent():
    g = np.array([1.0, 0.0])
    with pytest.raises(StagnationError):
        combine_directions(g, [np.array([1.0, 0.0]), np.array([2.0, 0.0])])


def test_combine_directions_weighting():
    g = np.array([1.0, 1.0])
    dirs = [np.array([-1.0, 0.0]), np.array([0.0, -1.0])]
    d = combine_directions(g, dirs, weights=np.array([3.0, 1.0]))
    assert np.allclose(d, [-0.75, -0.25])


def test_sqm_single_node_equals_tron():
    obj = small_objective(n=60, m=8)
    cfg = RunConfig(method=Method.SQM, nodes=1, eps_g=1e-5, max_outer=60,
                    run_id="sqm1")
    res = run_sqm(obj, cfg)

    def hess_op(x):
        lpp_margins = obj.margins(x)
        lpp = obj.loss_curvature(lpp_margins)
        mat, mat_t = obj.data.matrix, obj.data.matrix_t
        return lambda v: obj.lam * v + mat_t @ (lpp * (mat @ v))

    opt = TrustRegionNewton(obj.value, obj.gradient, hess_op, np.zeros(8),
                            cg_tol=cfg.inner.cg_tol, cg_max=cfg.inner.cg_max)
    g0 = np.linalg.norm(obj.gradient(np.zeros(8)))
    for _ in range(60):
        if opt.grad_norm <= 1e-5 * g0:
            break
        info = opt.step()
        if info["stationary"]:
            break
    assert np.array_equal(res.weights, opt.x)


def test_sqm_distributed_gradient_matches_single(rng):
    obj = random_instance(rng, 50, 9, lam=0.4)
    cfg = RunConfig(method=Method.SQM, nodes=5, eps_g=1e-4, max_outer=30,
                    run_id="sqmdist")
    res = run_sqm(obj, cfg)
    # the recorded gradient norms must match a single-process recomputation
    # at the recorded iterates only for the final point available here
    g = obj.gradient(res.weights)
    assert res.records[-1].grad_norm <= 1e-4 * res.records[0].grad_norm * (1 + 1e-9) \
        or res.status != "converged"
    assert np.isfinite(g).all()


def test_sqm_monotone_f():
    obj = small_objective(n=80, m=10)
    cfg = RunConfig(method=Method.SQM, nodes=3, eps_g=1e-6, max_outer=80,
                    run_id="sqmmono")
    res = run_sqm(obj, cfg)
    fs = [r.f for r in res.records]
    assert all(b <= a for a, b in zip(fs, fs[1:]))


def test_theory_mode_runs():
    # well-conditioned instance keeps the angle condition satisfiable
    ds, _ = synth_classification(60, 8, density=0.8, separability=0.9, seed=3)
    dense = ds.matrix.toarray()
    top = float(np.linalg.eigvalsh(dense.T @ dense)[-1])
    import scipy.sparse as sp
    from fadl import Dataset

    mat = ds.matrix.multiply(np.sqrt(1.5 / top)).tocsr()
    obj = Objective(Dataset.from_csr(mat, ds.labels), LossKind.LOGISTIC, 1.0)
    cfg = RunConfig(method=Method.FADL, family=ApproxFamily.QUADRATIC, nodes=2,
                    eps_g=1e-4, max_outer=60, theory_mode=True, run_id="theory")
    res = run_fadl(obj, cfg)
    assert res.status in ("converged", "max_outer")
    assert all(r.cos_angle is None or -1 <= r.cos_angle <= 1 for r in res.records)


def test_warm_start_average_descends():
    obj = small_objective(n=90, m=10)
    w = warm_start_average(obj, __import__("fadl").partition(90, 3), epochs=3, seed=1)
    assert obj.value(w) < obj.value(np.zeros(10))


def test_run_dispatcher_and_config_validation():
    obj = small_objective(n=30, m=5)
    with pytest.raises(ValueError):
        RunConfig(method=Method.FADL, nodes=0)
    with pytest.raises(ValueError):
        RunConfig(method=Method.FADL, eps_g=-0.5)
    with pytest.raises(ValueError):
        RunConfig(method=Method.FADL, combine="median")
    res = run(obj, RunConfig(method=Method.SQM, nodes=2, eps_g=1e-3,
                             max_outer=40, run_id="disp"))
    assert res.status == "converged"


def test_fadl_p1_quadratic_tracks_newton():
    # exact inner solves make single-node quadratic steps Newton steps
    obj = small_objective(n=100, m=9, lam=1.0)
    inner = InnerConfig(budget=50, cg_tol=1e-12, cg_max=200)
    cfg = RunConfig(method=Method.FADL, family=ApproxFamily.QUADRATIC, nodes=1,
                    eps_g=1e-10, max_outer=4, inner=inner, run_id="newton")
    res = run_fadl(obj, cfg)

    w = np.zeros(9)
    for step in res.step_sizes:
        g = dense_gradient(obj, w)
        h = dense_hessian(obj, w)
        d = np.linalg.solve(h, -g)
        from fadl import RestrictedObjective

        restricted = RestrictedObjective(obj, w, d)
        ls = armijo_wolfe_search(restricted, float(g @ d), LineSearchConfig())
        w = w + ls.t * d
    assert np.allclose(w, res.weights, rtol=1e-7, atol=1e-8)
