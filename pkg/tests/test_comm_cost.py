import pytest

from fadl import (
    BENCHMARK_DIMS,
    CommLedger,
    CostParams,
    consistency_check,
    fadl_faster,
    total_cost,
)


def test_cost_formula_by_hand():
    # [(c1 nz/P + c2 m) T_inner + c3 gamma m] T_outer
    params = CostParams.sqm(nz=1000, n_features=10, gamma=5.0, nodes=2, t_outer=3)
    # (2*500 + 7*10) * 1 + 1*5*10 = 1070 + 50 = 1120, times 3 outer
    assert total_cost(params) == pytest.approx(3360.0)
    params = CostParams.fadl(nz=1000, n_features=10, gamma=5.0, nodes=2,
                             khat=2, t_outer=3)
    # (2*500 + 6*10) * 2 + 2*5*10 = 2120 + 100 = 2220, times 3
    assert total_cost(params) == pytest.approx(6660.0)


def test_predicate_threshold_boundary():
    # nz/m < gamma P / (2 khat); here threshold = 100*8/(2*10) = 40
    assert fadl_faster(nz=39 * 1000, n_features=1000, gamma=100.0, nodes=8, khat=10)
    assert not fadl_faster(nz=40 * 1000, n_features=1000, gamma=100.0, nodes=8, khat=10)
    assert not fadl_faster(nz=41 * 1000, n_features=1000, gamma=100.0, nodes=8, khat=10)


def test_benchmark_dims_table():
    assert set(BENCHMARK_DIMS) == {"kdd2010", "url", "webspam", "mnist8m", "rcv"}
    nz, m = BENCHMARK_DIMS["kdd2010"]
    assert nz / m == pytest.approx(15.34, abs=0.05)
    nz, m = BENCHMARK_DIMS["url"]
    assert nz / m == pytest.approx(68.11, abs=0.05)
    nz, m = BENCHMARK_DIMS["webspam"]
    assert nz / m == pytest.approx(59.04, abs=0.05)
    nz, m = BENCHMARK_DIMS["mnist8m"]
    assert nz / m == pytest.approx(8.099e6, rel=1e-3)
    nz, m = BENCHMARK_DIMS["rcv"]
    assert nz / m == pytest.approx(1058.5, abs=1.0)


def test_consistency_check_statuses():
    nz, m = BENCHMARK_DIMS["kdd2010"]
    report = consistency_check(nz, m, gamma=100.0, nodes=8, khat=10,
                               t_outer_fadl=10.0, outer_ratio=3.0)
    assert report.status in ("agree", "disagree")
    assert report.predicate is True
    report = consistency_check(nz, m, gamma=100.0, nodes=8, khat=10,
                               t_outer_fadl=10.0, outer_ratio=1.5)
    assert report.status == "indeterminate"


def test_params_validation():
    with pytest.raises(ValueError):
        CostParams.sqm(nz=-1, n_features=10, gamma=1.0, nodes=2, t_outer=1)
    with pytest.raises(ValueError):
        CostParams.fadl(nz=10, n_features=10, gamma=1.0, nodes=0, khat=1, t_outer=1)


def test_ledger_accounting():
    ledger = CommLedger(n_features=100)
    assert ledger.comm_passes == 0
    ledger.vector_reductions += 2
    ledger.vector_broadcasts += 2
    ledger.scalar_reductions += 5
    assert ledger.comm_passes == 2
    assert ledger.bytes_modeled == 8 * 100 * 4
    snap = ledger.snapshot()
    ledger.vector_reductions += 1
    assert snap["vector_reductions"] == 2
    assert ledger.comm_passes == 3
