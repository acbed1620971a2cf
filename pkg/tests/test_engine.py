import math

import numpy as np
import pytest
from scipy.stats import norm

from lsmcoc.basis import ArGarchBasis
from lsmcoc.engine import (
    CoefficientTable,
    RunConfig,
    inner_targets,
    lsm_backward,
    map_ordered,
    substream,
    value_at_zero,
)
from lsmcoc.models import ArGarchModel, ArGarchParams
from lsmcoc.oracle import closed_form_normal_phi
from lsmcoc.risk import CocParams, NonFiniteSampleError, coc_pair
from toy_models import DriftModel, NoisyZeroModel, linear_bases

COC = CocParams(0.995, 0.06)


def ar_bases(T):
    return {t: ArGarchBasis(t) for t in range(1, T)}


def test_substreams_are_reproducible_and_distinct():
    a = substream(5, 2, 3, 7).standard_normal(4)
    assert np.array_equal(a, substream(5, 2, 3, 7).standard_normal(4))
    assert not np.array_equal(a, substream(5, 2, 3, 8).standard_normal(4))
    assert not np.array_equal(a, substream(6, 2, 3, 7).standard_normal(4))


def test_map_ordered_keeps_index_order():
    out = map_ordered(lambda i: (i, i * i), 50, threads=4)
    assert np.array_equal(out[:, 0], np.arange(50))


def test_run_config_checks():
    with pytest.raises(ValueError):
        RunConfig(0, 1000)
    with pytest.raises(ValueError):
        RunConfig(10, 100, CocParams(0.995, 0.06))  # nothing beyond the quantile
    RunConfig(10, 200, CocParams(0.995, 0.06))


# --------------------------------------------------------------------------
# inner targets


def test_inner_targets_constant_terminal():
    model = DriftModel(horizon=1, x0=4.0, step=0.0)
    r, e = inner_targets(model, None, None, model.initial_state(), 0, 500, COC, substream(0, 2))
    assert (r, e) == (4.0, 0.0)


def test_inner_targets_normal_quantile():
    model = ArGarchModel(horizon=3)
    level, sigma, n = 1.5, 2.0, 100_000
    r, e = inner_targets(model, None, None, np.array([level, sigma]), 2, n, COC, substream(3, 2))
    q = norm.ppf(COC.alpha)
    # order-statistic standard deviation of the sample quantile
    sd = sigma * math.sqrt(COC.alpha * (1 - COC.alpha) / n) / norm.pdf(q)
    assert abs(r - (1.0 + level + sigma * q)) < 4 * sd
    v = r - COC.discount * e
    assert v == pytest.approx(1.0 + level + sigma * closed_form_normal_phi(COC), abs=0.02)


def test_inner_targets_same_stream_same_result():
    model = ArGarchModel(horizon=3)
    s = np.array([0.5, 1.2])
    a = inner_targets(model, None, None, s, 2, 1000, COC, substream(9, 2, 1))
    b = inner_targets(model, None, None, s, 2, 1000, COC, substream(9, 2, 1))
    assert a == b


def test_inner_targets_nonfinite_aborts():
    model = ArGarchModel(horizon=3)
    beta = np.array([np.nan, 0, 0, 0, 0, 0])
    with pytest.raises(NonFiniteSampleError):
        inner_targets(model, ArGarchBasis(2), beta, np.array([0.0, 1.0]), 1, 300, COC, substream(0, 2))


# --------------------------------------------------------------------------
# backward recursion


def test_horizon_one_is_plain_coc_average():
    model = ArGarchModel(horizon=1)
    cfg = RunConfig(20, 2000, COC, seed=4, threads=1)
    table = lsm_backward(model, {}, cfg)
    # recompute every replicate with its documented substream
    vals = []
    for i in range(cfg.M):
        rng = substream(cfg.seed, 2, 0, i)
        y = model.cashflow(1, model.successors(model.initial_state(), 0, cfg.n, rng))
        vals.append(coc_pair(y, COC))
    r0 = np.mean([v.r for v in vals])
    e0 = np.mean([v.e for v in vals])
    assert table.r0 == pytest.approx(r0, rel=1e-14)
    assert table.e0 == pytest.approx(e0, rel=1e-14)
    assert table.v0 == pytest.approx(r0 - e0 / 1.06, rel=1e-14)
    assert table.beta_v == {}


def test_horizon_one_matches_closed_form():
    table = lsm_backward(ArGarchModel(horizon=1), {}, RunConfig(200, 10_000, COC, seed=1, threads=1))
    exact = 1.0 + closed_form_normal_phi(COC)
    assert abs(table.v0 - exact) < 4 * table.v0_se + 0.002


def test_zero_cashflow_gives_zero():
    model = NoisyZeroModel(horizon=3)
    table = lsm_backward(model, linear_bases(3), RunConfig(50, 400, COC, seed=2, threads=1))
    for t in (1, 2):
        assert np.all(table.beta_r[t] == 0) and np.all(table.beta_e[t] == 0) and np.all(table.beta_v[t] == 0)
    assert value_at_zero(table) == 0.0


def test_deterministic_model_sums_cashflows():
    model = DriftModel(horizon=3, x0=1.0, step=1.0)
    table = lsm_backward(model, linear_bases(3), RunConfig(30, 400, COC, seed=2, threads=1))
    assert table.v0 == pytest.approx(2.0 + 3.0 + 4.0, rel=1e-12)
    assert table.e0 == pytest.approx(0.0, abs=1e-12)


def test_value_identity_exact():
    table = lsm_backward(ArGarchModel(horizon=3), ar_bases(3), RunConfig(300, 1000, COC, seed=8, threads=1))
    for t in (1, 2):
        assert np.array_equal(table.beta_v[t], table.beta_r[t] - COC.discount * table.beta_e[t])
    assert table.value_beta(3) is None


def test_collinear_column_dropped_at_time_one():
    # sigma_2^2 = 0.2 + 0.1 L_1^2 when sigma_1 is fixed
    table = lsm_backward(ArGarchModel(horizon=3), ar_bases(3), RunConfig(300, 1000, COC, seed=8, threads=1))
    assert len(table.dropped[1]) == 1
    assert 2 not in table.dropped
    cfg = RunConfig(300, 1000, COC, seed=8, threads=1, drop_dependent=False)
    with pytest.raises(np.linalg.LinAlgError):
        lsm_backward(ArGarchModel(horizon=3), ar_bases(3), cfg)


def test_too_few_outer_points():
    with pytest.raises(ValueError):
        lsm_backward(ArGarchModel(horizon=3), ar_bases(3), RunConfig(5, 1000, COC))


def test_reproducible_and_thread_invariant():
    model = ArGarchModel(horizon=3)
    runs = [lsm_backward(model, ar_bases(3), RunConfig(200, 1000, COC, seed=3, threads=k)) for k in (1, 1, 4)]
    for other in runs[1:]:
        for t in (1, 2):
            for name in ("beta_r", "beta_e", "beta_v"):
                assert getattr(runs[0], name)[t].tobytes() == getattr(other, name)[t].tobytes()
        assert (runs[0].r0, runs[0].e0, runs[0].v0) == (other.r0, other.e0, other.v0)


def test_seed_changes_result():
    model = ArGarchModel(horizon=2)
    a = lsm_backward(model, ar_bases(2), RunConfig(100, 1000, COC, seed=1, threads=1))
    b = lsm_backward(model, ar_bases(2), RunConfig(100, 1000, COC, seed=2, threads=1))
    assert a.v0 != b.v0


def test_value_increases_with_eta():
    # identical (r0, e0) on identical streams, so v0 = r0 - e0 / (1 + eta) rises with eta
    model = ArGarchModel(horizon=1)
    vals = []
    for eta in (0.0, 0.06, 0.5):
        cfg = RunConfig(20, 1000, CocParams(0.995, eta), seed=5, threads=1)
        vals.append(lsm_backward(model, {}, cfg))
    assert len({(t.r0, t.e0) for t in vals}) == 1
    assert vals[0].v0 <= vals[1].v0 <= vals[2].v0
    assert vals[0].e0 > 0


def test_csv_round_trip(tmp_path):
    model = ArGarchModel(ArGarchParams(), horizon=3)
    table = lsm_backward(model, ar_bases(3), RunConfig(100, 500, COC, seed=1, threads=1))
    path = tmp_path / "coef.csv"
    table.to_csv(path)
    zero = {"r0": table.r0, "e0": table.e0, "v0": table.v0, "v0_se": table.v0_se}
    back = CoefficientTable.from_csv(path, 3, COC, 1, zero)
    for t in (1, 2):
        assert back.labels[t] == table.labels[t]
        for name in ("beta_r", "beta_e", "beta_v"):
            assert getattr(back, name)[t].tobytes() == getattr(table, name)[t].tobytes()
    assert back.v0 == table.v0
    text = path.read_text().splitlines()
    assert text[0].startswith("t,target,b0")
    assert text[1].startswith("1,labels,1,L,sigma")


def test_csv_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        CoefficientTable.from_csv(path, 3, COC, 1)
