import numpy as np
import pytest
from scipy import stats

from peerchoice import kernels
from peerchoice.equilibrium import build_rate_matrix, invariant_distribution, transition_kernel
from peerchoice.errors import ValidationError
from peerchoice.model import all_configs, ccp_table
from peerchoice.scenarios import load_scenario
from peerchoice.simulator import (
    configuration_at,
    emit_dataset1,
    emit_dataset2,
    estimate_ccp_dataset1,
    estimate_transition_matrix,
    occupation_frequencies,
    read_events_csv,
    read_snapshots_csv,
    simulate,
    write_events_csv,
    write_snapshots_csv,
)


@pytest.fixture(scope="module")
def example1():
    return load_scenario("example1").model


@pytest.fixture(scope="module")
def long_run():
    m = load_scenario("eight_agent").model
    return m, simulate(m, 200_000 / m.rates.sum(), seed=11)


def _same(a, b):
    return all(np.array_equal(getattr(a, f), getattr(b, f))
               for f in ("times", "agents", "before", "choices", "active"))


def test_seed_reproducible(example1):
    a = simulate(example1, 500.0, seed=5)
    b = simulate(example1, 500.0, seed=5)
    c = simulate(example1, 500.0, seed=6)
    assert _same(a, b)
    assert not np.array_equal(a.times[:10], c.times[:10])


@pytest.mark.skipif(kernels.simulate_chunk_numba is None, reason="numba not installed")
def test_backends_bit_identical(example1):
    a = simulate(example1, 3000.0, seed=9, kernel=kernels.simulate_chunk_python)
    b = simulate(example1, 3000.0, seed=9, kernel=kernels.simulate_chunk_numba)
    assert len(a) > 1000
    assert _same(a, b)


def test_log_is_consistent(example1):
    ev = simulate(example1, 2000.0, seed=1)
    assert np.all(np.diff(ev.times) > 0)
    assert ev.times[-1] <= ev.horizon
    after = ev.after()
    assert np.array_equal(ev.before[1:], after[:-1])
    assert ev.before[0] == ev.initial
    # the active set only ever contains peers of the waking agent
    for a in range(4):
        allowed = sum(1 << b for b in example1.peers[a])
        assert np.all(ev.active[ev.agents == a] & ~allowed == 0)


def test_gaps_exponential(long_run):
    m, ev = long_run
    gaps = np.diff(np.concatenate([[0.0], ev.times]))
    res = stats.kstest(gaps, "expon", args=(0, 1 / m.rates.sum()))
    assert res.pvalue > 0.01


def test_wake_shares(long_run):
    m, ev = long_run
    n = len(ev)
    share = m.rates / m.rates.sum()
    counts = np.bincount(ev.agents, minlength=m.num_agents)
    sigma = np.sqrt(n * share * (1 - share))
    assert np.all(np.abs(counts - n * share) <= 3 * sigma)


def test_active_set_product_law(long_run):
    m, ev = long_run
    digits = all_configs(m.num_agents, m.num_alternatives)
    for a in range(m.num_agents):
        peers = list(m.peers[a])
        if not peers or len(peers) > 4:
            continue
        sel = ev.agents == a
        y = digits[ev.before[sel]]
        q = m.selection[m.types[a], y[:, a][:, None], y[:, peers]]   # (n, |N_a|)
        mask = ev.active[sel]
        for s in range(1 << len(peers)):
            inc = np.array([(s >> i) & 1 for i in range(len(peers))], dtype=bool)
            p = np.prod(np.where(inc, q, 1 - q), axis=1)
            target = sum(1 << peers[i] for i in range(len(peers)) if inc[i])
            obs = np.sum(mask == target)
            assert abs(obs - p.sum()) <= 3 * np.sqrt((p * (1 - p)).sum()), (a, s)


def test_discard_burn_in(example1):
    ev = simulate(example1, 1000.0, seed=3)
    tail = ev.discard_burn_in(0.25)
    assert tail.start == pytest.approx(250.0)
    assert np.all(tail.times > 250.0)
    assert tail.initial == tail.before[0]
    with pytest.raises(ValidationError):
        ev.discard_burn_in(1.0)


def test_dataset1_hides_active_sets(example1):
    ev = simulate(example1, 200.0, seed=3)
    d1 = emit_dataset1(ev)
    assert d1.active is None and len(d1) == len(ev)
    moves = emit_dataset1(ev, changes_only=True)
    assert np.all(moves.choices != moves.own_before())


def test_snapshots_right_continuous(example1):
    ev = simulate(example1, 100.0, seed=4)
    t = ev.times[5]
    before_idx, after_idx = ev.before[5], ev.after()[5]
    got = configuration_at(ev, np.array([t - 1e-9, t, t + 1e-9]))
    assert list(got) == [before_idx, after_idx, after_idx]
    series = emit_dataset2(ev, 0.5)
    assert len(series) == 201
    assert series.configs[0] == ev.initial
    with pytest.raises(ValidationError):
        emit_dataset2(ev, 150.0)
    with pytest.raises(ValidationError):
        emit_dataset2(ev, -1.0)


def test_ccp_estimates_and_missing_cells(example1):
    ev = simulate(example1, 20_000.0, seed=8)
    table, lam = estimate_ccp_dataset1(ev)
    np.testing.assert_allclose(lam, example1.rates, rtol=0.05)
    exact = ccp_table(example1)
    seen = table.counts.sum(axis=2) >= 200
    assert seen.sum() > 30
    diff = np.abs(table.probs - exact.probs)[seen]
    assert diff.max() < 0.1
    unseen = table.counts.sum(axis=2) == 0
    assert np.all(np.isnan(table.probs[unseen]))


def test_occupation_close_to_mu(example1):
    m = example1
    ev = simulate(m, 200_000 / m.rates.sum(), seed=14, record_active=False)
    mu = invariant_distribution(build_rate_matrix(m)).mu
    tv = 0.5 * np.abs(occupation_frequencies(ev.discard_burn_in(0.05)) - mu).sum()
    assert tv < 0.03


def test_transition_estimate_close_to_kernel(example1):
    ev = simulate(example1, 60_000.0, seed=12)
    series = emit_dataset2(ev, 0.5)
    est = estimate_transition_matrix(series)
    P = transition_kernel(build_rate_matrix(example1), 0.5)
    rows = est.row_counts >= 1000
    assert rows.sum() > 5
    assert np.abs(est.matrix[rows] - P[rows]).max() < 0.06


def test_csv_roundtrip(tmp_path, example1):
    ev = simulate(example1, 300.0, seed=13)
    write_events_csv(tmp_path / "e.csv", ev, ["prov line"], 0.5)
    back = read_events_csv(tmp_path / "e.csv")
    assert _same(ev, back)
    assert (back.initial, back.horizon, back.seed) == (ev.initial, ev.horizon, 13)
    assert (tmp_path / "e.csv").read_text().startswith("# prov line\n")
    d1 = emit_dataset1(ev)
    write_events_csv(tmp_path / "d.csv", d1)
    assert read_events_csv(tmp_path / "d.csv").active is None
    series = emit_dataset2(ev, 0.7)
    write_snapshots_csv(tmp_path / "s.csv", series, ev.horizon, 13, ["prov"])
    s2 = read_snapshots_csv(tmp_path / "s.csv")
    assert np.array_equal(s2.configs, series.configs) and s2.delta == series.delta
