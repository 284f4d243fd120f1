import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peerchoice.errors import (
    DomainError,
    EnumerationTooLargeError,
    GridLookupError,
    MissingCellError,
    StateSpaceTooLargeError,
    ValidationError,
)
from peerchoice.model import (
    CcpTable,
    LogitRule,
    TabularRule,
    all_configs,
    ccp,
    ccp_by_counts,
    ccp_table,
    compositions,
    config_from_index,
    config_index,
    grid_keys,
    logit_rule,
    make_model,
    peer_average,
    reduce_counts,
    selection_set_probability,
    validate_assumptions,
)
from peerchoice.scenarios import load_scenario

from modelgen import random_model, random_small_model


@given(st.integers(2, 6), st.integers(2, 4), st.data())
def test_config_index_roundtrip(A, K, data):
    idx = data.draw(st.integers(0, K ** A - 1))
    cfg = config_from_index(idx, A, K)
    assert config_index(cfg, K) == idx
    assert tuple(all_configs(A, K)[idx]) == cfg


def test_index_order_agent0_most_significant():
    assert config_index((1, 0, 0), 2) == 4
    assert config_index((0, 0, 1), 2) == 1
    assert [tuple(r) for r in all_configs(2, 2)] == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_config_from_index_range():
    with pytest.raises(DomainError):
        config_from_index(8, 3, 2)


def test_peer_average_empty_and_mixed():
    assert np.array_equal(peer_average((0, 1, 1, 2), [], 3), [0, 0, 0])
    np.testing.assert_allclose(peer_average((0, 1, 1, 2), [1, 2, 3], 3), [0, 2 / 3, 1 / 3])


def test_compositions_count():
    for j in range(5):
        for K in (2, 3):
            comps = list(compositions(j, K))
            assert len(comps) == len(set(comps))
            assert all(sum(c) == j for c in comps)
            assert len(comps) == comb(j + K - 1, K - 1)


def test_reduce_counts_shares_averages():
    assert reduce_counts((2, 2)) == reduce_counts((1, 1)) == (1, 1)
    assert reduce_counts((0, 4)) == (0, 1)
    assert reduce_counts((0, 0)) == (0, 0)
    assert reduce_counts((2, 3)) == (2, 3)
    # distinct keys <=> distinct averages
    keys = grid_keys(4, 3)
    avgs = {tuple(np.round(np.array(k) / max(sum(k), 1), 12)) for k in keys}
    assert len(avgs) == len(keys)


def test_logit_normalisation_and_sum():
    p = logit_rule([5.0, 0.2, -0.3], [1.0, 2.0, 0.5], [0.2, 0.5, 0.3])
    assert abs(p.sum() - 1) < 1e-15
    q = logit_rule([0.0, 0.2, -0.3], [1.0, 2.0, 0.5], [0.2, 0.5, 0.3])
    np.testing.assert_allclose(p, q)
    r = LogitRule(np.ones((1, 2, 2)), np.ones((1, 2, 2)))
    assert np.all(r.alpha[..., 0] == 0)


def test_logit_shape_checked():
    with pytest.raises(ValidationError):
        LogitRule(np.zeros((1, 2, 3)), np.zeros((1, 2, 3)))


def test_tabular_off_grid_raises():
    entries = {(0, own, k): [0.5, 0.5] for own in (0, 1) for k in grid_keys(1, 2)}
    rule = TabularRule(2, 1, entries)
    assert np.array_equal(rule.probs(0, 0, (2, 0)), rule.probs(0, 0, (1, 0)))
    with pytest.raises(GridLookupError):
        rule.probs(0, 0, (1, 1))
    with pytest.raises(ValidationError):
        TabularRule(2, 1, {(0, 0, (0, 0)): [0.7, 0.7]})


def test_model_validation_errors():
    rule = LogitRule(np.zeros((1, 2, 2)), np.ones((1, 2, 2)))
    Q = np.full((1, 2, 2), 0.5)
    with pytest.raises(ValidationError):
        make_model([0, 0], [[0], [0]], Q, rule)          # self loop
    with pytest.raises(ValidationError):
        make_model([0, 0], [[1], [5]], Q, rule)          # unknown peer
    with pytest.raises(ValidationError):
        make_model([0, 0], [[1], [0]], Q, rule, [1, 0])  # zero rate
    with pytest.raises(ValidationError):
        make_model([0, 0], [[1], [0]], Q * 3, rule)      # Q > 1
    with pytest.raises(ValidationError):
        make_model([0, 1], [[1], [0]], Q, rule)          # type out of range
    entries = {(0, own, k): [0.5, 0.5] for own in (0, 1) for k in grid_keys(1, 2)}
    with pytest.raises(ValidationError):
        make_model([0, 0, 0], [[1, 2], [0], [0]], Q, TabularRule(2, 1, entries))  # grid too small


def test_selection_set_probability_sums_to_one():
    m = load_scenario("example1").model
    y = (0, 2, 1, 1)
    total = sum(selection_set_probability(0, s, y, m)
                for r in range(3) for s in itertools.combinations(m.peers[0], r))
    assert abs(total - 1) < 1e-15
    with pytest.raises(DomainError):
        selection_set_probability(0, [3], y, m)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([2, 3]), st.sampled_from(["logit", "tabular"]))
def test_ccp_enumeration_matches_count_route(seed, K, kind):
    rng = np.random.default_rng(seed)
    m = random_small_model(rng, 4, K, kind)
    table = ccp_table(m)
    for s in rng.integers(0, m.num_states, 6):
        y = config_from_index(int(s), 4, K)
        for a in range(4):
            p = ccp(a, y, m)
            assert abs(p.sum() - 1) < 1e-12
            np.testing.assert_allclose(p, table.probs[a, s], atol=1e-13)


def test_ccp_no_peers_is_empty_rule():
    m = load_scenario("example1").model
    for s in range(m.num_states):
        y = config_from_index(s, 4, 3)
        np.testing.assert_allclose(ccp(3, y, m), m.rule.probs(1, y[3], (0, 0, 0)), atol=1e-15)


def test_ccp_by_counts_two_agent_standard():
    m = load_scenario("two_agent_standard").model
    np.testing.assert_allclose(ccp_by_counts(m, 0, 0, (0, 1)), [0.2, 0.8])
    m = load_scenario("two_agent_same").model
    # own 0 with peer on 1 is never attended
    np.testing.assert_allclose(ccp_by_counts(m, 0, 0, (0, 1)), [0.5, 0.5])


def test_enumeration_cap():
    m = load_scenario("example1").model
    with pytest.raises(EnumerationTooLargeError):
        ccp(0, (0, 0, 0, 0), m, max_peers=1)


def test_state_space_cap():
    m = load_scenario("example1").model
    with pytest.raises(StateSpaceTooLargeError):
        ccp_table(m, max_states=10)


def test_ccp_table_missing_cells():
    counts = np.zeros((2, 4, 2), dtype=np.int64)
    counts[0, 0] = [3, 1]
    t = CcpTable.from_counts(counts)
    assert t.has(0, (0, 0)) and not t.has(1, (0, 0))
    assert t.n_obs(0, 0) == 4
    np.testing.assert_allclose(t.get(0, (0, 0)), [0.75, 0.25])
    with pytest.raises(MissingCellError) as exc:
        t.require([(0, (0, 0)), (1, (1, 1)), (1, 0)])
    assert len(exc.value.missing) == 2


def test_relabel_preserves_ccps():
    rng = np.random.default_rng(7)
    m = random_small_model(rng, 4, 2)
    perm = [2, 0, 3, 1]
    m2 = m.relabel(perm)
    t1, t2 = ccp_table(m), ccp_table(m2)
    for s in range(m.num_states):
        y = config_from_index(s, 4, 2)
        y2 = [0] * 4
        for a in range(4):
            y2[perm[a]] = y[a]
        s2 = config_index(y2, 2)
        for a in range(4):
            np.testing.assert_allclose(t1.probs[a, s], t2.probs[perm[a], s2], atol=1e-15)


def test_validate_assumptions_reports():
    rep = validate_assumptions(load_scenario("two_agent_same").model)
    assert not rep.passed("A1_interior_selection")
    assert not rep.passed("A4_size_variation")
    rep = validate_assumptions(load_scenario("eight_agent").model)
    assert rep.all_passed, rep.failures()


def test_validate_detects_peer_effect_tie():
    # beta_0 == beta_1 makes the average (1/2, 1/2) look like the empty set
    rng = np.random.default_rng(3)
    m = random_model(rng, 2, 1, 6)
    beta = np.full((1, 2, 2), 1.5)
    tied = make_model(m.types, m.peers, m.selection, LogitRule(m.rule.alpha, beta), m.rates)
    rep = validate_assumptions(tied)
    assert not rep.passed("A2iii_peer_effect_some_v")


def test_validate_detects_missing_sizes():
    rng = np.random.default_rng(4)
    m = random_model(rng, 2, 1, 6, sizes=(2, 3, 4))
    assert validate_assumptions(m).passed("A5_full_size_variation")
    peers = [list(p) for p in m.peers]
    for a in range(6):
        if len(peers[a]) == 3:
            peers[a] = peers[a][:1]
    m2 = make_model(m.types, peers, m.selection, m.rule, m.rates)
    rep = validate_assumptions(m2)
    assert not rep.passed("A5_full_size_variation")
