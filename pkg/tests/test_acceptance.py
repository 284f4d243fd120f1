"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest (the lines are repeated in the terminal summary) or
directly with ``python tests/test_acceptance.py``.
"""

import functools
import time

import numpy as np
import pytest
from scipy import stats

from peerchoice.equilibrium import (
    build_rate_matrix,
    invariant_distribution,
    rate_matrix_from_ccps,
    symmetric_two_agent_ccps,
    transition_kernel,
    two_agent_closed_form,
)
from peerchoice.errors import EmbeddingNotIdentifiedError
from peerchoice.identification import (
    IdentificationOptions,
    identify_from_ccps,
    invert_ratio,
    ratio_function,
    recover_generator,
)
from peerchoice.model import LogitRule, TabularRule, all_configs, ccp_table, make_model
from peerchoice.scenarios import load_scenario
from peerchoice.simulator import estimate_ccp_dataset1, occupation_frequencies, simulate

from modelgen import random_model, random_small_model

RESULTS = {}


def record(key, title, passed, detail):
    RESULTS[key] = f"{'PASS' if passed else 'FAIL'}  {key:<3} {title}: {detail}"
    print(RESULTS[key])
    return passed


# ---------------------------------------------------------------------------
# 1. two-agent oracle

def criterion_1():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        p = rng.uniform(0.01, 0.99, 4)
        W = rate_matrix_from_ccps(symmetric_two_agent_ccps(*p), np.ones(2), 2, 2)
        worst = max(worst, np.abs(invariant_distribution(W).mu - two_agent_closed_form(*p)).max())
    dt = time.perf_counter() - t0
    return record("1", "two-agent closed form vs solver, 100 models", worst <= 1e-10 and dt < 1.0,
                  f"max error {worst:.2e} (<= 1e-10), {dt:.2f} s (< 1 s)")


# ---------------------------------------------------------------------------
# 2. coordination orderings

def _two_agent_model(a, b, c, Q):
    entries = {}
    for own in (0, 1):
        entries[(0, own, (0, 0))] = [1 - b, b]
        entries[(0, own, (0, 1))] = [1 - a, a]
        entries[(0, own, (1, 0))] = [1 - c, c]
    return make_model([0, 0], [[1], [0]], np.array([Q], float), TabularRule(2, 1, entries))


REGIMES = {"std": [[1, 1], [1, 1]], "same": [[1, 0], [0, 1]], "diff": [[0, 1], [1, 0]]}


def _coordination(a, b, c):
    out = {}
    for name, Q in REGIMES.items():
        mu = invariant_distribution(build_rate_matrix(_two_agent_model(a, b, c, Q))).mu
        out[name] = mu[0] + mu[3]
    return out


def criterion_2():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    pos = neg = half = 0
    for _ in range(50):
        a, c = rng.uniform(0.5, 0.99), rng.uniform(0.01, 0.5)
        co = _coordination(a, 0.5, c)
        pos += co["std"] > co["same"] > co["diff"]
        half += co["same"] > co["diff"]
        co = _coordination(c, 0.5, a)
        neg += co["same"] > co["diff"] > co["std"]
        half += co["same"] > co["diff"]
    dt = time.perf_counter() - t0
    ok = pos == 50 and neg == 50 and half == 100 and dt < 1.0
    return record("2", "coordination orderings with R(1|empty)=0.5", ok,
                  f"positive {pos}/50, negative {neg}/50, same>diff {half}/100, {dt:.2f} s (< 1 s)")


# ---------------------------------------------------------------------------
# 3. exact identification round trip

def criterion_3():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    worst, nets, shapes = 0.0, 0, []
    for i in range(20):
        K = 2 if i % 2 == 0 else 3
        H = 1 + (i // 2) % 2
        kind = "logit" if i % 4 < 2 else "tabular"
        lo = max(5, 3 * H)
        A = int(rng.integers(lo, (10 if K == 2 else 7) + 1))
        m = random_model(rng, K, H, A, kind)
        rep = identify_from_ccps(ccp_table(m), m.types, m.num_types, truth=m)
        nets += rep.errors["network_exact"]
        worst = max([worst] + [v for k, v in rep.errors.items() if k.endswith("_abs")])
        shapes.append((A, K, H, kind))
    dt = time.perf_counter() - t0
    ok = nets == 20 and worst <= 1e-8 and dt < 30.0
    return record("3", "exact-table identification, 20 models", ok,
                  f"networks {nets}/20, max error {worst:.2e} (<= 1e-8), {dt:.1f} s (< 30 s)")


# ---------------------------------------------------------------------------
# 4. simulated dataset-1 round trip

@functools.lru_cache(maxsize=None)
def _dataset1_roundtrip():
    scn = load_scenario("eight_agent")
    m = scn.model
    t0 = time.perf_counter()
    ev = simulate(m, 1e6 / m.rates.sum(), seed=1, record_active=False).discard_burn_in(0.1)
    table, lam = estimate_ccp_dataset1(ev)
    rep = identify_from_ccps(table, m.types, m.num_types, IdentificationOptions(project=True),
                             rates=lam, truth=m)
    return rep.errors, time.perf_counter() - t0


def criterion_4a():
    e, dt = _dataset1_roundtrip()
    return record("4a", "dataset-1 round trip (10^6 events), network", e["network_exact"],
                  f"{e['network_mismatches']} mismatched edges, {dt:.1f} s")


def criterion_4b():
    e, _ = _dataset1_roundtrip()
    return record("4b", "dataset-1 round trip, selection kernel", e["selection_max_abs"] <= 0.02,
                  f"max |Q_hat - Q| {e['selection_max_abs']:.4f} (<= 0.02)")


def criterion_4c():
    e, _ = _dataset1_roundtrip()
    v = max(e["rule_empty_max_abs"], e["rule_single_max_abs"])
    return record("4c", "dataset-1 round trip, base rules", v <= 0.05, f"max error {v:.4f} (<= 0.05)")


def criterion_4d():
    e, _ = _dataset1_roundtrip()
    return record("4d", "dataset-1 round trip, logit intercepts", e["logit_alpha_max_abs"] <= 0.05,
                  f"max error {e['logit_alpha_max_abs']:.4f} (<= 0.05)")


def criterion_4e():
    e, _ = _dataset1_roundtrip()
    return record("4e", "dataset-1 round trip, logit peer effects", e["logit_beta_max_abs"] <= 0.05,
                  f"max error {e['logit_beta_max_abs']:.4f} (<= 0.05)")


def criterion_4f():
    e, _ = _dataset1_roundtrip()
    return record("4f", "dataset-1 round trip, clock rates", e["rates_max_rel"] <= 0.01,
                  f"max relative error {e['rates_max_rel']:.4f} (<= 0.01)")


# ---------------------------------------------------------------------------
# 5. generator embedding

def _safe_delta(W):
    """Largest delta <= 1 keeping every eigenvalue of exp(delta W) off the
    closed negative real axis."""
    ev = np.linalg.eigvals(W)
    top = np.abs(ev.imag).max()
    return 1.0 if top == 0 else min(1.0, 0.5 * np.pi / top)


def criterion_5():
    rng = np.random.default_rng(505)
    t0 = time.perf_counter()
    worst, done = 0.0, 0
    while done < 50:
        K = 2 if done % 3 else 3
        A = int(rng.integers(5, 9)) if K == 2 else 5
        m = random_model(rng, K, 1, A, "logit" if done % 2 else "tabular")
        W = build_rate_matrix(m).dense()
        delta = _safe_delta(W)
        rec = recover_generator(transition_kernel(W, delta), delta, A, K)
        worst = max(worst, np.abs(rec.generator - W).max())
        done += 1
    rule = LogitRule(np.array([[[0.0, 0.4], [0.0, -0.3]]]), np.ones((1, 2, 2)))
    twin = make_model([0] * 4, [[]] * 4, np.full((1, 2, 2), 0.5), rule)
    try:
        recover_generator(transition_kernel(build_rate_matrix(twin), 0.5), 0.5, 4, 2)
        refused = False
    except EmbeddingNotIdentifiedError:
        refused = True
    dt = time.perf_counter() - t0
    ok = worst <= 1e-8 and refused and dt < 10.0
    return record("5", "generator embedding, 50 models", ok,
                  f"max |W_hat - W| {worst:.2e} (<= 1e-8), repeated eigenvalues refused: {refused}, "
                  f"{dt:.1f} s (< 10 s)")


# ---------------------------------------------------------------------------
# 6. stationarity, support, occupation frequencies

def criterion_6():
    rng = np.random.default_rng(606)
    models = [load_scenario(n).model for n in ("example1", "eight_agent")]
    models += [random_small_model(rng, int(rng.integers(2, 7)), int(rng.integers(2, 4))) for _ in range(20)]
    res, low = 0.0, 1.0
    for m in models:
        W = build_rate_matrix(m)
        mu = invariant_distribution(W).mu
        res = max(res, np.abs(mu @ W.dense()).max())
        low = min(low, mu.min())
    tvs = {}
    for name in ("example1", "eight_agent"):
        m = load_scenario(name).model
        mu = invariant_distribution(build_rate_matrix(m)).mu
        ev = simulate(m, 1e6 / m.rates.sum(), seed=6, record_active=False).discard_burn_in(0.1)
        tvs[name] = 0.5 * np.abs(occupation_frequencies(ev) - mu).sum()
    ok = res <= 1e-9 and low > 0 and max(tvs.values()) <= 0.01
    tv_txt = ", ".join(f"TV {k} {v:.4f}" for k, v in tvs.items())
    return record("6", "stationarity and full support", ok,
                  f"max |mu W| {res:.1e} (<= 1e-9), min mu {low:.1e} (> 0), {tv_txt} (<= 0.01)")


# ---------------------------------------------------------------------------
# 7. simulator exactness

def criterion_7():
    m = load_scenario("eight_agent").model
    ev = simulate(m, 1e6 / m.rates.sum(), seed=7)
    gaps = np.diff(np.concatenate([[0.0], ev.times]))
    ks = stats.kstest(gaps, "expon", args=(0, 1 / m.rates.sum())).pvalue
    n = len(ev)
    share = m.rates / m.rates.sum()
    z_wake = np.abs(np.bincount(ev.agents, minlength=m.num_agents) - n * share) / np.sqrt(n * share * (1 - share))
    digits = all_configs(m.num_agents, m.num_alternatives)
    z_sets = []
    for a in range(m.num_agents):
        peers = list(m.peers[a])
        if not peers or len(peers) > 4:
            continue
        sel = ev.agents == a
        y = digits[ev.before[sel]]
        q = m.selection[m.types[a], y[:, a][:, None], y[:, peers]]
        mask = ev.active[sel]
        for s in range(1 << len(peers)):
            inc = np.array([(s >> i) & 1 for i in range(len(peers))], dtype=bool)
            p = np.prod(np.where(inc, q, 1 - q), axis=1)
            target = sum(1 << peers[i] for i in range(len(peers)) if inc[i])
            z_sets.append(abs(np.sum(mask == target) - p.sum()) / np.sqrt((p * (1 - p)).sum()))
    ok = ks > 0.01 and z_wake.max() <= 3 and max(z_sets) <= 3
    return record("7", "simulator exactness", ok,
                  f"KS p {ks:.3f} (> 0.01), max wake-share z {z_wake.max():.2f} (<= 3), "
                  f"max active-set z {max(z_sets):.2f} over {len(z_sets)} sets (<= 3)")


# ---------------------------------------------------------------------------
# 8. f inversion

def criterion_8():
    t0 = time.perf_counter()
    grid = np.arange(1, 100) / 100
    worst = 0.0
    for n2, n3 in [(2, 3), (4, 6), (1, 2), (2, 4), (1, 3), (2, 6)]:
        for x in grid:
            worst = max(worst, abs(invert_ratio(float(ratio_function(x, n2, n3)), n2, n3) - x))
    dt = time.perf_counter() - t0
    return record("8", "f inversion on the 0.01..0.99 grid", worst <= 1e-10 and dt < 1.0,
                  f"max error {worst:.2e} (<= 1e-10), {dt:.2f} s (< 1 s)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4a, criterion_4b, criterion_4c,
            criterion_4d, criterion_4e, criterion_4f, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[c.__name__ for c in CRITERIA])
def test_acceptance(criterion):
    assert criterion()


if __name__ == "__main__":
    for c in CRITERIA:
        c()
