"""Recovery of the network, selection kernel, choice rules and generator.

Every routine here takes CCP tables (exact or estimated) and works only
with the cells the constructive arguments need; a missing cell is an error,
never an imputation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    AssumptionViolationError,
    DomainError,
    EmbeddingNotIdentifiedError,
    InfeasibleRatioError,
    InsufficientContrastError,
    MissingCellError,
    RecursionBlockedError,
    ValidationError,
)
from .model import (
    CcpTable,
    LogitRule,
    ModelSpec,
    TabularRule,
    all_configs,
    compositions,
    config_index,
    local_profile_keys,
    reduce_counts,
    substitute,
)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Decision thresholds for estimated versus exact CCP tables."""

    multiplier: float = 3.0
    floor: float = 1e-3
    exact_tol: float = 1e-9
    network_alpha: float = 1e-6
    min_expected: float = 5.0


def _is_exact(table: CcpTable) -> bool:
    return table.provenance == "exact"


def _binomial_se(p, n):
    if n is None or n == 0:
        return np.zeros_like(p)
    return np.sqrt(np.clip(p * (1.0 - p), 0.0, None) / n)


# ---------------------------------------------------------------------------
# network

@dataclass
class NetworkRecovery:
    adjacency: np.ndarray
    contrast: np.ndarray
    threshold: np.ndarray

    def peers(self) -> list[list[int]]:
        return [list(np.flatnonzero(row)) for row in self.adjacency]


def recover_network(table: CcpTable, policy: ThresholdPolicy | None = None) -> NetworkRecovery:
    """b is a peer of a iff moving b alone shifts a's choice probabilities.

    Exact tables, and derived tables without standard errors, compare the
    all-zeros configuration with its single-agent deviations against a fixed
    threshold. Tables with counts use a chi-square homogeneity test pooled
    over every baseline configuration: under "not a peer" the two CCPs agree
    everywhere, so the summed statistic is chi-square with one block of K-1
    degrees of freedom per usable baseline. Derived tables with standard
    errors use the matching pooled Wald statistic. ``contrast`` then holds
    -log10 of the p-value and ``threshold`` the Bonferroni cut.
    """
    policy = policy or ThresholdPolicy()
    if table.counts is not None:
        return _network_from_counts(table, policy)
    if table.se is not None:
        return _network_from_se(table, policy)
    A, K = table.num_agents, table.num_alternatives
    zero = (0,) * A
    cells = [(a, zero) for a in range(A)]
    cells += [(a, substitute(zero, b, v)) for a in range(A) for b in range(A) if b != a for v in range(1, K)]
    table.require(cells)

    tau = policy.exact_tol if _is_exact(table) else policy.floor
    adj = np.zeros((A, A), dtype=bool)
    best = np.zeros((A, A))
    thr = np.zeros((A, A))
    for a in range(A):
        p0 = table.get(a, zero)
        for b in range(A):
            if b == a:
                continue
            diff = max(abs(table.get(a, substitute(zero, b, v))[v] - p0[v]) for v in range(1, K))
            best[a, b], thr[a, b] = diff, tau
            adj[a, b] = diff > tau
    return NetworkRecovery(adj, best, thr)


def _network_from_counts(table: CcpTable, policy: ThresholdPolicy) -> NetworkRecovery:
    A, K = table.num_agents, table.num_alternatives
    digits = all_configs(A, K)
    w = K ** np.arange(A - 1, -1, -1)
    cut = -math.log10(policy.network_alpha / (A * (A - 1)))
    adj = np.zeros((A, A), dtype=bool)
    logp = np.zeros((A, A))
    thr = np.full((A, A), cut)
    np.fill_diagonal(thr, 0.0)
    for a in range(A):
        c = table.counts[a].astype(float)
        for b in range(A):
            if b == a:
                continue
            base = np.flatnonzero(digits[:, b] == 0)
            stat, df = 0.0, 0
            for v in range(1, K):
                c0 = c[base]
                c1 = c[base + v * w[b]]
                n0 = c0.sum(axis=1, keepdims=True)
                n1 = c1.sum(axis=1, keepdims=True)
                tot = c0 + c1
                n = n0 + n1
                with np.errstate(invalid="ignore", divide="ignore"):
                    e0 = n0 * tot / n
                    e1 = n1 * tot / n
                    # drop alternatives never chosen in either cell, then require adequate expectations
                    used = tot > 0
                    ok = (n0[:, 0] > 0) & (n1[:, 0] > 0)
                    ok &= np.all(np.where(used, np.minimum(e0, e1) >= policy.min_expected, True), axis=1)
                    ok &= used.sum(axis=1) >= 2
                    terms = np.where(used, (c0 - e0) ** 2 / e0 + (c1 - e1) ** 2 / e1, 0.0)
                stat += float(terms[ok].sum())
                df += int((used[ok].sum(axis=1) - 1).sum())
            if df == 0:
                raise MissingCellError(f"no configuration pair with enough data to test whether {b} is a peer of {a}",
                                       [(a, b)])
            lp = -stats.chi2.logsf(stat, df) / math.log(10.0)
            logp[a, b] = lp
            adj[a, b] = lp > cut
    return NetworkRecovery(adj, logp, thr)


def _network_from_se(table: CcpTable, policy: ThresholdPolicy) -> NetworkRecovery:
    A, K = table.num_agents, table.num_alternatives
    digits = all_configs(A, K)
    w = K ** np.arange(A - 1, -1, -1)
    cut = -math.log10(policy.network_alpha / (A * (A - 1)))
    adj = np.zeros((A, A), dtype=bool)
    logp = np.zeros((A, A))
    thr = np.full((A, A), cut)
    np.fill_diagonal(thr, 0.0)
    for a in range(A):
        # the stay probability is the complement of the moves, so drop it
        move = np.arange(K)[None, :] != digits[:, a][:, None]
        for b in range(A):
            if b == a:
                continue
            base = np.flatnonzero(digits[:, b] == 0)
            stat, df = 0.0, 0
            for v in range(1, K):
                alt = base + v * w[b]
                d = table.probs[a, base] - table.probs[a, alt]
                var = table.se[a, base] ** 2 + table.se[a, alt] ** 2
                ok = move[base] & (var > 0) & np.isfinite(d) & np.isfinite(var)
                stat += float(np.sum(d[ok] ** 2 / var[ok]))
                df += int(ok.sum())
            if df == 0:
                raise MissingCellError(f"no configuration pair with a standard error to test whether {b} "
                                       f"is a peer of {a}", [(a, b)])
            lp = -stats.chi2.logsf(stat, df) / math.log(10.0)
            logp[a, b] = lp
            adj[a, b] = lp > cut
    return NetworkRecovery(adj, logp, thr)


def pool_by_network(table: CcpTable, adjacency) -> CcpTable:
    """Merge counts over configurations that agree on an agent's own choice
    and on how many of its peers choose each alternative.

    Under independent selection and type-level rules these configurations
    share one CCP, so pooling only adds data.
    """
    if table.counts is None:
        raise ValidationError("pooling needs an estimated table with counts")
    A, K = table.num_agents, table.num_alternatives
    peers = [list(np.flatnonzero(row)) for row in np.asarray(adjacency)]
    digits = all_configs(A, K)
    pooled = np.empty_like(table.counts)
    for a in range(A):
        own, counts = local_profile_keys(peers, K, digits, a)
        keys = np.concatenate([own[:, None], counts], axis=1)
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        sums = np.zeros((inverse.max() + 1, K), dtype=table.counts.dtype)
        np.add.at(sums, inverse, table.counts[a])
        pooled[a] = sums[inverse]
    return CcpTable.from_counts(pooled, table.provenance + "-pooled")


# ---------------------------------------------------------------------------
# selection kernel and base rules

def ratio_function(x, n2: int, n3: int):
    """(1 - x**n3) / (1 - x**n2), the observed ratio of CCP contrasts as a
    function of the non-selection probability x."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        lx = np.log(x)
    return np.expm1(n3 * lx) / np.expm1(n2 * lx)


def invert_ratio(rho: float, n2: int, n3: int, tol: float = 1e-15) -> float:
    """Bisection inverse of :func:`ratio_function` on (0, 1)."""
    if not n3 > n2 > 0:
        raise DomainError("need 0 < n2 < n3")
    hi_val = n3 / n2
    if not 1.0 < rho < hi_val:
        raise InfeasibleRatioError(
            f"contrast ratio {rho:.6g} lies outside the feasible interval (1, {hi_val:.6g})",
            rho, (1.0, hi_val))
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(ratio_function(mid, n2, n3)) < rho:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


@dataclass
class BaseRuleRecovery:
    selection: np.ndarray      # [t, own, peer]
    empty: np.ndarray          # [t, own, v]
    single: np.ndarray         # [t, own, peer, v]
    diagnostics: list = field(default_factory=list)


def _size_groups(adjacency, types, t):
    sizes = {}
    for a, row in enumerate(np.asarray(adjacency)):
        if types[a] == t:
            sizes.setdefault(int(row.sum()), []).append(a)
    return dict(sorted(sizes.items()))


def _star_config(A, agent, own, others):
    y = [others] * A
    y[agent] = own
    return tuple(y)


def _pooled_cell(table, agents, own, others):
    """CCP at the configuration where ``agent`` picks ``own`` and all others
    pick ``others`` (pooled over same-size agents when counts exist), with
    its sampling variance (zero for exact tables)."""
    A = table.num_agents
    cfgs = [(a, _star_config(A, a, own, others)) for a in agents]
    if table.counts is None:
        a, y = cfgs[0]
        P = table.get(a, y)
        if table.se is None:
            return P, np.zeros_like(P)
        return P, table.se[a, config_index(y, table.num_alternatives)] ** 2
    present = [(a, y) for a, y in cfgs if table.has(a, y)]
    if not present:
        table.require(cfgs[:1])
    c = sum(table.counts[a, config_index(y, table.num_alternatives)] for a, y in present)
    n = int(c.sum())
    P = c / n
    return P, _binomial_se(P, n) ** 2


def recover_selection_and_base_rules(table: CcpTable, adjacency, types, num_types: int | None = None,
                                     policy: ThresholdPolicy | None = None, project: bool = False,
                                     pool_alternatives: bool = False,
                                     average_triples: bool = False) -> BaseRuleRecovery:
    """Selection kernel, empty-set rule and singleton rule for every type.

    For each type and each (own, others) pair three agents with peer counts
    N1 < N2 < N3 are placed at the configuration where they pick ``own`` and
    everyone else picks ``others``. The ratio of their CCP contrasts pins
    down the per-peer consideration probability, after which the levels give
    the two rules.
    """
    policy = policy or ThresholdPolicy()
    K, A = table.num_alternatives, table.num_agents
    H = num_types if num_types is not None else max(types) + 1
    exact = _is_exact(table)
    Q = np.full((H, K, K), np.nan)
    R0 = np.full((H, K, K), np.nan)
    R1 = np.full((H, K, K, K), np.nan)
    diags = []
    for t in range(H):
        groups = _size_groups(adjacency, types, t)
        if not groups:
            continue
        sizes = list(groups)
        if len(sizes) < 3:
            raise AssumptionViolationError(
                f"type {t} has peer counts {sizes}; at least three distinct counts are needed")
        if average_triples:
            triples = list(itertools.combinations(sizes, 3))
        else:
            triples = [(sizes[0], sizes[(len(sizes) - 1) // 2], sizes[-1])]
        for own in range(K):
            empties = []
            for other in range(K):
                cells = {N: _pooled_cell(table, groups[N], own, other) for N in sizes}
                x_list, fits = [], []
                last_err = None
                for N1, N2, N3 in triples:
                    try:
                        x, info = _solve_triple(cells, N1, N2, N3, exact, policy, project, pool_alternatives)
                    except (InfeasibleRatioError, InsufficientContrastError) as exc:
                        last_err = exc
                        continue
                    x_list.append(x)
                    fits.append(info)
                if not x_list:
                    raise type(last_err)(f"type {t}, own={own}, others={other}: {last_err}") from last_err
                x = float(np.mean(x_list))
                q = 1.0 - x
                N1, _, N3 = triples[0] if len(triples) == 1 else (sizes[0], None, sizes[-1])
                t1, t3 = 1.0 - x ** N1, 1.0 - x ** N3
                P1, P3 = cells[N1][0], cells[N3][0]
                slope = (P3 - P1) / (t3 - t1)
                Q[t, own, other] = q
                empties.append(P3 - slope * t3)
                R1[t, own, other] = P3 + slope * (1.0 - t3)
                diags.append({"type": t, "own": own, "others": other, "q": q,
                              "triples": [f["sizes"] for f in fits],
                              "ratios": [f["rho"] for f in fits],
                              "contrast_v": [f["v"] for f in fits]})
            R0[t, own] = np.mean(empties, axis=0)
    return BaseRuleRecovery(Q, R0, R1, diags)


def _solve_triple(cells, N1, N2, N3, exact, policy, project, pool_alternatives):
    (P1, v1), (P2, v2), (P3, v3) = cells[N1], cells[N2], cells[N3]
    d2, d3 = P2 - P1, P3 - P1
    var2, var3 = v2 + v1, v3 + v1
    v = int(np.argmax(np.abs(d2)))
    floor = 1e-12 if exact else policy.multiplier * math.sqrt(var2[v]) + 1e-12
    if abs(d2[v]) <= floor:
        raise InsufficientContrastError(
            f"contrast between peer counts {N1} and {N2} is {abs(d2[v]):.3g}, below the noise floor {floor:.3g}")
    rho = d3[v] / d2[v]
    if pool_alternatives and not exact:
        w = 1.0 / np.maximum(var3 + rho ** 2 * var2, 1e-300)
        rho = float(np.sum(w * d2 * d3) / np.sum(w * d2 * d2))
    m2, m3 = N2 - N1, N3 - N1
    hi = m3 / m2
    if project and not 1.0 < rho < hi:
        eps = 1e-9
        rho = min(max(rho, 1.0 + eps), hi - eps)
    x = invert_ratio(rho, m2, m3)
    return x, {"sizes": [N1, N2, N3], "rho": float(rho), "v": v}


# ---------------------------------------------------------------------------
# logit and the recursion

def recover_logit(empty: np.ndarray, single: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Intercepts and peer-effect slopes from the empty-set and singleton rules.

    ``empty[t, own, v]`` and ``single[t, own, peer, v]``. The slope of the
    base alternative uses the singleton whose peer picks alternative 0.
    """
    empty = np.asarray(empty, dtype=float)
    single = np.asarray(single, dtype=float)
    ok_e = np.isnan(empty) | (empty > 0)
    ok_s = np.isnan(single) | (single > 0)
    if not (ok_e.all() and ok_s.all()):
        raise DomainError("log-odds need strictly positive choice probabilities")
    H, K, _ = empty.shape
    alpha = np.log(empty) - np.log(empty[:, :, :1])
    beta = np.full((H, K, K), np.nan)
    for v in range(1, K):
        beta[:, :, v] = np.log(single[:, :, v, v]) - np.log(single[:, :, v, 0]) - alpha[:, :, v]
    beta[:, :, 0] = np.log(single[:, :, 0, 0]) - np.log(single[:, :, 0, 1]) + alpha[:, :, 1]
    return alpha, beta


@dataclass
class RecursiveRule:
    entries: dict
    provenance: dict

    def to_rule(self, num_alternatives, num_types) -> TabularRule:
        return TabularRule(num_alternatives, num_types, self.entries)


def recover_rule_recursive(table: CcpTable, base: BaseRuleRecovery, adjacency, types,
                           num_types: int | None = None, min_full_prob: float = 1e-12) -> RecursiveRule:
    """Choice rule on the whole peer-average grid, size by size.

    For size j an agent with exactly j peers is placed at a configuration
    realising each composition of j among its peers. Its CCP minus the
    contribution of every proper active set (already known) leaves the
    full-set term.
    """
    K, A = table.num_alternatives, table.num_agents
    H = num_types if num_types is not None else max(types) + 1
    entries, prov = {}, {}
    zero = (0,) * K
    for t in range(H):
        groups = _size_groups(adjacency, types, t)
        if not groups:
            continue
        top = max(groups)
        missing = [j for j in range(2, top + 1) if j not in groups]
        if missing:
            raise AssumptionViolationError(f"type {t} has no agent with {missing} peers")
        for own in range(K):
            entries[(t, own, zero)] = base.empty[t, own]
            prov[(t, own, zero)] = "base"
            for v in range(K):
                key = tuple(int(i == v) for i in range(K))
                entries[(t, own, key)] = base.single[t, own, v]
                prov[(t, own, key)] = "base"
        for j in range(2, top + 1):
            agent = groups[j][0]
            peers = list(np.flatnonzero(np.asarray(adjacency)[agent]))
            for own in range(K):
                q = base.selection[t, own]
                for c in compositions(j, K):
                    key = reduce_counts(c)
                    if (t, own, key) in entries:
                        continue
                    y = [0] * A
                    y[agent] = own
                    pos = 0
                    for v, cv in enumerate(c):
                        for b in peers[pos:pos + cv]:
                            y[b] = v
                        pos += cv
                    try:
                        P = table.get(agent, tuple(y))
                    except MissingCellError as exc:
                        raise RecursionBlockedError(
                            f"size {j}, own={own}, composition={c}: {exc}", j, own, c) from exc
                    full = float(np.prod([q[v] ** c[v] for v in range(K)]))
                    if full < min_full_prob:
                        raise RecursionBlockedError(
                            f"size {j}, own={own}, composition={c}: full-set probability {full:.3g} too small",
                            j, own, c)
                    rest = np.zeros(K)
                    for d in itertools.product(*[range(cv + 1) for cv in c]):
                        if d == tuple(c):
                            continue
                        w = 1.0
                        for v in range(K):
                            w *= math.comb(c[v], d[v]) * q[v] ** d[v] * (1.0 - q[v]) ** (c[v] - d[v])
                        rest += w * entries[(t, own, reduce_counts(d))]
                    entries[(t, own, key)] = (P - rest) / full
                    prov[(t, own, key)] = "recursion"
    return RecursiveRule(entries, prov)


# ---------------------------------------------------------------------------
# snapshot data

def one_move_mask(num_agents: int, num_alternatives: int) -> np.ndarray:
    digits = all_configs(num_agents, num_alternatives)
    ham = (digits[:, None, :] != digits[None, :, :]).sum(axis=2)
    return ham == 1


@dataclass
class GeneratorRecovery:
    generator: np.ndarray
    raw: np.ndarray
    eigenvalues: np.ndarray
    forbidden_mass: float
    clamped_mass: float
    projection_norm: float
    imaginary_residual: float

    def diagnostics(self) -> dict:
        return {"forbidden_mass": self.forbidden_mass, "clamped_mass": self.clamped_mass,
                "projection_norm": self.projection_norm, "imaginary_residual": self.imaginary_residual,
                "min_eigenvalue_gap": _min_gap(self.eigenvalues)}


def _min_gap(ev):
    if len(ev) < 2:
        return float("inf")
    d = np.abs(ev[:, None] - ev[None, :])
    d[np.diag_indices_from(d)] = np.inf
    return float(d.min())


def recover_generator(P, delta: float, num_agents: int, num_alternatives: int,
                      gap_tol: float = 1e-8) -> GeneratorRecovery:
    """Principal matrix logarithm of P(delta), projected on the one-move pattern."""
    P = np.asarray(P, dtype=float)
    if not delta > 0:
        raise DomainError("delta must be positive")
    bad_rows = np.flatnonzero(np.isnan(P).any(axis=1))
    if bad_rows.size:
        raise MissingCellError(f"{bad_rows.size} transition rows were never observed", bad_rows.tolist())
    S = num_alternatives ** num_agents
    if P.shape != (S, S):
        raise ValidationError("transition matrix does not match the configuration space")
    ev, V = np.linalg.eig(P)
    d = np.abs(ev[:, None] - ev[None, :])
    i, j = np.nonzero(np.triu(d <= gap_tol, k=1))
    pairs = [(complex(ev[a]), complex(ev[b])) for a, b in zip(i, j)]
    axis = [(complex(e), complex(e)) for e in ev if e.real <= 0 and abs(e.imag) <= gap_tol]
    if pairs or axis:
        raise EmbeddingNotIdentifiedError(
            f"embedding not identified for delta={delta}: {len(pairs)} repeated eigenvalue pair(s), "
            f"{len(axis)} eigenvalue(s) on the closed negative real axis", pairs + axis)
    logs = np.log(ev.astype(complex)) / delta
    Wc = np.linalg.solve(V.T, (V * logs).T).T
    imag = float(np.abs(Wc.imag).max())
    raw = Wc.real
    W = raw.copy()
    ok = one_move_mask(num_agents, num_alternatives)
    off = ~np.eye(S, dtype=bool)
    forbidden = off & ~ok
    forbidden_mass = float(np.abs(W[forbidden]).max()) if forbidden.any() else 0.0
    W[forbidden] = 0.0
    neg = ok & (W < 0)
    clamped = float(-W[neg].min()) if neg.any() else 0.0
    W[neg] = 0.0
    W[np.diag_indices(S)] = 0.0
    W[np.diag_indices(S)] = -W.sum(axis=1)
    return GeneratorRecovery(W, raw, ev, forbidden_mass, clamped,
                             float(np.abs(W - raw).max()), imag)


def rates_and_ccps_from_generator(W, rates, num_agents: int, num_alternatives: int) -> CcpTable:
    """Divide each one-move rate by the mover's clock rate.

    Stay probabilities are the complements. Cells falling outside [0, 1]
    are listed under ``notes['out_of_range']``.
    """
    if hasattr(W, "dense"):
        W = W.dense()
    elif hasattr(W, "toarray"):
        W = W.toarray()
    W = np.asarray(W, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (num_agents,):
        raise ValidationError("need one clock rate per agent")
    if np.any(rates <= 0):
        raise DomainError("clock rates must be positive")
    A, K = num_agents, num_alternatives
    digits = all_configs(A, K)
    weights = K ** np.arange(A - 1, -1, -1)
    S = K ** A
    src = np.arange(S)
    probs = np.empty((A, S, K))
    for a in range(A):
        own = digits[:, a]
        for v in range(K):
            dst = src + (v - own) * weights[a]
            probs[a, :, v] = W[src, dst] / rates[a]
        probs[a, src, own] = 0.0
        probs[a, src, own] = 1.0 - probs[a].sum(axis=1)
    bad = np.argwhere((probs < -1e-12) | (probs > 1 + 1e-12))
    table = CcpTable(A, K, probs, None, "dataset2-derived")
    table.notes["out_of_range"] = bad.tolist()
    return table


def bootstrap_derived_se(P, row_counts, delta: float, rates, num_agents: int, num_alternatives: int,
                         replications: int = 40, seed=0) -> np.ndarray:
    """Parametric-bootstrap standard errors of the CCPs derived from P(delta).

    Each replication redraws every row of transition counts from a
    multinomial with the estimated probabilities, then repeats the matrix
    logarithm and the division by the clock rates. Replications whose
    embedding fails are skipped.
    """
    P = np.asarray(P, dtype=float)
    n = np.asarray(row_counts, dtype=np.int64)
    if np.any(n <= 0):
        raise MissingCellError("bootstrap needs every transition row observed", np.flatnonzero(n <= 0).tolist())
    rng = np.random.default_rng(seed)
    pvals = np.clip(P, 0.0, None)
    pvals /= pvals.sum(axis=1, keepdims=True)
    draws = []
    for _ in range(replications):
        Pb = rng.multinomial(n, pvals) / n[:, None]
        try:
            g = recover_generator(Pb, delta, num_agents, num_alternatives)
        except EmbeddingNotIdentifiedError:
            continue
        draws.append(rates_and_ccps_from_generator(g.generator, rates, num_agents, num_alternatives).probs)
    if len(draws) < 2:
        raise EmbeddingNotIdentifiedError("bootstrap replications of the embedding all failed")
    return np.std(draws, axis=0, ddof=1)


# ---------------------------------------------------------------------------
# the full pipeline

@dataclass
class IdentificationOptions:
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    project: bool = False
    pool_alternatives: bool = False
    average_triples: bool = False
    pool_network: bool = True
    rule: str = "auto"   # "logit", "recursive", "both", "auto"


@dataclass
class IdentificationReport:
    adjacency: np.ndarray
    network: NetworkRecovery
    base: BaseRuleRecovery
    logit: tuple | None = None
    recursive: RecursiveRule | None = None
    rates: np.ndarray | None = None
    generator: GeneratorRecovery | None = None
    errors: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        K = self.base.selection.shape[1]
        out = {
            "adjacency": self.adjacency.astype(int).tolist(),
            "network_contrast": self.network.contrast.tolist(),
            "network_threshold": self.network.threshold.tolist(),
            "selection": self.base.selection.tolist(),
            "rule_empty": self.base.empty.tolist(),
            "rule_single": self.base.single.tolist(),
            "base_diagnostics": self.base.diagnostics,
            "notes": self.notes,
            "errors": self.errors,
        }
        if self.logit is not None:
            out["logit_alpha"] = self.logit[0].tolist()
            out["logit_beta"] = self.logit[1].tolist()
        if self.recursive is not None:
            out["rule_grid"] = {
                f"{t}|{own}|{'-'.join(map(str, key))}": {
                    "probs": list(map(float, p)), "source": self.recursive.provenance[(t, own, key)]}
                for (t, own, key), p in self.recursive.entries.items()}
        if self.rates is not None:
            out["rates"] = list(map(float, self.rates))
        if self.generator is not None:
            out["generator_diagnostics"] = self.generator.diagnostics()
        out["num_alternatives"] = K
        return out


def identify_from_ccps(table: CcpTable, types, num_types: int | None = None,
                       options: IdentificationOptions | None = None, rates=None,
                       truth: ModelSpec | None = None) -> IdentificationReport:
    """Network, then selection and base rules, then logit and/or recursive rule."""
    options = options or IdentificationOptions()
    net = recover_network(table, options.policy)
    adj = net.adjacency
    work = table
    if options.pool_network and table.counts is not None:
        work = pool_by_network(table, adj)
    H = num_types if num_types is not None else max(types) + 1
    base = recover_selection_and_base_rules(work, adj, types, H, options.policy, options.project,
                                            options.pool_alternatives, options.average_triples)
    report = IdentificationReport(adj, net, base, rates=None if rates is None else np.asarray(rates, float))
    kind = options.rule
    if kind == "auto":
        kind = "logit" if isinstance(getattr(truth, "rule", None), LogitRule) else "recursive"
    if kind in ("logit", "both"):
        report.logit = recover_logit(base.empty, base.single)
    if kind in ("recursive", "both"):
        report.recursive = recover_rule_recursive(work, base, adj, types, H)
    if truth is not None:
        report.errors = compare_to_truth(report, truth)
    return report


def compare_to_truth(report: IdentificationReport, truth: ModelSpec) -> dict:
    K, H = truth.num_alternatives, truth.num_types
    err = {"network_exact": bool(np.array_equal(report.adjacency, truth.adjacency())),
           "network_mismatches": int((report.adjacency != truth.adjacency()).sum())}
    Qe, R0e, R1e = 0.0, 0.0, 0.0
    for t in range(H):
        if np.all(np.isnan(report.base.selection[t])):
            continue
        Qe = max(Qe, float(np.nanmax(np.abs(report.base.selection[t] - truth.selection[t]))))
        for own in range(K):
            R0e = max(R0e, float(np.abs(report.base.empty[t, own] - truth.rule.probs(t, own, (0,) * K)).max()))
            for v in range(K):
                unit = tuple(int(i == v) for i in range(K))
                R1e = max(R1e, float(np.abs(report.base.single[t, own, v] - truth.rule.probs(t, own, unit)).max()))
    err["selection_max_abs"] = Qe
    err["rule_empty_max_abs"] = R0e
    err["rule_single_max_abs"] = R1e
    if report.logit is not None and isinstance(truth.rule, LogitRule):
        used = [t for t in range(H) if not np.all(np.isnan(report.base.selection[t]))]
        err["logit_alpha_max_abs"] = float(max(np.abs(report.logit[0][t] - truth.rule.alpha[t]).max() for t in used))
        err["logit_beta_max_abs"] = float(max(np.abs(report.logit[1][t] - truth.rule.beta[t]).max() for t in used))
    if report.recursive is not None:
        err["rule_grid_max_abs"] = float(max(
            np.abs(p - truth.rule.probs(t, own, key)).max() for (t, own, key), p in report.recursive.entries.items()))
    if report.rates is not None:
        err["rates_max_rel"] = float(np.abs(report.rates / truth.rates - 1.0).max())
    if report.generator is not None:
        err["generator_projection_norm"] = report.generator.projection_norm
    return err
