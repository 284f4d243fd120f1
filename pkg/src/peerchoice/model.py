"""Model primitives: agents, network, selection kernel, choice rules, CCPs.

Agents, alternatives and types are 0-based integers. A choice configuration
is a length-A sequence of alternatives; its canonical index is the
lexicographic rank with agent 0 as the most significant digit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    EnumerationTooLargeError,
    GridLookupError,
    MissingCellError,
    StateSpaceTooLargeError,
    ValidationError,
)

MAX_PEERS_ENUMERATION = 20
PROB_ATOL = 1e-12


# ---------------------------------------------------------------------------
# configurations

def config_index(config: Sequence[int], num_alternatives: int) -> int:
    idx = 0
    for y in config:
        idx = idx * num_alternatives + int(y)
    return idx


def config_from_index(index: int, num_agents: int, num_alternatives: int) -> tuple[int, ...]:
    if not 0 <= index < num_alternatives ** num_agents:
        raise DomainError(f"configuration index {index} out of range")
    digits = []
    for _ in range(num_agents):
        index, d = divmod(index, num_alternatives)
        digits.append(d)
    return tuple(reversed(digits))


def all_configs(num_agents: int, num_alternatives: int) -> np.ndarray:
    """Digits of every configuration, one row per canonical index."""
    n = num_alternatives ** num_agents
    idx = np.arange(n, dtype=np.int64)
    weights = place_values(num_agents, num_alternatives)
    return (idx[:, None] // weights[None, :]) % num_alternatives


def place_values(num_agents: int, num_alternatives: int) -> np.ndarray:
    return num_alternatives ** np.arange(num_agents - 1, -1, -1, dtype=np.int64)


def substitute(config: Sequence[int], agent: int, value: int) -> tuple[int, ...]:
    out = list(config)
    out[agent] = value
    return tuple(out)


def digits_string(config: Sequence[int]) -> str:
    return "".join(str(int(d)) for d in config)


# ---------------------------------------------------------------------------
# peer averages and the composition grid

def peer_average(config: Sequence[int], active_set: Iterable[int], num_alternatives: int) -> np.ndarray:
    """Fraction of the active set choosing each alternative (zeros if empty)."""
    counts = np.zeros(num_alternatives)
    members = list(active_set)
    for a in members:
        counts[config[a]] += 1
    if not members:
        return counts
    return counts / len(members)


def compositions(total: int, parts: int):
    """All nonnegative integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def reduce_counts(counts: Sequence[int]) -> tuple[int, ...]:
    """Canonical grid key: counts divided by their gcd (zeros stay zeros)."""
    counts = tuple(int(c) for c in counts)
    g = reduce(math.gcd, counts, 0)
    if g <= 1:
        return counts
    return tuple(c // g for c in counts)


def grid_keys(max_size: int, num_alternatives: int) -> list[tuple[int, ...]]:
    """Distinct peer-average grid points for active sets of size 0..max_size."""
    seen = {}
    for j in range(max_size + 1):
        for c in compositions(j, num_alternatives):
            seen.setdefault(reduce_counts(c), None)
    return list(seen)


# ---------------------------------------------------------------------------
# choice rules

def logit_rule(alpha: Sequence[float], beta: Sequence[float], avg: Sequence[float]) -> np.ndarray:
    """Linear-in-means multinomial logit over alternatives.

    ``alpha`` and ``beta`` are the per-alternative intercepts and peer-effect
    slopes for one (type, own choice) pair; ``alpha[0]`` is pinned to zero.
    """
    alpha = np.asarray(alpha, dtype=float).copy()
    alpha[0] = 0.0
    u = alpha + np.asarray(beta, dtype=float) * np.asarray(avg, dtype=float)
    u -= u.max()
    e = np.exp(u)
    return e / e.sum()


class ChoiceRule:
    num_alternatives: int
    num_types: int

    def probs(self, type_: int, own: int, counts: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    def check_grid(self, type_: int, max_size: int) -> None:
        pass

    def as_tabular(self, sizes: dict[int, int]) -> "TabularRule":
        """Tabulate on the grid, ``sizes`` mapping type -> largest active set."""
        entries = {}
        for t, m in sizes.items():
            for own in range(self.num_alternatives):
                for key in grid_keys(m, self.num_alternatives):
                    entries[(t, own, key)] = self.probs(t, own, key)
        return TabularRule(self.num_alternatives, self.num_types, entries)


class LogitRule(ChoiceRule):
    """``alpha[t, own, v]`` and ``beta[t, own, v]``; ``alpha[..., 0]`` is forced to 0."""

    kind = "logit"

    def __init__(self, alpha, beta):
        alpha = np.array(alpha, dtype=float)
        beta = np.array(beta, dtype=float)
        if alpha.ndim != 3 or alpha.shape != beta.shape or alpha.shape[1] != alpha.shape[2]:
            raise ValidationError("logit alpha/beta must both have shape (H, Y+1, Y+1)")
        alpha[:, :, 0] = 0.0
        alpha.flags.writeable = False
        beta.flags.writeable = False
        self.alpha = alpha
        self.beta = beta
        self.num_types = alpha.shape[0]
        self.num_alternatives = alpha.shape[2]

    def probs(self, type_, own, counts):
        counts = np.asarray(counts, dtype=float)
        n = counts.sum()
        avg = counts / n if n > 0 else counts
        return logit_rule(self.alpha[type_, own], self.beta[type_, own], avg)

    def __eq__(self, other):
        return (isinstance(other, LogitRule) and np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.beta, other.beta))

    def __repr__(self):
        return f"LogitRule(H={self.num_types}, Y+1={self.num_alternatives})"


class TabularRule(ChoiceRule):
    """Choice probabilities stored on the exact peer-average grid.

    Keys are ``(type, own, reduced_counts)``. Two active sets with the same
    average (e.g. counts (1, 1) and (2, 2)) share one entry.
    """

    kind = "tabular"

    def __init__(self, num_alternatives: int, num_types: int, entries: dict):
        self.num_alternatives = int(num_alternatives)
        self.num_types = int(num_types)
        self.entries = {}
        for (t, own, counts), p in entries.items():
            p = np.array(p, dtype=float)
            if p.shape != (self.num_alternatives,):
                raise ValidationError(f"entry {(t, own, counts)} has wrong length")
            if np.any(p < -PROB_ATOL) or abs(p.sum() - 1.0) > PROB_ATOL:
                raise ValidationError(f"entry {(t, own, counts)} is not a probability vector")
            p.flags.writeable = False
            self.entries[(int(t), int(own), reduce_counts(counts))] = p

    def probs(self, type_, own, counts):
        key = (int(type_), int(own), reduce_counts(counts))
        try:
            return self.entries[key]
        except KeyError:
            raise GridLookupError(f"no tabulated choice rule at type={key[0]} own={key[1]} counts={key[2]}") from None

    def check_grid(self, type_, max_size):
        for own in range(self.num_alternatives):
            for key in grid_keys(max_size, self.num_alternatives):
                if (type_, own, key) not in self.entries:
                    raise ValidationError(f"tabular rule for type {type_} lacks grid point own={own} counts={key}")

    def __eq__(self, other):
        if not isinstance(other, TabularRule) or self.entries.keys() != other.entries.keys():
            return False
        return all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())

    def __repr__(self):
        return f"TabularRule(H={self.num_types}, Y+1={self.num_alternatives}, entries={len(self.entries)})"


# ---------------------------------------------------------------------------
# the model

@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Complete ground truth of a peer-selection choice model.

    ``selection[t, own, peer]`` is the probability that an agent of type
    ``t`` currently choosing ``own`` attends to a given peer choosing
    ``peer``. ``peers[a]`` is the reference group of agent ``a``.
    """

    num_agents: int
    num_alternatives: int
    types: tuple
    peers: tuple
    selection: np.ndarray
    rule: ChoiceRule
    rates: np.ndarray
    name: str = field(default="", compare=False)

    def __post_init__(self):
        A, K = int(self.num_agents), int(self.num_alternatives)
        if A < 2:
            raise ValidationError("need at least two agents")
        if K < 2:
            raise ValidationError("need at least two alternatives")
        types = tuple(int(t) for t in self.types)
        peers = tuple(tuple(sorted({int(p) for p in ps})) for ps in self.peers)
        Q = np.array(self.selection, dtype=float)
        rates = np.array(self.rates, dtype=float)
        if len(types) != A or len(peers) != A or rates.shape != (A,):
            raise ValidationError("types, peers and rates need one entry per agent")
        if Q.ndim != 3 or Q.shape[1:] != (K, K):
            raise ValidationError("selection kernel must have shape (H, Y+1, Y+1)")
        H = Q.shape[0]
        if H > A:
            raise ValidationError("more types than agents")
        if any(not 0 <= t < H for t in types):
            raise ValidationError("type label out of range")
        for a, ps in enumerate(peers):
            if a in ps:
                raise ValidationError(f"agent {a} lists itself as a peer")
            if any(not 0 <= p < A for p in ps):
                raise ValidationError(f"agent {a} has a peer id out of range")
        if np.any(rates <= 0) or not np.all(np.isfinite(rates)):
            raise ValidationError("clock rates must be positive")
        if np.any(Q < 0) or np.any(Q > 1):
            raise ValidationError("selection probabilities must lie in [0, 1]")
        if self.rule.num_alternatives != K or self.rule.num_types != H:
            raise ValidationError("choice rule dimensions do not match the model")
        Q.flags.writeable = False
        rates.flags.writeable = False
        object.__setattr__(self, "num_agents", A)
        object.__setattr__(self, "num_alternatives", K)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "peers", peers)
        object.__setattr__(self, "selection", Q)
        object.__setattr__(self, "rates", rates)
        for t, m in self.max_peer_count_by_type().items():
            self.rule.check_grid(t, m)

    @property
    def Y(self) -> int:
        return self.num_alternatives - 1

    @property
    def num_types(self) -> int:
        return self.selection.shape[0]

    @property
    def num_states(self) -> int:
        return self.num_alternatives ** self.num_agents

    def peer_counts(self) -> list[int]:
        return [len(p) for p in self.peers]

    def max_peer_count_by_type(self) -> dict[int, int]:
        out = {t: 0 for t in range(self.num_types)}
        for a, ps in enumerate(self.peers):
            out[self.types[a]] = max(out[self.types[a]], len(ps))
        return out

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.num_agents, self.num_agents), dtype=bool)
        for a, ps in enumerate(self.peers):
            adj[a, list(ps)] = True
        return adj

    def consideration_prob(self, agent: int, peer: int, config: Sequence[int]) -> float:
        if peer not in self.peers[agent]:
            return 0.0
        return float(self.selection[self.types[agent], config[agent], config[peer]])

    def relabel(self, perm: Sequence[int]) -> "ModelSpec":
        """Model with agent ``a`` renamed to ``perm[a]``."""
        perm = list(perm)
        inv = np.argsort(perm)
        types = [self.types[inv[b]] for b in range(self.num_agents)]
        peers = [[perm[p] for p in self.peers[inv[b]]] for b in range(self.num_agents)]
        rates = self.rates[inv]
        return ModelSpec(self.num_agents, self.num_alternatives, types, peers,
                         self.selection, self.rule, rates, self.name)


def make_model(types, peers, selection, rule, rates=None, name="") -> ModelSpec:
    A = len(types)
    if rates is None:
        rates = np.ones(A)
    return ModelSpec(A, rule.num_alternatives, tuple(types), tuple(peers),
                     np.asarray(selection, dtype=float), rule, np.asarray(rates, dtype=float), name)


# ---------------------------------------------------------------------------
# selection and CCPs

def selection_set_probability(agent: int, active_set: Iterable[int], config: Sequence[int],
                              model: ModelSpec) -> float:
    active = set(active_set)
    group = model.peers[agent]
    stray = active.difference(group)
    if stray:
        raise DomainError(f"agents {sorted(stray)} are not peers of agent {agent}")
    p = 1.0
    for b in group:
        q = model.consideration_prob(agent, b, config)
        p *= q if b in active else 1.0 - q
    return p


def _subsets(items):
    for r in range(len(items) + 1):
        yield from itertools.combinations(items, r)


def ccp(agent: int, config: Sequence[int], model: ModelSpec,
        max_peers: int = MAX_PEERS_ENUMERATION) -> np.ndarray:
    """P_a(.|y) by explicit enumeration of every active set."""
    group = model.peers[agent]
    if len(group) > max_peers:
        raise EnumerationTooLargeError(
            f"agent {agent} has {len(group)} peers; enumeration cap is {max_peers}")
    t, own = model.types[agent], config[agent]
    out = np.zeros(model.num_alternatives)
    for subset in _subsets(group):
        s = selection_set_probability(agent, subset, config, model)
        if s == 0.0:
            continue
        counts = np.zeros(model.num_alternatives, dtype=int)
        for b in subset:
            counts[config[b]] += 1
        out += s * model.rule.probs(t, own, counts)
    return out


def ccp_by_counts(model: ModelSpec, type_: int, own: int, peer_counts: Sequence[int]) -> np.ndarray:
    """CCP for an agent whose peers split as ``peer_counts`` over alternatives.

    Independent selection makes the number of attended peers choosing ``v``
    binomial, so the mixture runs over count vectors rather than subsets.
    """
    K = model.num_alternatives
    q = model.selection[type_, own]
    out = np.zeros(K)
    ranges = [range(m + 1) for m in peer_counts]
    for c in itertools.product(*ranges):
        w = 1.0
        for v in range(K):
            m, k = peer_counts[v], c[v]
            w *= math.comb(m, k) * q[v] ** k * (1.0 - q[v]) ** (m - k)
        if w == 0.0:
            continue
        out += w * model.rule.probs(type_, own, c)
    return out


# ---------------------------------------------------------------------------
# CCP tables

@dataclass
class CcpTable:
    """P_a(v|y) for every agent and configuration index.

    Missing cells hold NaN. ``counts[a, s, v]`` are observed choice counts
    for estimated tables and ``None`` for exact or derived tables. Derived
    tables may carry standard errors ``se[a, s, v]`` instead.
    """

    num_agents: int
    num_alternatives: int
    probs: np.ndarray
    counts: np.ndarray | None = None
    provenance: str = "exact"
    notes: dict = field(default_factory=dict)
    se: np.ndarray | None = None

    def _index(self, config):
        if isinstance(config, (int, np.integer)):
            return int(config)
        return config_index(config, self.num_alternatives)

    def has(self, agent, config) -> bool:
        return not np.isnan(self.probs[agent, self._index(config), 0])

    def get(self, agent, config) -> np.ndarray:
        s = self._index(config)
        p = self.probs[agent, s]
        if np.isnan(p[0]):
            raise MissingCellError(
                f"CCP of agent {agent} at configuration "
                f"{digits_string(config_from_index(s, self.num_agents, self.num_alternatives))} is missing",
                [(agent, s)])
        return p

    def n_obs(self, agent, config) -> int | None:
        if self.counts is None:
            return None
        return int(self.counts[agent, self._index(config)].sum())

    def require(self, cells) -> None:
        """Raise one :class:`MissingCellError` naming every absent ``(agent, config)``."""
        missing = []
        for a, y in cells:
            s = self._index(y)
            if np.isnan(self.probs[a, s, 0]):
                missing.append((a, digits_string(config_from_index(s, self.num_agents, self.num_alternatives))))
        if missing:
            shown = ", ".join(f"agent {a} at {d}" for a, d in missing[:10])
            more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
            raise MissingCellError(f"missing CCP cells: {shown}{more}", missing)

    @property
    def num_states(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def from_counts(cls, counts: np.ndarray, provenance: str = "dataset1") -> "CcpTable":
        A, S, K = counts.shape
        tot = counts.sum(axis=2, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            probs = np.where(tot > 0, counts / np.maximum(tot, 1), np.nan)
        return cls(A, K, probs, counts, provenance)


def local_profile_keys(model_or_peers, num_alternatives: int, digits: np.ndarray,
                       agent: int) -> tuple[np.ndarray, np.ndarray]:
    """Own choice and peer count vector for every configuration row in ``digits``."""
    peers = model_or_peers.peers[agent] if isinstance(model_or_peers, ModelSpec) else model_or_peers[agent]
    own = digits[:, agent]
    counts = np.zeros((digits.shape[0], num_alternatives), dtype=np.int64)
    for b in peers:
        counts[np.arange(digits.shape[0]), digits[:, b]] += 1
    return own, counts


def ccp_table(model: ModelSpec, max_states: int = 65_536) -> CcpTable:
    """Exact CCPs for every agent and configuration."""
    A, K = model.num_agents, model.num_alternatives
    S = model.num_states
    if S > max_states:
        raise StateSpaceTooLargeError(f"{S} configurations exceed the cap of {max_states}")
    digits = all_configs(A, K)
    probs = np.empty((A, S, K))
    for a in range(A):
        own, counts = local_profile_keys(model, K, digits, a)
        keys = np.concatenate([own[:, None], counts], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        vals = np.array([ccp_by_counts(model, model.types[a], int(k[0]), [int(c) for c in k[1:]])
                         for k in uniq])
        probs[a] = vals[inverse.reshape(-1)]
    return CcpTable(A, K, probs, None, "exact")


# ---------------------------------------------------------------------------
# assumption diagnostics

@dataclass
class AssumptionReport:
    checks: dict = field(default_factory=dict)

    def add(self, name, passed, detail=None):
        self.checks[name] = {"passed": bool(passed), "detail": detail}

    def passed(self, name) -> bool:
        return self.checks[name]["passed"]

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c["passed"]]

    def to_dict(self) -> dict:
        return {"all_passed": self.all_passed, "checks": self.checks}


def _regularity_holds(model: ModelSpec, a: int, b: int, tol: float) -> bool:
    # Q(0,v) * den != Q(0,0) * num, the cross-multiplied form of the ratio inequality
    A, K = model.num_agents, model.num_alternatives
    t = model.types[a]
    zero = (0,) * A
    rest = [p for p in model.peers[a] if p != b]
    for v in range(K):
        shifted = substitute(zero, b, v)
        num = den = 0.0
        for subset in _subsets(rest):
            s = 1.0
            for p in rest:
                q = model.selection[t, 0, 0]
                s *= q if p in subset else 1.0 - q
            base = np.zeros(K, dtype=int)
            base[0] = len(subset)
            r_without = model.rule.probs(t, 0, base)[v]
            with_zero = base.copy()
            with_zero[0] += 1
            with_v = base.copy()
            with_v[shifted[b]] += 1
            num += (model.rule.probs(t, 0, with_zero)[v] - r_without) * s
            den += (model.rule.probs(t, 0, with_v)[v] - r_without) * s
        if abs(model.selection[t, 0, v] * den - model.selection[t, 0, 0] * num) > tol:
            return True
    return False


def validate_assumptions(model: ModelSpec, tol: float = PROB_ATOL) -> AssumptionReport:
    """Check the model against the identifying assumptions; never raises."""
    rep = AssumptionReport()
    K = model.num_alternatives
    maxes = model.max_peer_count_by_type()
    used = sorted({model.types[a] for a in range(model.num_agents) if model.peers[a]})

    Q = model.selection
    boundary = [(t, o, p) for t in used for o in range(K) for p in range(K)
                if not 0.0 < Q[t, o, p] < 1.0]
    rep.add("A1_interior_selection", not boundary,
            {"boundary_entries": [list(e) for e in boundary]})
    rep.add("A2i_A2ii_type_homogeneity", True, "structural: Q and R are indexed by type")

    some_fail, all_fail = [], []
    for t in range(model.num_types):
        for own in range(K):
            empty = model.rule.probs(t, own, (0,) * K)
            for key in grid_keys(maxes[t], K):
                if sum(key) == 0:
                    continue
                diff = np.abs(model.rule.probs(t, own, key) - empty) > tol
                if not diff.any():
                    some_fail.append([t, own, list(key)])
                if not diff.all():
                    all_fail.append([t, own, list(key)])
    rep.add("A2iii_peer_effect_some_v", not some_fail, {"ties": some_fail})
    rep.add("A2iii_peer_effect_all_v", not all_fail, {"ties": all_fail})

    irregular = [[a, b] for a in range(model.num_agents) for b in model.peers[a]
                 if not _regularity_holds(model, a, b, tol)]
    rep.add("A3_regularity", not irregular, {"failing_pairs": irregular})

    sizes = {t: sorted({len(model.peers[a]) for a in range(model.num_agents) if model.types[a] == t})
             for t in range(model.num_types)}
    rep.add("A4_size_variation", all(len(s) >= 3 for s in sizes.values()),
            {"peer_counts_by_type": {str(t): s for t, s in sizes.items()}})
    gaps = {str(t): sorted(set(range(2, max(s) + 1)) - set(s)) for t, s in sizes.items() if s}
    rep.add("A5_full_size_variation", not any(gaps.values()), {"missing_sizes": gaps})
    return rep
