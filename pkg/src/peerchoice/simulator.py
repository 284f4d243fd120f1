"""Exact event-driven simulation, the two observation schemes, and estimators."""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import StateSpaceTooLargeError, ValidationError
from .model import (
    CcpTable,
    ModelSpec,
    all_configs,
    compositions,
    config_from_index,
    config_index,
    digits_string,
    place_values,
)

CHUNK = 1 << 16
MAX_ESTIMATION_STATES = 1 << 20


def make_rng(seed) -> np.random.Generator:
    """Counter-based Philox stream for ``seed`` (int, SeedSequence or Generator)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def replication_streams(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(n)


@dataclass
class EventLog:
    """Wake events of one trajectory on ``[start, horizon]``.

    ``active`` holds the attended peers of each event as a bitmask over
    agent ids; it is ground truth for debugging and is dropped by
    :func:`emit_dataset1`.
    """

    num_agents: int
    num_alternatives: int
    times: np.ndarray
    agents: np.ndarray
    before: np.ndarray
    choices: np.ndarray
    initial: int
    horizon: float
    start: float = 0.0
    active: np.ndarray | None = None
    seed: int | None = None

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return self.horizon - self.start

    def after(self) -> np.ndarray:
        w = place_values(self.num_agents, self.num_alternatives)
        own = (self.before // w[self.agents]) % self.num_alternatives
        return self.before + (self.choices - own) * w[self.agents]

    def own_before(self) -> np.ndarray:
        w = place_values(self.num_agents, self.num_alternatives)
        return (self.before // w[self.agents]) % self.num_alternatives

    def discard_burn_in(self, fraction: float = 0.1) -> "EventLog":
        if not 0.0 <= fraction < 1.0:
            raise ValidationError("burn-in fraction must lie in [0, 1)")
        t0 = self.start + fraction * self.duration
        keep = self.times > t0
        first = int(np.argmax(keep)) if keep.any() else len(self)
        if first < len(self):
            initial = int(self.before[first])
        else:
            initial = int(self.after()[-1]) if len(self) else self.initial
        return replace(self, times=self.times[keep], agents=self.agents[keep],
                       before=self.before[keep], choices=self.choices[keep],
                       active=None if self.active is None else self.active[keep],
                       initial=initial, start=t0)


def _dense_rule_table(model: ModelSpec, max_peers: int) -> tuple[np.ndarray, np.ndarray]:
    K, H = model.num_alternatives, model.num_types
    base = max_peers + 1
    n_comp = base ** K
    if n_comp > 4_000_000:
        raise ValidationError("peer-average grid too large for the dense simulation table")
    comp_pow = base ** np.arange(K, dtype=np.int64)
    R = np.full((H, K, n_comp, K), np.nan)
    sizes = model.max_peer_count_by_type()
    for t in range(H):
        for own in range(K):
            for j in range(sizes[t] + 1):
                for c in compositions(j, K):
                    R[t, own, int(np.dot(c, comp_pow))] = model.rule.probs(t, own, c)
    return R, comp_pow


def simulate(model: ModelSpec, horizon: float, initial=None, seed=0, record_active: bool = True,
             chunk: int = CHUNK, kernel=None) -> EventLog:
    """Simulate every wake event on ``[0, horizon]``.

    Wake times follow the superposed Poisson clocks, the waking agent is
    drawn proportionally to its rate, each peer enters the active set by an
    independent Bernoulli draw and the new choice is drawn from the rule.
    Wakes that repeat the current choice are recorded too.
    """
    if not horizon > 0:
        raise ValidationError("horizon must be positive")
    A, K = model.num_agents, model.num_alternatives
    if initial is None:
        initial = (0,) * A
    if isinstance(initial, (int, np.integer)):
        initial = config_from_index(int(initial), A, K)
    state = np.array(initial, dtype=np.int64)
    if state.shape != (A,) or np.any(state < 0) or np.any(state >= K):
        raise ValidationError("initial configuration does not match the model")
    record_active = bool(record_active) and A <= 62
    kernel = kernel or kernels.simulate_chunk
    rng = make_rng(seed)

    rates = model.rates
    total = float(rates.sum())
    cum = np.cumsum(rates)
    indptr = np.zeros(A + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(p) for p in model.peers])
    peer_idx = np.array([b for ps in model.peers for b in ps], dtype=np.int64)
    types = np.array(model.types, dtype=np.int64)
    max_peers = max(1, max(len(p) for p in model.peers))
    R, comp_pow = _dense_rule_table(model, max_peers)
    weights = place_values(A, K)
    Q = np.ascontiguousarray(model.selection)

    idx = config_index(state, K)
    init_idx = idx
    t = 0.0
    parts = []
    done = False
    while not done:
        gaps = rng.standard_exponential(chunk)
        u_agent = rng.random(chunk)
        u_sel = rng.random((chunk, max_peers))
        u_choice = rng.random(chunk)
        out_t = np.empty(chunk)
        out_a = np.empty(chunk, dtype=np.int64)
        out_b = np.empty(chunk, dtype=np.int64)
        out_c = np.empty(chunk, dtype=np.int64)
        out_m = np.zeros(chunk, dtype=np.int64)
        n, t, idx, done = kernel(t, float(horizon), state, idx, total, cum, indptr, peer_idx, types,
                                 Q, R, comp_pow, weights, gaps, u_agent, u_sel, u_choice,
                                 out_t, out_a, out_b, out_c, out_m, record_active)
        parts.append((out_t[:n], out_a[:n], out_b[:n], out_c[:n], out_m[:n]))
    cat = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    seed_val = seed if isinstance(seed, (int, np.integer)) else None
    return EventLog(A, K, cat[0], cat[1], cat[2], cat[3], init_idx, float(horizon), 0.0,
                    cat[4] if record_active else None, seed_val)


def emit_dataset1(events: EventLog, changes_only: bool = False) -> EventLog:
    """Observable event log: active sets removed, optionally only actual switches."""
    out = replace(events, active=None)
    if changes_only:
        keep = events.choices != events.own_before()
        out = replace(out, times=events.times[keep], agents=events.agents[keep],
                      before=events.before[keep], choices=events.choices[keep])
    return out


@dataclass
class SnapshotSeries:
    delta: float
    configs: np.ndarray
    num_agents: int
    num_alternatives: int
    start: float = 0.0

    def __len__(self):
        return len(self.configs)

    def times(self) -> np.ndarray:
        return self.start + self.delta * np.arange(len(self.configs))


def configuration_at(events: EventLog, times: np.ndarray) -> np.ndarray:
    """Right-continuous configuration path evaluated at ``times``."""
    if len(events) == 0:
        return np.full(len(times), events.initial, dtype=np.int64)
    after = events.after()
    n_done = np.searchsorted(events.times, times, side="right")
    return np.where(n_done > 0, after[np.maximum(n_done - 1, 0)], events.before[0]).astype(np.int64)


def emit_dataset2(events: EventLog, delta: float, initial=None, horizon: float | None = None) -> SnapshotSeries:
    """Sample the piecewise-constant configuration path every ``delta``."""
    if not delta > 0:
        raise ValidationError("delta must be positive")
    horizon = events.horizon if horizon is None else float(horizon)
    A, K = events.num_agents, events.num_alternatives
    if initial is not None:
        init_idx = initial if isinstance(initial, (int, np.integer)) else config_index(initial, K)
        if len(events) and int(events.before[0]) != int(init_idx):
            raise ValidationError("initial configuration is inconsistent with the first event")
    n = int(math.floor((horizon - events.start) / delta + 1e-12)) + 1
    if n < 2:
        raise ValidationError("need >= 2 snapshots: delta exceeds the observation window")
    times = events.start + delta * np.arange(n)
    if len(events) == 0:
        start_idx = events.initial if initial is None else init_idx
        configs = np.full(n, start_idx, dtype=np.int64)
    else:
        configs = configuration_at(events, times)
    return SnapshotSeries(float(delta), configs, A, K, events.start)


def occupation_frequencies(events: EventLog) -> np.ndarray:
    """Fraction of ``[start, horizon]`` spent in each configuration."""
    S = events.num_alternatives ** events.num_agents
    if len(events) == 0:
        out = np.zeros(S)
        out[events.initial] = 1.0
        return out
    after = events.after()
    states = np.concatenate([[events.before[0]], after])
    edges = np.concatenate([[events.start], events.times, [events.horizon]])
    return np.bincount(states, weights=np.diff(edges), minlength=S) / events.duration


def estimate_ccp_dataset1(events: EventLog) -> tuple[CcpTable, np.ndarray]:
    """Frequency CCPs per (agent, configuration) and wake rates per agent.

    Cells never visited by an agent stay missing (NaN), never zero.
    """
    if len(events) == 0:
        raise ValidationError("event log is empty")
    A, K = events.num_agents, events.num_alternatives
    S = K ** A
    if S > MAX_ESTIMATION_STATES:
        raise StateSpaceTooLargeError(f"{S} configurations exceed the estimation cap")
    flat = (events.agents * S + events.before) * K + events.choices
    counts = np.bincount(flat, minlength=A * S * K).reshape(A, S, K)
    table = CcpTable.from_counts(counts, "dataset1")
    lam = np.bincount(events.agents, minlength=A) / events.duration
    return table, lam


@dataclass
class TransitionEstimate:
    matrix: np.ndarray
    row_counts: np.ndarray
    delta: float

    @property
    def missing_rows(self) -> np.ndarray:
        return np.flatnonzero(self.row_counts == 0)


def estimate_transition_matrix(series: SnapshotSeries) -> TransitionEstimate:
    if len(series) < 2:
        raise ValidationError("need >= 2 snapshots")
    S = series.num_alternatives ** series.num_agents
    if S > 16_384:
        raise StateSpaceTooLargeError(f"{S} configurations are too many for a dense transition matrix")
    src, dst = series.configs[:-1], series.configs[1:]
    counts = np.bincount(src * S + dst, minlength=S * S).reshape(S, S).astype(float)
    rows = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(rows[:, None] > 0, counts / np.maximum(rows, 1)[:, None], np.nan)
    return TransitionEstimate(P, rows.astype(np.int64), series.delta)


# ---------------------------------------------------------------------------
# CSV serialisation

def _header(fh, provenance, meta):
    for line in provenance:
        fh.write(f"# {line}\n")
    fh.write("# " + ",".join(f"{k}={v}" for k, v in meta.items()) + "\n")


def _parse_header(lines):
    meta = {}
    for line in lines:
        for tok in re.split(r"[,\s]+", line[1:].strip()):
            if "=" in tok:
                k, v = tok.split("=", 1)
                meta[k] = v
    return meta


def _labels(num_agents, num_alternatives):
    digits = all_configs(num_agents, num_alternatives)
    return np.array(["".join(map(str, row)) for row in digits])


def write_events_csv(path, events: EventLog, provenance=(), delta=None):
    A, K = events.num_agents, events.num_alternatives
    if K > 10:
        raise ValidationError("digit-string configurations need at most 10 alternatives")
    meta = {"A": A, "Y": K - 1, "delta": "" if delta is None else repr(float(delta)),
            "T": repr(events.horizon), "seed": "" if events.seed is None else events.seed,
            "start": repr(events.start),
            "initial": digits_string(config_from_index(events.initial, A, K))}
    if K ** A <= MAX_ESTIMATION_STATES:
        configs = _labels(A, K)[events.before]
    else:
        configs = [digits_string(config_from_index(int(s), A, K)) for s in events.before]
    cols = [[repr(float(t)) for t in events.times], events.agents.astype(str), configs,
            events.choices.astype(str)]
    names = ["time", "agent", "config_digits", "choice"]
    if events.active is not None:
        cols.append(events.active.astype(str))
        names.append("active_set")
    with open(path, "w", newline="") as fh:
        _header(fh, provenance, meta)
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(row) + "\n")


def _digits_to_index(strings, num_alternatives):
    arr = np.array([list(map(int, d)) for d in strings], dtype=np.int64)
    if arr.size == 0:
        return np.empty(0, dtype=np.int64)
    w = num_alternatives ** np.arange(arr.shape[1] - 1, -1, -1, dtype=np.int64)
    return arr @ w


def read_events_csv(path) -> EventLog:
    with open(path) as fh:
        lines = fh.read().splitlines()
    head = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    meta = _parse_header(head)
    try:
        A, K = int(meta["A"]), int(meta["Y"]) + 1
        horizon = float(meta["T"])
    except KeyError as exc:
        raise ValidationError(f"events file lacks header field {exc}") from None
    if not body:
        raise ValidationError(f"events file {path} has no column header")
    cols = body[0].split(",")
    rows = [r.split(",") for r in body[1:]]
    if rows and any(len(r) != len(cols) for r in rows):
        raise ValidationError(f"events file {path} has ragged rows")
    fields = list(zip(*rows)) if rows else [()] * len(cols)
    times = np.array(fields[0], dtype=float)
    agents = np.array(fields[1], dtype=np.int64)
    uniq, inv = np.unique(np.array(fields[2], dtype=str), return_inverse=True)
    before = _digits_to_index(uniq, K)[inv] if len(uniq) else np.empty(0, dtype=np.int64)
    choices = np.array(fields[3], dtype=np.int64)
    active = np.array(fields[4], dtype=np.int64) if "active_set" in cols else None
    initial = config_index([int(c) for c in meta.get("initial", "0" * A)], K)
    seed = int(meta["seed"]) if meta.get("seed") else None
    return EventLog(A, K, times, agents, before.astype(np.int64), choices, initial, horizon,
                    float(meta.get("start", 0.0)), active, seed)


def write_snapshots_csv(path, series: SnapshotSeries, horizon, seed=None, provenance=()):
    A, K = series.num_agents, series.num_alternatives
    meta = {"A": A, "Y": K - 1, "delta": repr(series.delta), "T": repr(float(horizon)),
            "seed": "" if seed is None else seed, "start": repr(series.start)}
    with open(path, "w", newline="") as fh:
        _header(fh, provenance, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "time", "config_digits"])
        for k, (tk, s) in enumerate(zip(series.times(), series.configs)):
            w.writerow([k, repr(float(tk)), digits_string(config_from_index(int(s), A, K))])


def read_snapshots_csv(path) -> SnapshotSeries:
    with open(path) as fh:
        lines = fh.read().splitlines()
    meta = _parse_header([ln for ln in lines if ln.startswith("#")])
    try:
        A, K = int(meta["A"]), int(meta["Y"]) + 1
        delta = float(meta["delta"])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"snapshots file lacks header field {exc}") from None
    body = [ln for ln in lines if ln and not ln.startswith("#")][1:]
    uniq, inv = np.unique(np.array([r.split(",")[2] for r in body], dtype=str), return_inverse=True)
    configs = _digits_to_index(uniq, K)[inv] if len(uniq) else np.empty(0, dtype=np.int64)
    return SnapshotSeries(delta, configs.astype(np.int64), A, K, float(meta.get("start", 0.0)))
