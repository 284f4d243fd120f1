"""Markov generator of the choice process, its equilibrium and transition kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy import stats

from .errors import DomainError, NonUniqueEquilibriumError, StateSpaceTooLargeError
from .model import CcpTable, ModelSpec, all_configs, ccp_table, place_values

MAX_STATES = 65_536
DENSE_SOLVE_MAX = 4_096
POISSON_TAIL = 1e-14


@dataclass(frozen=True)
class RateMatrix:
    """Generator over configuration indices; ``matrix[y, y']`` is the rate y -> y'.

    Stored sparse because only single-coordinate moves carry mass.
    """

    matrix: scipy.sparse.csr_matrix
    num_agents: int
    num_alternatives: int

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def configs(self) -> np.ndarray:
        return all_configs(self.num_agents, self.num_alternatives)


def rate_matrix_from_ccps(probs: np.ndarray, rates, num_agents: int, num_alternatives: int) -> RateMatrix:
    """Assemble the generator from a full CCP array ``probs[a, y, v]``."""
    A, K = num_agents, num_alternatives
    S = K ** A
    digits = all_configs(A, K)
    weights = place_values(A, K)
    src = np.arange(S)
    rows, cols, vals = [], [], []
    for a in range(A):
        for v in range(K):
            move = digits[:, a] != v
            rows.append(src[move])
            cols.append(src[move] + (v - digits[move, a]) * weights[a])
            vals.append(rates[a] * probs[a, move, v])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    diag = -np.bincount(rows, weights=vals, minlength=S)
    W = scipy.sparse.csr_matrix((np.concatenate([vals, diag]),
                                 (np.concatenate([rows, src]), np.concatenate([cols, src]))), shape=(S, S))
    W.sort_indices()
    return RateMatrix(W, A, K)


def build_rate_matrix(model: ModelSpec, max_states: int = MAX_STATES) -> RateMatrix:
    if model.num_states > max_states:
        raise StateSpaceTooLargeError(f"{model.num_states} configurations exceed the cap of {max_states}")
    table = ccp_table(model, max_states)
    return rate_matrix_from_ccps(table.probs, model.rates, model.num_agents, model.num_alternatives)


def rate_matrix_from_table(table: CcpTable, rates) -> RateMatrix:
    return rate_matrix_from_ccps(table.probs, np.asarray(rates, float), table.num_agents, table.num_alternatives)


@dataclass(frozen=True)
class InvariantDistribution:
    mu: np.ndarray
    residual: float
    rank_gap: float | None = None

    @property
    def min_mass(self) -> float:
        return float(self.mu.min())


def invariant_distribution(W: RateMatrix | np.ndarray, rank_tol: float = 1e-10) -> InvariantDistribution:
    """Solve mu W = 0, sum(mu) = 1 with one equation replaced by the normalisation.

    ``rank_gap`` is the second-smallest singular value of W relative to the
    largest; a value below ``rank_tol`` means the null space is not
    one-dimensional.
    """
    if isinstance(W, RateMatrix):
        M = W.matrix
    else:
        M = scipy.sparse.csr_matrix(np.asarray(W, dtype=float))
    n = M.shape[0]
    if n == 1:
        return InvariantDistribution(np.ones(1), 0.0, None)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    rank_gap = None
    if n <= DENSE_SOLVE_MAX:
        D = M.toarray()
        if n <= 1024:
            sv = np.linalg.svd(D, compute_uv=False)
            rank_gap = float(sv[-2] / sv[0]) if sv[0] > 0 else 0.0
            if rank_gap < rank_tol:
                raise NonUniqueEquilibriumError(
                    f"generator null space is not one-dimensional (relative singular gap {rank_gap:.3g}); "
                    "check for boundary selection probabilities or zero rates")
        A = D.T.copy()
        A[-1, :] = 1.0
        try:
            lu = scipy.linalg.lu_factor(A, check_finite=True)
            mu = scipy.linalg.lu_solve(lu, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NonUniqueEquilibriumError(f"singular stationary system: {exc}") from exc
        if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(A).max()):
            raise NonUniqueEquilibriumError("singular stationary system (zero pivot)")
    else:
        A = M.T.tolil()
        A[n - 1, :] = np.ones(n)
        try:
            mu = scipy.sparse.linalg.spsolve(A.tocsc(), rhs)
        except RuntimeError as exc:
            raise NonUniqueEquilibriumError(f"singular stationary system: {exc}") from exc
        if not np.all(np.isfinite(mu)):
            raise NonUniqueEquilibriumError("singular stationary system")
    mu = np.where(np.abs(mu) < 1e-300, 0.0, mu)
    residual = float(np.abs(M.T @ mu).max())
    return InvariantDistribution(mu, residual, rank_gap)


def two_agent_closed_form(p100: float, p101: float, p010: float, p011: float) -> np.ndarray:
    """Equilibrium of the symmetric two-agent binary model.

    Arguments are P1(1|0,0), P1(1|0,1), P1(0|1,0), P1(0|1,1). Returns mass on
    configurations (0,0), (0,1), (1,0), (1,1).
    """
    den = p100 * p101 + p010 * p011 + 2.0 * p100 * p011
    if den == 0:
        raise DomainError("closed-form denominator is zero")
    m00 = p010 * p011 / den
    m10 = p100 * p011 / den
    m11 = p100 * p101 / den
    return np.array([m00, m10, m10, m11])


def symmetric_two_agent_ccps(p100, p101, p010, p011) -> np.ndarray:
    """CCP array ``probs[a, y, v]`` of the symmetric two-agent binary model."""
    # agent 0 CCPs indexed by (own, other)
    p1 = np.empty((2, 2))
    p1[0, 0], p1[0, 1] = p100, p101
    p1[1, 0], p1[1, 1] = 1.0 - p010, 1.0 - p011
    probs = np.empty((2, 4, 2))
    for s, (y0, y1) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        probs[0, s, 1] = p1[y0, y1]
        probs[1, s, 1] = p1[y1, y0]
    probs[:, :, 0] = 1.0 - probs[:, :, 1]
    return probs


@dataclass(frozen=True)
class Coordination:
    same: float
    diff: float
    std: float

    def ordering(self) -> str:
        items = sorted([("std", self.std), ("same", self.same), ("diff", self.diff)], key=lambda kv: -kv[1])
        return " > ".join(k for k, _ in items)


def _coordination(ratio_sum):
    return 1.0 / (1.0 + 2.0 / ratio_sum)


def coordination_analysis(r_peer1: float, r_empty: float, r_peer0: float) -> Coordination:
    """Probability the two agents coordinate under three attention regimes.

    Inputs are the probabilities of choosing 1 when the attended peer chose 1,
    when nobody is attended, and when the attended peer chose 0. ``same``:
    attend only to a peer with the same choice; ``diff``: only to a peer with
    a different choice; ``std``: always attend.
    """
    a, b, c = r_peer1, r_empty, r_peer0
    same = _coordination(b / (1 - a) + (1 - b) / c)
    diff = _coordination(a / (1 - b) + (1 - c) / b)
    std = _coordination(a / (1 - a) + (1 - c) / c)
    return Coordination(same, diff, std)


def transition_kernel(W: RateMatrix | np.ndarray, delta: float, tail: float = POISSON_TAIL) -> np.ndarray:
    """exp(delta * W) by uniformization."""
    if delta <= 0:
        raise DomainError("delta must be positive")
    D = W.dense() if isinstance(W, RateMatrix) else np.asarray(W, dtype=float)
    n = D.shape[0]
    lam = float(np.max(-np.diag(D))) if n else 0.0
    if lam <= 0.0:
        return np.eye(n)
    U = np.eye(n) + D / lam
    mean = lam * delta
    kmax = int(stats.poisson.isf(tail, mean)) + 1
    while stats.poisson.sf(kmax, mean) >= tail:
        kmax += 1
    weights = stats.poisson.pmf(np.arange(kmax + 1), mean)
    out = weights[0] * np.eye(n)
    term = np.eye(n)
    for k in range(1, kmax + 1):
        term = term @ U
        if weights[k] > 0.0:
            out += weights[k] * term
    return out


def write_distribution_csv(path, mu, num_agents, num_alternatives, header_lines=()):
    digits = all_configs(num_agents, num_alternatives)
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("index,config,mu\n")
        for s, row in enumerate(digits):
            fh.write(f"{s},{''.join(map(str, row))},{float(mu[s])!r}\n")


def write_matrix_csv(path, M, num_agents, num_alternatives, header_lines=()):
    M = M.toarray() if scipy.sparse.issparse(M) else np.asarray(M)
    digits = all_configs(num_agents, num_alternatives)
    labels = ["".join(map(str, r)) for r in digits]
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("index,config," + ",".join(labels) + "\n")
        for s, lab in enumerate(labels):
            fh.write(f"{s},{lab}," + ",".join(repr(float(x)) for x in M[s]) + "\n")
