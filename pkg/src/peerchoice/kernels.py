"""Inner loops of the event-driven simulator.

``simulate_chunk`` is compiled with numba unless ``PEERCHOICE_DISABLE_NUMBA``
is set. Both paths consume the same pre-drawn uniforms and perform the same
floating point operations in the same order, so they produce bit-identical
event logs.
"""

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, numba


def _simulate_chunk(t, horizon, state, idx, total_rate, cum_rates, indptr, peer_idx, types,
                    Q, R, comp_pow, weights, gaps, u_agent, u_sel, u_choice,
                    out_t, out_agent, out_before, out_choice, out_active, record_active):
    n = gaps.shape[0]
    num_agents = cum_rates.shape[0]
    num_alt = R.shape[3]
    k = 0
    while k < n:
        t_next = t + gaps[k] / total_rate
        if t_next > horizon:
            return k, t, idx, True
        target = u_agent[k] * total_rate
        a = 0
        while a < num_agents - 1 and cum_rates[a] <= target:
            a += 1
        own = state[a]
        ty = types[a]
        comp = 0
        mask = 0
        lo = indptr[a]
        for j in range(lo, indptr[a + 1]):
            b = peer_idx[j]
            if u_sel[k, j - lo] < Q[ty, own, state[b]]:
                comp += comp_pow[state[b]]
                if record_active:
                    mask |= np.int64(1) << np.int64(b)
        u = u_choice[k]
        acc = 0.0
        choice = num_alt - 1
        for v in range(num_alt):
            acc += R[ty, own, comp, v]
            if u < acc:
                choice = v
                break
        out_t[k] = t_next
        out_agent[k] = a
        out_before[k] = idx
        out_choice[k] = choice
        out_active[k] = mask
        state[a] = choice
        idx += (choice - own) * weights[a]
        t = t_next
        k += 1
    return k, t, idx, False


simulate_chunk_python = _simulate_chunk
simulate_chunk_numba = numba.njit(cache=True)(_simulate_chunk) if HAVE_NUMBA else None
simulate_chunk = simulate_chunk_numba if USE_NUMBA else simulate_chunk_python
