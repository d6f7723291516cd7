"""Exact semi-CRF over sets of non-overlapping labeled intervals.

Scores are a (T, T, N) tensor indexed (end, start, type); entries with
start > end, and optionally with span >= max_len, hold -inf and never carry
weight.  Valid sets per type have strictly increasing onsets with each onset
at least the previous offset (endpoint sharing allowed).

The log partition runs the dynamic program

    A'(t) = logaddexp(A(t-1), logaddexp_{a<t}(f(a,t) + A'(a)))
    A(t)  = A'(t) + log(1 + exp f(t,t)),   A(-1) = 0, A'(0) = 0

where A(t) sums all valid sets within frames [0..t] and A'(t) excludes sets
whose last interval is the point [t,t], so a point interval is never stacked
on itself.  Viterbi is the max-plus analog with backtracking; marginals are
the gradient of sum_e log Z(e) with respect to the scores.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .errors import ContractError
from .events import EventSet
from .tensor import Tensor

Array = np.ndarray

BRUTE_FORCE_MAX_FRAMES = 8


def _scores_array(scores) -> Array:
    data = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    if data.ndim != 3 or data.shape[0] != data.shape[1]:
        raise ContractError(f"scores must be (T, T, N), got {data.shape}")
    return data


def _lse1(u: Array) -> float:
    if u.size == 0:
        return -np.inf
    m = u.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(u - m).sum()))


def _window_lo(t: int, max_len: int | None) -> int:
    return 0 if max_len is None else max(0, t - (max_len - 1))


def _dp_forward(f2: Array, max_len: int | None, stats: dict | None = None):
    """One type's forward pass; returns (logZ, A, A', s) for the reverse sweep."""
    T = f2.shape[0]
    A = np.zeros(T)
    Ap = np.zeros(T)
    s = np.full(T, -np.inf)
    reads = 0
    for t in range(T):
        if t > 0:
            lo = _window_lo(t, max_len)
            s[t] = _lse1(f2[t, lo:t] + Ap[lo:t])
            Ap[t] = np.logaddexp(A[t - 1], s[t])
            reads += t - lo
        A[t] = Ap[t] + np.logaddexp(0.0, f2[t, t])
        reads += 1
    if stats is not None:
        stats["score_reads"] = stats.get("score_reads", 0) + reads
    log_z = float(A[-1]) if T else 0.0
    return log_z, A, Ap, s


def _dp_backward(f2: Array, A: Array, Ap: Array, s: Array, max_len: int | None, gout: float) -> Array:
    """Adjoint of _dp_forward with respect to the score matrix."""
    T = f2.shape[0]
    g_scores = np.zeros_like(f2)
    if T == 0 or gout == 0.0:
        return g_scores
    gA = np.zeros(T)
    gAp = np.zeros(T)
    gA[T - 1] = gout
    for t in range(T - 1, -1, -1):
        # A(t) = A'(t) + softplus(f(t,t))
        gAp[t] += gA[t]
        g_scores[t, t] += gA[t] * _sigmoid(f2[t, t])
        if t > 0:
            # A'(t) = logaddexp(A(t-1), s(t))
            gA[t - 1] += gAp[t] * np.exp(A[t - 1] - Ap[t])
            if s[t] > -np.inf:
                gs = gAp[t] * np.exp(s[t] - Ap[t])
                if gs != 0.0:
                    lo = _window_lo(t, max_len)
                    w = np.exp(f2[t, lo:t] + Ap[lo:t] - s[t])
                    g_scores[t, lo:t] += gs * w
                    gAp[lo:t] += gs * w
    return g_scores


def _sigmoid(x: float) -> float:
    if x == -np.inf:
        return 0.0
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def log_partition(scores, e: int, max_len: int | None = None, stats: dict | None = None) -> float:
    """log Z(e): log-sum over every valid set of type e, empty set included."""
    data = _scores_array(scores)
    log_z, *_ = _dp_forward(data[:, :, e], max_len, stats)
    return log_z


def log_partition_op(scores: Tensor, max_len: int | None = None) -> Tensor:
    """Differentiable per-type log partition vector of shape (N,)."""
    data = scores.data
    n_types = data.shape[2]
    saved = []
    out = np.empty(n_types)
    for e in range(n_types):
        log_z, A, Ap, s = _dp_forward(data[:, :, e], max_len)
        out[e] = log_z
        saved.append((A, Ap, s))

    def vjp(g):
        g_scores = np.zeros_like(data)
        for e in range(n_types):
            A, Ap, s = saved[e]
            g_scores[:, :, e] = _dp_backward(data[:, :, e], A, Ap, s, max_len, float(g[e]))
        return (g_scores,)

    return tt.custom_op(out, (scores,), vjp)


def _target_indices(data: Array, target: EventSet, max_len: int | None):
    T, _, n_types = data.shape
    target.validate(n_frames=T)
    ends, starts, types = [], [], []
    for ev in target:
        if ev.event_type >= n_types:
            raise ContractError(f"event type {ev.event_type} out of range (N={n_types})")
        if max_len is not None and ev.offset - ev.onset >= max_len:
            raise ContractError(f"target interval {ev} exceeds the length cap {max_len}")
        if data[ev.offset, ev.onset, ev.event_type] == -np.inf:
            raise ContractError(f"target interval {ev} lies in the masked score region")
        ends.append(ev.offset)
        starts.append(ev.onset)
        types.append(ev.event_type)
    return np.asarray(ends, dtype=np.intp), np.asarray(starts, dtype=np.intp), np.asarray(types, dtype=np.intp)


def nll_loss(scores: Tensor, target: EventSet, max_len: int | None = None) -> Tensor:
    """Negative log-likelihood of a target set: sum_e log Z(e) - target score.

    Differentiable with respect to the scores; always >= 0.
    """
    if not isinstance(scores, Tensor):
        scores = Tensor(scores)
    idx = _target_indices(scores.data, target, max_len)
    log_z = tt.tensor_sum(log_partition_op(scores, max_len))
    return log_z - tt.gather_sum(scores, idx)


def marginals(scores, max_len: int | None = None) -> Array:
    """Posterior inclusion probability of every interval, as the gradient of
    sum_e log Z(e) with respect to the score tensor."""
    data = _scores_array(scores)
    leaf = Tensor(data, requires_grad=True)
    tape_start = len(tt.active_tape())
    try:
        total = tt.tensor_sum(log_partition_op(leaf, max_len))
        tt.backward(total)
    finally:
        tt.active_tape().truncate(tape_start)
    return leaf.grad if leaf.grad is not None else np.zeros_like(data)


def viterbi(scores, max_len: int | None = None) -> EventSet:
    """Highest-scoring valid set per type, by the max-plus analog of the
    partition DP with backtracking.

    Ties are broken deterministically: excluding an interval beats including
    one of equal contribution, and among equal predecessors the largest
    onset (shortest interval) wins.
    """
    data = _scores_array(scores)
    T, _, n_types = data.shape
    out = EventSet()
    for e in range(n_types):
        for onset, offset in _viterbi_one(data[:, :, e], max_len):
            out.add(onset, offset, e)
    return out


def _viterbi_one(f2: Array, max_len: int | None) -> list[tuple[int, int]]:
    T = f2.shape[0]
    if T == 0:
        return []
    V = np.zeros(T)
    Vp = np.zeros(T)
    include_point = np.zeros(T, dtype=bool)
    best_onset = np.full(T, -1)
    for t in range(T):
        if t > 0:
            lo = _window_lo(t, max_len)
            cand = f2[t, lo:t] + Vp[lo:t]
            best = cand.max() if cand.size else -np.inf
            if V[t - 1] >= best:
                Vp[t] = V[t - 1]
            else:
                Vp[t] = best
                best_onset[t] = lo + int(np.flatnonzero(cand == best)[-1])
        include_point[t] = f2[t, t] > 0.0
        V[t] = Vp[t] + (f2[t, t] if include_point[t] else 0.0)
    chosen: list[tuple[int, int]] = []
    t = T - 1
    at_v = True
    while t >= 0:
        if at_v:
            if include_point[t]:
                chosen.append((t, t))
            at_v = False
        else:
            a = int(best_onset[t])
            if a < 0:
                t -= 1
                at_v = True
            else:
                chosen.append((a, t))
                t = a
    return sorted(chosen)


def brute_force_enumerate(
    scores, e: int, max_len: int | None = None
) -> list[tuple[EventSet, float]]:
    """Every valid set of type e with its exact total score (test oracle).

    The empty set appears first with score zero.  Masked intervals are
    enumerable; their sets score -inf and carry no weight.
    """
    data = _scores_array(scores)
    T = data.shape[0]
    if T > BRUTE_FORCE_MAX_FRAMES:
        raise ContractError(f"brute force enumeration limited to T <= {BRUTE_FORCE_MAX_FRAMES}")
    cap = T if max_len is None else max_len
    candidates = [(i, j) for i in range(T) for j in range(i, min(T, i + cap))]
    results: list[tuple[EventSet, float]] = []

    def rec(chosen: list[tuple[int, int]], score: float) -> None:
        out = EventSet()
        for a, b in chosen:
            out.add(a, b, e)
        results.append((out, score))
        last_onset, last_offset = chosen[-1] if chosen else (-1, -1)
        for i, j in candidates:
            if i > last_onset and i >= last_offset:
                chosen.append((i, j))
                rec(chosen, score + float(data[j, i, e]))
                chosen.pop()

    rec([], 0.0)
    return results
