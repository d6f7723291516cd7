"""Semi-CRF tests: brute-force enumeration is the oracle for the partition
function, marginals and Viterbi; adjoints are checked by finite differences."""

import math

import numpy as np
import pytest

from tessef import semicrf
from tessef import tensor as tt
from tessef.errors import ContractError, ValidityError
from tessef.events import EventSet
from tessef.tensor import Tensor


def masked_scores(T, n_types=1, fill=0.0, max_len=None, rng=None):
    """Score tensor with the invalid region (and spans >= max_len) at -inf."""
    if rng is None:
        data = np.full((T, T, n_types), float(fill))
    else:
        data = rng.uniform(-2.0, 2.0, size=(T, T, n_types))
    for j in range(T):
        for i in range(T):
            if i > j or (max_len is not None and j - i >= max_len):
                data[j, i, :] = -np.inf
    return data


def oracle_logz(scores, e, max_len=None):
    vals = np.array([s for _, s in semicrf.brute_force_enumerate(scores, e, max_len)])
    m = vals.max()
    return float(m + np.log(np.exp(vals - m).sum()))


def oracle_marginals(scores, max_len=None):
    scores = np.asarray(scores, dtype=np.float64)
    T, _, n_types = scores.shape
    out = np.zeros_like(scores)
    for e in range(n_types):
        log_z = oracle_logz(scores, e, max_len)
        for ev_set, score in semicrf.brute_force_enumerate(scores, e, max_len):
            if score == -np.inf:
                continue
            for a, b in ev_set.intervals(e):
                out[b, a, e] += math.exp(score - log_z)
    return out


def oracle_best(scores, e, max_len=None):
    sets = semicrf.brute_force_enumerate(scores, e, max_len)
    best = max(s for _, s in sets)
    winners = [ev for ev, s in sets if s == best]
    return best, winners


class TestBruteForce:
    @pytest.mark.parametrize("T,count", [(1, 2), (2, 6), (3, 20)])
    def test_set_counts(self, T, count):
        assert len(semicrf.brute_force_enumerate(masked_scores(T), 0)) == count

    def test_rejects_large_T(self):
        with pytest.raises(ContractError):
            semicrf.brute_force_enumerate(masked_scores(9), 0)

    def test_all_sets_valid(self):
        for ev_set, _ in semicrf.brute_force_enumerate(masked_scores(4), 0):
            assert ev_set.is_valid(4)


class TestLogPartition:
    def test_single_frame(self):
        assert abs(semicrf.log_partition(masked_scores(1), 0) - math.log(2)) < 1e-12

    @pytest.mark.parametrize("T,count", [(1, 2), (2, 6), (3, 20)])
    def test_zero_score_constants(self, T, count):
        got = semicrf.log_partition(masked_scores(T), 0)
        assert abs(got - math.log(count)) < 1e-12

    def test_all_masked_gives_zero(self):
        scores = np.full((3, 3, 2), -np.inf)
        assert semicrf.log_partition(scores, 0) == 0.0
        assert semicrf.log_partition(scores, 1) == 0.0

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        T = int(rng.integers(1, 7))
        scores = masked_scores(T, n_types=2, rng=rng)
        for e in range(2):
            got = semicrf.log_partition(scores, e)
            assert abs(got - oracle_logz(scores, e)) <= 1e-9

    @pytest.mark.parametrize("seed", range(6))
    def test_length_cap_hint_matches_mask(self, seed):
        rng = np.random.default_rng(100 + seed)
        T = 6
        scores = masked_scores(T, rng=rng, max_len=2)
        hinted = semicrf.log_partition(scores, 0, max_len=2)
        unhinted = semicrf.log_partition(scores, 0)
        assert abs(hinted - unhinted) < 1e-12
        assert abs(hinted - oracle_logz(scores, 0, max_len=2)) <= 1e-9

    def test_lower_bounds(self):
        rng = np.random.default_rng(5)
        scores = masked_scores(5, rng=rng)
        log_z = semicrf.log_partition(scores, 0)
        assert log_z >= 0.0
        for ev_set, score in semicrf.brute_force_enumerate(scores, 0):
            assert log_z >= score

    def test_monotone_in_scores(self):
        rng = np.random.default_rng(6)
        scores = masked_scores(4, rng=rng)
        base = semicrf.log_partition(scores, 0)
        bumped = scores.copy()
        bumped[2, 1, 0] += 0.5
        assert semicrf.log_partition(bumped, 0) > base

    def test_type_independence(self):
        rng = np.random.default_rng(7)
        scores = masked_scores(4, n_types=2, rng=rng)
        before = semicrf.log_partition(scores, 0)
        scores[:, :, 1] = rng.uniform(-5, 5, size=(4, 4))
        assert semicrf.log_partition(scores, 0) == before

    def test_read_count_linear_in_cap(self):
        T, M = 30, 4
        scores = masked_scores(T, max_len=M)
        stats = {}
        semicrf.log_partition(scores, 0, max_len=M, stats=stats)
        assert stats["score_reads"] <= T * M


class TestNll:
    def test_empty_target_all_masked(self):
        scores = Tensor(np.full((2, 2, 1), -np.inf))
        assert semicrf.nll_loss(scores, EventSet()).item() == 0.0

    def test_single_frame_half_probability(self):
        target = EventSet()
        target.add(0, 0, 0)
        loss = semicrf.nll_loss(Tensor(masked_scores(1)), target)
        assert abs(loss.item() - math.log(2)) < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_oracle(self, seed):
        rng = np.random.default_rng(30 + seed)
        scores = masked_scores(5, n_types=2, rng=rng)
        target = EventSet()
        target.add(0, 1, 0)
        target.add(3, 4, 0)
        target.add(2, 2, 1)
        want = sum(oracle_logz(scores, e) for e in range(2)) - (
            scores[1, 0, 0] + scores[4, 3, 0] + scores[2, 2, 1]
        )
        got = semicrf.nll_loss(Tensor(scores), target).item()
        assert abs(got - want) <= 1e-9
        assert got >= 0.0

    def test_invalid_target_rejected(self):
        target = EventSet()
        target.add(0, 2, 0)
        target.add(1, 3, 0)
        with pytest.raises(ValidityError):
            semicrf.nll_loss(Tensor(masked_scores(4)), target)

    def test_masked_target_rejected(self):
        scores = masked_scores(5, max_len=2)
        target = EventSet()
        target.add(0, 3, 0)
        with pytest.raises(ContractError):
            semicrf.nll_loss(Tensor(scores), target)

    def test_gradient_identity(self):
        # grad of nll wrt scores == marginals - indicator(target)
        rng = np.random.default_rng(77)
        for T in (2, 4, 6):
            data = masked_scores(T, n_types=2, rng=rng)
            target = EventSet()
            target.add(0, min(1, T - 1), 0)
            scores = Tensor(data, requires_grad=True)
            semicrf.nll_loss(scores, target).backward()
            indicator = np.zeros_like(data)
            indicator[min(1, T - 1), 0, 0] = 1.0
            want = oracle_marginals(data) - indicator
            assert np.abs(scores.grad - want).max() <= 1e-9

    def test_grad_check_small_input(self):
        rng = np.random.default_rng(11)
        data = masked_scores(4, n_types=2, rng=rng)
        finite = np.isfinite(data)
        leaf = Tensor(rng.uniform(-1, 1, size=data.shape), requires_grad=True)
        target = EventSet()
        target.add(1, 2, 0)

        def loss():
            masked = tt.mask_fill(leaf, finite)
            return semicrf.nll_loss(masked, target)

        assert tt.grad_check(loss, [leaf], h=1e-5) <= 1e-6


class TestMarginals:
    def test_single_frame(self):
        got = semicrf.marginals(masked_scores(1))
        assert abs(got[0, 0, 0] - 0.5) < 1e-12

    def test_two_set_case(self):
        scores = np.full((2, 2, 1), -np.inf)
        scores[1, 0, 0] = 0.0
        got = semicrf.marginals(scores)
        assert abs(got[1, 0, 0] - 0.5) < 1e-12

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(50 + seed)
        scores = masked_scores(4, n_types=2, rng=rng)
        got = semicrf.marginals(scores)
        np.testing.assert_allclose(got, oracle_marginals(scores), atol=1e-9)

    def test_range_and_masked_zero(self):
        rng = np.random.default_rng(60)
        scores = masked_scores(5, rng=rng, max_len=3)
        got = semicrf.marginals(scores)
        assert got.min() >= 0.0 and got.max() <= 1.0
        assert np.all(got[~np.isfinite(scores)] == 0.0)


class TestViterbi:
    def test_all_negative_gives_empty(self):
        rng = np.random.default_rng(0)
        scores = masked_scores(5, rng=rng)
        scores[np.isfinite(scores)] = -np.abs(scores[np.isfinite(scores)]) - 0.1
        assert len(semicrf.viterbi(scores)) == 0

    def test_single_dominant_interval(self):
        scores = masked_scores(2, fill=-10.0)
        scores[1, 0, 0] = 5.0
        got = semicrf.viterbi(scores)
        assert got.intervals(0) == [(0, 1)]

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(200 + seed)
        scores = masked_scores(5, n_types=2, rng=rng)
        got = semicrf.viterbi(scores)
        for e in range(2):
            best, winners = oracle_best(scores, e)
            got_score = sum(scores[b, a, e] for a, b in got.intervals(e))
            assert got_score == best  # continuous scores: argmax a.s. unique
            assert any(w.intervals(e) == got.intervals(e) for w in winners)

    def test_tie_prefers_exclusion(self):
        # a zero-score interval contributes nothing; the empty set wins ties
        scores = masked_scores(3, fill=0.0)
        assert len(semicrf.viterbi(scores)) == 0

    def test_output_always_valid(self):
        rng = np.random.default_rng(300)
        for _ in range(50):
            T = int(rng.integers(1, 9))
            scores = masked_scores(T, n_types=2, rng=rng)
            assert semicrf.viterbi(scores).is_valid(T)
