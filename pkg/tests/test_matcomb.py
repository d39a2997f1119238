"""Support and total support: three-way oracle agreement and witness validity.

The library decides support by max-flow on a compact graph and provides a
subset-enumeration oracle.  The tests add a third, independent decision path:
build the explicit ones-block lift of the pattern and run augmenting-path
matchings on it, forcing single edges for the total-support case.
"""

import numpy as np
import pytest

from opscale.matcomb import (NonnegPattern, SizeGuardError, ZeroSubmatrixWitness,
                             has_support, has_support_bruteforce,
                             has_total_support, has_total_support_bruteforce,
                             zero_fraction_sufficient)


def lift_mask(pattern):
    """0/1 ones-block lift: pattern entry (i, j) becomes an m x k block."""
    mask = pattern.nonzero_mask().astype(int)
    return np.kron(mask, np.ones((pattern.m, pattern.k), dtype=int))


def max_matching(adj, n, banned_row=None, banned_col=None, forced=None):
    """Kuhn's augmenting-path matching size on an n x n 0/1 matrix."""
    match_col = [-1] * n
    rows = [r for r in range(n) if r != banned_row]
    if forced is not None:
        fr, fc = forced
        match_col[fc] = fr
        rows = [r for r in rows if r != fr]

    def try_row(r, seen):
        for c in range(n):
            if c == banned_col or not adj[r][c] or seen[c]:
                continue
            if forced is not None and c == forced[1]:
                continue
            seen[c] = True
            if match_col[c] < 0 or try_row(match_col[c], seen):
                match_col[c] = r
                return True
        return False

    size = 1 if forced is not None else 0
    for r in rows:
        if try_row(r, [False] * n):
            size += 1
    return size


def lift_support_oracle(pattern):
    L = lift_mask(pattern)
    n = pattern.k * pattern.m
    return max_matching(L, n) == n


def lift_total_support_oracle(pattern):
    if not lift_support_oracle(pattern):
        return False
    L = lift_mask(pattern)
    n = pattern.k * pattern.m
    mask = pattern.nonzero_mask()
    for i in range(pattern.k):
        for j in range(pattern.m):
            if not mask[i, j]:
                continue
            # all lift cells of one block are interchangeable, force a corner
            forced = (i * pattern.m, j * pattern.k)
            if max_matching(L, n, forced=forced) != n:
                return False
    return True


def random_pattern(rng, max_dim=4):
    k = int(rng.integers(1, max_dim + 1))
    m = int(rng.integers(1, max_dim + 1))
    density = rng.uniform(0.15, 1.0)
    A = np.where(rng.random((k, m)) < density, rng.uniform(0.1, 2.0, (k, m)), 0.0)
    return NonnegPattern(A)


class TestPatternValidation:
    def test_rejects_negative_entries(self):
        with pytest.raises(ValueError):
            NonnegPattern(np.array([[1.0, -0.5]]))

    def test_zero_eps_reclassifies_small_entries(self):
        A = np.array([[1.0, 1e-12], [1.0, 1.0]])
        assert NonnegPattern(A).nonzero_mask()[0, 1]
        assert not NonnegPattern(A, zero_eps=1e-10).nonzero_mask()[0, 1]

    def test_shape_properties(self):
        pat = NonnegPattern(np.ones((2, 3)))
        assert pat.k == 2 and pat.m == 3


class TestKnownPatterns:
    def test_boundary_pattern_support_without_total(self):
        pat = NonnegPattern(np.array([[0.0, 1.0], [1.0, 1.0]]))
        assert has_support(pat)
        res = has_total_support(pat)
        assert not res
        assert res.failing_entry == (1, 1)
        w = res.witness
        assert w.weight == 4 and w.tight_violation
        assert w.check(pat)

    def test_identity_has_total_support(self):
        for n in (1, 2, 3, 4):
            pat = NonnegPattern(np.eye(n))
            assert has_support(pat)
            assert has_total_support(pat)

    def test_zero_row_kills_support(self):
        pat = NonnegPattern(np.array([[1.0, 1.0], [0.0, 0.0]]))
        res = has_support(pat)
        assert not res
        assert res.witness.weight > 4
        assert res.witness.check(pat)

    def test_full_pattern_rectangular(self):
        pat = NonnegPattern(np.ones((2, 5)))
        assert has_support(pat)
        assert has_total_support(pat)

    def test_single_zero_entry_square(self):
        # one zero in a full square pattern never blocks total support
        A = np.ones((3, 3))
        A[1, 2] = 0.0
        pat = NonnegPattern(A)
        assert has_total_support(pat)


class TestOracleAgreement:
    def test_three_way_support_agreement(self):
        rng = np.random.default_rng(100)
        for _ in range(600):
            pat = random_pattern(rng)
            fast = bool(has_support(pat))
            assert fast == has_support_bruteforce(pat)
            assert fast == lift_support_oracle(pat)

    def test_three_way_total_support_agreement(self):
        rng = np.random.default_rng(101)
        for _ in range(600):
            pat = random_pattern(rng)
            fast = bool(has_total_support(pat))
            assert fast == has_total_support_bruteforce(pat)
            assert fast == lift_total_support_oracle(pat)

    def test_bruteforce_guard(self):
        with pytest.raises(SizeGuardError):
            has_support_bruteforce(NonnegPattern(np.ones((5, 4))))
        with pytest.raises(SizeGuardError):
            has_total_support_bruteforce(NonnegPattern(np.ones((5, 4))))


class TestWitnesses:
    def test_every_refusal_carries_a_valid_witness(self):
        rng = np.random.default_rng(102)
        seen_support_refusal = 0
        seen_total_refusal = 0
        for _ in range(500):
            pat = random_pattern(rng)
            sup = has_support(pat)
            if not sup:
                seen_support_refusal += 1
                assert sup.witness.check(pat)
                assert sup.witness.weight > pat.k * pat.m or sup.witness.tight_violation
            tot = has_total_support(pat)
            if sup and not tot:
                seen_total_refusal += 1
                assert tot.witness.check(pat)
                i, j = tot.failing_entry
                assert pat.entries[i, j] > 0
        assert seen_support_refusal > 20
        assert seen_total_refusal > 20

    def test_witness_check_rejects_mismatched_pattern(self):
        pat = NonnegPattern(np.array([[0.0, 1.0], [1.0, 1.0]]))
        w = has_total_support(pat).witness
        full = NonnegPattern(np.ones((2, 2)))
        assert not w.check(full)

    def test_witness_check_rejects_wrong_weight(self):
        pat = NonnegPattern(np.array([[1.0, 1.0], [0.0, 0.0]]))
        good = has_support(pat).witness
        bad = ZeroSubmatrixWitness(alpha=good.alpha, beta=good.beta,
                                   weight=good.weight + 1,
                                   tight_violation=good.tight_violation)
        assert not bad.check(pat)

    def test_failing_entry_is_off_every_positive_diagonal(self):
        rng = np.random.default_rng(103)
        checked = 0
        for _ in range(400):
            pat = random_pattern(rng)
            tot = has_total_support(pat)
            if tot or tot.failing_entry is None:
                continue
            i, j = tot.failing_entry
            L = lift_mask(pat)
            n = pat.k * pat.m
            assert max_matching(L, n, forced=(i * pat.m, j * pat.k)) < n
            checked += 1
        assert checked > 20


class TestZeroFraction:
    def test_conditions_on_examples(self):
        rep = zero_fraction_sufficient(NonnegPattern(np.ones((2, 3))))
        assert rep.zero_count == 0
        assert rep.rect_few_zeros.grants
        assert rep.implies_total_support

        A = np.ones((3, 3))
        A[0, 1] = 0.0
        rep = zero_fraction_sufficient(NonnegPattern(A))
        assert rep.square_few_zeros.grants
        assert rep.implies_total_support

        A = np.ones((3, 3))
        A[0, 1] = A[1, 2] = 0.0
        rep = zero_fraction_sufficient(NonnegPattern(A))
        assert not rep.square_few_zeros.satisfied
        assert not rep.line_ratio_few_zeros.satisfied

    def test_zero_line_blocks_ratio_condition(self):
        A = np.ones((2, 4))
        A[0] = 0.0
        rep = zero_fraction_sufficient(NonnegPattern(A))
        assert rep.has_zero_row
        assert not rep.line_ratio_few_zeros.grants

    def test_grant_implies_total_support(self):
        rng = np.random.default_rng(104)
        granted = 0
        for _ in range(600):
            pat = random_pattern(rng)
            if zero_fraction_sufficient(pat).implies_total_support:
                granted += 1
                assert has_total_support(pat)
        assert granted > 50
