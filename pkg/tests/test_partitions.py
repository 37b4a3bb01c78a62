import itertools
import math

import pytest
from hypothesis import given, strategies as st

from latticeclt.partitions import (
    Region,
    SetPartition,
    bell_number,
    beta_schedule,
    classify_tuple,
    diagonal_region_size,
    enumerate_partitions,
    verify_cover,
)


def bell_oracle(r):
    # B_{n+1} = sum_k C(n, k) B_k
    B = [1]
    for n in range(r):
        B.append(sum(math.comb(n, k) * B[k] for k in range(n + 1)))
    return B[r]


class TestSetPartition:
    def test_canonical_order(self):
        P = SetPartition(((3, 1), (2,)))
        assert P.blocks == ((1, 3), (2,))
        assert str(P) == "{{1,3},{2}}"
        assert P.labels() == (0, 1, 0)

    def test_label_round_trip(self):
        for P in enumerate_partitions(5):
            assert SetPartition.from_labels(P.labels()) == P

    @pytest.mark.parametrize("blocks", [((1, 2), (2, 3)), ((1,), (3,)), ((1,), ())])
    def test_rejects_invalid(self, blocks):
        with pytest.raises(ValueError):
            SetPartition(blocks)


class TestEnumeration:
    @pytest.mark.parametrize("r,count", [(1, 1), (3, 5), (4, 15), (8, 4140)])
    def test_counts(self, r, count):
        assert len(enumerate_partitions(r)) == count

    @pytest.mark.parametrize("r", range(1, 11))
    def test_complete_and_unique(self, r):
        parts = enumerate_partitions(r)
        assert len(set(parts)) == len(parts) == bell_oracle(r) == bell_number(r)

    def test_brute_force_small(self):
        # every labelling of 1..5 collapses onto exactly the enumerated set
        seen = {SetPartition.from_labels(lab) for lab in itertools.product(range(5), repeat=5)}
        assert seen == set(enumerate_partitions(5))

    def test_order_is_lexicographic(self):
        labels = [P.labels() for P in enumerate_partitions(6)]
        assert labels == sorted(labels)

    @pytest.mark.parametrize("r", [0, 11, 2.5])
    def test_range(self, r):
        with pytest.raises(ValueError):
            enumerate_partitions(r)


class TestSchedule:
    def test_example(self):
        s = beta_schedule(3, 1.0)
        assert s.beta == (1.0, 19.0, 115.0)
        assert s.alpha == (0.0, 6.0, 114.0)

    def test_verbatim_margin_is_negative(self):
        s = beta_schedule(3, 1.0)
        assert s.margin == 115 - 3 * 114 - 1
        assert not s.separation_holds

    def test_scaled_variant_separates(self):
        for r in (3, 4, 5, 6):
            s = beta_schedule(r, 0.7, variant="scaled")
            assert s.separation_holds

    def test_linear_in_eta_when_floor_inactive(self):
        a = beta_schedule(3, 1.0, delta_prime=1000.0)
        b = beta_schedule(3, 10.0, delta_prime=1000.0)
        assert a.beta == (1.0, 7.0, 43.0)
        assert b.beta == pytest.approx(tuple(10 * x for x in a.beta))

    @given(
        st.integers(3, 8),
        st.floats(0.01, 50),
        st.floats(0.01, 100),
        st.floats(0.1, 5),
        st.floats(0.1, 5),
        st.sampled_from(["verbatim", "scaled"]),
    )
    def test_monotone(self, r, eta, dp, q, tau, variant):
        s = beta_schedule(r, eta, dp, q, tau, variant=variant)
        assert s.alpha[0] == 0
        for j in range(1, r):
            assert s.alpha[j] == (3 + r) * s.beta[j - 1]
            assert s.beta[j] > s.alpha[j]
            assert s.beta[j] > s.beta[j - 1]

    @pytest.mark.parametrize("kw", [{"eta": 0}, {"eta": 1, "q": -1}, {"eta": 1, "delta_prime": 0}])
    def test_rejects_nonpositive(self, kw):
        with pytest.raises(ValueError):
            beta_schedule(3, **kw)

    def test_rejects_small_r(self):
        with pytest.raises(ValueError):
            beta_schedule(2, 1.0)

    def test_serialises(self):
        d = beta_schedule(4, 0.5).to_dict()
        assert d["r"] == 4 and len(d["beta"]) == 4 and d["separation_holds"] is False


class TestClassify:
    def test_origin_is_diagonal(self):
        regions = classify_tuple((0, 0, 0), beta_schedule(3, 1.0), 5)
        assert any(r.is_diagonal for r in regions)

    def test_example(self):
        regions = classify_tuple((0, 0, 150), beta_schedule(3, 1.0), 200)
        target = Region(SetPartition(((1, 2), (3,))), 6.0, 19.0, 1)
        assert target in regions
        assert not any(r.is_diagonal for r in regions)

    @given(st.lists(st.integers(0, 39), min_size=3, max_size=3), st.floats(0.1, 3.0))
    def test_diagonal_round_trip(self, k, eta):
        s = beta_schedule(3, eta)
        regions = classify_tuple(k, s, 40)
        in_diag = any(r.is_diagonal for r in regions)
        assert in_diag == all(abs(a - b) <= s.beta[-1] for a, b in itertools.combinations(k, 2))
        assert regions  # the cover claim, pointwise

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            classify_tuple((0, 5, 0), beta_schedule(3, 1.0), 5)


class TestCover:
    def test_example(self):
        rep = verify_cover(3, 16, beta_schedule(3, 1.0))
        assert rep.covered and rep.n_tuples == 16**3

    def test_single_tuple(self):
        rep = verify_cover(3, 1, beta_schedule(3, 1.0))
        assert rep.covered and rep.n_diagonal == 1

    def test_r4(self):
        assert verify_cover(4, 8, beta_schedule(4, 0.5)).covered

    @pytest.mark.parametrize("eta", [0.1, 0.2, 0.3])
    @pytest.mark.parametrize("variant", ["verbatim", "scaled"])
    def test_non_trivial_schedules(self, eta, variant):
        # with a large delta' the diagonal no longer swallows the cube
        s = beta_schedule(3, eta, delta_prime=1000.0, variant=variant)
        rep = verify_cover(3, 16, s)
        assert rep.covered
        assert rep.n_diagonal < rep.n_tuples

    def test_matches_pointwise_classifier(self):
        s = beta_schedule(3, 0.2, delta_prime=1000.0)
        rep = verify_cover(3, 10, s)
        pointwise = [k for k in itertools.product(range(10), repeat=3) if not classify_tuple(k, s, 10)]
        assert list(rep.uncovered) == pointwise

    def test_detects_a_gap(self):
        # zero cluster diameters with wide separations leave (0, 1, 20) in no region
        s = beta_schedule(3, 0.5, delta_prime=1000.0)
        broken = type(s)(s.r, s.eta, s.delta_prime, s.q, s.tau, (0.0, 0.0, 0.0), (10.0, 10.0, 10.0))
        rep = verify_cover(3, 30, broken)
        assert not rep.covered and (0, 1, 20) in rep.uncovered

    def test_cap(self):
        with pytest.raises(ValueError, match="cap"):
            verify_cover(4, 100, beta_schedule(4, 1.0))

    @pytest.mark.parametrize("M", [1, 4, 9, 16, 25, 32])
    @pytest.mark.parametrize("beta", [0.5, 2.0, 3.7])
    def test_diagonal_size_bound(self, M, beta):
        assert diagonal_region_size(3, M, beta) <= M * (2 * math.ceil(beta) + 1) ** 2
