import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from latticeclt.geometry import DomainParams, ShellConvention, c0, volume_omega_T
from latticeclt.lattices import (
    BallIndicator,
    BaseCellIndicator,
    BoxIndicator,
    EnumerationCapError,
    Lattice,
    LatticeKind,
    Pullback,
    construct_lattice,
    count_direct,
    count_tessellated,
    discrepancy,
    enumerate_in_ball,
    shell_counts,
    siegel_transform,
    tessellation_image,
    transform_diagonal,
)
from latticeclt.sampling import SamplerConfig, sample

PARAMS = DomainParams(1, 4, (1.5,), (4.0,))
Z5 = construct_lattice("unimodular", np.eye(5))


def unimodular_integer_matrix(rng, l, steps=6, bound=3):
    B = np.eye(l, dtype=np.int64)
    for _ in range(steps):
        i, j = rng.choice(l, 2, replace=False)
        B[:, i] += int(rng.integers(-bound, bound + 1)) * B[:, j]
    return B


def grid_points(B, shift, radius):
    """Brute force over a coefficient box large enough to hold the ball."""
    l = B.shape[0]
    K = int(math.ceil(radius * np.linalg.norm(np.linalg.inv(B), 2))) + 2
    rng_ = range(-K, K + 1)
    out = []
    for z in itertools.product(rng_, repeat=l):
        v = B @ (np.array(z, dtype=float) + shift)
        if v @ v <= radius * radius:
            out.append(tuple(z))
    return sorted(out)


class TestConstruction:
    def test_identity(self):
        assert Z5.kind is LatticeKind.UNIMODULAR
        np.testing.assert_array_equal(Z5.basis, np.eye(5))
        np.testing.assert_array_equal(Z5.shift, np.zeros(5))

    def test_congruence_shift(self):
        lat = construct_lattice("congruence", np.eye(5), ((1, 0, 0, 0, 0), 2))
        np.testing.assert_array_equal(lat.shift, [0.5, 0, 0, 0, 0])
        assert lat.cong == ((1, 0, 0, 0, 0), 2)

    def test_rejects_det_two(self):
        with pytest.raises(ValueError, match="determinant"):
            construct_lattice("unimodular", np.diag([2.0, 1.0, 1.0]))

    def test_rejects_non_primitive_congruence(self):
        with pytest.raises(ValueError, match="gcd"):
            construct_lattice("congruence", np.eye(3), ((2, 0, 4), 2))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            construct_lattice("unimodular", np.eye(3)[:2])

    def test_affine_from_translation(self):
        B = np.array([[1.0, 1.0], [0.0, 1.0]])
        lat = construct_lattice("affine", B, translation=[0.75, 0.25])
        assert lat.coset == (Fraction(1, 2), Fraction(1, 4))

    def test_json_round_trip(self):
        lat = sample(SamplerConfig(5, master_seed=3, kind="affine"), 7)
        back = Lattice.from_record(json.loads(json.dumps(lat.to_record())))
        assert back.rows == lat.rows and back.coset == lat.coset and back.exp2 == lat.exp2
        np.testing.assert_array_equal(back.basis, lat.basis)

    def test_json_without_exact_block(self):
        rec = {"kind": "congruence", "basis": np.eye(3).tolist(), "shift": [0.5, 0, 0], "v": [1, 0, 0], "N": 2}
        lat = Lattice.from_record(rec)
        assert lat.coset == (Fraction(1, 2), 0, 0)


class TestEnumeration:
    def test_unit_ball_of_z5(self):
        pts = enumerate_in_ball(Z5, 1.0)
        assert len(pts) == 11

    def test_skewed_plane(self):
        lat = construct_lattice("unimodular", np.diag([2.0, 0.5]))
        pts = {tuple(p) for p in enumerate_in_ball(lat, 1.0)}
        assert pts == {(0.0, 0.0), (0.0, 0.5), (0.0, -0.5), (0.0, 1.0), (0.0, -1.0)}

    def test_shifted_empty(self):
        lat = construct_lattice("affine", np.eye(5), [0.5, 0, 0, 0, 0])
        assert len(enumerate_in_ball(lat, 0.4)) == 0

    def test_lexicographic_order(self):
        _, zs = enumerate_in_ball(Z5, 1.5, return_coefficients=True)
        assert zs == sorted(zs)

    def test_deterministic(self):
        lat = sample(SamplerConfig(5, master_seed=1), 0)
        a = enumerate_in_ball(lat, 1.3)
        b = enumerate_in_ball(lat, 1.3)
        assert np.array_equal(a, b)

    def test_cap(self):
        with pytest.raises(EnumerationCapError):
            enumerate_in_ball(Z5, 10.0, cap=1000)

    @given(st.integers(0, 2**31 - 1), st.sampled_from([2, 3]), st.floats(0.5, 6.0), st.booleans())
    def test_matches_grid_oracle(self, seed, l, radius, shifted):
        rng = np.random.default_rng(seed)
        B = unimodular_integer_matrix(rng, l, steps=3, bound=2).astype(float)
        w = rng.integers(0, 4, l) / 4 if shifted else np.zeros(l)
        kind = "affine" if shifted else "unimodular"
        lat = construct_lattice(kind, B, list(map(float, w)) if shifted else None)
        pts, zs = enumerate_in_ball(lat, radius, return_coefficients=True)
        assert zs == grid_points(B, w, radius)
        for p, z in zip(pts, zs):
            np.testing.assert_allclose(p, B @ (np.array(z) + w), atol=1e-9)


class SumOf:
    def __init__(self, *fs):
        self.fs = fs

    def support_radius(self, l):
        return max(f.support_radius(l) for f in self.fs)

    def evaluate(self, pts):
        return sum(f.evaluate(pts) for f in self.fs)


class TestSiegel:
    def test_unit_ball(self):
        assert siegel_transform(BallIndicator(1.0), Z5) == 10

    def test_shifted_lattice(self):
        lat = construct_lattice("affine", np.eye(5), [0.5] * 5)
        oracle = len(grid_points(np.eye(5), np.full(5, 0.5), 1.2))
        assert oracle == 32
        assert siegel_transform(BallIndicator(1.2), lat) == oracle

    def test_linearity(self):
        lat = sample(SamplerConfig(5, master_seed=4, kind="affine"), 2)
        f, g = BallIndicator(1.1), BoxIndicator((0.5, 0.7, 0.9, 1.0, 0.6))
        assert siegel_transform(SumOf(f, g), lat) == siegel_transform(f, lat) + siegel_transform(g, lat)

    @given(st.integers(0, 500), st.sampled_from(["unimodular", "affine", "congruence"]))
    def test_equivariance_under_c0(self, index, kind):
        cong = ((1, 0, 0, 0, 0), 2) if kind == "congruence" else None
        lat = sample(SamplerConfig(5, master_seed=8, kind=kind, cong=cong), index)
        img = tessellation_image(lat, PARAMS)
        f = BallIndicator(1.4)
        assert siegel_transform(f, img) == siegel_transform(Pullback(f, tuple(np.diag(c0(PARAMS)))), lat)

    def test_base_cell_indicator_counts_one_shell(self):
        lat = sample(SamplerConfig(5, master_seed=2, kind="affine"), 5)
        f = BaseCellIndicator(PARAMS)
        assert siegel_transform(f, lat) == count_direct(lat, PARAMS, 2.0)


class TestCounting:
    def test_integer_lattice_example(self):
        assert count_tessellated(Z5, PARAMS, 1) == 80
        assert count_direct(Z5, PARAMS, 2.0) == 80

    def test_paper_closed_adds_norm_two_shell(self):
        # y of norm 2 with x = 0: 8 axis vectors plus 16 of type (1,1,1,1)
        assert count_direct(Z5, PARAMS, 2.0, ShellConvention.PAPER_CLOSED) == 104

    def test_single_shell_identity(self):
        lat = sample(SamplerConfig(5, master_seed=6, kind="congruence", cong=((1, 1, 0, 0, 0), 3)), 0)
        assert count_tessellated(lat, PARAMS, 1) == count_direct(lat, PARAMS, 2.0)

    def test_far_from_slab(self):
        # x-coordinates lie in 10 Z + 5 while the slab needs |x| < 1.5
        a = 10.0 ** (-1 / 4)
        lat = construct_lattice("affine", np.diag([10.0, a, a, a, a]), [0.5, 0, 0, 0, 0])
        lat = transform_diagonal(lat, [1.0] * 5)
        assert count_tessellated(lat, PARAMS, 3) == 0

    def test_y_pushed_out(self):
        # every nonzero y-part has norm >= 3, beyond the base cell
        lat = construct_lattice("unimodular", np.diag([3.0**-4, 3.0, 3.0, 3.0, 3.0]))
        assert count_direct(lat, PARAMS, 2.0) == 0

    @pytest.mark.parametrize("kind", ["unimodular", "affine", "congruence"])
    def test_direct_equals_tessellated(self, kind):
        cong = ((0, 1, 0, 0, 0), 2) if kind == "congruence" else None
        cfg = SamplerConfig(5, master_seed=17, kind=kind, cong=cong)
        for i in range(20):
            lat = sample(cfg, i)
            for M in (1, 2, 3):
                assert count_direct(lat, PARAMS, 2.0**M) == count_tessellated(lat, PARAMS, M)

    def test_shift_periodicity(self):
        cfg = SamplerConfig(5, master_seed=5, kind="affine")
        lat = sample(cfg, 1)
        moved = Lattice(lat.kind, lat.rows, lat.exp2, lat.scale, tuple(w + k for w, k in zip(lat.coset, (3, -1, 0, 2, 7))))
        assert shell_counts(lat, PARAMS, 12).counts.tolist() == shell_counts(moved, PARAMS, 12).counts.tolist()

    def test_audit_flags_integer_boundaries(self):
        sc = shell_counts(Z5, PARAMS, 2, audit=True)
        assert sc.sensitive.sum() > 0
        lat = sample(SamplerConfig(5, master_seed=1, kind="affine"), 0)
        assert shell_counts(lat, PARAMS, 16, audit=True).sensitive.sum() == 0

    def test_rejects_bad_M(self):
        with pytest.raises(ValueError):
            count_tessellated(Z5, PARAMS, 0)

    def test_cap_propagates(self):
        with pytest.raises(EnumerationCapError):
            count_direct(Z5, PARAMS, 64.0, cap=1000)


class TestDiscrepancy:
    def test_integer_lattice(self):
        vol = volume_omega_T(PARAMS, 2.0)
        assert vol == pytest.approx(41.0465, abs=5e-5)
        assert discrepancy(Z5, PARAMS, 1) == pytest.approx((80 - vol) / math.sqrt(vol), rel=1e-14)
        assert discrepancy(Z5, PARAMS, 1) == pytest.approx(6.0800, abs=1e-4)

    def test_divisor_at_M_four(self):
        lat = sample(SamplerConfig(5, master_seed=2), 3)
        vol = volume_omega_T(PARAMS, 2.0)
        count = count_tessellated(lat, PARAMS, 4)
        assert discrepancy(lat, PARAMS, 4) == pytest.approx((count - 4 * vol) / (2 * math.sqrt(vol)), rel=1e-14)


class TestExactTransforms:
    def test_diagonal_exact(self):
        lat = transform_diagonal(Z5, [16, 0.5, 0.5, 0.5, 0.5])
        np.testing.assert_array_equal(lat.basis, np.diag([16, 0.5, 0.5, 0.5, 0.5]))

    def test_image_matches_shell_shift(self):
        lat = sample(SamplerConfig(5, master_seed=9, kind="affine"), 4)
        img = tessellation_image(lat, PARAMS, 3)
        full = shell_counts(lat, PARAMS, 8).counts
        assert shell_counts(img, PARAMS, 5).counts.tolist() == full[3:].tolist()
