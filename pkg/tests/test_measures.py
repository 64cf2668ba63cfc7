"""Measure data model: variation, truncation, mollification, admissibility."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from measurefk.domains import Interval
from measurefk.kernels import IntervalLaplacian
from measurefk.measures import (MeasureData, MeasureError, Nonlinearity,
                                TVQuadratureError, check_monotone, is_class_R,
                                mollify, total_variation, truncate)

DOM = Interval(0.0, 1.0)
KERNEL = IntervalLaplacian(0.0, 1.0, 1.0)


def lebesgue():
    return MeasureData(density=lambda p: np.ones(p.shape[0]))


class TestTotalVariation:
    def test_atoms_only(self):
        mu = MeasureData(atoms=[((0.5,), 1.0), ((0.75,), -2.0)])
        assert total_variation(mu, DOM) == pytest.approx(3.0, abs=1e-12)

    def test_unit_density(self):
        assert total_variation(lebesgue(), DOM) == pytest.approx(1.0, rel=1e-6)

    def test_sine_density_against_quadrature_oracle(self):
        dens = lambda p: np.pi**2 * np.sin(np.pi * p[:, 0]) + np.sin(np.pi * p[:, 0])**3
        oracle, err = quad(lambda x: abs(np.pi**2 * np.sin(np.pi * x)
                                         + np.sin(np.pi * x)**3), 0, 1)
        assert err < 1e-10
        # closed form: 2*pi + 4/(3*pi)
        assert oracle == pytest.approx(2 * np.pi + 4 / (3 * np.pi), abs=1e-10)
        tv = total_variation(MeasureData(density=dens), DOM)
        assert tv == pytest.approx(oracle, rel=2e-4)

    def test_divergent_density_raises(self):
        mu = MeasureData(density=lambda p: 1.0 / np.minimum(p[:, 0], 1 - p[:, 0]))
        with pytest.raises(TVQuadratureError, match="TV quadrature failed"):
            total_variation(mu, DOM)


class TestTruncate:
    @pytest.mark.parametrize("c,y,expected", [(2, 3, 2), (2, -5, -2), (2, 1, 1)])
    def test_examples(self, c, y, expected):
        assert truncate(c, y) == expected

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 50), st.floats(-1e6, 1e6))
    def test_idempotent_and_band_identity(self, c, y):
        t = truncate(c, y)
        assert truncate(c, t) == t
        if abs(y) <= c:
            assert t == y
        assert abs(t) <= c

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 50), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_one_lipschitz(self, c, y1, y2):
        assert abs(truncate(c, y1) - truncate(c, y2)) <= abs(y1 - y2) * (1 + 1e-15)

    def test_negative_level_rejected(self):
        with pytest.raises(MeasureError):
            truncate(-1.0, 0.0)


class TestMollify:
    def test_single_atom_mass_conserved(self):
        mm = mollify(MeasureData(atoms=[((0.5,), 1.0)]), 0.1, DOM)
        assert not mm.has_atoms()
        assert total_variation(mm, DOM) == pytest.approx(1.0, abs=1e-12)

    def test_empty_measure_unchanged(self):
        mu = MeasureData()
        assert mollify(mu, 0.1, DOM) is mu

    def test_two_signed_bumps(self):
        mm = mollify(MeasureData(atoms=[((0.5,), 1.0), ((0.75,), -2.0)]), 0.05, DOM)
        assert total_variation(mm, DOM) == pytest.approx(3.0, abs=1e-12)

    def test_clipped_bump_renormalized(self):
        mm = mollify(MeasureData(atoms=[((0.02,), 1.0)]), 0.05, DOM)
        assert total_variation(mm, DOM) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("eps", [0.2, 0.1, 0.05])
    def test_tv_conserved_for_all_fitting_bandwidths(self, eps):
        mm = mollify(MeasureData(atoms=[((0.5,), 0.7)]), eps, DOM)
        assert total_variation(mm, DOM) == pytest.approx(0.7, abs=1e-12)

    def test_nonpositive_bandwidth_rejected(self):
        with pytest.raises(MeasureError):
            mollify(MeasureData(atoms=[((0.5,), 1.0)]), 0.0, DOM)

    def test_potential_of_mollified_atom_first_order_in_eps(self):
        # R(moll delta_(1/2))(x) -> G(x, 1/2); at the atom the kernel kink
        # gives an O(eps) defect, away from it the kernel is linear.
        from measurefk.kernels import potential_Rmu
        mu = MeasureData(atoms=[((0.5,), 1.0)])
        errs = []
        for eps in (0.08, 0.04, 0.02):
            mm = mollify(mu, eps, DOM)
            at_atom = potential_Rmu(KERNEL, mm, 0.5)
            errs.append(abs(at_atom - 0.25))
            away = potential_Rmu(KERNEL, mm, 0.25)
            assert away == pytest.approx(0.125, abs=1e-9)
        # kink defect is eps/6 for the unit tent: check first-order decay
        for eps, err in zip((0.08, 0.04, 0.02), errs):
            assert err == pytest.approx(eps / 6.0, rel=1e-6)


class TestMonotoneCheck:
    def test_decreasing_cubic(self):
        assert check_monotone(Nonlinearity(lambda p, y: -y**3), DOM)

    def test_increasing_rejected(self):
        assert not check_monotone(Nonlinearity(lambda p, y: np.asarray(y) * 1.0), DOM)

    def test_x_shift_is_harmless(self):
        f = Nonlinearity(lambda p, y: -y + np.sin(p[..., 0]))
        assert check_monotone(f, DOM)

    def test_sample_floor(self):
        with pytest.raises(MeasureError):
            check_monotone(Nonlinearity(lambda p, y: -y), DOM, n_samples=10)


class TestClassR:
    def test_lebesgue_within_class(self):
        rep = is_class_R(lebesgue(), None, DOM, [[0.5], [0.25]], kernel=KERNEL)
        assert rep.in_class
        assert rep.values[0] == pytest.approx(1.0 / 8.0, rel=1e-6)
        assert rep.tv == pytest.approx(1.0, rel=1e-6)

    def test_zero_measure_trivial(self):
        rep = is_class_R(MeasureData(), None, DOM, [[0.3]], kernel=KERNEL)
        assert rep.in_class and rep.values == [0.0]

    def test_infinite_mass_boundary_density_still_in_class(self):
        # density 1/dist(x, boundary): infinite total variation but finite
        # potential, the class strictly exceeds finite-mass measures
        mu = MeasureData(density=lambda p: 1.0 / np.minimum(p[:, 0], 1 - p[:, 0]))
        rep = is_class_R(mu, None, DOM, [[0.5], [0.1]], kernel=KERNEL)
        assert rep.tv == np.inf
        assert rep.in_class
        assert all(np.isfinite(v) for v in rep.values)
