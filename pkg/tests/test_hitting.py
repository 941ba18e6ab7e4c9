import math

import numpy as np
import pytest

from rbmdet import hitting as ht
from rbmdet import initial_data as idata

SINGLE_WEDGE_L2_MASS = 1.0 - 2.0 / math.e  # int_0^1 (1-b) e^{b-1} db


def wedge_profile(start, level):
    return idata.StepProfile(
        n_inf=start, blocks=(idata.Block(start=start, level=level,
                                         length=None),))


class TestQExpPow:
    def test_single_step_density(self):
        assert ht.q_exp_pow(1, 1.0, 0.5) == pytest.approx(math.exp(-0.5),
                                                          rel=1e-14)

    def test_indicator(self):
        assert ht.q_exp_pow(3, 0.0, 0.0) == 0.0
        assert ht.q_exp_pow(2, -1.0, 2.0) == 0.0

    def test_three_step_convolution_oracle(self):
        # numerical triple convolution of Exp(1) step densities
        h = 2e-4
        s = np.arange(0.0, 12.0, h)
        one = np.exp(-s)
        two = np.convolve(one, one)[: s.size] * h
        three = np.convolve(two, one)[: s.size] * h
        for x, y in [(2.0, 0.0), (3.5, 1.2)]:
            d = x - y
            ref = three[int(round(d / h))]
            assert ht.q_exp_pow(3, x, y) == pytest.approx(ref, rel=1e-3)
        assert ht.q_exp_pow(3, 2.0, 0.0) == pytest.approx(
            math.exp(-2) * 4 / 2, rel=1e-14)

    def test_log_scale_large_m(self):
        v = ht.q_exp_pow(300, 0.0, -300.0)
        # Gamma(300) density at its mean, ~ 1/sqrt(2 pi 300)
        assert v == pytest.approx(1 / math.sqrt(2 * math.pi * 300), rel=0.01)


class TestExactLaw:
    def test_packed_atom(self):
        law = ht.law_from_blocks(idata.packed(0.0), 0.7, 5)
        assert law.atom_mass == 1.0
        assert law.components == {}
        assert law.masses() == {0: 1.0}

    def test_packed_never_hits_from_below(self):
        law = ht.law_from_blocks(idata.packed(0.0), -1.0, 5)
        assert law.total_mass() == 0.0

    def test_single_wedge_mass(self):
        law = ht.hitting_law_exact(wedge_profile(2, 0.0), 1.0, 5)
        assert set(law.masses()) == {2}
        assert law.masses()[2] == pytest.approx(SINGLE_WEDGE_L2_MASS,
                                                abs=1e-13)

    def test_single_wedge_mass_vs_mc(self):
        ic = idata.from_positions([math.inf, math.inf, 0.0],
                                  extend_last=True)
        law = ht.hitting_law_mc(ic, 1.0, 5, paths=10 ** 6, seed=123)
        comp = law.components[2]
        assert abs(comp.mass - SINGLE_WEDGE_L2_MASS) < 3 * comp.stderr

    def test_horizon_cuts_all_blocks(self):
        law = ht.hitting_law_exact(wedge_profile(6, 0.0), 1.0, 4)
        assert law.total_mass() == 0.0

    def test_conservation(self):
        rng = np.random.default_rng(8)
        for _ in range(15):
            n = int(rng.integers(1, 7))
            lv = np.sort(rng.uniform(-2, 2, n))[::-1]
            ic = idata.from_positions(lv, extend_last=True)
            eta = float(rng.uniform(-3, 3))
            law = ht.law_from_blocks(ic, eta, int(rng.integers(1, 9)))
            total = law.total_mass() + law.survivor_mass + law.dead_mass
            assert total == pytest.approx(1.0, abs=1e-12)

    def test_support_only_at_block_starts(self):
        ic = idata.from_positions([2.0, 2.0, 0.5, -1.0, -1.0],
                                  extend_last=True)
        law = ht.law_from_blocks(ic, 1.7, 5)
        starts = {b.start for b in idata.blocks(ic).blocks}
        assert law.components  # eta below c_0: hits occur at later drops
        assert set(law.components) <= starts
        for ell, comp in law.components.items():
            level = ic.curve(ell)
            assert np.all(comp.nodes >= level - 1e-12)

    def test_atom_monotone_in_eta_packed(self):
        for eta in (-0.5, -1e-9, 0.0, 0.3):
            law = ht.law_from_blocks(idata.packed(0.0), eta, 3)
            assert law.atom_mass == (1.0 if eta >= 0 else 0.0)


class TestInclusionExclusion:
    def test_matches_sweep(self):
        ic = idata.from_positions(
            [math.inf, 2.0, 2.0, 0.5, 0.5, -1.0], extend_last=True)
        prof = idata.blocks(ic)
        for eta in (3.0, 1.2, 0.1):
            a = ht.hitting_law_exact(prof, eta, 6)
            b = ht.hitting_law_exact(prof, eta, 6,
                                     method="inclusion_exclusion")
            assert set(a.components) == set(b.components)
            for ell in a.components:
                ca, cb = a.components[ell], b.components[ell]
                assert ca.mass == pytest.approx(cb.mass, abs=1e-12)
                for f in (lambda x: np.exp(-0.3 * x), np.cos):
                    assert ca.integrate(f) == pytest.approx(
                        cb.integrate(f), abs=1e-12)


class TestGridLaw:
    def test_agrees_with_exact(self):
        ic = idata.from_positions([2.0, 2.0, 0.5, 0.5, -1.0],
                                  extend_last=True)
        eta = 1.7
        exact = ht.law_from_blocks(ic, eta, 6)
        grid = ht.default_grid(ic, eta, 6, spacing=1e-3)
        approx = ht.hitting_law_grid(ic, eta, grid, 6)
        assert exact.components
        assert set(exact.components) == set(approx.components)
        for ell in exact.components:
            assert approx.components[ell].mass == pytest.approx(
                exact.components[ell].mass, abs=1e-6)
            # integrated absolute density difference on the grid support
            f = lambda b: np.interp(b, grid,
                                    np.abs(approx.components[ell].values))
            ca = exact.components[ell]
            l1 = float(np.dot(ca.weights,
                              np.abs(ca.values - f(ca.nodes))))
            assert l1 < 1e-5

    def test_total_mass_below_one(self):
        ic = idata.from_positions([1.0, 0.0], extend_last=True)
        grid = ht.default_grid(ic, 0.5, 4, spacing=2e-3)
        law = ht.hitting_law_grid(ic, 0.5, grid, 4)
        assert law.total_mass() <= 1.0 + 1e-9

    def test_atom_case(self):
        ic = idata.packed(0.0)
        grid = np.linspace(-10, 1, 1001)
        law = ht.hitting_law_grid(ic, 0.2, grid, 4)
        assert law.atom_mass == 1.0 and not law.components

    def test_insufficient_grid_reported(self):
        ic = idata.from_positions([2.0, -5.0], extend_last=True)
        grid = np.linspace(-2.0, 3.0, 200)  # bottom above the lowest level
        with pytest.raises(ValueError, match="cover"):
            ht.hitting_law_grid(ic, 1.0, grid, 4)


class TestMonteCarloLaw:
    def test_packed_atom(self):
        law = ht.hitting_law_mc(idata.packed(0.0), 0.7, 5, paths=100, seed=1)
        assert law.atom_mass == 1.0

    def test_deterministic(self):
        ic = idata.from_positions([1.0, 0.0, -1.0], extend_last=True)
        a = ht.hitting_law_mc(ic, 2.0, 5, paths=30000, seed=42)
        b = ht.hitting_law_mc(ic, 2.0, 5, paths=30000, seed=42)
        assert a.masses() == b.masses()
        for ell in a.components:
            assert np.array_equal(a.components[ell].values,
                                  b.components[ell].values)

    def test_three_methods_agree(self):
        ic = idata.from_positions([2.0, 2.0, 0.5, 0.5, -1.0],
                                  extend_last=True)
        eta = 1.7
        exact = ht.law_from_blocks(ic, eta, 6)
        mc = ht.hitting_law_mc(ic, eta, 6, paths=400000, seed=7)
        assert exact.components
        for ell, comp in exact.components.items():
            m_mc = mc.components[ell]
            tol = max(1e-5, 3 * m_mc.stderr)
            assert abs(comp.mass - m_mc.mass) < tol
