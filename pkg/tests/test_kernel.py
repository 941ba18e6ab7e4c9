import math

import numpy as np
import pytest
from scipy.integrate import quad

from rbmdet import initial_data as idata
from rbmdet import special
from rbmdet.kernel import KernelSpec, kernel_eval, s_ops, sbar_epi

STEP_IC = idata.from_positions([1.5, 1.5, 0.0, 0.0, -1.2, -1.2, -1.2, -2.0],
                               extend_last=True)


class TestSOps:
    def test_sbar_unit(self):
        assert s_ops("Sbar", 1.7, 1, 0.3, -0.6) == pytest.approx(
            math.exp(-0.6 - 0.3), rel=1e-13)

    def test_s_heat_kernel(self):
        assert s_ops("S", 1.0, 0, 0.0, 0.0) == pytest.approx(
            1 / math.sqrt(2 * math.pi), rel=1e-14)

    def test_contour_cross_check(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            t = float(rng.uniform(0.4, 2.0))
            n = int(rng.integers(0, 13))
            z1, z2 = (float(v) for v in rng.uniform(-2, 2, 2))
            ref, err = special.contour_eval("S", t, n, z1, z2,
                                            with_error=True)
            assert abs(s_ops("S", t, n, z1, z2) - ref) <= \
                max(1e-8 * max(1, abs(ref)), 5 * err)

    def test_invalid_degree(self):
        with pytest.raises(ValueError):
            s_ops("S", 1.0, -1, 0.0, 0.0)
        with pytest.raises(ValueError):
            s_ops("Sbar", 1.0, 0, 0.0, 0.0)


class TestSbarEpi:
    def test_packed_above_is_plain(self):
        p0 = idata.packed(0.0)
        for z1 in (0.0, 0.4, 2.0):
            assert sbar_epi(p0, 1.2, 4, z1, 0.3) == pytest.approx(
                s_ops("Sbar", 1.2, 4, z1, 0.3), rel=1e-12)

    def test_packed_below_vanishes(self):
        assert sbar_epi(idata.packed(0.0), 1.2, 4, -0.1, 0.3) == 0.0

    def test_single_wedge_operator_identity(self):
        # epi operator = l free walk steps, cut at the level, then plain Sbar
        start, level = 3, -0.5
        ic = idata.from_positions([math.inf] * start + [level],
                                  extend_last=True)
        t, n = 0.9, 6
        for z1 in (1.0, 0.2, -0.4):
            got = sbar_epi(ic, t, n, z1, 0.1)
            ref = quad(
                lambda b: math.exp(b - z1) * (z1 - b) ** (start - 1)
                / math.factorial(start - 1)
                * s_ops("Sbar", t, n - start, b, 0.1),
                level, z1, limit=300)[0] if z1 > level else 0.0
            assert got == pytest.approx(ref, abs=1e-10)


class TestCollapsedWalkPowers:
    def test_s_matrix_negative_index_matches_explicit_integral(self):
        # (S_n)* Q^l = (S_{n-l})*, including l > n where the index smoothes
        spec = KernelSpec(t=1.1, indices=(2, 5), ic=STEP_IC)
        kern = kernel_eval(spec)
        z = 0.4
        for n_eff, l in [(1, 1), (-2, 4), (0, 2)]:
            n = 2  # base index
            l = n - n_eff
            y = -0.7
            ref = quad(
                lambda x: s_ops("S", 1.1, n, x, z)
                * math.exp(y - x) * (x - y) ** (l - 1) / math.factorial(l - 1),
                y, 60.0, limit=400)[0]
            got = float(kern._s_matrix(n_eff, np.array([y]),
                                       np.array([z]))[0, 0])
            assert got == pytest.approx(ref, rel=1e-9, abs=1e-11)


class TestKernelEval:
    def test_same_index_drops_first_term(self):
        spec = KernelSpec(t=1.0, indices=(3,), ic=idata.packed(0.0))
        kern = kernel_eval(spec)
        zi, zj = -1.0, -3.5
        # second term alone: the atom integral
        ref = quad(lambda e: s_ops("S", 1.0, 3, e, zi)
                   * s_ops("Sbar", 1.0, 3, e, zj), 0.0, 40.0, limit=400)[0]
        assert kern((3, zi), (3, zj)) == pytest.approx(ref, rel=1e-9)

    def test_first_term_for_ordered_indices(self):
        spec = KernelSpec(t=1.0, indices=(2, 4), ic=idata.packed(0.0))
        kern = kernel_eval(spec)
        zi, zj = 0.5, -1.5
        with_both = kern((2, zi), (4, zj))
        second = quad(lambda e: s_ops("S", 1.0, 2, e, zi)
                      * s_ops("Sbar", 1.0, 4, e, zj), 0.0, 40.0,
                      limit=400)[0]
        m = 2
        first = -math.exp(zj - zi) * (zi - zj) ** (m - 1) / math.factorial(
            m - 1)
        assert with_both == pytest.approx(first + second, rel=1e-9)

    def test_gauge_relation(self):
        conj = kernel_eval(KernelSpec(t=1.3, indices=(2, 5), ic=STEP_IC,
                                      conjugated=True))
        plain = kernel_eval(KernelSpec(t=1.3, indices=(2, 5), ic=STEP_IC,
                                       conjugated=False))
        for (ni, zi, nj, zj) in [(2, 0.3, 5, -1.0), (5, -2.0, 2, 1.0),
                                 (5, 0.0, 5, -0.7)]:
            a = conj((ni, zi), (nj, zj))
            b = plain((ni, zi), (nj, zj))
            assert a == pytest.approx(b * math.exp(zj - zi),
                                      rel=1e-12, abs=1e-14)

    def test_three_representations_agree(self):
        rng = np.random.default_rng(11)
        indices = (2, 5, 8)
        kerns = {rep: kernel_eval(KernelSpec(t=1.3, indices=indices,
                                             ic=STEP_IC, representation=rep))
                 for rep in ("hitting", "biorth", "operator_step")}
        for _ in range(40):
            ni = int(rng.choice(indices))
            nj = int(rng.choice(indices))
            zi = float(rng.uniform(-6, 3))
            zj = float(rng.uniform(-6, 3))
            vals = [k((ni, zi), (nj, zj)) for k in kerns.values()]
            scale = max(1.0, *map(abs, vals))
            assert (max(vals) - min(vals)) / scale < 1e-7

    def test_wedge_data_hitting_vs_operator_step(self):
        ic = idata.narrow_wedge_approx([-0.5, -1.0], eps=0.7)
        indices = (3, 6)
        rng = np.random.default_rng(13)
        e_h = kernel_eval(KernelSpec(t=0.9, indices=indices, ic=ic))
        e_o = kernel_eval(KernelSpec(t=0.9, indices=indices, ic=ic,
                                     representation="operator_step"))
        for _ in range(25):
            ni = int(rng.choice(indices))
            nj = int(rng.choice(indices))
            zi = float(rng.uniform(-8, 1))
            zj = float(rng.uniform(-8, 1))
            a = e_h((ni, zi), (nj, zj))
            b = e_o((ni, zi), (nj, zj))
            assert abs(a - b) / max(1.0, abs(a)) < 1e-9

    def test_finite_output_and_counter(self):
        spec = KernelSpec(t=1.0, indices=(1, 2), ic=idata.packed(0.0))
        kern = kernel_eval(spec)
        before = kern.evaluations
        val = kern((1, 0.0), (2, -1.0))
        assert math.isfinite(val)
        assert kern.evaluations == before + 1

    def test_out_of_spec_index_rejected(self):
        kern = kernel_eval(KernelSpec(t=1.0, indices=(1, 2),
                                      ic=idata.packed(0.0)))
        with pytest.raises(ValueError):
            kern((3, 0.0), (1, 0.0))

    def test_biorth_requires_finite_levels(self):
        ic = idata.narrow_wedge_approx([-1.0], eps=0.5)
        with pytest.raises(ValueError):
            KernelSpec(t=1.0, indices=(6,), ic=ic, representation="biorth")
