import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mixfeed.signal import (
    GridMismatchError,
    PeriodicGrid,
    PeriodicSignal,
    best_cyclic_shift,
    diff1,
    diff2,
    inner_product,
    norm,
    read_csv,
    relative_change,
    write_csv,
    zero_crossings,
)


def sig(values, period=None):
    values = np.asarray(values, dtype=float)
    return PeriodicSignal(PeriodicGrid(period or len(values), len(values)), values)


finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def signals(n_min=4, n_max=64):
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(float, n, elements=finite).map(lambda a: sig(a, period=2.0 * n))
    )


class TestGrid:
    def test_step_times_period(self):
        g = PeriodicGrid(2 * math.pi, 5000)
        assert g.step * g.num_samples == pytest.approx(g.period, rel=1e-15)

    @pytest.mark.parametrize("n", [0, 3, 2.5])
    def test_rejects_small_or_fractional_n(self, n):
        with pytest.raises(ValueError):
            PeriodicGrid(1.0, n)

    @pytest.mark.parametrize("T", [0.0, -1.0, math.inf, math.nan])
    def test_rejects_bad_period(self, T):
        with pytest.raises(ValueError):
            PeriodicGrid(T, 8)


class TestSignal:
    def test_length_checked(self):
        with pytest.raises(ValueError):
            PeriodicSignal(PeriodicGrid(1.0, 4), [1, 2, 3])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            sig([1, np.nan, 0, 0])

    def test_immutable_copy(self):
        a = np.array([1.0, 2, 3, 4])
        s = sig(a)
        a[0] = 99
        assert s.samples[0] == 1.0
        with pytest.raises(ValueError):
            s.samples[0] = 5

    def test_grid_mismatch(self):
        with pytest.raises(GridMismatchError):
            inner_product(sig([1, 2, 3, 4]), sig([1, 2, 3, 4], period=8))

    def test_arithmetic(self):
        a, b = sig([1, 2, 3, 4]), sig([1, 1, 1, 1])
        assert np.array_equal((a + b).samples, [2, 3, 4, 5])
        assert np.array_equal((a - b).samples, [0, 1, 2, 3])
        assert np.array_equal((2 * a).samples, [2, 4, 6, 8])
        assert np.array_equal((-a).samples, [-1, -2, -3, -4])

    def test_shifted_is_delay(self):
        assert np.array_equal(sig([1, 2, 3, 4]).shifted(1).samples, [4, 1, 2, 3])


class TestInnerProductAndNorm:
    def test_unit_selection(self):
        assert inner_product(sig([1, 2, 3, 4]), sig([1, 0, 0, 0])) == 1

    def test_zero_annihilates(self):
        assert inner_product(sig([5, -2, 3, 4]), sig([0, 0, 0, 0])) == 0

    def test_sin_cos_orthogonal(self):
        assert inner_product(sig([0, 1, 0, -1]), sig([1, 0, -1, 0])) == 0

    @pytest.mark.parametrize("values, expected", [([3, 4, 0, 0], 5), ([0, 0, 0, 0], 0), ([1, 1, 1, 1], 2)])
    def test_norm(self, values, expected):
        assert norm(sig(values)) == expected

    @given(signals(), st.floats(-10, 10))
    def test_symmetric_bilinear(self, a, c):
        b = a.shifted(1)
        assert inner_product(a, b) == pytest.approx(inner_product(b, a), rel=1e-12, abs=1e-9)
        assert inner_product(c * a, b) == pytest.approx(c * inner_product(a, b), rel=1e-9, abs=1e-6)


class TestDifferences:
    def test_diff1_example(self):
        assert np.array_equal(diff1(sig([0, 1, 0, -1])).samples, [1, 0, -1, 0])

    def test_diff2_example(self):
        assert np.array_equal(diff2(sig([0, 1, 0, -1])).samples, [0, -2, 0, 2])

    def test_diff2_nyquist(self):
        assert np.array_equal(diff2(sig([1, -1, 1, -1])).samples, [-4, 4, -4, 4])

    @pytest.mark.parametrize("op", [diff1, diff2])
    def test_constant_to_zero(self, op):
        assert np.array_equal(op(sig([3.5] * 6)).samples, np.zeros(6))

    @given(signals(), st.floats(-100, 100))
    def test_diff1_linear(self, x, a):
        np.testing.assert_allclose(diff1(a * x).samples, a * diff1(x).samples, rtol=1e-12, atol=1e-9)

    @settings(max_examples=100)
    @given(signals(4, 512))
    def test_diff1_antisymmetric(self, x):
        assert abs(inner_product(diff1(x), x)) <= 1e-10 * max(norm(x) ** 2, 1e-300) + 1e-300

    @settings(max_examples=100)
    @given(signals(4, 512))
    def test_diff2_negative_semidefinite(self, x):
        assert inner_product(diff2(x), x) <= 1e-10 * norm(x) ** 2 / x.grid.step**2

    @given(signals(), st.integers(-20, 20))
    def test_shift_commutes(self, x, m):
        for op in (diff1, diff2):
            np.testing.assert_allclose(op(x.shifted(m)).samples, op(x).shifted(m).samples, atol=1e-9)

    def test_second_order_convergence(self):
        T = 2 * math.pi
        errs = []
        for n in (64, 128, 256):
            g = PeriodicGrid(T, n)
            x = PeriodicSignal(g, np.sin(2 * np.pi * np.arange(n) / n))
            errs.append(np.max(np.abs(diff1(x).samples - np.cos(g.times))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.02)


class TestRelativeChange:
    def test_identical(self):
        a = sig([1, 2, 3, 4])
        assert relative_change(a, a) == 0

    def test_example(self):
        g = PeriodicGrid(1.0, 4)
        old = PeriodicSignal(g, [2, 2, 2, 2])
        new = PeriodicSignal(g, [2, 2.2, 2, 2])
        assert relative_change(new, old) == pytest.approx(0.1)

    def test_zero_old_uses_floor(self):
        assert relative_change(sig([1, 0, 0, 0]), sig([0, 0, 0, 0]), floor=1e-12) == pytest.approx(1e12)


class TestZeroCrossings:
    def test_midpoints(self):
        assert zero_crossings(sig([1, 1, -1, -1])) == pytest.approx([1.5, 3.5])

    def test_all_positive(self):
        assert zero_crossings(sig([1, 2, 3, 4])) == []

    def test_exact_zeros_counted_once(self):
        assert zero_crossings(sig([0, 1, 0, -1])) == [0.0, 2.0]
        assert zero_crossings(sig([0, 1, 0, -1]), "up") == [0.0]
        assert zero_crossings(sig([0, 1, 0, -1]), "down") == [2.0]

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            zero_crossings(sig([0, 1, 0, -1]), "sideways")

    @given(st.integers(8, 200), st.floats(0, 2 * math.pi))
    def test_sinusoid_has_two(self, n, phase):
        x = PeriodicSignal(PeriodicGrid(1.0, n), np.sin(2 * np.pi * np.arange(n) / n + phase) + 1e-3)
        assert len(zero_crossings(x)) == 2
        assert len(zero_crossings(x, "up")) == 1


class TestShiftAndCsv:
    @given(arrays(float, 32, elements=finite), st.integers(0, 31))
    def test_best_shift_recovers(self, a, m):
        if np.ptp(a) < 1e-3:
            return
        mm, d2 = best_cyclic_shift(np.roll(a, m), a)
        assert d2 == pytest.approx(0.0, abs=1e-9 * float(a @ a) + 1e-12)
        np.testing.assert_allclose(np.roll(a, mm), np.roll(a, m), atol=1e-6 * np.max(np.abs(a)))

    def test_csv_round_trip(self, tmp_path):
        g = PeriodicGrid(2 * math.pi, 16)
        x = PeriodicSignal(g, np.sin(g.times))
        write_csv(x, tmp_path / "w.csv")
        raw = (tmp_path / "w.csv").read_bytes()
        assert raw.startswith(b"t,value\n") and b"\r" not in raw
        assert raw.count(b"\n") == 17
        y = read_csv(tmp_path / "w.csv")
        assert y.grid.period == pytest.approx(g.period, rel=1e-11)
        np.testing.assert_allclose(y.samples, x.samples, atol=1e-12)

    def test_csv_bad_header(self, tmp_path):
        (tmp_path / "bad.csv").write_text("x,y\n0,1\n")
        with pytest.raises(ValueError):
            read_csv(tmp_path / "bad.csv")
