import math
import re

import numpy as np
import pytest

from conftest import oracle_cycle
from mixfeed.operators import GainRelation, LtiRelation, StaticPolyRelation
from mixfeed.signal import PeriodicGrid, PeriodicSignal, diff1, write_csv
from mixfeed.systems import (
    MixedFeedbackSystem,
    SystemFileError,
    VdpParams,
    default_lambda,
    describing_function_baseline,
    double_well,
    initial_guess_ramp,
    load_system,
    period_guess,
    van_der_pol,
)


class TestVanDerPol:
    def test_zero_K_is_linear(self):
        s = van_der_pol(0.0)
        assert s.e1.is_zero and s.e2.gain == 0.0
        assert s.autonomous

    def test_coefficients(self):
        s = van_der_pol(VdpParams(1.5))
        assert s.h_inverse == LtiRelation((1, 0, 1), (0, 1))
        assert s.e1.coeffs == (0.0, 0.0, 0.0, 0.5)
        assert isinstance(s.e2, GainRelation) and s.e2.gain == 1.5
        assert van_der_pol(10).e2.gain == 10

    def test_negative_K(self):
        with pytest.raises(ValueError):
            VdpParams(-1.0)

    def test_table_lambda(self):
        assert [default_lambda(k) for k in (0.0002, 1.5, 10)] == [0.05, 0.05, 0.01]

    def test_nonmonotone_system_rejected(self):
        with pytest.raises(ValueError):
            MixedFeedbackSystem(
                LtiRelation((1, 0, 1), (0, 1)),
                StaticPolyRelation((0.0,)),
                GainRelation(-1.0),
            )


class TestDoubleWell:
    def test_roots_are_zeros(self):
        p = double_well()
        assert p.roots == pytest.approx((-math.sqrt(3), 0.0, math.sqrt(3)))
        for r in p.roots:
            assert p.A(r) - p.B(r) == pytest.approx(0.0, abs=1e-12)

    def test_values(self):
        p = double_well()
        assert p.A(1.0) == pytest.approx(1 / 3) and p.B(1.0) == 1.0
        assert p.objective(math.sqrt(3)) == pytest.approx(-0.75)


class TestHeuristics:
    def test_period_guess_values(self):
        assert period_guess(0.0002) == pytest.approx(2 * math.pi)
        assert period_guess(1.5) == pytest.approx(2 * math.pi)
        assert period_guess(10) == pytest.approx(16.137, abs=1e-3)

    @pytest.mark.parametrize("K", [0.0002, 1.5, 10.0])
    def test_period_guess_within_capture_range(self, K):
        # the solver's period search moves at most 20% per step and starts with a 5% probe;
        # a guess within 20% of the true period is captured
        T = oracle_cycle(K, step=1e-3).period
        assert abs(period_guess(K) - T) / T < 0.2

    def test_describing_function_constant(self):
        assert describing_function_baseline(0.0002) == (2.0, 1.0)
        assert describing_function_baseline(1.5) == describing_function_baseline(10.0) == (2.0, 1.0)

    def test_ramp(self):
        assert np.array_equal(initial_guess_ramp(PeriodicGrid(4, 4)).samples, [0, 1, 2, 3])
        assert np.array_equal(initial_guess_ramp(PeriodicGrid(4, 4), 0.0).samples, np.zeros(4))
        r = initial_guess_ramp(PeriodicGrid(2 * math.pi, 5000))
        assert r.samples[4999] == pytest.approx(6.2819, abs=1e-4)


VDP_FILE = """\
label = "vdp from file"

[lti]
numerator = [1.0, 0.0, 1.0]
denominator = [0.0, 1.0]

[e1]
coeffs = [0.0, 0.0, 0.0, 0.5]

[e2]
coeffs = [0.0, 1.5]
"""


class TestSystemFile:
    def test_round_trip_matches_builtin(self, tmp_path):
        p = tmp_path / "vdp.toml"
        p.write_text(VDP_FILE)
        s = load_system(p)
        ref = van_der_pol(1.5)
        assert s.h_inverse == ref.h_inverse and s.e1 == ref.e1 and s.e2 == ref.e2
        assert s.label == "vdp from file" and s.autonomous

    def test_sine_input(self, tmp_path):
        p = tmp_path / "forced.toml"
        p.write_text(VDP_FILE + '\n[input]\nkind = "sine"\namplitude = 0.5\nfrequency = 2.0\n')
        s = load_system(p)
        g = PeriodicGrid(math.pi, 16)
        np.testing.assert_allclose(s.input_on(g), 0.5 * np.sin(2 * g.times))
        assert not s.autonomous

    def test_file_input(self, tmp_path):
        g = PeriodicGrid(2 * math.pi, 32)
        write_csv(PeriodicSignal(g, np.cos(g.times)), tmp_path / "u.csv")
        p = tmp_path / "forced.toml"
        p.write_text(VDP_FILE + '\n[input]\nkind = "file"\npath = "u.csv"\n')
        u = load_system(p).input_on(PeriodicGrid(2 * math.pi, 32))
        np.testing.assert_allclose(u, np.cos(g.times), atol=1e-11)

    @pytest.mark.parametrize(
        "old, new, needle",
        [
            ("coeffs = [0.0, 1.5]", "coeffs = [0.0, -1.5]", "line 11, key 'e2.coeffs'"),
            ("numerator = [1.0, 0.0, 1.0]", "numerator = [1.0, 0.0, 1.0, 1.0]", "line 4, key 'lti.numerator'"),
            ("coeffs = [0.0, 0.0, 0.0, 0.5]", 'coeffs = "cubic"', "line 8, key 'e1.coeffs'"),
            ("denominator = [0.0, 1.0]\n", "", "key 'lti.denominator': missing"),
        ],
    )
    def test_errors_name_line_and_key(self, tmp_path, old, new, needle):
        p = tmp_path / "bad.toml"
        p.write_text(VDP_FILE.replace(old, new))
        with pytest.raises(SystemFileError, match=re.escape(needle)):
            load_system(p)

    def test_syntax_error(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("[lti\n")
        with pytest.raises(SystemFileError):
            load_system(p)

    def test_unknown_input_kind(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text(VDP_FILE + '\n[input]\nkind = "square"\n')
        with pytest.raises(SystemFileError, match="input.kind"):
            load_system(p)


class TestConvergedSolutions:
    def test_power_balance(self, vdp_solution):
        _, rep = vdp_solution
        x = rep.solution
        dx = diff1(x).samples
        lhs = np.sum((x.samples**2 - 1.0) * dx**2)
        assert abs(lhs) <= 0.02 * np.sum(dx**2)

    def test_half_wave_symmetry(self, vdp_solution):
        _, rep = vdp_solution
        x = rep.solution.samples
        n = x.size
        # N is even, so T/2 is a whole number of samples
        dev = np.max(np.abs(np.roll(x, -n // 2) + x))
        assert dev < 0.05 * rep.amplitude
