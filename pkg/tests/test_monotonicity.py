import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tailbound.bounds import LAMBDA
from tailbound.errors import DomainError
from tailbound.monotonicity import (
    EvaluationError,
    check_pattern,
    matches_printed,
    ratio_cases,
    rho_lemma_less,
    rho_lemma_v,
    rho_lemma_w,
    rho_prime_lemma_less,
    rho_prime_lemma_w,
    rho_prime_w_tilde,
    rho_w_tilde,
    sign_change,
    verify_lhopital_case,
)

# mpmath, 50 digits
RHO_V_AT_1 = 1.7806599784941475359
RHO_W_SWITCH = 1.0113529545041598628  # sqrt of the positive root of the quartic numerator
RHO_LESS_SWITCH = 2.1069804817127292873  # lambda / sqrt(2 - lambda)
WTILDE_CUBIC_U = 0.32537779328419429100
WTILDE_SWITCH = 1.7530973985188407693


@pytest.fixture(scope="module")
def cases():
    return ratio_cases()


@pytest.fixture(scope="module")
def verdicts(cases):
    return {name: verify_lhopital_case(case) for name, case in cases.items()}


def central_ratio(f, g, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (g(x + h) - g(x - h))


class TestClosedForms:
    def test_rho_v(self):
        assert rho_lemma_v(1.0) == pytest.approx(RHO_V_AT_1, rel=1e-14)
        for x in (0.3, 1.0, 7.0):
            assert rho_lemma_v(x) / rho_lemma_v(2 * x) == pytest.approx(2.0, rel=1e-15)

    def test_rho_v_domain(self):
        with pytest.raises(DomainError):
            rho_lemma_v(0.0)

    def test_rho_prime_w_sign(self):
        assert rho_prime_lemma_w(0.5) > 0
        assert rho_prime_lemma_w(2.0) < 0
        root = sign_change(rho_prime_lemma_w, 0.5, 2.0)
        assert root == pytest.approx(RHO_W_SWITCH, abs=1e-12)

    def test_rho_prime_less_root(self):
        root = sign_change(rho_prime_lemma_less, 1.0, 4.0)
        assert root == pytest.approx(RHO_LESS_SWITCH, abs=1e-12)
        assert root == pytest.approx(LAMBDA / math.sqrt(2 - LAMBDA), abs=1e-14)

    def test_rho_less_limit_and_max(self):
        assert rho_lemma_less(1e6) == pytest.approx(1.0, abs=1e-11)
        grid = np.linspace(0.5, 10.0, 20001)
        values = [rho_lemma_less(x) for x in grid]
        assert grid[int(np.argmax(values))] == pytest.approx(RHO_LESS_SWITCH, abs=1e-3)
        assert max(values) > 1.0

    def test_rho_prime_w_tilde(self):
        assert rho_prime_w_tilde(1.3) > 0
        assert rho_prime_w_tilde(5.0) < 0
        root = sign_change(rho_prime_w_tilde, 1.3, 5.0)
        assert root == pytest.approx(WTILDE_SWITCH, abs=1e-10)
        assert root == pytest.approx(1 / math.sqrt(WTILDE_CUBIC_U), abs=1e-10)

    def test_rho_w_tilde_domain(self):
        with pytest.raises(DomainError):
            rho_w_tilde(math.sqrt(LAMBDA))
        with pytest.raises(DomainError):
            rho_prime_w_tilde(1.0)

    @pytest.mark.parametrize("func", [rho_lemma_w, rho_prime_lemma_w, rho_lemma_less, rho_prime_lemma_less])
    def test_small_x_rejected(self, func):
        with pytest.raises(DomainError):
            func(0.01)

    @pytest.mark.parametrize(
        "rho, drho, lo, hi",
        [
            (rho_lemma_w, rho_prime_lemma_w, 0.2, 10.0),
            (rho_lemma_less, rho_prime_lemma_less, 0.2, 10.0),
            (rho_w_tilde, rho_prime_w_tilde, 1.25, 10.0),
        ],
    )
    def test_derivatives_match_finite_differences(self, rho, drho, lo, hi):
        for x in np.linspace(lo, hi, 97):
            h = 1e-6
            numeric = (rho(x + h) - rho(x - h)) / (2 * h)
            assert drho(x) == pytest.approx(numeric, rel=1e-5, abs=1e-9)


class TestCheckPattern:
    def test_decreasing(self):
        report = check_pattern(lambda x: math.exp(-x), (0, 5))
        assert report.detected_pattern == "decreasing"
        assert report.switch_point is None

    def test_up_down(self):
        report = check_pattern(lambda x: x * math.exp(-x), (0, 5))
        assert report.detected_pattern == "up-down"
        assert report.switch_point == pytest.approx(1.0, abs=1e-6)

    def test_rho_w(self):
        report = check_pattern(rho_lemma_w, (0.05, 10))
        assert report.detected_pattern == "up-down"
        assert report.switch_point == pytest.approx(RHO_W_SWITCH, abs=1e-6)

    def test_increasing_and_other(self):
        assert check_pattern(lambda x: x, (1, 2)).detected_pattern == "increasing"
        assert check_pattern(math.sin, (0.1, 12), spacing="linear").detected_pattern == "other"

    def test_violation_reported_on_match(self):
        report = check_pattern(lambda x: math.exp(-x), (0, 5))
        assert report.max_violation >= 0.0
        bumpy = check_pattern(lambda x: -x + 1e-13 * math.sin(1e4 * x), (1, 2), spacing="linear")
        assert bumpy.detected_pattern == "decreasing"

    def test_negative_functions(self):
        report = check_pattern(lambda x: -x * math.exp(-x), (0.01, 5))
        assert report.detected_pattern == "other"
        assert check_pattern(lambda x: -math.exp(-x), (0, 5)).detected_pattern == "increasing"

    def test_non_finite_value(self):
        with pytest.raises(EvaluationError) as info:
            check_pattern(lambda x: math.nan if x > 1 else x, (0.5, 2))
        assert info.value.x > 1

    def test_grid_size_minimum(self):
        with pytest.raises(DomainError):
            check_pattern(math.exp, (0, 1), grid_size=50)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(1e-3, 1e3))
    def test_scale_invariance(self, c):
        base = check_pattern(lambda x: x * math.exp(-x), (0.01, 5), grid_size=500)
        scaled = check_pattern(lambda x: c * x * math.exp(-x), (0.01, 5), grid_size=500)
        assert scaled.detected_pattern == base.detected_pattern
        assert scaled.switch_point == pytest.approx(base.switch_point, abs=1e-7)

    def test_scale_by_power_of_two_is_exact(self):
        base = check_pattern(lambda x: x * math.exp(-x), (0.01, 5), grid_size=500)
        scaled = check_pattern(lambda x: 8.0 * x * math.exp(-x), (0.01, 5), grid_size=500)
        assert (scaled.detected_pattern, scaled.switch_point) == (base.detected_pattern, base.switch_point)


class TestPrinted:
    @pytest.mark.parametrize(
        "value, printed, ok",
        [(1.3124, "1.312", True), (1.3129999, "1.312", True), (1.3119, "1.312", False),
         (1.0209, "1.020", True), (1.1376, "1.13", True), (1.14, "1.13", False)],
    )
    def test_truncation(self, value, printed, ok):
        assert matches_printed(value, printed) is ok


class TestCases:
    EXPECTED_RHO = {
        "v_branches": ("decreasing", None),
        "w_branches": ("up-down", RHO_W_SWITCH),
        "v_below_w": ("up-down", RHO_LESS_SWITCH),
        "wtilde_branches": ("up-down", WTILDE_SWITCH),
    }

    def test_rho_patterns(self, verdicts):
        for name, (pattern, switch) in self.EXPECTED_RHO.items():
            report = verdicts[name].rho
            assert report.detected_pattern == pattern, name
            if switch is not None:
                assert report.switch_point == pytest.approx(switch, abs=1e-6), name

    def test_conclusions(self, verdicts):
        for name, verdict in verdicts.items():
            assert verdict.premise_ok, name
            assert verdict.conclusion_ok, name
            assert verdict.r.detected_pattern in ("decreasing", "up-down"), name

    def test_limits(self, verdicts):
        for name, verdict in verdicts.items():
            assert verdict.limits_ok, (name, verdict.limit_values)

    def test_boundary_values(self, verdicts):
        values = {(name, label): value for name, v in verdicts.items() for label, value, _ in v.boundary}
        assert values[("v_branches", "r(0)")] == pytest.approx(math.exp(LAMBDA) / 2, rel=1e-14)
        assert values[("w_branches", "r(0+)")] == pytest.approx(1.0, abs=1e-12)
        assert matches_printed(values[("w_branches", "r(1)")], "1.13")
        assert matches_printed(values[("v_below_w", "r(z_V)")], "1.020")
        assert values[("wtilde_branches", "r(sqrt(lambda))")] == pytest.approx(LAMBDA, rel=1e-14)
        assert all(ok for v in verdicts.values() for *_, ok in v.boundary)

    def test_r_above_one_after_z_v(self, cases, verdicts):
        assert verdicts["v_below_w"].min_r_above_one > 1.0
        case = cases["v_below_w"]
        for x in np.linspace(case.above_one_window[0] + 1e-9, 12.0, 2000):
            assert case.r(x) > 1.0

    def test_closed_form_matches_finite_difference(self, cases, verdicts):
        for name, case in cases.items():
            assert verdicts[name].fd_max_rel_error <= 1e-6, name
            for x in np.linspace(*case.fd_window, 25):
                assert case.rho(x) == pytest.approx(central_ratio(case.f, case.g, x), rel=1e-6)

    def test_premise_failure_skips_conclusion(self, cases):
        case = cases["v_branches"]
        broken = type(case)(**{**case.__dict__, "expected_rho_pattern": "up-down"})
        verdict = verify_lhopital_case(broken, grid_size=500)
        assert not verdict.premise_ok
        assert verdict.conclusion_ok is None and verdict.r is None
        assert not verdict.ok
