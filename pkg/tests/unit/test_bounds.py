"""Tests for the k constants, the psi condition and the critical period."""

import math

import numpy as np
import pytest

from ts_pendulum.errors import MethodUnavailableError, PreconditionCKError
from ts_pendulum.services.bounds import (
    HALF_PI,
    KConstant,
    KMethod,
    Psi,
    check_zero_in_interval,
    delta_star,
    explicit_condition,
    k_constant,
    psi,
    psi_curve,
    psi_max_grid,
    t_star,
)
from ts_pendulum.services.relativistic import PendulumParams
from ts_pendulum.services.timescale import TimeScaleSpec, build_grid

SQRT3 = math.sqrt(3.0)


def params_for(T: float, c: float = 1.0) -> PendulumParams:
    """Unit friction and gravity with the given period and speed bound."""
    return PendulumParams(a=1.0, b=1.0, c=c, T=T)


class TestKConstant:
    """Tests for k_constant."""

    def test_universal(self) -> None:
        """Test k = T/2 on any scale."""
        grid = build_grid(TimeScaleSpec(period=3.0, kind="uniform_discrete", resolution=6))
        k = k_constant(grid, "universal")

        assert k.value == pytest.approx(1.5)
        assert k.method is KMethod.UNIVERSAL
        assert k.to_dict() == {"value": 1.5, "method": "universal"}

    def test_sobolev_continuous(self) -> None:
        """Test k = T/(2 sqrt 3) on the real line."""
        grid = build_grid(TimeScaleSpec(period=2.0, resolution=50))
        k = k_constant(grid, KMethod.SOBOLEV_CONTINUOUS)

        assert k.value == pytest.approx(1.0 / SQRT3)

    def test_sobolev_needs_continuous(self) -> None:
        """Test the Sobolev constant is refused on hZ."""
        grid = build_grid(TimeScaleSpec(period=1.0, kind="uniform_discrete", resolution=8))
        with pytest.raises(MethodUnavailableError):
            k_constant(grid, "sobolev_continuous")

    def test_sobolev_refused_on_union(self) -> None:
        """Test the Sobolev constant is refused on a union with isolated points."""
        spec = TimeScaleSpec(
            period=2.0, kind="interval_union", resolution=4, intervals=((0.0, 1.0),), points=(1.5,)
        )
        with pytest.raises(MethodUnavailableError):
            k_constant(build_grid(spec), "sobolev_continuous")

    def test_exact_discrete_two_points(self) -> None:
        """Test two nodes of spacing 1: the best constant is 1/2."""
        grid = build_grid(TimeScaleSpec(period=2.0, kind="uniform_discrete", resolution=2))
        k = k_constant(grid, "exact_discrete")

        assert k.value == pytest.approx(0.5, abs=1e-9)
        assert k.method is KMethod.EXACT_DISCRETE

    def test_exact_discrete_fine_lattice(self) -> None:
        """Test a fine lattice is close to T/4 and below the universal T/2."""
        grid = build_grid(TimeScaleSpec(period=1.0, kind="uniform_discrete", resolution=32))
        k = k_constant(grid, "exact_discrete")

        assert 0.24 <= k.value <= 0.26

    def test_invalid_value(self) -> None:
        """Test k must be positive."""
        with pytest.raises(ValueError):
            KConstant(0.0, "universal")


class TestPsi:
    """Tests for psi, delta* and the explicit condition."""

    def test_value(self) -> None:
        """Test psi(pi/4) with cos(ck) = 0 is pi sqrt 2 / 4."""
        assert psi(math.pi / 4, 4.0, HALF_PI) == pytest.approx(math.pi * math.sqrt(2) / 4)

    def test_vectorized(self) -> None:
        """Test arrays go in and out."""
        deltas = np.array([0.1, 0.5, 1.0])
        values = psi(deltas, 5.0, 2.0)

        assert values.shape == (3,)
        assert values[1] == pytest.approx(psi(0.5, 5.0, 2.0))

    @pytest.mark.parametrize("delta", [0.0, HALF_PI, -0.1, 2.0])
    def test_delta_out_of_range(self, delta: float) -> None:
        """Test delta outside (0, pi/2) is rejected."""
        with pytest.raises(ValueError, match="delta"):
            psi(delta, 5.0, 2.0)

    def test_ck_at_pi(self) -> None:
        """Test ck >= pi is a precondition failure."""
        with pytest.raises(PreconditionCKError):
            psi(0.5, 5.0, math.pi)

    def test_delta_star_at_half_pi(self) -> None:
        """Test d* solves cot(d) = d when cos(ck) = 0."""
        d = delta_star(HALF_PI)

        assert d == pytest.approx(0.860334, abs=1e-6)
        assert abs(math.cos(d) - d * math.sin(d)) <= 1e-10

    @pytest.mark.parametrize("ck", [0.3, 1.0, 2.0, 3.0])
    def test_delta_star_inside(self, ck: float) -> None:
        """Test d* lies in (0, pi/2) and solves the stationarity equation."""
        d = delta_star(ck)

        assert 0 < d < HALF_PI
        assert abs(math.cos(d) - d * math.sin(d) - math.cos(ck)) <= 1e-10

    def test_delta_star_precondition(self) -> None:
        """Test ck >= pi is rejected."""
        with pytest.raises(PreconditionCKError):
            delta_star(3.5)

    def test_explicit_matches_grid(self) -> None:
        """Test the closed form against a dense scan of psi."""
        assert explicit_condition(5.0, 2.0) == pytest.approx(psi_max_grid(5.0, 2.0), abs=1e-7)

    def test_explicit_is_psi_at_delta_star(self) -> None:
        """Test 2 d*^2 sin d* + cT cos ck equals psi(d*)."""
        d = delta_star(2.2)
        assert explicit_condition(4.5, 2.2) == pytest.approx(psi(d, 4.5, 2.2), abs=1e-9)

    def test_delta_star_is_stationary(self) -> None:
        """Test the central difference of psi vanishes at d*."""
        ck, cT, h = 2.0, 5.0, 1e-5
        d = delta_star(ck)
        slope = (psi(d + h, cT, ck) - psi(d - h, cT, ck)) / (2 * h)

        assert abs(slope) <= 1e-6

    def test_decreasing_in_period(self) -> None:
        """Test max psi falls as T grows with k = T/2."""
        periods = np.linspace(math.pi + 0.01, 2 * math.pi - 0.01, 25)
        values = [explicit_condition(T, 0.5 * T) for T in periods]

        assert (np.diff(values) < 0).all()

    def test_Psi_ties_k_to_T(self) -> None:
        """Test Psi uses k = T/2 or k = T/(2 sqrt 3)."""
        assert Psi(0.7, 5.0, 1.0, "universal") == pytest.approx(psi(0.7, 5.0, 2.5))
        assert Psi(0.7, 5.0, 1.0, "sobolev_continuous") == pytest.approx(
            psi(0.7, 5.0, 5.0 / (2 * SQRT3))
        )
        with pytest.raises(MethodUnavailableError):
            Psi(0.7, 5.0, 1.0, "exact_discrete")


class TestTStar:
    """Tests for the critical period."""

    def test_continuous(self) -> None:
        """Test cT* ~ 6.318 on the real line, above sqrt(3) pi."""
        T = t_star("sobolev_continuous", 1.0)

        assert 6.30 < T < 6.33
        assert T > SQRT3 * math.pi
        assert explicit_condition(T, T / (2 * SQRT3)) == pytest.approx(0.0, abs=1e-5)

    def test_universal(self) -> None:
        """Test cT* ~ 4.19 for an arbitrary scale, above pi."""
        T = t_star("universal", 1.0)

        assert 4.18 < T < 4.20
        assert T > math.pi

    @pytest.mark.parametrize("rule", ["universal", "sobolev_continuous"])
    def test_scales_with_speed(self, rule: str) -> None:
        """Test T* depends on c only through cT*."""
        assert t_star(rule, 2.0) == pytest.approx(0.5 * t_star(rule, 1.0), abs=2e-6)

    def test_exact_discrete_unavailable(self) -> None:
        """Test the LP constant has no closed form in T."""
        with pytest.raises(MethodUnavailableError):
            t_star("exact_discrete", 1.0)

    def test_nonpositive_speed(self) -> None:
        """Test c <= 0 is rejected."""
        with pytest.raises(ValueError):
            t_star("universal", 0.0)


class TestPsiCurve:
    """Tests for psi_curve."""

    def test_columns(self) -> None:
        """Test the table layout and interior sampling."""
        frame = psi_curve(5.0, 2.0, samples=50)

        assert list(frame.columns) == ["delta", "psi"]
        assert len(frame) == 50
        assert frame["delta"].min() > 0
        assert frame["delta"].max() < HALF_PI

    def test_tangent_at_continuous_threshold(self) -> None:
        """Test the curve just touches zero at cT = 6.318."""
        cT = 6.318
        frame = psi_curve(cT, cT / (2 * SQRT3), samples=2000)
        assert frame["psi"].max() == pytest.approx(0.0, abs=2e-3)

    def test_tangent_at_universal_threshold(self) -> None:
        """Test the curve touches zero at the computed T* and near 4.19."""
        T = t_star("universal", 1.0)
        frame = psi_curve(T, 0.5 * T, samples=2000)
        assert frame["psi"].max() == pytest.approx(0.0, abs=1e-5)

        frame = psi_curve(4.19, 2.095, samples=2000)
        assert frame["psi"].max() == pytest.approx(0.0, abs=3e-3)

    def test_too_few_samples(self) -> None:
        """Test fewer than 2 samples are rejected."""
        with pytest.raises(ValueError, match="samples"):
            psi_curve(5.0, 2.0, samples=1)


class TestCheckZeroInInterval:
    """Tests for check_zero_in_interval."""

    def test_simple_criterion(self) -> None:
        """Test ck = pi/2 is covered by the simple criterion."""
        report = check_zero_in_interval(params_for(math.pi), KConstant(0.5 * math.pi, "universal"))

        assert report.criterion == "simple"
        assert report.condition_holds
        assert report.strict
        assert report.A is None

    def test_continuous_threshold_sqrt3_pi(self) -> None:
        """Test T = sqrt(3) pi holds on the real line."""
        T = SQRT3 * math.pi
        k = KConstant(T / (2 * SQRT3), "sobolev_continuous")
        report = check_zero_in_interval(params_for(T), k)

        assert report.condition_holds

    def test_psi_criterion_holds(self) -> None:
        """Test T = 6 is below the continuous T* and holds strictly."""
        k = KConstant(6.0 / (2 * SQRT3), "sobolev_continuous")
        report = check_zero_in_interval(params_for(6.0), k)

        assert report.criterion == "psi"
        assert report.condition_holds
        assert report.strict
        assert report.A == pytest.approx(6.0 / (2 * SQRT3) - HALF_PI)
        assert report.psi_max == pytest.approx(explicit_condition(6.0, 6.0 / (2 * SQRT3)))

    def test_psi_criterion_fails(self) -> None:
        """Test T = 7 is beyond the continuous T*."""
        k = KConstant(7.0 / (2 * SQRT3), "sobolev_continuous")
        report = check_zero_in_interval(params_for(7.0), k)

        assert report.applicable
        assert not report.condition_holds
        assert report.psi_max < 0

    def test_inapplicable(self) -> None:
        """Test ck >= pi is reported, not raised."""
        report = check_zero_in_interval(params_for(7.0), KConstant(3.5, "universal"))

        assert not report.applicable
        assert report.criterion == "inapplicable"
        assert report.delta_star is None
        assert report.to_dict()["psi_max"] is None

    def test_speed_scales_ck(self) -> None:
        """Test ck uses the speed bound."""
        report = check_zero_in_interval(params_for(1.0, c=2.0), KConstant(0.5, "universal"))

        assert report.ck == pytest.approx(1.0)
        assert report.cT == pytest.approx(2.0)
