import itertools
import math

import numpy as np
import pytest

from threespheres.errors import InvalidInputError, RadialBlowUpError, ShootingBracketError
from threespheres.models import Provenance, StructuralParams
from threespheres.params import check_structure, quasi_random_samples
from threespheres.presets import build_spec
from threespheres.radial import (
    extremal_drift_solution,
    fundamental_solution,
    phi,
    phi_inverse,
    reflected_solution,
    solve_radial_bvp,
    solve_radial_ivp,
)

LADDER = (64, 128, 256, 512)


def test_phi_inverse_round_trip():
    s = np.array([-3.0, -0.2, 0.0, 0.5, 7.0])
    for p in (1.5, 2.0, 3.0, 4.0):
        np.testing.assert_allclose(phi_inverse(phi(s, p), p), s, rtol=1e-14, atol=0.0)
    assert phi_inverse(0.0, 1.5) == 0.0


class TestExactFamilies:
    def test_fundamental_sub_n_example(self):
        sol = fundamental_solution(StructuralParams(n=3, p=2.0), 0.0, 1.0)
        r = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(sol.value(r), 1.0 / r)
        assert np.max(np.abs(sol.residual(r))) <= 1e-12

    def test_fundamental_border_example(self):
        sol = fundamental_solution(StructuralParams(n=2, p=2.0), 0.0, -1.0)
        r = np.array([1.0, 2.0, 5.0])
        np.testing.assert_allclose(sol.value(r), np.log(r))
        assert np.max(np.abs(sol.residual(r))) <= 1e-12

    def test_fundamental_constant(self):
        sol = fundamental_solution(StructuralParams(n=2, p=4.0), 3.0, 0.0)
        np.testing.assert_array_equal(sol.value(np.array([1.0, 9.0])), [3.0, 3.0])

    @pytest.mark.parametrize("sign", [1, -1])
    @pytest.mark.parametrize("b1", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("n, p", [(2, 2.0), (3, 2.0), (2, 4.0), (3, 1.5)])
    def test_extremal_residual_vanishes(self, sign, b1, n, p):
        sol = extremal_drift_solution(StructuralParams(n=n, p=p, b1=b1), sign, 0.5, 1.0, scale=1.5)
        r = np.linspace(1.0, 6.0, 41)
        scale = np.max(np.abs(sol.flux_derivative(r))) + 1.0
        assert np.max(np.abs(sol.residual(r))) <= 1e-10 * scale

    @pytest.mark.parametrize("sign", [1, -1])
    @pytest.mark.parametrize("n, p", [(2, 2.0), (3, 2.0), (2, 4.0)])
    def test_reflected_extremal_solves_flipped_preset(self, sign, n, p):
        base = extremal_drift_solution(StructuralParams(n=n, p=p, b1=1.0), sign, 0.5, 1.0, scale=2.0)
        mirror = reflected_solution(base)
        assert mirror.preset_name == ("riccati-extremal-minus" if sign > 0 else "riccati-extremal-plus")
        assert mirror.r_min == 1.0
        r = np.linspace(1.0, 6.0, 41)
        np.testing.assert_array_equal(mirror.value(r), -base.value(r))
        scale = np.max(np.abs(mirror.flux_derivative(r))) + 1.0
        assert np.max(np.abs(mirror.residual(r))) <= 1e-10 * scale
        # the unflipped preset leaves a residual of twice the drift
        assert np.max(np.abs(mirror.residual(r, base.equation()))) > 1e-3

    def test_reflected_fundamental_keeps_preset(self):
        base = fundamental_solution(StructuralParams(n=3, p=2.0), 1.0, -1.0)
        mirror = reflected_solution(base)
        assert mirror.preset_name == "p-laplace"
        assert mirror.provenance == Provenance.EXACT_FUNDAMENTAL
        r = np.array([1.0, 2.0, 4.0])
        np.testing.assert_allclose(mirror.value(r), -1.0 + 1.0 / r)
        assert np.max(np.abs(mirror.residual(r))) <= 1e-12

    def test_extremal_examples(self):
        plus = extremal_drift_solution(StructuralParams(n=2, p=2.0, b1=1.0), 1, 2.0, 1.5)
        assert plus.beta == 0.0
        np.testing.assert_allclose(plus.value(np.array([1.5, 4.0])), [2.0, 4.5])
        minus = extremal_drift_solution(StructuralParams(n=2, p=2.0, b1=1.0), -1, 0.0, 2.0)
        assert minus.beta == -2.0
        np.testing.assert_allclose(minus.value(np.array([4.0])), [0.5 - 0.25])

    def test_extremal_log_branch(self):
        # beta = -1: sign * b1 + 1 - n = -(p - 1)
        sol = extremal_drift_solution(StructuralParams(n=3, p=2.0, b1=1.0), 1, 0.0, 1.0)
        assert sol.beta == -1.0
        np.testing.assert_allclose(sol.value(np.array([math.e])), [1.0])

    def test_extremal_without_drift_is_fundamental(self):
        params = StructuralParams(n=2, p=2.0, b1=0.0)
        ext = extremal_drift_solution(params, 1, 0.0, 1.0)
        fund = fundamental_solution(params, 0.0, -1.0)
        r = np.linspace(1.0, 3.0, 9)
        np.testing.assert_allclose(ext.value(r), fund.value(r), atol=1e-15)

    def test_extremal_rejects_inner_radius_below_one(self):
        with pytest.raises(InvalidInputError):
            extremal_drift_solution(StructuralParams(n=2, p=2.0, b1=1.0), 1, 0.0, 0.5)

    def test_exact_profile_provenance(self):
        prof = fundamental_solution(StructuralParams(n=2, p=2.0), 0.0, -1.0).sample(1.0, 4.0, steps=32)
        assert prof.provenance == Provenance.EXACT_FUNDAMENTAL
        assert prof.mesh.size == 33

    @pytest.mark.parametrize("name", ["riccati-extremal-plus", "riccati-extremal-minus", "p-laplace"])
    def test_generating_presets_satisfy_structure(self, name):
        params = StructuralParams(n=3, p=2.0, b1=1.0)
        assert check_structure(build_spec(name, params), quasi_random_samples(3, count=64)).passed


def _exact_cases():
    cases = []
    for n, p in itertools.product((2, 3), (1.5, 2.0, 3.0, 4.0)):
        params = StructuralParams(n=n, p=p)
        b = 1.0 if params.regime.value == "gt_n" else -1.0
        cases.append(pytest.param(fundamental_solution(params, 0.0, b), id=f"fundamental-n{n}-p{p}"))
    for n, p, b1, sign in itertools.product((2, 3), (1.5, 2.0, 3.0, 4.0), (0.5, 1.0, 2.0), (1, -1)):
        params = StructuralParams(n=n, p=p, b1=b1)
        cases.append(pytest.param(extremal_drift_solution(params, sign, 0.0, 1.0), id=f"extremal-n{n}-p{p}-b{b1}-{sign:+d}"))
    return cases


def _relative_error(exact, steps, r_in=1.0, r_out=4.0):
    r_in = max(r_in, exact.r_min)
    prof = solve_radial_ivp(
        exact.equation(), r_in, float(exact.value(r_in)), float(exact.derivative(r_in)), r_out, steps
    )
    truth = exact.value(prof.mesh)
    spread = float(np.max(np.abs(truth - truth[0])))
    return float(np.max(np.abs(prof.values - truth))) / spread


@pytest.mark.parametrize("exact", _exact_cases())
def test_ivp_fourth_order(exact):
    errors = [_relative_error(exact, steps) for steps in LADDER]
    assert errors[-1] <= 1e-8
    # pairs whose finer error sits at roundoff say nothing about the order
    resolved = [(coarse, fine) for coarse, fine in zip(errors, errors[1:], strict=False) if fine > 1e-11]
    if resolved:
        coarse, fine = resolved[-1]
        assert math.log2(coarse / fine) >= 3.8


class TestIVP:
    def test_extremal_example(self):
        params = StructuralParams(n=2, p=2.0, b1=1.0)
        spec = build_spec("riccati-extremal-plus", params)
        prof = solve_radial_ivp(spec, 1.0, 0.0, 1.0, 4.0, steps=512)
        exact = extremal_drift_solution(params, 1, 0.0, 1.0)
        np.testing.assert_allclose(prof.values, exact.value(prof.mesh), rtol=1e-8, atol=1e-12)
        assert prof.provenance == Provenance.NUMERIC_IVP

    def test_zero_slope_gives_constant(self):
        spec = build_spec("p-laplace", StructuralParams(n=3, p=1.5))
        prof = solve_radial_ivp(spec, 1.0, 2.0, 0.0, 5.0, steps=64)
        np.testing.assert_array_equal(prof.values, 2.0)
        np.testing.assert_array_equal(prof.derivative_values, 0.0)

    def test_blow_up_signalled(self):
        spec = build_spec("riccati-extremal-plus", StructuralParams(n=2, p=2.0, b1=2.0))
        with pytest.raises(RadialBlowUpError) as info:
            solve_radial_ivp(spec, 1.0, 0.0, 1.0, 100.0, steps=64, cap=10.0)
        assert info.value.radius > 1.0

    @pytest.mark.parametrize("r_in, r_out, steps", [(0.0, 1.0, 32), (2.0, 1.0, 32), (1.0, 2.0, 8)])
    def test_rejects_bad_interval(self, r_in, r_out, steps):
        spec = build_spec("p-laplace", StructuralParams(n=2, p=2.0))
        with pytest.raises(InvalidInputError):
            solve_radial_ivp(spec, r_in, 0.0, 1.0, r_out, steps)


class TestBVP:
    def test_recovers_logarithm(self):
        spec = build_spec("p-laplace", StructuralParams(n=2, p=2.0))
        prof = solve_radial_bvp(spec, 1.0, 0.0, math.e, 1.0, steps=512)
        np.testing.assert_allclose(prof.values, np.log(prof.mesh), atol=1e-6)
        assert prof.provenance == Provenance.NUMERIC_BVP

    def test_recovers_extremal_minus(self):
        spec = build_spec("riccati-extremal-minus", StructuralParams(n=2, p=2.0, b1=1.0))
        prof = solve_radial_bvp(spec, 1.0, 0.0, 4.0, 0.75, steps=512)
        np.testing.assert_allclose(prof.values, 1.0 - 1.0 / prof.mesh, atol=1e-6)

    def test_equal_ends_give_constant(self):
        spec = build_spec("riccati-extremal-plus", StructuralParams(n=3, p=2.0, b1=1.0))
        prof = solve_radial_bvp(spec, 1.0, -1.5, 3.0, -1.5, steps=64)
        np.testing.assert_array_equal(prof.values, -1.5)
        assert prof.derivative_values[0] == 0.0

    def test_decreasing_data(self):
        spec = build_spec("p-laplace", StructuralParams(n=3, p=2.0))
        prof = solve_radial_bvp(spec, 1.0, 1.0, 2.0, 0.5, steps=256)
        # 1/r through both ends
        np.testing.assert_allclose(prof.values, 1.0 / prof.mesh, atol=1e-8)

    def test_shooting_map_is_monotone(self):
        params = StructuralParams(n=3, p=2.0, b1=1.0)
        spec = build_spec("riccati-extremal-minus", params)
        ends = [solve_radial_ivp(spec, 1.0, 0.0, s, 8.0, steps=128).values[-1] for s in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert all(a < b for a, b in zip(ends, ends[1:], strict=False))

    def test_unreachable_target(self):
        # u(2) - u(1) = s/2 for slope s, so the cap keeps the end below 5
        spec = build_spec("p-laplace", StructuralParams(n=3, p=2.0))
        with pytest.raises(ShootingBracketError):
            solve_radial_bvp(spec, 1.0, 0.0, 2.0, 1e9, steps=32, derivative_cap=10.0)

    def test_sub_solutions_have_nondecreasing_maxima(self):
        spec = build_spec("riccati-extremal-plus", StructuralParams(n=3, p=2.0, b1=0.5))
        prof = solve_radial_bvp(spec, 1.0, 0.0, 8.0, 2.0, steps=256)
        assert np.all(np.diff(prof.values) >= 0.0)
