import math

import numpy as np
import pytest

from threespheres.ballstats import empirical_lambda_star, profile
from threespheres.bounds import classical_weight, lambda_exponent, lambda_formula
from threespheres.errors import InvalidInputError, RegimeMismatchError
from threespheres.families import border_radial_family
from threespheres.fdm2d import disk_grid, grid_from_function, solve_dirichlet
from threespheres.models import (
    BallProfile,
    BoundMode,
    EnvelopeMode,
    Geometry,
    PhiMode,
    RadiiTriple,
    SourceRole,
    StructuralParams,
    ThreeSpheresBound,
)
from threespheres.presets import build_spec
from threespheres.radial import ExtremalDriftSolution, fundamental_solution
from threespheres.verify import (
    calibrate_constant,
    check_three_spheres,
    energy_ratio_diagnostic,
    family_lambda_floor,
    liouville_check,
    liouville_witness,
    sweep,
    validate_constant,
)

from .conftest import HADAMARD_RADII, all_triples

P2 = StructuralParams(n=2, p=2.0)
T124 = RadiiTriple(r1=1.0, r2=2.0, r3=4.0)


def _profile(M, radii=(1.0, 2.0, 4.0), m=None, params=P2, envelope=EnvelopeMode.GLOBAL_DECAY):
    return BallProfile(
        center=(0.0, 0.0),
        radii=np.asarray(radii, dtype=float),
        M=np.asarray(M, dtype=float),
        m=np.asarray(M if m is None else m, dtype=float),
        geometry=Geometry.SPHERE_MAX,
        params=params,
        envelope=envelope,
    )


def _classical(triple, lam, mode=BoundMode.CLASSICAL_N):
    return ThreeSpheresBound(triple=triple, lam=lam, mode=mode)


class TestCheckThreeSpheres:
    def test_log_equality(self, log_profile):
        report = check_three_spheres(log_profile, _classical(T124, 0.5))
        assert report.passed
        assert abs(report.margin) <= 1e-15
        assert report.lambda_star == pytest.approx(0.5)

    def test_linear_profile_margin(self):
        report = check_three_spheres(_profile([1.0, 2.0, 4.0]), _classical(T124, 0.5))
        assert report.margin == pytest.approx(0.5)
        assert report.passed

    @pytest.mark.parametrize("lam", [0.05, 0.5, 0.95])
    def test_constant_profile(self, lam):
        report = check_three_spheres(_profile([7.0, 7.0, 7.0]), _classical(T124, lam))
        assert report.margin == pytest.approx(0.0, abs=1e-14)
        assert report.passed
        assert report.lambda_star == "all"

    @pytest.mark.parametrize("params, mode", [(StructuralParams(n=2, p=2.0), BoundMode.CLASSICAL_N), (StructuralParams(n=3, p=2.0), BoundMode.CLASSICAL_SUB_N)])
    def test_fundamental_profiles_are_extremal(self, params, mode):
        prof = profile(fundamental_solution(params, 0.5, -2.0), None, HADAMARD_RADII, Geometry.BALL_MAX)
        for triple in all_triples(HADAMARD_RADII):
            lam = classical_weight(params, triple)
            assert abs(check_three_spheres(prof, _classical(triple, lam, mode)).margin) <= 1e-10
            assert not check_three_spheres(prof, _classical(triple, min(1.0, lam + 1e-3), mode)).passed

    def test_regime_mismatch(self, log_profile):
        bound = ThreeSpheresBound(triple=T124, lam=0.1, mode=BoundMode.P_GT_N, C=1.0)
        with pytest.raises(RegimeMismatchError):
            check_three_spheres(log_profile, bound)

    def test_local_form_needs_unit_ball(self):
        prof = _profile([0.0, math.log(2.0), math.log(4.0)], envelope=EnvelopeMode.CONSTANT)
        with pytest.raises(InvalidInputError):
            check_three_spheres(prof, _classical(T124, 0.5), local=True)

    def test_local_form_inside_unit_ball(self):
        triple = RadiiTriple(r1=0.25, r2=0.5, r3=1.0)
        prof = _profile([0.0, 1.0, 2.0], radii=(0.25, 0.5, 1.0), envelope=EnvelopeMode.CONSTANT)
        assert check_three_spheres(prof, _classical(triple, 0.5), local=True).passed

    def test_local_form_rejects_decaying_envelope(self):
        triple = RadiiTriple(r1=0.25, r2=0.5, r3=1.0)
        prof = _profile([0.0, 1.0, 2.0], radii=(0.25, 0.5, 1.0))
        assert prof.envelope == EnvelopeMode.GLOBAL_DECAY
        with pytest.raises(RegimeMismatchError):
            check_three_spheres(prof, _classical(triple, 0.5), local=True)
        assert check_three_spheres(prof, _classical(triple, 0.5)).passed

    def test_profile_records_envelope(self):
        exact = fundamental_solution(P2, 0.0, -1.0)
        radii = (0.25, 0.5, 1.0)
        assert profile(exact, None, radii, Geometry.SPHERE_MAX).envelope == EnvelopeMode.GLOBAL_DECAY
        local = profile(exact, None, radii, Geometry.SPHERE_MAX, envelope=EnvelopeMode.CONSTANT)
        assert local.envelope == EnvelopeMode.CONSTANT
        assert local.negated().envelope == EnvelopeMode.CONSTANT
        triple = RadiiTriple(r1=0.25, r2=0.5, r3=1.0)
        report = check_three_spheres(local, _classical(triple, classical_weight(P2, triple)), local=True)
        assert abs(report.margin) <= 1e-12

    def test_dual_form(self):
        falling = _profile([0.0, -1.0, -2.0], m=[0.0, -1.0, -2.0])
        report = check_three_spheres(falling, _classical(T124, 0.5), dual=True)
        assert report.dual
        assert report.margin == pytest.approx(0.0, abs=1e-15)

    def test_affine_invariance(self):
        base = _profile([1.0, 2.0, 4.0])
        moved = _profile([3.0 * v - 5.0 for v in (1.0, 2.0, 4.0)])
        for lam in (0.3, 0.6, 2.0 / 3.0, 0.7):
            first = check_three_spheres(base, _classical(T124, lam))
            second = check_three_spheres(moved, _classical(T124, lam))
            assert first.passed == second.passed
            assert second.margin == pytest.approx(3.0 * first.margin, abs=1e-12)


def test_consistency_with_lambda_star(rng):
    triple = RadiiTriple(r1=1.0, r2=2.0, r3=3.0)
    for _ in range(1000):
        M1 = rng.uniform(-10.0, 10.0)
        d1, d2 = rng.uniform(0.01, 5.0, size=2)
        prof = _profile([M1, M1 + d1, M1 + d1 + d2], radii=(1.0, 2.0, 3.0))
        star = empirical_lambda_star(prof, triple)
        below = check_three_spheres(prof, _classical(triple, star * (1.0 - 1e-9)), tol=0.0)
        above = check_three_spheres(prof, _classical(triple, star * (1.0 + 1e-9)), tol=0.0)
        assert below.passed
        assert not above.passed
        assert check_three_spheres(prof, _classical(triple, star), tol=1e-12).passed
        assert not check_three_spheres(prof, _classical(triple, star * (1.0 + 1e-9)), tol=1e-12).passed


class TestCalibration:
    def test_single_member(self, log_profile):
        result = calibrate_constant([log_profile], [T124], BoundMode.BORDER_N)
        K = lambda_exponent(BoundMode.BORDER_N, P2, T124)
        assert result.C_min == pytest.approx(math.log(2.0) / K, rel=1e-14)
        assert result.family_size == 1
        assert result.binding_triple == T124

    def test_fundamental_family_uses_classical_weights(self):
        triples = all_triples(HADAMARD_RADII)
        profs = [
            profile(fundamental_solution(P2, a, b), None, HADAMARD_RADII, Geometry.SPHERE_MAX)
            for a, b in ((0.0, -1.0), (3.0, -0.25))
        ]
        result = calibrate_constant(profs, triples, BoundMode.BORDER_N)
        expected = max(-math.log(classical_weight(P2, t)) / lambda_exponent(BoundMode.BORDER_N, P2, t) for t in triples)
        assert result.C_min == pytest.approx(expected, rel=1e-12)

    def test_soundness(self):
        family = border_radial_family()
        result = calibrate_constant(family.profiles, family.triples, BoundMode.BORDER_N)
        for prof in family.profiles:
            for triple in family.triples:
                lam = lambda_formula(BoundMode.BORDER_N, P2, triple, result.C_min)
                assert lam <= empirical_lambda_star(prof, triple) + 1e-8
        binding = family.profiles[result.binding_index]
        relaxed = lambda_formula(BoundMode.BORDER_N, P2, result.binding_triple, result.C_min / 2.0)
        assert relaxed > empirical_lambda_star(binding, result.binding_triple)
        reports = validate_constant(family.profiles, family.triples, BoundMode.BORDER_N, result.C_min)
        assert all(r.passed for r in reports)

    def test_constant_member_rejected(self):
        with pytest.raises(InvalidInputError):
            calibrate_constant([_profile([1.0, 1.0, 1.0])], [T124], BoundMode.BORDER_N)

    def test_empty_family_rejected(self):
        with pytest.raises(InvalidInputError):
            calibrate_constant([], [T124], BoundMode.BORDER_N)

    def test_lambda_floor_skips_constant_members(self):
        floor = family_lambda_floor([_profile([1.0, 1.0, 1.0]), _profile([1.0, 2.0, 4.0]), _profile([0.0, 1.0, 1.5])], [T124])
        assert floor == pytest.approx(1.0 / 3.0)

    def test_lambda_floor_needs_a_star(self):
        with pytest.raises(InvalidInputError):
            family_lambda_floor([_profile([1.0, 1.0, 1.0])], [T124])


class TestSweep:
    def test_order_matches_sequential(self):
        family = border_radial_family()
        triples = family.triples

        def bound_fn(prof, triple):
            return _classical(triple, classical_weight(prof.params, triple))

        reports = sweep(family.profiles, triples, bound_fn, max_workers=4)
        expected = [
            check_three_spheres(prof, bound_fn(prof, t)) for prof in family.profiles for t in triples
        ]
        assert [r.margin for r in reports] == [r.margin for r in expected]
        assert [r.triple for r in reports] == [r.triple for r in expected]

    def test_dual_symmetry(self):
        family = border_radial_family()
        for prof in family.profiles:
            for triple in family.triples:
                bound = _classical(triple, classical_weight(P2, triple))
                primal = check_three_spheres(prof, bound)
                dual = check_three_spheres(prof.negated(), bound, dual=True)
                assert primal.passed == dual.passed
                assert dual.margin == pytest.approx(primal.margin, abs=1e-12)


class TestEnergyRatio:
    def test_constant_source(self):
        ratio = energy_ratio_diagnostic(fundamental_solution(P2, 2.0, 0.0), P2, PhiMode.LOG_SUB, T124)
        assert ratio == 0.0

    def test_constant_grid(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 16.0), lambda x, y: np.full(np.shape(x), 3.0))
        triple = RadiiTriple(r1=0.25, r2=0.5, r3=1.0)
        assert energy_ratio_diagnostic(grid, P2, PhiMode.LOG_SUPER, triple) == 0.0

    def test_log_profile_is_stable_under_refinement(self):
        exact = fundamental_solution(P2, 0.0, -1.0)
        ratios = [
            energy_ratio_diagnostic(exact.sample(1.0, 4.0, steps=steps), P2, PhiMode.LOG_SUB, T124)
            for steps in (64, 128)
        ]
        assert all(math.isfinite(r) and r > 0.0 for r in ratios)
        assert ratios[1] == pytest.approx(ratios[0], rel=0.05)
        assert energy_ratio_diagnostic(exact, P2, PhiMode.LOG_SUB, T124) == pytest.approx(ratios[1], rel=0.05)

    def test_sub_n_ratio(self, sub_n_params):
        source = fundamental_solution(sub_n_params, 0.0, -1.0)
        ratio = energy_ratio_diagnostic(source, sub_n_params, PhiMode.LOG_SUB, T124)
        assert math.isfinite(ratio) and ratio > 0.0

    def test_extremal_family_sweep(self):
        family = border_radial_family()
        by_sign = {}
        for prof in family.profiles:
            source = prof.source
            if not isinstance(source, ExtremalDriftSolution):
                continue
            ratios = [energy_ratio_diagnostic(source, source.params, PhiMode.LOG_SUB, t) for t in family.triples]
            assert all(math.isfinite(r) and r > 0.0 for r in ratios)
            by_sign.setdefault(source.sign, []).append(ratios)
        assert sorted(by_sign) == [-1, 1]
        # members of one sign differ by u -> s u + c, which leaves the ratio unchanged
        for runs in by_sign.values():
            assert len(runs) == 4
            for other in runs[1:]:
                np.testing.assert_allclose(other, runs[0], rtol=1e-6)

    def test_grid_ratio_is_stable_under_refinement(self):
        spec = build_spec("p-laplace", P2)
        triple = RadiiTriple(r1=0.25, r2=0.5, r3=1.0)
        ratios = []
        for h in (1.0 / 32.0, 1.0 / 64.0):
            solution = solve_dirichlet(spec, lambda x, y: x**2 - y**2, disk_grid(1.0, h))
            ratios.append(energy_ratio_diagnostic(solution, P2, PhiMode.LOG_SUB, triple, center=(0.0, 0.0)))
        assert all(math.isfinite(r) and r > 0.0 for r in ratios)
        assert ratios[1] == pytest.approx(ratios[0], rel=0.1)

    def test_degenerate_phi_rejected(self):
        with pytest.raises(InvalidInputError):
            energy_ratio_diagnostic(fundamental_solution(P2, 2.0, 0.0), P2, PhiMode.LOG_SUB, T124, epsilon=0.0)


class TestLiouville:
    def test_contradiction_example(self):
        assert liouville_check(1.0, 0.2, 0.01, 0.9)

    def test_constant_solution(self):
        assert not liouville_check(1.0, 0.2, 1.0, 1.0)

    @pytest.mark.parametrize("M_r1", [0.0, 0.5, 1.0])
    def test_low_second_maximum(self, M_r1):
        assert not liouville_check(1.0, 0.2, M_r1, 0.8)

    @pytest.mark.parametrize("args", [(1.0, 0.2, -0.1, 0.5), (1.0, 0.2, 0.1, 1.5), (1.0, 1.0, 0.1, 0.5), (1.0, 0.0, 0.1, 0.5)])
    def test_rejects_bad_inputs(self, args):
        with pytest.raises(InvalidInputError):
            liouville_check(*args)

    def test_witness(self):
        prof = _profile([0.0, 0.01, 0.9, 1.0], radii=(1.0, 2.0, 3.0, 4.0))
        assert liouville_witness(prof, 0.2) == (1.0, 3.0)

    def test_no_witness_for_constant(self):
        assert liouville_witness(_profile([0.5, 0.5, 0.5]), 0.2) is None


def test_supersolution_profile_reports_dual(log_profile):
    prof = log_profile.model_copy(update={"role": SourceRole.SUBSOLUTION}).negated()
    report = check_three_spheres(prof, _classical(T124, 0.5), dual=True)
    assert report.passed
    assert report.lambda_star == pytest.approx(0.5)
