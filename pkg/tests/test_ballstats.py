import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from threespheres.ballstats import convexity_check, empirical_lambda_star, profile
from threespheres.bounds import classical_weight
from threespheres.errors import InvalidInputError, MonotonicityError
from threespheres.fdm2d import disk_grid, grid_from_function, solve_dirichlet
from threespheres.models import BallProfile, Geometry, RadiiTriple, SourceRole, StructuralParams
from threespheres.presets import build_spec
from threespheres.radial import extremal_drift_solution, fundamental_solution

P2 = StructuralParams(n=2, p=2.0)
T124 = RadiiTriple(r1=1.0, r2=2.0, r3=4.0)


def _profile(M, m=None, radii=(1.0, 2.0, 4.0), params=P2):
    return BallProfile(
        center=(0.0, 0.0),
        radii=np.asarray(radii),
        M=np.asarray(M, dtype=float),
        m=np.asarray(M if m is None else m, dtype=float),
        geometry=Geometry.SPHERE_MAX,
        params=params,
    )


class TestProfile:
    def test_log_sphere_example(self, log_profile):
        np.testing.assert_allclose(log_profile.M, [0.0, math.log(2.0), math.log(4.0)], atol=1e-15)
        np.testing.assert_array_equal(log_profile.M, log_profile.m)

    def test_ball_and_sphere_agree_for_increasing_sources(self):
        sol = extremal_drift_solution(StructuralParams(n=2, p=2.0, b1=1.0), -1, 0.0, 1.0)
        radii = [1.0, 1.5, 2.0, 3.0, 4.0]
        ball = profile(sol, None, radii, Geometry.BALL_MAX)
        sphere = profile(sol, None, radii, Geometry.SPHERE_MAX)
        np.testing.assert_allclose(ball.M, sphere.M, rtol=0.0, atol=1e-15)
        # the ball minimum stays at the inner radius
        np.testing.assert_allclose(ball.m, 0.0, atol=1e-15)

    def test_ball_profile_is_monotone(self):
        sol = fundamental_solution(StructuralParams(n=2, p=4.0), 0.0, 1.0)
        ball = profile(sol, None, [1.0, 2.0, 3.0, 5.0], Geometry.BALL_MAX, inner_radius=0.5)
        assert np.all(np.diff(ball.M) >= 0.0)
        assert np.all(np.diff(ball.m) <= 0.0)

    def test_constant_grid(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 16.0), lambda x, y: np.full(np.shape(x), 1.25))
        prof = profile(grid, (0.0, 0.0), [0.25, 0.5, 1.0], params=P2, role=SourceRole.SOLUTION)
        np.testing.assert_array_equal(prof.M, 1.25)
        np.testing.assert_array_equal(prof.m, 1.25)

    def test_grid_saddle_maxima(self):
        solution = solve_dirichlet(build_spec("p-laplace", P2), lambda x, y: x**2 - y**2, disk_grid(1.0, 1.0 / 64.0))
        radii = [0.25, 0.5, 0.75, 1.0]
        prof = profile(solution, (0.0, 0.0), radii, Geometry.BALL_MAX, params=P2, role=SourceRole.SOLUTION)
        np.testing.assert_allclose(prof.M, np.square(radii), atol=1e-2)
        np.testing.assert_allclose(prof.m, -np.square(radii), atol=1e-2)
        np.testing.assert_allclose(prof.osc, 2.0 * np.square(radii), atol=2e-2)

    def test_grid_sphere_shell(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 32.0), lambda x, y: np.hypot(x, y))
        prof = profile(grid, None, [0.25, 0.5, 1.0], Geometry.SPHERE_MAX, params=P2)
        np.testing.assert_allclose(prof.M, [0.25, 0.5, 1.0], atol=1e-12)
        assert np.all(prof.m >= np.array([0.25, 0.5, 1.0]) - 1.0 / 32.0 - 1e-12)

    def test_decreasing_subsolution_rejected(self):
        falling = fundamental_solution(P2, 0.0, 1.0)
        with pytest.raises(MonotonicityError):
            profile(falling, None, [1.0, 2.0, 4.0], Geometry.SPHERE_MAX, role=SourceRole.SUBSOLUTION)

    def test_decreasing_supersolution_accepted(self):
        falling = fundamental_solution(P2, 0.0, 1.0)
        prof = profile(falling, None, [1.0, 2.0, 4.0], Geometry.SPHERE_MAX, role=SourceRole.SUPERSOLUTION)
        assert prof.role == SourceRole.SUPERSOLUTION

    def test_grid_needs_params(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 16.0), lambda x, y: x)
        with pytest.raises(InvalidInputError):
            profile(grid, None, [0.5, 1.0])

    def test_grid_radius_below_two_cells(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 16.0), lambda x, y: x)
        with pytest.raises(InvalidInputError):
            profile(grid, None, [0.1, 1.0], params=P2)

    def test_ball_leaving_disk(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 16.0), lambda x, y: x)
        with pytest.raises(InvalidInputError):
            profile(grid, (0.5, 0.0), [0.25, 0.75], params=P2)

    def test_radial_sources_are_centered(self):
        with pytest.raises(InvalidInputError):
            profile(fundamental_solution(P2, 0.0, -1.0), (1.0, 0.0), [1.0, 2.0])

    def test_negated_swaps_roles(self, log_profile):
        prof = log_profile.model_copy(update={"role": SourceRole.SUBSOLUTION})
        flipped = prof.negated()
        assert flipped.role == SourceRole.SUPERSOLUTION
        np.testing.assert_array_equal(flipped.M, -prof.m)


class TestLambdaStar:
    def test_log_profile_matches_classical_weight(self, log_profile):
        star = empirical_lambda_star(log_profile, T124)
        assert star == pytest.approx(0.5, abs=1e-15)
        assert star == pytest.approx(classical_weight(P2, T124), abs=1e-15)

    def test_linear_profile(self):
        assert empirical_lambda_star(_profile([1.0, 2.0, 4.0]), T124) == pytest.approx(2.0 / 3.0)

    def test_constant_profile(self):
        assert empirical_lambda_star(_profile([3.0, 3.0, 3.0]), T124) == "all"

    def test_non_monotone_rejected(self):
        with pytest.raises(MonotonicityError):
            empirical_lambda_star(_profile([0.0, 2.0, 1.0]), T124)

    def test_unsampled_radius(self, log_profile):
        with pytest.raises(InvalidInputError):
            empirical_lambda_star(log_profile, RadiiTriple(r1=1.0, r2=3.0, r3=4.0))

    def test_dual_on_decreasing_profile(self):
        falling = profile(fundamental_solution(P2, 0.0, 1.0), None, [1.0, 2.0, 4.0], Geometry.SPHERE_MAX)
        assert empirical_lambda_star(falling, T124, dual=True) == pytest.approx(0.5, abs=1e-15)

    @given(
        values=st.lists(st.integers(min_value=-1000, max_value=1000), min_size=3, max_size=3, unique=True),
        s=st.floats(min_value=1e-3, max_value=1e3),
        c=st.floats(min_value=-1e3, max_value=1e3),
    )
    def test_affine_invariance(self, values, s, c):
        M = np.sort(np.asarray(values, dtype=float))
        base = empirical_lambda_star(_profile(M), T124)
        moved = empirical_lambda_star(_profile(s * M + c), T124)
        assert moved == pytest.approx(base, abs=1e-6)


class TestConvexity:
    def test_log_margins_vanish(self):
        prof = profile(fundamental_solution(P2, 1.0, -2.0), None, [1.0, 1.5, 2.0, 3.0, 4.0], Geometry.SPHERE_MAX)
        report = convexity_check(prof)
        assert report.convex
        assert max(abs(m) for m in report.margins) <= 1e-12

    def test_cubic_harmonic_is_convex(self):
        grid = grid_from_function(disk_grid(1.0, 1.0 / 64.0), lambda x, y: x**3 - 3.0 * x * y**2)
        prof = profile(grid, (0.0, 0.0), [0.25, 0.5, 0.75, 1.0], Geometry.BALL_MAX, params=P2, role=SourceRole.SOLUTION)
        report = convexity_check(prof)
        assert report.convex
        assert report.min_margin >= 0.0

    def test_sub_n_fundamental(self, sub_n_params):
        prof = profile(
            fundamental_solution(sub_n_params, 0.0, -1.0), None, [1.0, 2.0, 3.0, 5.0, 8.0], Geometry.SPHERE_MAX
        )
        assert max(abs(m) for m in convexity_check(prof).margins) <= 1e-12

    def test_constant_margins_vanish(self):
        report = convexity_check(_profile([2.0, 2.0, 2.0, 2.0], radii=(1.0, 2.0, 3.0, 4.0)))
        assert report.margins == pytest.approx([0.0, 0.0], abs=1e-15)
        assert report.convex

    def test_concave_profile_fails(self):
        # sqrt(log r) is concave in log r
        radii = np.array([1.0, 2.0, 4.0, 8.0])
        report = convexity_check(_profile(np.sqrt(np.log(radii)), radii=radii))
        assert not report.convex
        assert report.min_margin < 0.0

    def test_needs_three_radii(self):
        with pytest.raises(InvalidInputError):
            convexity_check(_profile([0.0, 1.0], radii=(1.0, 2.0)))
