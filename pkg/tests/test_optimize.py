from dataclasses import replace

import numpy as np
import pytest

from ccdist.groups import GroupPoint, builtin_group
from ccdist.optimize import (
    InnerStatus,
    SolverConfig,
    distance,
    inner_sup,
    lower_bound,
    minimax_residual_check,
    outer_inf,
    restart_points,
    upper_bound_if_in_Mk,
)
from ccdist.oracle import heisenberg_closed_form

FAST = SolverConfig(max_k=3, restarts=4, seed=5)


@pytest.fixture
def heisenberg():

    """
    Fixture providing the first Heisenberg group

    Returns:
    StepTwoGroup: heisenberg(1)

    """
    return builtin_group("heisenberg(1)")


def test_solver_config_validation() -> None:

    """
    Test rejected solver knobs

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        SolverConfig(tol_grad=0.0)
    assert str(e.value) == "SolverConfig.tol_grad must be positive"

    with pytest.raises(ValueError):
        SolverConfig(max_k=-1)


def test_inner_sup_interior(heisenberg) -> None:

    """
    Test the interior maximizer theta = pi/2 at ((1,0), pi/8)

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    result = inner_sup(heisenberg, g, None, 0)

    assert result.status is InnerStatus.INTERIOR
    assert result.theta[0] == pytest.approx(np.pi / 2, abs=1e-8)
    assert result.value == pytest.approx(np.pi**2 / 4, rel=1e-12)
    assert result.nondegenerate


def test_inner_sup_boundary(heisenberg) -> None:

    """
    Test the linear objective 4 tau whose supremum sits on the boundary

    Returns: None

    """
    result = inner_sup(heisenberg, GroupPoint.of([0.0, 0.0], [1.0]), None, 0)

    assert result.status is InnerStatus.BOUNDARY
    assert result.value == pytest.approx(4 * np.pi, rel=1e-5)
    assert result.value < 4 * np.pi


def test_inner_sup_identity() -> None:

    """
    Test the identity: theta = 0 with value 0 at every level

    Returns: None

    """
    group = builtin_group("n32")
    o = GroupPoint.of(np.zeros(3), np.zeros(3))

    for k in (0, 2):
        result = inner_sup(group, o, np.zeros((k, 3)), k)
        assert result.status is InnerStatus.INTERIOR
        assert result.value == 0.0
        np.testing.assert_array_equal(result.theta, np.zeros(3))


def test_inner_sup_warm_start(heisenberg) -> None:

    """
    Test that a warm start converges to the same maximizer in fewer steps

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    cold = inner_sup(heisenberg, g, None, 0)
    warm = inner_sup(heisenberg, g, None, 0, tau0=[1.5])

    assert warm.theta[0] == pytest.approx(cold.theta[0], abs=1e-8)
    assert warm.iterations <= cold.iterations


def test_restart_points_deterministic() -> None:

    """
    Test that restarts are seeded and start with s = 0

    Returns: None

    """
    g = GroupPoint.of([1.0, 2.0], [0.5])

    first = restart_points(g, 2, 2, FAST)
    second = restart_points(g, 2, 2, FAST)

    assert len(first) == FAST.restarts + 1
    np.testing.assert_array_equal(first[0], np.zeros((2, 2)))
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a, b)


def test_outer_inf_horizontal_point() -> None:

    """
    Test a point with t = 0: value |x|^2 with s = 0 and theta = 0

    Returns: None

    """
    group = builtin_group("kolmogorov(3)")
    g = GroupPoint.of([0.3, 0.1, -0.2], [0.0, 0.0])

    result = outer_inf(group, g, 1, FAST)

    assert result.attained
    assert result.value == pytest.approx(0.14, rel=1e-8)
    np.testing.assert_allclose(result.theta_star, 0.0, atol=1e-7)
    np.testing.assert_allclose(result.s_star, 0.0, atol=1e-6)


def test_distance_heisenberg_interior(heisenberg) -> None:

    """
    Test d^2 = pi^2/4 at ((1,0), pi/8), attained at level 0

    Returns: None

    """
    cert = distance(heisenberg, GroupPoint.of([1.0, 0.0], [np.pi / 8]), FAST)

    assert cert.attained
    assert cert.k_used == 0
    assert cert.d2 == pytest.approx(np.pi**2 / 4, rel=1e-10)
    assert cert.lower <= cert.upper * (1 + 1e-8)
    assert cert.upper == pytest.approx(np.pi**2 / 4, rel=1e-6)
    assert cert.diagnostics["levels"][0]["status"] == "Interior"


@pytest.mark.parametrize("t", [0.5, -0.5, 1.0, -1.0, 2.0, -2.0])
def test_distance_heisenberg_vertical(heisenberg, t) -> None:

    """
    Test d^2 = 4 pi |t| on the vertical axis: level 0 hits the boundary, level 1
    attains

    Returns: None

    """
    cert = distance(heisenberg, GroupPoint.of([0.0, 0.0], [t]), FAST)

    assert cert.attained
    assert cert.k_used >= 1
    assert cert.d2 == pytest.approx(4 * np.pi * abs(t), rel=1e-5)
    assert cert.diagnostics["levels"][0]["status"] == "Boundary"
    assert not cert.diagnostics["levels"][0]["attained"]


def test_distance_identity(heisenberg) -> None:

    """
    Test the identity

    Returns: None

    """
    cert = distance(heisenberg, GroupPoint.of([0.0, 0.0], [0.0]))

    assert cert.d2 == 0.0
    assert cert.attained
    assert cert.to_dict()["covector"] == {"zeta": [0.0, 0.0], "tau": [0.0]}


def test_distance_is_homogeneous(heisenberg) -> None:

    """
    Test d(delta_r g)^2 = r^2 d(g)^2

    Returns: None

    """
    g = GroupPoint.of([0.8, -0.3], [0.2])
    scaled = GroupPoint.of([1.6, -0.6], [0.8])

    d_g = distance(heisenberg, g, FAST).d2
    d_scaled = distance(heisenberg, scaled, FAST).d2

    assert d_scaled == pytest.approx(4 * d_g, rel=1e-8)


def test_lower_bound_horizontal(heisenberg) -> None:

    """
    Test the level-0 lower bound |x|^2 at t = 0

    Returns: None

    """
    value = lower_bound(heisenberg, GroupPoint.of([1.0, 0.0], [0.0]), 0)

    assert value == pytest.approx(1.0, rel=1e-12)


def test_lower_bound_monotone_in_k() -> None:

    """
    Test that the level values do not decrease

    Returns: None

    """
    group = builtin_group("kolmogorov(3)")
    g = GroupPoint.of([0.2, 0.5, -0.1], [0.6, -0.3])

    values = [lower_bound(group, g, k, FAST) for k in range(3)]

    for a, b in zip(values, values[1:]):
        assert a <= b + 1e-6


def test_upper_bound_if_in_Mk(heisenberg) -> None:

    """
    Test membership at theta = 0 and the boundary case

    Returns: None

    """
    horizontal = GroupPoint.of([0.6, 0.8], [0.0])
    vertical = GroupPoint.of([0.0, 0.0], [1.0])

    bound = upper_bound_if_in_Mk(heisenberg, horizontal, None, 0)

    assert bound == pytest.approx(1.0, rel=1e-12)
    assert upper_bound_if_in_Mk(heisenberg, vertical, None, 0) is None


def test_minimax_residual_check(heisenberg) -> None:

    """
    Test agreement inside Omega_0 and divergence between Omega_0 and Omega_1

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    inside_zero, inside, outside = minimax_residual_check(
        heisenberg, g, None, [[0.0], [0.9 * np.pi], [1.1 * np.pi]], 0
    )

    assert inside_zero.inside and inside_zero.agrees
    assert inside.inside and inside.agrees
    assert not outside.inside
    assert outside.diverges


def test_minimax_residual_check_single_theta(heisenberg) -> None:

    """
    Test that one theta_star gives one check

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    checks = minimax_residual_check(heisenberg, g, None, [np.pi / 2], 0)

    assert len(checks) == 1
    assert checks[0].inside and checks[0].agrees
    assert checks[0].level_value == pytest.approx(np.pi**2 / 4, rel=1e-12)


def test_inner_sup_gradient_at_roundoff(heisenberg) -> None:

    """
    Test interior points where the tau-gradient levels off at round-off

    Returns: None

    """
    for x, t in [(0.7, 0.368), (0.8, 0.684), (0.8, -0.684)]:
        g = GroupPoint.of([x, 0.0], [t])

        result = inner_sup(heisenberg, g, None, 0)

        assert result.status is InnerStatus.INTERIOR
        assert result.iterations < 50
        assert result.value == pytest.approx(
            heisenberg_closed_form([x, 0.0], t), rel=1e-10
        )


def test_distance_heisenberg_grid(heisenberg) -> None:

    """
    Test distance against the closed form on a 20 x 20 grid with x != 0

    Returns: None

    """
    config = SolverConfig(max_k=1, restarts=0, seed=5)

    for r in np.linspace(0.1, 2.0, 20):
        for t in np.linspace(-1.0, 1.0, 20):
            cert = distance(heisenberg, GroupPoint.of([r, 0.0], [t]), config)

            assert cert.k_used == 0, (r, t)
            assert cert.attained, (r, t)
            assert cert.d2 == pytest.approx(
                heisenberg_closed_form([r, 0.0], t), rel=1e-8
            ), (r, t)


def test_distance_bracket_has_upper_bound(heisenberg) -> None:

    """
    Test that an unattained level 0 still reports a finite upper bound

    Returns: None

    """
    config = SolverConfig(max_k=0, restarts=2, seed=5)

    cert = distance(heisenberg, GroupPoint.of([0.0, 0.0], [1.0]), config)

    assert not cert.attained
    assert np.isfinite(cert.upper)
    assert cert.lower <= cert.upper
    assert cert.d2 == cert.upper
    assert cert.upper == pytest.approx(4 * np.pi, rel=1e-3)
    assert cert.to_dict()["upper"] == cert.upper


def test_restart_points_warm_start_first() -> None:

    """
    Test that the previous optimum, padded with a zero segment, is tried first

    Returns: None

    """
    g = GroupPoint.of([1.0, 2.0], [0.5])
    warm = np.array([[0.3, -0.1]])

    starts = restart_points(g, 2, 2, FAST, warm)

    assert len(starts) == FAST.restarts + 2
    np.testing.assert_array_equal(starts[0], [[0.3, -0.1], [0.0, 0.0]])
    np.testing.assert_array_equal(starts[1], np.zeros((2, 2)))


def test_outer_inf_skips_restarts_once_attained() -> None:

    """
    Test that the random restarts only run when asked once s = 0 attains

    Returns: None

    """
    group = builtin_group("kolmogorov(3)")
    g = GroupPoint.of([0.3, 0.1, -0.2], [0.0, 0.0])

    staged = outer_inf(group, g, 1, FAST)
    exhaustive = outer_inf(group, g, 1, replace(FAST, always_restart=True))

    assert staged.attained
    assert staged.restarts == 1
    assert exhaustive.restarts > staged.restarts
    assert exhaustive.value == pytest.approx(staged.value, rel=1e-8)
