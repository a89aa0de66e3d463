import numpy as np
import pytest

from ccdist.exceptions import DimensionMismatch
from ccdist.groups import GroupPoint, builtin_group, inverse
from ccdist.optimize import SolverConfig, distance
from ccdist.oracle import (
    OracleConfig,
    direct_distance,
    heisenberg_closed_form,
    heisenberg_mu,
    heisenberg_theta,
    integrate_controls,
    shooting_distance,
)

SMALL = OracleConfig(segments=24, restarts=2, shooting_starts=8, seed=4)


@pytest.fixture
def heisenberg():

    """
    Fixture providing the first Heisenberg group

    Returns:
    StepTwoGroup: heisenberg(1)

    """
    return builtin_group("heisenberg(1)")


@pytest.mark.parametrize(
    "x, t, expected",
    [
        ([1.0, 0.0], np.pi / 8, np.pi**2 / 4),
        ([1.0, 0.0], 0.0, 1.0),
        ([0.0, 0.0], 1.0, 4 * np.pi),
        ([0.0, 0.0], -0.5, 2 * np.pi),
    ],
)
def test_heisenberg_closed_form(x, t: float, expected: float) -> None:

    """
    Test the Heisenberg distance formula

    Returns: None

    """
    assert heisenberg_closed_form(x, t) == pytest.approx(expected, rel=1e-12)


def test_heisenberg_mu() -> None:

    """
    Test that mu is odd and increasing with mu(pi/2) = pi/2

    Returns: None

    """
    thetas = np.linspace(-3.0, 3.0, 301)
    values = np.array([heisenberg_mu(th) for th in thetas])

    assert np.all(np.diff(values) > 0)
    np.testing.assert_allclose(values, -values[::-1], atol=1e-9)
    assert heisenberg_mu(np.pi / 2) == pytest.approx(np.pi / 2, rel=1e-14)
    assert heisenberg_mu(0.99e-4) == pytest.approx(2 * 0.99e-4 / 3, rel=1e-8)
    assert heisenberg_mu(1.01e-4) == pytest.approx(2 * 1.01e-4 / 3, rel=1e-6)
    assert heisenberg_theta([1.0, 0.0], np.pi / 8) == pytest.approx(np.pi / 2)


def test_integrate_controls_square(heisenberg) -> None:

    """
    Test a closed unit square loop: x returns to 0 and t equals the area

    Returns: None

    """
    u = [[4.0, 0.0], [0.0, 4.0], [-4.0, 0.0], [0.0, -4.0]]

    end = integrate_controls(heisenberg, u)

    np.testing.assert_allclose(end.x, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(end.t, [1.0])


def test_integrate_controls_reversal() -> None:

    """
    Test that the reversed and negated controls reach the inverse point

    Returns: None

    """
    group = builtin_group("n32")
    u = np.random.default_rng(2).normal(size=(10, 3))

    end = integrate_controls(group, u)
    back = integrate_controls(group, -u[::-1])

    expected = inverse(end)
    np.testing.assert_allclose(back.x, expected.x, atol=1e-13)
    np.testing.assert_allclose(back.t, expected.t, atol=1e-13)


def test_integrate_controls_shape(heisenberg) -> None:

    """
    Test controls of the wrong width

    Returns: None

    """
    with pytest.raises(DimensionMismatch):
        integrate_controls(heisenberg, [[1.0, 0.0, 0.0]])


def test_direct_distance_straight_line(heisenberg) -> None:

    """
    Test the straight segment to ((1,0), 0)

    Returns: None

    """
    energy, path = direct_distance(
        heisenberg, GroupPoint.of([1.0, 0.0], [0.0]), config=SMALL
    )

    assert energy == pytest.approx(1.0, rel=1e-6)
    assert path.N == 24
    assert path.length == pytest.approx(1.0, rel=1e-3)


def test_direct_distance_upper_bounds(heisenberg) -> None:

    """
    Test that the discrete energy sits slightly above pi^2/4

    Returns: None

    """
    energy, _ = direct_distance(
        heisenberg, GroupPoint.of([1.0, 0.0], [np.pi / 8]), config=SMALL
    )

    assert np.pi**2 / 4 - 1e-6 <= energy <= 1.02 * np.pi**2 / 4


def test_direct_distance_needs_segments(heisenberg) -> None:

    """
    Test N below 8

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        direct_distance(heisenberg, GroupPoint.of([1.0, 0.0], [0.0]), N=4)

    assert str(e.value) == "The direct oracle needs at least 8 segments"


def test_shooting_distance(heisenberg) -> None:

    """
    Test the shooting oracle against the closed form

    Returns: None

    """
    best, covectors = shooting_distance(
        heisenberg, GroupPoint.of([1.0, 0.0], [np.pi / 8]), config=SMALL
    )

    assert best == pytest.approx(np.pi**2 / 4, rel=1e-8)
    energies = [float(c.zeta @ c.zeta) for c in covectors]
    assert energies == sorted(energies)


def test_shooting_distance_identity(heisenberg) -> None:

    """
    Test that the identity is rejected

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        shooting_distance(heisenberg, GroupPoint.of([0.0, 0.0], [0.0]))

    assert str(e.value) == "Shooting needs a target different from the identity"


def test_n32_distance_matches_oracles() -> None:

    """
    Test the n32 distance against the smaller of the direct and shooting energies

    Returns: None

    """
    group = builtin_group("n32")
    config = SolverConfig(max_k=3, restarts=4, seed=4)
    oracle = OracleConfig(restarts=2, seed=4)
    rng = np.random.default_rng(4)

    for _ in range(3):
        g = GroupPoint.of(rng.uniform(-1, 1, 3), rng.uniform(-1, 1, 3))

        direct, _ = direct_distance(group, g, N=128, config=oracle)
        shooting, _ = shooting_distance(group, g, config=oracle)
        best = min(direct, shooting)

        d2 = distance(group, g, config).d2
        assert abs(d2 - best) <= 1e-3 * max(1.0, best), g
