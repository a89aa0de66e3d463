import numpy as np
import pytest

from ccdist.exceptions import NoneFound
from ccdist.geodesics import (
    LikelyGM,
    NonGMEvidence,
    classify_gm,
    critical_points,
    cut_locus_test,
    solve_geodesics,
)
from ccdist.groups import GroupPoint, builtin_group
from ccdist.optimize import InnerStatus, SolverConfig, inner_sup

FAST = SolverConfig(max_k=2, restarts=4, seed=9)


@pytest.fixture
def heisenberg():

    """
    Fixture providing the first Heisenberg group

    Returns:
    StepTwoGroup: heisenberg(1)

    """
    return builtin_group("heisenberg(1)")


def test_critical_points_heisenberg(heisenberg) -> None:

    """
    Test the unique level-0 critical point theta = pi/2

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    found = critical_points(heisenberg, g, 0, FAST)

    assert len(found) == 1
    assert found[0].theta[0] == pytest.approx(np.pi / 2, abs=1e-8)
    assert found[0].value == pytest.approx(np.pi**2 / 4, rel=1e-10)
    assert found[0].hessian_determinant() < 0


def test_solve_geodesics_heisenberg(heisenberg) -> None:

    """
    Test the minimizing geodesic to ((1,0), pi/8)

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    records = solve_geodesics(heisenberg, g, 0, FAST)

    best = records[0]
    assert best.energy == pytest.approx(np.pi**2 / 4, rel=1e-8)
    assert best.energy == pytest.approx(best.value, rel=1e-8)
    assert best.endpoint_residual < 1e-7
    assert best.source == "CriticalPoint(0)"
    assert best.covector.tau[0] == pytest.approx(np.pi, abs=1e-7)
    assert set(best.to_row()) == {
        "energy",
        "value",
        "endpoint_residual",
        "source",
        "zeta",
        "tau",
    }


def test_solve_geodesics_almost_horizontal() -> None:

    """
    Test a point with small t: theta is small and the energy close to |x|^2

    Returns: None

    """
    group = builtin_group("kolmogorov(3)")
    g = GroupPoint.of([1.0, 2.0, -1.0], [1e-3, -2e-3])

    records = solve_geodesics(group, g, 0, FAST)

    assert records[0].energy == pytest.approx(6.0, rel=1e-3)
    assert np.linalg.norm(records[0].theta) < 0.1


def test_solve_geodesics_identity(heisenberg) -> None:

    """
    Test that the identity is rejected

    Returns: None

    """
    with pytest.raises(NoneFound) as e:
        solve_geodesics(heisenberg, GroupPoint.of([0, 0], [0]))

    assert str(e.value) == "Geodesic search needs a target different from the identity"


def test_cut_locus_identity(heisenberg) -> None:

    """
    Test the identity verdict

    Returns: None

    """
    verdict = cut_locus_test(heisenberg, GroupPoint.of([0, 0], [0]), FAST)

    assert verdict.verdict == "Unknown"
    assert verdict.to_dict() == {
        "verdict": "Unknown",
        "note": "the identity is excluded",
    }


def test_cut_locus_not_cut(heisenberg) -> None:

    """
    Test a point with x != 0, which is outside the cut locus

    Returns: None

    """
    verdict = cut_locus_test(heisenberg, GroupPoint.of([1.0, 0.0], [np.pi / 8]), FAST)

    assert verdict.verdict == "NotCut"
    assert verdict.witness["k_tested"] == 1
    assert verdict.witness["minimal_critical_points"] == 1
    assert not verdict.witness["classical_cut"]


def test_classify_heisenberg(heisenberg) -> None:

    """
    Test that almost every sampled Heisenberg point lies in M

    Returns: None

    """
    result = classify_gm(heisenberg, 20, seed=1, config=FAST)

    assert isinstance(result, LikelyGM)
    assert result.samples == 20
    assert result.fraction >= 0.9


def test_classify_needs_samples(heisenberg) -> None:

    """
    Test n_samples = 0

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        classify_gm(heisenberg, 0, seed=1)

    assert str(e.value) == "n_samples must be at least 1"


@pytest.mark.parametrize("t", [1.0, -0.5, 2.0])
def test_cut_locus_on_vertical_axis(heisenberg, t) -> None:

    """
    Test that points with x = 0 are cut points with many minimal critical points

    Returns: None

    """
    verdict = cut_locus_test(heisenberg, GroupPoint.of([0.0, 0.0], [t]), FAST)

    assert verdict.verdict == "Cut"
    assert verdict.witness["d2"] == pytest.approx(4 * np.pi * abs(t), rel=1e-5)
    assert verdict.witness["minimal_critical_points"] >= 2
    assert verdict.witness["classical_cut"]


def test_classify_n32_finds_evidence() -> None:

    """
    Test that sampling n32 finds points outside M whose distance exceeds the level-0
    supremum

    Returns: None

    """
    group = builtin_group("n32")

    result = classify_gm(group, 500, seed=1, max_evidence=2, config=FAST)

    assert isinstance(result, NonGMEvidence)
    assert result.samples == 500
    assert 1 <= len(result.points) <= 2
    assert result.fraction < 1.0
    for g in result.points:
        assert inner_sup(group, g, None, 0, FAST).status is InnerStatus.BOUNDARY
