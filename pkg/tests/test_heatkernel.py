import numpy as np
import pytest

from ccdist.exceptions import NotInM, UnsupportedDimension
from ccdist.groups import GroupPoint, builtin_group
from ccdist.heatkernel import (
    QuadConfig,
    asymptotic_leading_term,
    gaussian_constant,
    heat_kernel,
    heat_kernel_via_level,
    log_asymptotic_leading_term,
    normalization_constant,
    p_k_h,
    reduced_constant,
    varadhan_estimate,
    verify_relation_relPk,
)

QUICK = QuadConfig(tol=1e-9, hermite_order=12)


@pytest.fixture
def heisenberg():

    """
    Fixture providing the first Heisenberg group

    Returns:
    StepTwoGroup: heisenberg(1)

    """
    return builtin_group("heisenberg(1)")


def test_constants() -> None:

    """
    Test the normalization constants

    Returns: None

    """
    assert normalization_constant(2, 1) == pytest.approx(1 / (8 * np.pi**2))
    assert reduced_constant(2, 1) == pytest.approx(
        normalization_constant(2, 1) * np.sqrt(2 / np.pi)
    )
    assert gaussian_constant(3) == pytest.approx((2 * np.pi) ** 1.5)


def test_heat_kernel_at_identity(heisenberg) -> None:

    """
    Test p_1(o) = (1 / 8 pi^2) * int lambda / sinh lambda = 1/16

    Returns: None

    """
    est = heat_kernel(heisenberg, GroupPoint.of([0, 0], [0]), 1.0, QUICK)

    assert est.converged
    assert est.value == pytest.approx(1 / 16, rel=1e-6)
    assert est.log_value == pytest.approx(np.log(est.value), rel=1e-12)
    assert est.imag_residual < 1e-8
    assert est.to_dict()["normalization"] == "unit-mass"


def test_heat_kernel_scaling(heisenberg) -> None:

    """
    Test p_h(delta g) = h^-2 p_1(g) on the Heisenberg group

    Returns: None

    """
    g = GroupPoint.of([0.4, -0.2], [0.3])
    scaled = GroupPoint.of([0.2, -0.1], [0.075])

    one = heat_kernel(heisenberg, g, 1.0, QUICK)
    quarter = heat_kernel(heisenberg, scaled, 0.25, QUICK)

    assert quarter.value == pytest.approx(16 * one.value, rel=1e-6)


def test_heat_kernel_symmetry(heisenberg) -> None:

    """
    Test p_h(g) = p_h(g^-1)

    Returns: None

    """
    g = GroupPoint.of([0.7, 0.1], [0.4])

    left = heat_kernel(heisenberg, g, 0.5, QUICK)
    right = heat_kernel(heisenberg, GroupPoint.of([-0.7, -0.1], [-0.4]), 0.5, QUICK)

    assert left.value > 0
    assert left.value == pytest.approx(right.value, rel=1e-7)


def test_heat_kernel_small_time_log(heisenberg) -> None:

    """
    Test that the log-value stays finite when the value itself underflows

    Returns: None

    """
    est = heat_kernel(heisenberg, GroupPoint.of([1.0, 0.0], [np.pi / 8]), 1e-3, QUICK)

    assert np.isfinite(est.log_value)
    assert -4e-3 * est.log_value == pytest.approx(np.pi**2 / 4, rel=0.05)


def test_heat_kernel_matches_leading_term(heisenberg) -> None:

    """
    Test the small-time expansion at a point of M

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])

    est = heat_kernel(heisenberg, g, 0.02, QUICK)

    lead = log_asymptotic_leading_term(heisenberg, g, 0, 0.02)
    assert est.log_value - lead == pytest.approx(0.0, abs=0.1)
    assert asymptotic_leading_term(heisenberg, g, 0, 0.02) == pytest.approx(
        np.exp(lead)
    )


def test_leading_term_outside_m(heisenberg) -> None:

    """
    Test the leading term at a point with x = 0

    Returns: None

    """
    with pytest.raises(NotInM):
        log_asymptotic_leading_term(heisenberg, GroupPoint.of([0, 0], [1.0]), 0, 0.1)


def test_unsupported_dimension() -> None:

    """
    Test a group with m = 4 and a non-positive time

    Returns: None

    """
    group = builtin_group("kolmogorov(5)")

    with pytest.raises(UnsupportedDimension):
        heat_kernel(group, GroupPoint.of(np.zeros(5), np.zeros(4)), 1.0)

    with pytest.raises(ValueError) as e:
        heat_kernel(builtin_group("heisenberg(1)"), GroupPoint.of([0, 0], [0]), 0.0)
    assert str(e.value) == "Time h must be positive"


def test_via_level_zero(heisenberg) -> None:

    """
    Test the level-0 reduction against the direct integral

    Returns: None

    """
    g = GroupPoint.of([0.5, 0.2], [0.3])

    direct = heat_kernel(heisenberg, g, 0.7, QUICK)
    reduced = heat_kernel_via_level(heisenberg, g, 0.7, 0, QUICK)

    assert reduced.value == pytest.approx(direct.value, rel=1e-7)


def test_via_level_one(heisenberg) -> None:

    """
    Test the nested level-1 representation against the direct integral

    Returns: None

    """
    g = GroupPoint.of([0.5, 0.0], [0.2])

    direct = heat_kernel(heisenberg, g, 1.0, QUICK)
    nested = heat_kernel_via_level(heisenberg, g, 1.0, 1, QUICK)

    assert nested.value == pytest.approx(direct.value, rel=1e-3)


def test_via_level_size_limit() -> None:

    """
    Test the k * q limit of the nested representation

    Returns: None

    """
    group = builtin_group("n32")

    with pytest.raises(ValueError) as e:
        heat_kernel_via_level(group, GroupPoint.of([1, 0, 0], [0, 0, 0]), 1.0, 2)

    assert str(e.value) == "The nested representation supports k * q <= 4"


def test_p_k_h_positive(heisenberg) -> None:

    """
    Test that the level kernel is positive and finite

    Returns: None

    """
    est = p_k_h(heisenberg, 1, [0.3, -0.4], [0.5], 0.5, QUICK)

    assert est.value > 0
    assert est.metadata["kernel"] == "P_1,h"


def test_relation_between_levels(heisenberg) -> None:

    """
    Test P_0 against the Gaussian average of P_1

    Returns: None

    """
    report = verify_relation_relPk(heisenberg, 0, [0.3, 0.1], [0.2], 1.0, QUICK)

    assert report.discrepancy < 1e-3


def test_relation_dimension_limits() -> None:

    """
    Test the group size limits of the relation check

    Returns: None

    """
    with pytest.raises(UnsupportedDimension):
        verify_relation_relPk(builtin_group("n32"), 0, [0, 0, 0], [0, 0, 0], 1.0)
    with pytest.raises(ValueError) as e:
        verify_relation_relPk(builtin_group("heisenberg(2)"), 0, np.zeros(4), [0], 1.0)
    assert str(e.value) == "The nested relation check supports q <= 3"


def test_varadhan_heisenberg(heisenberg) -> None:

    """
    Test that the extrapolated Varadhan limit approaches d^2 = 1

    Returns: None

    """
    g = GroupPoint.of([1.0, 0.0], [0.0])

    result = varadhan_estimate(heisenberg, g, [0.1, 0.05, 0.025], QUICK)

    assert result.monotone
    assert result.estimates.shape == (3,)
    assert result.extrapolated == pytest.approx(1.0, abs=0.05)


def test_varadhan_rejects_increasing(heisenberg) -> None:

    """
    Test an increasing list of times

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        varadhan_estimate(heisenberg, GroupPoint.of([1, 0], [0]), [0.1, 0.2])

    assert str(e.value) == (
        "h_list must be a nonempty decreasing list of positive times"
    )
