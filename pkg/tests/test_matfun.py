import warnings

import numpy as np
import pytest

from ccdist.exceptions import DomainViolation, NearBoundary
from ccdist.groups import builtin_group
from ccdist.matfun import (
    COT,
    COTH,
    INV_SINC,
    SINC,
    QK,
    RK,
    apply_even,
    derivative_matrices,
    grad_quadratic_form,
    hessian_quadratic_form,
    quadratic_form,
    spectral,
)

X3 = np.array([0.7, -1.1, 0.4])
TAU3 = np.array([0.3, -0.5, 0.8])


def _fd_grad(group, kernel, tau, x, step=1e-6):
    grad = np.zeros(tau.size)
    for i in range(tau.size):
        e = np.zeros(tau.size)
        e[i] = step
        grad[i] = (
            quadratic_form(group, kernel, tau + e, x)
            - quadratic_form(group, kernel, tau - e, x)
        ) / (2 * step)
    return grad


def test_heisenberg_kernels() -> None:

    """
    Test the scalar kernels where U(tau) = tau J

    Returns: None

    """
    group = builtin_group("heisenberg(1)")
    x = [1.0, 2.0]
    tau = 1.2

    assert quadratic_form(group, COT, [tau], x) == pytest.approx(
        5 * tau / np.tan(tau), rel=1e-12
    )
    assert quadratic_form(group, INV_SINC, [tau], x) == pytest.approx(
        5 * tau / np.sin(tau), rel=1e-12
    )
    assert quadratic_form(group, SINC, [tau], x) == pytest.approx(
        5 * np.sin(tau) / tau, rel=1e-12
    )
    assert quadratic_form(group, COTH, [tau], x) == pytest.approx(
        5 * tau / np.tanh(tau), rel=1e-12
    )


def test_kernels_at_zero() -> None:

    """
    Test f(0) for every kernel

    Returns: None

    """
    group = builtin_group("n32")

    for kernel in (COT, COTH, INV_SINC, SINC):
        assert quadratic_form(group, kernel, [0, 0, 0], X3) == pytest.approx(
            X3 @ X3, rel=1e-12
        )
    assert quadratic_form(group, RK(1), [0, 0, 0], X3) == 0.0


def test_apply_even_heisenberg() -> None:

    """
    Test f(U(tau)) as a matrix

    Returns: None

    """
    group = builtin_group("heisenberg(1)")

    mat = apply_even(COT, spectral(group, [0.9]))

    np.testing.assert_allclose(mat, 0.9 / np.tan(0.9) * np.eye(2), atol=1e-13)


def test_apply_even_symmetric() -> None:

    """
    Test that f(U(tau)) is symmetric on a group with m = 3

    Returns: None

    """
    mat = apply_even(QK(2), spectral(builtin_group("n32"), TAU3))

    np.testing.assert_allclose(mat, mat.T, atol=1e-14)


@pytest.mark.parametrize("kernel", [COT, COTH, INV_SINC, SINC, RK(0), RK(2), QK(1)])
def test_gradient_matches_finite_differences(kernel) -> None:

    """
    Test the divided-difference gradient against central differences

    Returns: None

    """
    group = builtin_group("n32")

    grad = grad_quadratic_form(group, kernel, TAU3, X3)

    np.testing.assert_allclose(
        grad, _fd_grad(group, kernel, TAU3, X3), rtol=1e-6, atol=1e-8
    )


def test_hessian_matches_finite_differences() -> None:

    """
    Test the Hessian against differences of the gradient

    Returns: None

    """
    group = builtin_group("kolmogorov(3)")
    x = np.array([0.5, 1.0, -0.8])
    tau = np.array([0.4, 1.1])
    step = 1e-6

    hess = hessian_quadratic_form(group, COT, tau, x)

    fd = np.zeros((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = step
        fd[:, i] = (
            grad_quadratic_form(group, COT, tau + e, x)
            - grad_quadratic_form(group, COT, tau - e, x)
        ) / (2 * step)
    np.testing.assert_allclose(hess, fd, rtol=1e-5, atol=1e-7)
    np.testing.assert_allclose(hess, hess.T)


def test_gradient_with_repeated_eigenvalues() -> None:

    """
    Test the tie branch on an H-type group where every eigenvalue is double

    Returns: None

    """
    group = builtin_group("htype(4,3)")
    x = np.array([1.0, 0.2, -0.4, 0.9])

    grad = grad_quadratic_form(group, COT, TAU3, x)

    np.testing.assert_allclose(
        grad, _fd_grad(group, COT, TAU3, x), rtol=1e-6, atol=1e-8
    )


def test_derivative_matrices() -> None:

    """
    Test that x^T dF x reproduces the gradient

    Returns: None

    """
    group = builtin_group("n32")
    sd = spectral(group, TAU3)

    mats = derivative_matrices(group, COT, sd)

    np.testing.assert_allclose(
        np.einsum("a,iab,b->i", X3, mats, X3),
        grad_quadratic_form(group, COT, TAU3, X3),
        rtol=1e-10,
    )


def test_domain_violation() -> None:

    """
    Test COT at the first pole

    Returns: None

    """
    group = builtin_group("heisenberg(1)")

    with pytest.raises(DomainViolation):
        quadratic_form(group, COT, [np.pi], [1.0, 0.0])
    assert quadratic_form(group, COTH, [np.pi], [1.0, 0.0]) > 0


def test_near_boundary_warning() -> None:

    """
    Test the warning close to the pole

    Returns: None

    """
    group = builtin_group("heisenberg(1)")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        grad_quadratic_form(group, COT, [np.pi * (1 - 1e-10)], [1.0, 0.0])

    assert any(issubclass(w.category, NearBoundary) for w in caught)


def test_spectral_rejects_nan() -> None:

    """
    Test non-finite tau

    Returns: None

    """
    with pytest.raises(ValueError) as e:
        spectral(builtin_group("heisenberg(1)"), [np.nan])

    assert str(e.value) == "tau must be finite"
