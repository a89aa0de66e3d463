"""Even matrix functions of U(tau) through the real symmetric matrix S = U~^T U~.

Every kernel used by ccdist is an even analytic function of z, so it only depends
on w = z**2. On the imaginary axis (U(i tau)^2 = -S) a kernel is evaluated at
w = -beta, on the real axis (U(tau)^2 = S) at w = +beta, where beta runs over the
eigenvalues of S. Derivatives in tau follow the Daleckii-Krein formulas with divided
differences of the scalar kernel.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from ccdist.bessel import DEFAULT_TABLE, _q_unchecked
from ccdist.exceptions import DomainViolation, EigenFailure, NearBoundary
from ccdist.groups import StepTwoGroup, u_tilde

logger = logging.getLogger(__name__)

SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)
TIE_RTOL = 1e-7
DOMAIN_RTOL = 1e-12
NEAR_BOUNDARY_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class SpectralData:
    """
    Orthogonal eigendecomposition S(tau) = basis diag(beta) basis^T

    Args:
    basis (np.ndarray): orthogonal q x q matrix of eigenvectors
    beta (np.ndarray): eigenvalues of S(tau), clamped at zero
    tau (np.ndarray): evaluation point
    u (np.ndarray): the matrix U~(tau)

    """

    basis: np.ndarray
    beta: np.ndarray
    tau: np.ndarray
    u: np.ndarray

    @property
    def norm(self) -> float:
        """Operator norm of U(tau), i.e. the largest sqrt(beta_i)."""
        return float(np.sqrt(self.beta.max()))


def spectral(group: StepTwoGroup, tau: Sequence[float]) -> SpectralData:
    tau = np.asarray(tau, dtype=float)
    if not np.all(np.isfinite(tau)):
        raise ValueError("tau must be finite")
    u = u_tilde(group, tau)
    s = u.T @ u
    try:
        beta, basis = scipy.linalg.eigh(s)
    except np.linalg.LinAlgError:
        raise EigenFailure()
    beta = np.where(beta < 0.0, 0.0, beta)
    return SpectralData(basis=basis, beta=beta, tau=tau, u=u)


def _w_derivatives(name: str, k: int, w: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Value, first and second derivative in w of the scalar kernel."""
    if name == "SINC":
        a, b, c = (_q_unchecked(k + j, w) for j in range(3))
        return a / SQRT_2_OVER_PI, b / (2 * SQRT_2_OVER_PI), c / (4 * SQRT_2_OVER_PI)

    if name == "QK":
        a, b, c = (_q_unchecked(k + j, w) for j in range(3))
        return a, b / 2.0, c / 4.0

    if name in ("INV_SINC", "SINHC_DET"):
        a, b, c = (_q_unchecked(j, w) for j in range(3))
        cst = SQRT_2_OVER_PI
        curvature = -cst * (c / (4 * a**2) - b**2 / (2 * a**3))
        return cst / a, -cst * b / (2 * a**2), curvature

    # RK, COT and COTH share R_k = w Q_{k+1} / Q_k
    a, b, c, d = (_q_unchecked(k + j, w) for j in range(4))
    g = c / (2 * a) - b**2 / (2 * a**2)
    g_w = d / (4 * a) - 3 * b * c / (4 * a**2) + b**3 / (2 * a**3)
    r, r_w, r_ww = w * b / a, b / a + w * g, 2 * g + w * g_w
    if name in ("COT", "COTH"):
        r = 1.0 + r
    return r, r_w, r_ww


@dataclass(frozen=True)
class EvenKernel:
    """
    An even analytic kernel f(z) evaluated through w = sign * beta

    Args:
    name (str): COT, COTH, INV_SINC, SINC, SINHC_DET, QK or RK
    k (int): Bessel level for QK and RK
    sign (int): -1 for the imaginary axis, +1 for the real axis

    """

    name: str
    k: int = 0
    sign: int = -1

    def derivatives(
        self, beta: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        beta = np.asarray(beta, dtype=float)
        f, f_w, f_ww = _w_derivatives(self.name, self.k, self.sign * beta)
        return f, self.sign * f_w, f_ww

    def value(self, beta: np.ndarray) -> np.ndarray:
        return self.derivatives(beta)[0]

    @property
    def domain(self) -> float:
        """Supremum of admissible beta (the first pole), inf when entire."""
        if self.sign > 0 or self.name in ("SINC", "QK"):
            return np.inf
        if self.name in ("COT", "INV_SINC"):
            return np.pi**2
        return DEFAULT_TABLE.first_zero(self.k) ** 2

    def check_domain(self, beta: np.ndarray, warn: bool = False) -> None:
        bound = self.domain
        if not np.isfinite(bound):
            return
        bad = np.flatnonzero(beta >= bound * (1.0 - DOMAIN_RTOL))
        if bad.size:
            raise DomainViolation(int(bad[0]))
        if warn and np.min(bound - beta) < NEAR_BOUNDARY_RTOL * bound:
            warnings.warn(f"{self.name} evaluated close to its pole", NearBoundary)


COT = EvenKernel("COT")
COTH = EvenKernel("COTH", sign=1)
INV_SINC = EvenKernel("INV_SINC")
SINC = EvenKernel("SINC")
SINHC_DET = EvenKernel("SINHC_DET", sign=1)


def QK(k: int, axis: str = "imaginary") -> EvenKernel:
    return EvenKernel("QK", k=k, sign=-1 if axis == "imaginary" else 1)


def RK(k: int, axis: str = "imaginary") -> EvenKernel:
    return EvenKernel("RK", k=k, sign=-1 if axis == "imaginary" else 1)


def apply_even(kernel: EvenKernel, sd: SpectralData) -> np.ndarray:
    """
    Computes f(U(tau)) = basis diag(f(beta)) basis^T

    Args:
    kernel (EvenKernel): the kernel
    sd (SpectralData): spectral data of S(tau)

    Returns:
    np.ndarray: symmetric q x q matrix

    """
    kernel.check_domain(sd.beta)
    return (sd.basis * kernel.value(sd.beta)) @ sd.basis.T


def _first_differences(kernel: EvenKernel, beta: np.ndarray) -> np.ndarray:
    f, f_b, _ = kernel.derivatives(beta)
    a, b = beta[:, None], beta[None, :]
    gap = a - b
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    tie = np.abs(gap) <= TIE_RTOL * scale
    mid_slope = kernel.derivatives(0.5 * (a + b))[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (f[:, None] - f[None, :]) / gap
    return np.where(tie, mid_slope, ratio)


def _dd1(kernel: EvenKernel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    fa = kernel.value(a)
    fb = kernel.value(b)
    gap = b - a
    tie = np.abs(gap) <= TIE_RTOL * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    slope = kernel.derivatives(0.5 * (a + b))[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (fb - fa) / gap
    return np.where(tie, slope, ratio)


def _second_differences(kernel: EvenKernel, beta: np.ndarray) -> np.ndarray:
    """Array F2[a, c, b] = f[beta_a, beta_c, beta_b]."""
    q = beta.size
    pts = np.stack(np.broadcast_arrays(*np.ix_(beta, beta, beta)), axis=-1)
    pts = np.sort(pts.reshape(-1, 3), axis=1)
    x0, x1, x2 = pts[:, 0], pts[:, 1], pts[:, 2]
    spread = x2 - x0
    tie = spread <= TIE_RTOL * np.maximum(1.0, np.abs(x2))
    curvature = 0.5 * kernel.derivatives((x0 + x1 + x2) / 3.0)[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        general = (_dd1(kernel, x1, x2) - _dd1(kernel, x0, x1)) / spread
    return np.where(tie, curvature, general).reshape(q, q, q)


def _rotated_directions(group: StepTwoGroup, sd: SpectralData) -> np.ndarray:
    """E_i = V^T (U_i^T U~ + U~^T U_i) V for every i."""
    d = np.einsum("iba,bc->iac", group.U, sd.u)
    d = d + np.transpose(d, (0, 2, 1))
    return np.einsum("ba,ibc,cd->iad", sd.basis, d, sd.basis)


def _rotated_second_directions(group: StepTwoGroup, sd: SpectralData) -> np.ndarray:
    """E_il = V^T (U_i^T U_l + U_l^T U_i) V for every pair."""
    d = np.einsum("iba,lbc->ilac", group.U, group.U)
    d = d + np.transpose(d, (1, 0, 3, 2))
    return np.einsum("ba,ilbc,cd->ilad", sd.basis, d, sd.basis)


def derivative_matrices(
    group: StepTwoGroup, kernel: EvenKernel, sd: SpectralData
) -> np.ndarray:
    """
    Computes d f(U(tau)) / d tau_i for every i

    Args:
    group (StepTwoGroup): the group
    kernel (EvenKernel): the kernel
    sd (SpectralData): spectral data at tau

    Returns:
    np.ndarray: array of shape (m, q, q)

    """
    kernel.check_domain(sd.beta)
    f1 = _first_differences(kernel, sd.beta)
    e = _rotated_directions(group, sd)
    return np.einsum("ac,icd,bd->iab", sd.basis, e * f1, sd.basis)


@dataclass(frozen=True, eq=False)
class QuadraticEvaluation:
    value: float
    grad: Optional[np.ndarray]
    hess: Optional[np.ndarray]


def evaluate_quadratic(
    group: StepTwoGroup,
    kernel: EvenKernel,
    sd: SpectralData,
    x: np.ndarray,
    order: int = 2,
    warn: bool = False,
) -> QuadraticEvaluation:
    """
    Value, gradient and Hessian in tau of x^T f(U(tau)) x from one eigendecomposition

    Args:
    group (StepTwoGroup): the group
    kernel (EvenKernel): the kernel
    sd (SpectralData): spectral data at tau
    x (np.ndarray): vector of length q
    order (int): 0 value only, 1 adds the gradient, 2 adds the Hessian
    warn (bool): emit NearBoundary when tau is close to the pole

    Returns:
    QuadraticEvaluation: value, gradient (or None) and Hessian (or None)

    """
    kernel.check_domain(sd.beta, warn=warn and order > 0)
    y = sd.basis.T @ np.asarray(x, dtype=float)
    f = kernel.value(sd.beta)
    value = float(np.sum(f * y * y))
    if order == 0:
        return QuadraticEvaluation(value, None, None)

    f1 = _first_differences(kernel, sd.beta)
    e = _rotated_directions(group, sd)
    grad = np.einsum("a,iab,b->i", y, f1 * e, y)
    if order == 1:
        return QuadraticEvaluation(value, grad, None)

    e2 = _rotated_second_directions(group, sd)
    f2 = _second_differences(kernel, sd.beta)
    hess = np.einsum("a,ilab,b->il", y, f1 * e2, y)
    cross = np.einsum("a,b,acb,iac,lcb->il", y, y, f2, e, e)
    hess = hess + cross + cross.T
    return QuadraticEvaluation(value, grad, 0.5 * (hess + hess.T))


def quadratic_form(
    group: StepTwoGroup, kernel: EvenKernel, tau: Sequence[float], x: Sequence[float]
) -> float:
    sd = spectral(group, tau)
    return evaluate_quadratic(group, kernel, sd, np.asarray(x, float), order=0).value


def grad_quadratic_form(
    group: StepTwoGroup, kernel: EvenKernel, tau: Sequence[float], x: Sequence[float]
) -> np.ndarray:
    """
    Gradient in tau of x^T f(U(tau)) x by first divided differences

    Args:
    group (StepTwoGroup): the group
    kernel (EvenKernel): the kernel
    tau (Sequence[float]): evaluation point, strictly inside the kernel domain
    x (Sequence[float]): vector of length q

    Returns:
    np.ndarray: vector of length m

    """
    sd = spectral(group, tau)
    return evaluate_quadratic(
        group, kernel, sd, np.asarray(x, float), order=1, warn=True
    ).grad


def hessian_quadratic_form(
    group: StepTwoGroup, kernel: EvenKernel, tau: Sequence[float], x: Sequence[float]
) -> np.ndarray:
    sd = spectral(group, tau)
    return evaluate_quadratic(
        group, kernel, sd, np.asarray(x, float), order=2, warn=True
    ).hess


# complex arguments (shifted heat-kernel contours)


@dataclass(frozen=True, eq=False)
class ComplexSpectralData:
    """
    Batched eigendecomposition S(lambda) = W diag(beta) W^-1 for complex lambda

    Args:
    lam (np.ndarray): evaluation points, shape (n, m)
    beta (np.ndarray): eigenvalues, shape (n, q)
    vectors (np.ndarray): eigenvector matrices W, shape (n, q, q)

    """

    lam: np.ndarray
    beta: np.ndarray
    vectors: np.ndarray

    def quadratic(self, x: np.ndarray, values: np.ndarray) -> np.ndarray:
        """x^T f(S) x for every point, given values = f(beta)."""
        left = np.einsum("a,nab->nb", x.astype(complex), self.vectors)
        right = np.linalg.solve(
            self.vectors, np.broadcast_to(x.astype(complex), self.beta.shape)[..., None]
        )[..., 0]
        return np.sum(left * values * right, axis=-1)


def complex_spectral(group: StepTwoGroup, lam: np.ndarray) -> ComplexSpectralData:
    """
    Eigenvalues of the complex symmetric S(lambda) = -U~(lambda)^2 at many points

    Args:
    group (StepTwoGroup): the group
    lam (np.ndarray): complex points, shape (n, m)

    Returns:
    ComplexSpectralData: the batched decomposition

    """
    lam = np.asarray(lam, dtype=complex).reshape(-1, group.m)
    u = np.einsum("nj,jab->nab", lam, group.U)
    s = -u @ u
    try:
        beta, vectors = np.linalg.eig(s)
    except np.linalg.LinAlgError:
        raise EigenFailure()
    return ComplexSpectralData(lam=lam, beta=beta, vectors=vectors)
