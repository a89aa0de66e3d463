"""Heat kernel p_h, the level kernels P_{k,h}, their asymptotics and Varadhan limits.

Both kernels are Fourier integrals over lambda in R^m of an entire amplitude times
exp(-quadratic / h). The integrand continues analytically to the tube
R^m + i Omega_k, and on the line Im lambda = theta through the saddle of the reference
function its modulus peaks at Re lambda = 0 with value exp(-phi(theta) / 4h). The
quadrature runs on that line and keeps the result in logarithmic form, so small times
lose no digits to cancellation.

The normalization is the unit-mass one: C_{q,m} = (2 pi)^-m (4 pi)^-(q/2).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.polynomial.legendre import leggauss

from ccdist import settings
from ccdist.bessel import log_q_k, log_q_k_complex, r_k_complex
from ccdist.exceptions import NotInM, Unconverged, UnsupportedDimension
from ccdist.groups import GroupPoint, StepTwoGroup, bracket
from ccdist.matfun import INV_SINC, complex_spectral, spectral
from ccdist.optimize import InnerResult, InnerStatus, SolverConfig, inner_sup
from ccdist.reference import f_k_map

logger = logging.getLogger(__name__)

MAX_M = 3
LOG_SQRT_2_OVER_PI = 0.5 * np.log(2.0 / np.pi)
BOUNDARY_PULLBACK = 0.5


def normalization_constant(q: int, m: int) -> float:
    """C_{q,m} = (2 pi)^-m (4 pi)^-(q/2), the constant giving p_h unit mass."""
    return (2.0 * np.pi) ** -m * (4.0 * np.pi) ** (-q / 2.0)


def reduced_constant(q: int, m: int) -> float:
    """C~_{q,m} with p_h(x, t) = C~ exp(-|x|^2 / 4h) P_{0,h}(x / sqrt(2), t)."""
    return normalization_constant(q, m) * (2.0 / np.pi) ** (q / 4.0)


def gaussian_constant(q: int) -> float:
    return (2.0 * np.pi) ** (q / 2.0)


@dataclass(frozen=True)
class QuadConfig:
    """
    Quadrature knobs shared by the heat-kernel integrals

    Args:
    order (int): Gauss-Legendre nodes per panel and axis
    panels (int): initial panels per axis, doubled until convergence
    tol (float): absolute tolerance on the saddle-normalized integral
    lambda_cap (float): largest truncation radius
    max_doublings (int): panel doublings before giving up
    max_nodes (int): cap on the tensor grid size
    hermite_order (int): Gauss-Hermite nodes per axis in nested s-integrals
    shift (bool): integrate on the saddle line instead of the real line
    chunk (int): points per evaluation batch
    threads (int): worker threads for the batches

    """

    order: int = 32
    panels: int = 4
    tol: float = 1e-8
    lambda_cap: float = 200.0
    max_doublings: int = 7
    max_nodes: int = 2_000_000
    hermite_order: int = 16
    shift: bool = True
    chunk: int = 4096
    threads: int = settings.max_workers()


@dataclass(frozen=True, eq=False)
class HeatKernelEstimate:
    """
    Value of a heat-type kernel with its quadrature diagnostics

    Args:
    value (float): kernel value (may underflow to 0, see log_value)
    log_value (float): natural logarithm of the value
    h (float): time
    quad_error (float): estimated absolute error of value
    truncation_radius (float): half-width of the lambda box
    imag_residual (float): imaginary part of the integral, on the value scale
    converged (bool): panel doubling reached the tolerance
    shift (np.ndarray): imaginary offset of the integration line
    metadata (Dict): normalization and node counts

    """

    value: float
    log_value: float
    h: float
    quad_error: float
    truncation_radius: float
    imag_residual: float
    converged: bool
    shift: np.ndarray
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "value": self.value,
            "log_value": self.log_value,
            "h": self.h,
            "quad_error": self.quad_error,
            "truncation_radius": self.truncation_radius,
            "imag_residual": self.imag_residual,
            "converged": self.converged,
            "shift": self.shift.tolist(),
            **self.metadata,
        }


# integrands


LogIntegrand = Callable[[np.ndarray], np.ndarray]


def _heat_log_integrand(
    group: StepTwoGroup, x: np.ndarray, t: np.ndarray, h: float
) -> LogIntegrand:
    """log of V(lambda) exp(-<U coth U x, x> / 4h + i t.lambda / h)."""

    def fun(lam: np.ndarray) -> np.ndarray:
        csd = complex_spectral(group, lam)
        log_amp = 0.5 * np.sum(LOG_SQRT_2_OVER_PI - log_q_k_complex(0, csd.beta), -1)
        expo = 1j * (csd.lam @ t) / h
        if np.any(x):
            coth = 1.0 + r_k_complex(0, csd.beta)
            expo = expo - csd.quadratic(x, coth) / (4.0 * h)
        return log_amp + expo

    return fun


def _level_log_integrand(
    group: StepTwoGroup, k: int, X: np.ndarray, T: np.ndarray, h: float
) -> LogIntegrand:
    """log of det Q_k(U(lambda))^-1/2 exp(-(<R_k X, X> - 2i T.lambda) / 2h)."""

    def fun(lam: np.ndarray) -> np.ndarray:
        csd = complex_spectral(group, lam)
        log_amp = -0.5 * np.sum(log_q_k_complex(k, csd.beta), axis=-1)
        expo = 1j * (csd.lam @ T) / h
        if np.any(X):
            expo = expo - csd.quadratic(X, r_k_complex(k, csd.beta)) / (2.0 * h)
        return log_amp + expo

    return fun


# saddles


def _saddle_heat(group: StepTwoGroup, g: GroupPoint) -> InnerResult:
    return inner_sup(group, g, None, 0, SolverConfig())


def _saddle_level(
    group: StepTwoGroup, k: int, X: np.ndarray, T: np.ndarray
) -> Tuple[InnerResult, float]:
    """Maximizer of tau -> phi_k((X, T); tau) and the value of phi_k there."""
    if k == 0:
        inner = inner_sup(group, GroupPoint.of(np.sqrt(2.0) * X, T), None, 0)
        return inner, inner.value - 2.0 * float(X @ X)
    s = np.zeros((k, group.q))
    s[-1] = X
    origin_t = GroupPoint.of(np.zeros(group.q), T)
    inner = inner_sup(group, origin_t, s, k)
    return inner, inner.value - 2.0 * (2 * k + 1) * float(X @ X)


def _line_offset(inner: InnerResult, h: float, quad: QuadConfig) -> np.ndarray:
    if not quad.shift:
        return np.zeros_like(inner.theta)
    if inner.status is InnerStatus.INTERIOR:
        return inner.theta
    return inner.theta * (1.0 - min(BOUNDARY_PULLBACK, h))


# quadrature


def _legendre_axis(radius: float, panels: int, order: int) -> Tuple[np.ndarray, ...]:
    y, w = leggauss(order)
    edges = np.linspace(-radius, radius, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * y[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _tensor_grid(
    nodes: np.ndarray, weights: np.ndarray, m: int
) -> Tuple[np.ndarray, np.ndarray]:
    grids = np.meshgrid(*([nodes] * m), indexing="ij")
    wgrids = np.meshgrid(*([weights] * m), indexing="ij")
    points = np.stack([gr.ravel() for gr in grids], axis=-1)
    return points, np.prod(np.stack([wg.ravel() for wg in wgrids]), axis=0)


def _evaluate(fun: Callable, points: np.ndarray, quad: QuadConfig) -> np.ndarray:
    chunks = [points[i : i + quad.chunk] for i in range(0, len(points), quad.chunk)]
    with ThreadPoolExecutor(max_workers=quad.threads) as pool:
        return np.concatenate(list(pool.map(fun, chunks)))


def _face_points(radius: float, m: int) -> np.ndarray:
    if m == 1:
        return np.array([[-radius], [radius]])
    line = np.linspace(-radius, radius, 9)
    faces = []
    for axis, sign in product(range(m), (-1.0, 1.0)):
        rest = np.meshgrid(*([line] * (m - 1)), indexing="ij")
        pts = np.stack([r.ravel() for r in rest], axis=-1)
        faces.append(np.insert(pts, axis, sign * radius, axis=1))
    return np.vstack(faces)


def _truncation_radius(fun: Callable, m: int, quad: QuadConfig) -> Tuple[float, bool]:
    radius = 0.5
    while radius <= quad.lambda_cap:
        if np.max(np.abs(fun(_face_points(radius, m)))) <= 1e-3 * quad.tol:
            return radius, True
        radius *= 2.0
    return quad.lambda_cap, False


def _integrate(
    fun: Callable, m: int, quad: QuadConfig
) -> Tuple[complex, float, float, bool, int]:
    radius, truncated = _truncation_radius(fun, m, quad)
    panels = quad.panels

    def tensor_sum(p: int) -> complex:
        nodes, weights = _legendre_axis(radius, p, quad.order)
        points, w = _tensor_grid(nodes, weights, m)
        return complex(np.sum(w * _evaluate(fun, points, quad)))

    previous = tensor_sum(panels)
    error = np.inf
    for _ in range(quad.max_doublings):
        if (2 * panels * quad.order) ** m > quad.max_nodes:
            break
        panels *= 2
        current = tensor_sum(panels)
        error = abs(current - previous)
        previous = current
        if error <= quad.tol:
            return current, error, radius, truncated, panels
    logger.warning(f"quadrature stopped at {panels} panels, error {error:.3e}")
    return previous, error, radius, False, panels


def _kernel_estimate(
    log_integrand: LogIntegrand,
    offset: np.ndarray,
    log_prefactor: float,
    h: float,
    quad: QuadConfig,
    metadata: Dict,
) -> HeatKernelEstimate:
    m = offset.size
    shift = 1j * offset
    log_ref = log_integrand(shift[None, :])[0]

    def normalized(mu: np.ndarray) -> np.ndarray:
        return np.exp(log_integrand(mu + shift[None, :]) - log_ref)

    integral, error, radius, converged, panels = _integrate(normalized, m, quad)
    log_scale = log_prefactor + log_ref.real
    scale = np.exp(log_scale)
    log_value = log_scale + np.log(integral.real) if integral.real > 0 else np.nan
    return HeatKernelEstimate(
        value=float(scale * integral.real),
        log_value=float(log_value),
        h=h,
        quad_error=float(scale * error),
        truncation_radius=radius,
        imag_residual=float(scale * abs(integral.imag)),
        converged=converged,
        shift=offset.copy(),
        metadata={**metadata, "panels": panels, "order": quad.order},
    )


def _check_dimension(group: StepTwoGroup, h: float) -> None:
    if group.m > MAX_M:
        raise UnsupportedDimension(group.m, MAX_M)
    if not h > 0:
        raise ValueError("Time h must be positive")


def heat_kernel(
    group: StepTwoGroup, g: GroupPoint, h: float, quad: QuadConfig = QuadConfig()
) -> HeatKernelEstimate:
    """
    Heat kernel p_h(g) = C h^-(q/2+m) int V(lambda) exp(-phi~(g; lambda) / 4h) dlambda

    Args:
    group (StepTwoGroup): the group, m <= 3
    g (GroupPoint): the point
    h (float): time
    quad (QuadConfig): quadrature knobs

    Returns:
    HeatKernelEstimate: value, log-value and diagnostics

    """
    _check_dimension(group, h)
    offset = _line_offset(_saddle_heat(group, g), h, quad)
    c = normalization_constant(group.q, group.m)
    log_prefactor = np.log(c) - (group.q / 2.0 + group.m) * np.log(h)
    estimate = _kernel_estimate(
        _heat_log_integrand(group, g.x, g.t, h),
        offset,
        log_prefactor,
        h,
        quad,
        {"kernel": "p_h", "normalization": "unit-mass", "constant": c},
    )
    logger.debug(f"p_h: h={h} log_value={estimate.log_value}")
    return estimate


def p_k_h(
    group: StepTwoGroup,
    k: int,
    X: Sequence[float],
    T: Sequence[float],
    h: float,
    quad: QuadConfig = QuadConfig(),
) -> HeatKernelEstimate:
    """
    Level kernel P_{k,h}(X, T) = h^-((k+1)q/2+m) int det Q_k^-1/2 exp(...) dlambda

    Args:
    group (StepTwoGroup): the group, m <= 3
    k (int): level
    X (Sequence[float]): horizontal argument
    T (Sequence[float]): vertical argument
    h (float): time
    quad (QuadConfig): quadrature knobs

    Returns:
    HeatKernelEstimate: value, log-value and diagnostics

    """
    _check_dimension(group, h)
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    inner, _ = _saddle_level(group, k, X, T)
    offset = _line_offset(inner, h, quad)
    log_prefactor = -((k + 1) * group.q / 2.0 + group.m) * np.log(h)
    return _kernel_estimate(
        _level_log_integrand(group, k, X, T, h),
        offset,
        log_prefactor,
        h,
        quad,
        {"kernel": f"P_{k},h", "k": k},
    )


def _hermite_grid(dim: int, order: int) -> Tuple[np.ndarray, np.ndarray]:
    y, w = hermgauss(order)
    return _tensor_grid(y, w, dim)


def heat_kernel_via_level(
    group: StepTwoGroup,
    g: GroupPoint,
    h: float,
    k: int = 1,
    quad: QuadConfig = QuadConfig(),
) -> HeatKernelEstimate:
    """
    p_h(g) through P_{k,h}(F_k(x, t, s)) integrated over s with nested Gauss-Hermite

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point
    h (float): time
    k (int): level of the representation, k * q <= 4
    quad (QuadConfig): quadrature knobs

    Returns:
    HeatKernelEstimate: value and the summed quadrature error

    """
    _check_dimension(group, h)
    q = group.q
    c_tilde = reduced_constant(q, group.m)
    log_front = np.log(c_tilde) - float(g.x @ g.x) / (4.0 * h)
    if k == 0:
        inner = p_k_h(group, 0, g.x / np.sqrt(2.0), g.t, h, quad)
        log_value = log_front + inner.log_value
        return HeatKernelEstimate(
            value=float(np.exp(log_value)),
            log_value=float(log_value),
            h=h,
            quad_error=float(np.exp(log_front) * inner.quad_error),
            truncation_radius=inner.truncation_radius,
            imag_residual=float(np.exp(log_front) * inner.imag_residual),
            converged=inner.converged,
            shift=inner.shift,
            metadata={"kernel": "p_h", "level": 0},
        )
    if k * q > 4:
        raise ValueError("The nested representation supports k * q <= 4")

    nodes, weights = _hermite_grid(k * q, quad.hermite_order)
    a = (2.0 * np.arange(1, k + 1) + 1.0) / (2.0 * h)
    node_scale = np.repeat(1.0 / np.sqrt(a), q)
    factor = np.prod(a ** (-q / 2.0)) / gaussian_constant(q) ** k

    total, error, converged = 0.0, 0.0, True
    for y, w in zip(nodes, weights):
        s = (y * node_scale).reshape(k, q)
        X, T = f_k_map(group, g.x, g.t, s)
        est = p_k_h(group, k, X, T, h, quad)
        total += w * est.value
        error += abs(w) * est.quad_error
        converged = converged and est.converged

    value = np.exp(log_front) * factor * total
    return HeatKernelEstimate(
        value=float(value),
        log_value=float(np.log(value)) if value > 0 else float("nan"),
        h=h,
        quad_error=float(np.exp(log_front) * factor * error),
        truncation_radius=float("nan"),
        imag_residual=0.0,
        converged=converged,
        shift=np.zeros(group.m),
        metadata={"kernel": "p_h", "level": k, "hermite_order": quad.hermite_order},
    )


@dataclass(frozen=True)
class RelationReport:
    left: float
    right: float
    discrepancy: float
    left_error: float
    right_error: float


def verify_relation_relPk(
    group: StepTwoGroup,
    k: int,
    X: Sequence[float],
    T: Sequence[float],
    h: float,
    quad: QuadConfig = QuadConfig(),
) -> RelationReport:
    """
    Compares P_{k,h}(X, T) with the Gaussian average of P_{k+1,h} over one more segment

    The right side is (2 pi)^-(q/2) int exp(-(2k+3)|s|^2 / 2h) P_{k+1,h}(s, T') ds
    with T' = T + <UX, s>.

    Args:
    group (StepTwoGroup): the group, q <= 3 and m <= 2
    k (int): level
    X (Sequence[float]): horizontal argument
    T (Sequence[float]): vertical argument
    h (float): time
    quad (QuadConfig): quadrature knobs, hermite_order nodes per s-axis

    Returns:
    RelationReport: both sides and their relative discrepancy

    """
    if group.m > 2:
        raise UnsupportedDimension(group.m, 2)
    if group.q > 3:
        raise ValueError("The nested relation check supports q <= 3")
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    left = p_k_h(group, k, X, T, h, quad)

    q = group.q
    a = (2.0 * k + 3.0) / (2.0 * h)
    nodes, weights = _hermite_grid(q, quad.hermite_order)
    total, error = 0.0, 0.0
    for y, w in zip(nodes, weights):
        s = y / np.sqrt(a)
        est = p_k_h(group, k + 1, s, T + bracket(group, X, s), h, quad)
        total += w * est.value
        error += abs(w) * est.quad_error
    factor = a ** (-q / 2.0) / gaussian_constant(q)
    right = factor * total
    discrepancy = abs(right - left.value) / abs(left.value)
    logger.info(f"relation k={k}: left={left.value} right={right} rel={discrepancy}")
    return RelationReport(
        left.value, float(right), float(discrepancy), left.quad_error, factor * error
    )


@dataclass(frozen=True, eq=False)
class VaradhanResult:
    h: np.ndarray
    estimates: np.ndarray
    extrapolated: float
    monotone: bool
    kernels: List[HeatKernelEstimate]


def varadhan_estimate(
    group: StepTwoGroup,
    g: GroupPoint,
    h_list: Sequence[float],
    quad: QuadConfig = QuadConfig(),
) -> VaradhanResult:
    """
    Estimates d(g)^2 by -4h ln p_h(g) and extrapolates h -> 0

    The extrapolation fits e(h) = d2 + a h ln h + b h, the form left by the
    prefactor h^-(q+m)/2 of the small-time expansion.

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point
    h_list (Sequence[float]): decreasing positive times
    quad (QuadConfig): quadrature knobs

    Returns:
    VaradhanResult: per-h estimates, the extrapolated value and a monotonicity flag

    """
    hs = np.asarray(h_list, dtype=float)
    if hs.size == 0 or np.any(hs <= 0) or np.any(np.diff(hs) >= 0):
        raise ValueError("h_list must be a nonempty decreasing list of positive times")

    kernels = []
    for h in hs:
        est = heat_kernel(group, g, h, quad)
        if not est.converged or not np.isfinite(est.log_value):
            raise Unconverged(f"Heat kernel quadrature did not converge at h={h}")
        kernels.append(est)
    estimates = -4.0 * hs * np.array([k.log_value for k in kernels])

    if hs.size >= 3:
        design = np.column_stack([np.ones_like(hs), hs * np.log(hs), hs])
    elif hs.size == 2:
        design = np.column_stack([np.ones_like(hs), hs])
    else:
        design = np.ones((1, 1))
    coef, *_ = np.linalg.lstsq(design, estimates, rcond=None)
    steps = np.diff(estimates)
    monotone = bool(np.all(steps >= 0) or np.all(steps <= 0))
    if not monotone:
        logger.warning(f"non-monotone Varadhan sequence {estimates.tolist()}")
    return VaradhanResult(hs, estimates, float(coef[0]), monotone, kernels)


def log_asymptotic_leading_term(
    group: StepTwoGroup, g: GroupPoint, k: int, h: float
) -> float:
    """
    Logarithm of the small-time leading term of p_h (k = 0) or P_{k,h} (k >= 1)

    For k >= 1 the point g is read as the level argument (X, T).

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point, in M (k = 0) or M_k
    k (int): level
    h (float): time

    Returns:
    float: log of the leading term

    """
    q, m = group.q, group.m
    if k == 0:
        inner = _saddle_heat(group, g)
        phase = inner.value
    else:
        inner, phase = _saddle_level(group, k, g.x, g.t)
    if inner.status is not InnerStatus.INTERIOR or not inner.nondegenerate:
        raise NotInM()

    sd = spectral(group, inner.theta)
    _, logdet = np.linalg.slogdet(-inner.hess_tau)
    common = 0.5 * m * np.log(8.0 * np.pi) - phase / (4.0 * h) - 0.5 * logdet
    if k == 0:
        log_v = 0.5 * float(np.sum(np.log(INV_SINC.value(sd.beta))))
        power = -(q + m) / 2.0 * np.log(h)
        return float(np.log(normalization_constant(q, m)) + power + log_v + common)
    log_amp = -0.5 * float(np.sum(log_q_k(k, -sd.beta)))
    power = -((k + 1) * q + m) / 2.0 * np.log(h)
    return float(power + log_amp + common)


def asymptotic_leading_term(
    group: StepTwoGroup, g: GroupPoint, k: int, h: float
) -> float:
    return float(np.exp(log_asymptotic_leading_term(group, g, k, h)))
