"""The distance engine: inner concave sup over Omega_k, outer inf over s, level loop."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.optimize

from ccdist import settings
from ccdist.exceptions import (
    DomainViolation,
    MaxIter,
    NoneFound,
    NumericalBreakdown,
    Unconverged,
)
from ccdist.flow import covector_from_critical_point, endpoint_residual
from ccdist.groups import Covector, GroupPoint, StepTwoGroup, point_scale
from ccdist.oracle import OracleConfig, direct_distance, shoot, shooting_distance
from ccdist.reference import level_zero, omega_margin, phi_k_star

logger = logging.getLogger(__name__)

FRACTION_TO_BOUNDARY = 0.95
ARMIJO = 1e-4
MAX_BACKTRACKS = 60
MAX_FRACTION_HALVINGS = 200
POLISH_ITERATIONS = 25
ENDPOINT_RTOL = 1e-6
ROUNDOFF = 1e-14


class InnerStatus(str, Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    MAX_ITER = "MaxIter"


@dataclass(frozen=True)
class SolverConfig:
    """
    Knobs of the distance engine

    Args:
    max_k (int): highest level tried by distance()
    tol_grad (float): inner stationarity tolerance, scale-relative
    tol_boundary (float): relative margin below which the inner sup is on the boundary
    tol_outer (float): outer gradient tolerance, scale-relative
    restarts (int): random outer starts per level, on top of the warm start and s = 0
    always_restart (bool): run the random starts even when a primary start attains
    seed (int): seed of the restart generator
    max_iter (int): iteration cap of each solve
    accept_stable_levels (float): relative agreement of two consecutive levels that
    ends the level loop even when neither level is attained (0 disables)
    threads (int): worker threads for the restarts

    """

    max_k: int = settings.default_max_k
    tol_grad: float = 1e-10
    tol_boundary: float = 1e-6
    tol_outer: float = 1e-7
    restarts: int = 16
    always_restart: bool = False
    seed: int = settings.default_seed
    max_iter: int = 200
    accept_stable_levels: float = 1e-8
    threads: int = settings.max_workers()

    def __post_init__(self) -> None:
        for name in ("tol_grad", "tol_boundary", "tol_outer", "max_iter", "threads"):
            if not getattr(self, name) > 0:
                raise ValueError(f"SolverConfig.{name} must be positive")
        if self.max_k < 0 or self.restarts < 0 or self.accept_stable_levels < 0:
            raise ValueError("SolverConfig.max_k, restarts and tolerances must be >= 0")


@dataclass(frozen=True, eq=False)
class InnerResult:
    theta: np.ndarray
    value: float
    status: InnerStatus
    iterations: int
    margin: float
    hess_tau: np.ndarray

    @property
    def nondegenerate(self) -> bool:
        eig = np.linalg.eigvalsh(self.hess_tau)
        return bool(eig.max() < -1e-8 * max(1.0, np.abs(eig).max()))


@dataclass(frozen=True, eq=False)
class OuterResult:
    s_star: np.ndarray
    theta_star: np.ndarray
    value: float
    attained: bool
    status: InnerStatus
    grad_norm: float
    spread: float
    restarts: int


@dataclass(frozen=True, eq=False)
class DistanceCertificate:
    """
    Squared CC distance with its bracket and the data of the deciding level

    Args:
    d2 (float): squared distance (the attained value, or the upper bound)
    k_used (int): last level solved
    s_star (np.ndarray): optimal segment vector at k_used
    theta_star (np.ndarray): optimal tau at k_used
    attained (bool): the minimax was attained at k_used
    lower (float): lower bound from the level-k_used minimax value
    upper (float): energy of a geodesic reaching g (inf when none was found)
    covector (Covector): initial covector of that geodesic, if any
    diagnostics (Dict[str, Any]): per-level values, statuses and timings

    """

    d2: float
    k_used: int
    s_star: np.ndarray
    theta_star: np.ndarray
    attained: bool
    lower: float
    upper: float
    covector: Optional[Covector]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d2": self.d2,
            "k_used": self.k_used,
            "attained": self.attained,
            "lower": self.lower,
            "upper": self.upper if np.isfinite(self.upper) else None,
            "s_star": self.s_star.tolist(),
            "theta_star": self.theta_star.tolist(),
            "covector": None
            if self.covector is None
            else {
                "zeta": self.covector.zeta.tolist(),
                "tau": self.covector.tau.tolist(),
            },
            "diagnostics": self.diagnostics,
        }


def inner_sup(
    group: StepTwoGroup,
    g: GroupPoint,
    s: Optional[Sequence],
    k: int,
    config: SolverConfig = SolverConfig(),
    tau0: Optional[Sequence[float]] = None,
) -> InnerResult:
    """
    Maximizes the concave map tau -> objective(g; s, tau) over Omega_k

    Damped Newton on clamped eigenvalues, step limited so that the margin to the
    boundary of Omega_k keeps at least 5% of its current value, then Armijo
    backtracking.

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target point
    s (Optional[Sequence]): segment vector of level k
    k (int): level
    config (SolverConfig): tolerances and iteration cap
    tau0 (Optional[Sequence[float]]): warm start, ignored unless inside Omega_k

    Returns:
    InnerResult: maximizer, value, status, iteration count and margin

    """
    z = level_zero(k)
    n = k * group.q
    tau = np.zeros(group.m)
    if tau0 is not None:
        warm = np.asarray(tau0, dtype=float)
        if omega_margin(group, warm, k) > 0.05 * z:
            tau = warm.copy()

    def settled(near_boundary: bool) -> InnerStatus:
        return InnerStatus.BOUNDARY if near_boundary else InnerStatus.INTERIOR

    for it in range(1, config.max_iter + 1):
        ev = phi_k_star(group, g, s, tau, k, order=2)
        grad = ev.grad_tau
        hess = ev.hess[n:, n:]
        value = ev.value
        margin = ev.boundary_margin
        near_boundary = margin < config.tol_boundary * z

        eig, vec = scipy.linalg.eigh(hess)
        curvature = max(1.0, np.abs(eig).max())
        gtol = config.tol_grad * (1.0 + abs(value)) * curvature
        if np.linalg.norm(grad) <= gtol:
            return InnerResult(tau, value, settled(near_boundary), it, margin, hess)

        eig = np.minimum(eig, -1e-12 * curvature)
        direction = vec @ ((vec.T @ grad) / -eig)
        slope = float(grad @ direction)

        if near_boundary and slope > 0:
            return InnerResult(tau, value, InnerStatus.BOUNDARY, it, margin, hess)
        # Newton decrement at round-off
        if slope <= ROUNDOFF * (1.0 + abs(value)):
            return InnerResult(tau, value, settled(near_boundary), it, margin, hess)

        alpha = 1.0
        for _ in range(MAX_FRACTION_HALVINGS):
            trial = tau + alpha * direction
            if omega_margin(group, trial, k) >= (1 - FRACTION_TO_BOUNDARY) * margin:
                break
            alpha *= 0.5

        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = tau + alpha * direction
            try:
                trial_value = phi_k_star(group, g, s, trial, k, order=0).value
            except DomainViolation:
                trial_value = -np.inf
            if trial_value >= value + ARMIJO * alpha * slope:
                accepted = True
                break
            alpha *= 0.5

        if not accepted:
            # no ascent left at double precision
            logger.debug(f"inner line search stalled, |grad|={np.linalg.norm(grad)}")
            return InnerResult(tau, value, settled(near_boundary), it, margin, hess)
        step = alpha * np.linalg.norm(direction)
        gain = trial_value - value
        tau = trial
        scale = 1.0 + abs(value)
        flat = gain <= ROUNDOFF * scale and slope <= 1e-8 * scale
        if flat or step <= ROUNDOFF * (1.0 + np.linalg.norm(tau)):
            logger.debug(f"inner ascent stalled at it={it}, gain={gain}, step={step}")
            ev = phi_k_star(group, g, s, tau, k, order=2)
            near_boundary = ev.boundary_margin < config.tol_boundary * z
            return InnerResult(
                tau,
                ev.value,
                settled(near_boundary),
                it,
                ev.boundary_margin,
                ev.hess[n:, n:],
            )

    ev = phi_k_star(group, g, s, tau, k, order=2)
    hess = ev.hess[n:, n:]
    margin = ev.boundary_margin
    eig, vec = scipy.linalg.eigh(hess)
    status = InnerStatus.MAX_ITER
    if eig.max() < 0:
        decrement = float(ev.grad_tau @ vec @ ((vec.T @ ev.grad_tau) / -eig))
        if decrement <= 1e-12 * (1.0 + abs(ev.value)):
            status = settled(margin < config.tol_boundary * z)
    return InnerResult(tau, ev.value, status, config.max_iter, margin, hess)


class _Envelope:
    """H(s) = sup_tau objective(g; s, tau), with the Danskin gradient, warm-started."""

    def __init__(
        self, group: StepTwoGroup, g: GroupPoint, k: int, config: SolverConfig
    ) -> None:
        self.group, self.g, self.k, self.config = group, g, k, config
        self.tau: Optional[np.ndarray] = None
        self.evaluations = 0

    def inner(self, flat: np.ndarray) -> InnerResult:
        self.evaluations += 1
        s = flat.reshape(self.k, self.group.q)
        result = inner_sup(self.group, self.g, s, self.k, self.config, tau0=self.tau)
        self.tau = result.theta
        return result

    def value(self, flat: np.ndarray) -> float:
        return self.inner(flat).value

    def value_and_grad(self, flat: np.ndarray):
        result = self.inner(flat)
        s = flat.reshape(self.k, self.group.q)
        ev = phi_k_star(self.group, self.g, s, result.theta, self.k, order=1)
        return result.value, ev.grad_s.ravel()


def _polish(
    group: StepTwoGroup, g: GroupPoint, k: int, s: np.ndarray, tau: np.ndarray
):
    """Joint Newton on the (s, tau) gradient, kept only while it improves."""
    n = k * group.q
    z = np.concatenate([s.ravel(), tau])
    ev = phi_k_star(group, g, s, tau, k, order=2)
    best = np.linalg.norm(ev.grad)
    value = ev.value
    for _ in range(POLISH_ITERATIONS):
        if best <= 1e-14 * point_scale(g):
            break
        step, *_ = np.linalg.lstsq(ev.hess, ev.grad, rcond=None)
        trial = z - step
        try:
            trial_ev = phi_k_star(group, g, trial[:n], trial[n:], k, order=2)
        except DomainViolation:
            break
        norm = np.linalg.norm(trial_ev.grad)
        if norm >= best or abs(trial_ev.value - value) > 1e-6 * point_scale(g):
            break
        z, ev, best = trial, trial_ev, norm
    return z[:n].reshape(k, group.q), z[n:]


def _solve_from(
    group: StepTwoGroup,
    g: GroupPoint,
    k: int,
    config: SolverConfig,
    start: np.ndarray,
) -> OuterResult:
    env = _Envelope(group, g, k, config)
    scale = point_scale(g)
    gtol = config.tol_outer * scale
    res = scipy.optimize.minimize(
        env.value_and_grad,
        start.ravel(),
        jac=True,
        method="BFGS",
        options={"gtol": gtol, "maxiter": config.max_iter},
    )
    flat = res.x
    inner = env.inner(flat)
    if inner.status is not InnerStatus.INTERIOR or not inner.nondegenerate:
        nm = scipy.optimize.minimize(
            env.value,
            flat,
            method="Nelder-Mead",
            options={
                "xatol": 1e-10,
                "fatol": 1e-13 * scale,
                "maxiter": 200 * max(1, flat.size),
            },
        )
        if nm.fun <= inner.value:
            flat = nm.x
        inner = env.inner(flat)

    s = flat.reshape(k, group.q)
    if inner.status is InnerStatus.INTERIOR:
        s, theta = _polish(group, g, k, s, inner.theta)
        env.tau = theta
        inner = env.inner(s.ravel())

    grad_s = phi_k_star(group, g, s, inner.theta, k, order=1).grad_s
    grad_norm = float(np.linalg.norm(grad_s))
    interior = inner.status is InnerStatus.INTERIOR
    attained = interior and grad_norm <= config.tol_outer * scale
    return OuterResult(
        s, inner.theta, inner.value, attained, inner.status, grad_norm, 0.0, 1
    )


def restart_points(
    g: GroupPoint,
    k: int,
    q: int,
    config: SolverConfig,
    warm: Optional[np.ndarray] = None,
) -> List[np.ndarray]:
    """
    Outer starts of level k: the warm start, s = 0, then seeded Gaussian starts

    Args:
    g (GroupPoint): the target point
    k (int): level
    q (int): dimension of the first layer
    config (SolverConfig): restart count and seed
    warm (Optional[np.ndarray]): optimum of level k - 1, padded with a zero segment

    Returns:
    List[np.ndarray]: the starts, primary ones first

    """
    starts = []
    if warm is not None and np.any(warm):
        padded = np.zeros((k, q))
        padded[: warm.shape[0]] = warm
        starts.append(padded)
    starts.append(np.zeros((k, q)))
    sigma = (np.linalg.norm(g.x) + np.sum(np.sqrt(np.abs(g.t)))) / np.sqrt(2 * k + 3)
    rng = np.random.default_rng([config.seed, k])
    return starts + [
        sigma * rng.standard_normal((k, q)) for _ in range(config.restarts)
    ]


def outer_inf(
    group: StepTwoGroup,
    g: GroupPoint,
    k: int,
    config: SolverConfig = SolverConfig(),
    warm: Optional[np.ndarray] = None,
) -> OuterResult:
    """
    Minimizes H(s) = sup_tau objective(g; s, tau) over s in (R^q)^k by multi-start

    The warm start and s = 0 run first. The random restarts only run when neither
    of them attains, unless config.always_restart is set.

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target point
    k (int): level (0 reduces to inner_sup)
    config (SolverConfig): solver knobs
    warm (Optional[np.ndarray]): optimum of level k - 1

    Returns:
    OuterResult: the best restart, with the spread of restart values

    """
    if k == 0:
        inner = inner_sup(group, g, None, 0, config)
        if inner.status is InnerStatus.MAX_ITER:
            raise MaxIter(config.max_iter)
        attained = inner.status is InnerStatus.INTERIOR
        s_star = np.zeros((0, group.q))
        return OuterResult(
            s_star, inner.theta, inner.value, attained, inner.status, 0.0, 0.0, 1
        )

    starts = restart_points(g, k, group.q, config, warm)
    primary = len(starts) - config.restarts

    def run(start: np.ndarray) -> Optional[OuterResult]:
        try:
            return _solve_from(group, g, k, config, start)
        except (DomainViolation, MaxIter, np.linalg.LinAlgError) as e:
            logger.debug(f"level {k} restart failed: {e}")
            return None

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        results = list(pool.map(run, starts[:primary]))
        settled = any(r is not None and r.attained for r in results)
        if config.always_restart or not settled:
            results += list(pool.map(run, starts[primary:]))

    finished = [
        (i, r) for i, r in enumerate(results) if r is not None and np.isfinite(r.value)
    ]
    if not finished:
        raise NumericalBreakdown(f"Every restart failed at level {k}")

    values = np.array([r.value for _, r in finished])
    best_value = values.min()
    tie = 1e-10 * max(1.0, abs(best_value))
    candidates = [(i, r) for i, r in finished if r.value <= best_value + tie]
    index, best = min(
        candidates, key=lambda ir: (not ir[1].attained, ir[1].value, ir[0])
    )
    if best.status is InnerStatus.MAX_ITER:
        raise MaxIter(config.max_iter)
    spread = float(values.max() - values.min())
    logger.info(
        f"level {k}: value={best.value} attained={best.attained} "
        f"restart={index} spread={spread}"
    )
    return OuterResult(
        best.s_star,
        best.theta_star,
        best.value,
        best.attained,
        best.status,
        best.grad_norm,
        spread,
        len(finished),
    )


def lower_bound(
    group: StepTwoGroup, g: GroupPoint, k: int, config: SolverConfig = SolverConfig()
) -> float:
    return outer_inf(group, g, k, config).value


def upper_bound_if_in_Mk(
    group: StepTwoGroup,
    g: GroupPoint,
    s: Optional[Sequence],
    k: int,
    config: SolverConfig = SolverConfig(),
) -> Optional[float]:
    """
    Returns sup_tau objective(g; s, tau) when F_k(g, s) lies in M_k, otherwise None

    Membership means an interior maximizer in tau with a negative definite Hessian.
    At k = 0 this is membership of g itself in M.

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point
    s (Optional[Sequence]): segment vector of level k
    k (int): level
    config (SolverConfig): solver knobs

    Returns:
    Optional[float]: an upper bound for d(g)^2, or None

    """
    inner = inner_sup(group, g, s, k, config)
    if inner.status is not InnerStatus.INTERIOR or not inner.nondegenerate:
        return None
    return inner.value


@dataclass(frozen=True, eq=False)
class MinimaxCheck:
    tau: np.ndarray
    inside: bool
    level_value: Optional[float]
    reduced_value: Optional[float]
    agrees: Optional[bool]
    diverges: Optional[bool]


def minimax_residual_check(
    group: StepTwoGroup,
    g: GroupPoint,
    s_star: Optional[Sequence],
    theta_star: Sequence,
    k: int,
    rtol: float = 1e-6,
) -> List[MinimaxCheck]:
    """
    Checks inf over s_{k+1} of the level-(k+1) objective against the level-k one

    Inside Omega_k both values must agree; between Omega_k and Omega_{k+1} the level
    k+1 objective must be unbounded below in s_{k+1}.

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point
    s_star (Optional[Sequence]): level-k segment vector
    theta_star (Sequence): a point of Omega_{k+1}, or one per row
    k (int): level
    rtol (float): relative agreement tolerance

    Returns:
    List[MinimaxCheck]: one entry per tau

    """
    q = group.q
    base = np.zeros((k, q))
    if s_star is not None:
        base = np.asarray(s_star, dtype=float).reshape(k, q)
    extended = np.vstack([base, np.zeros((1, q))])
    last = slice(k * q, (k + 1) * q)
    scale = point_scale(g)
    checks = []
    for tau in np.atleast_2d(np.asarray(theta_star, dtype=float)):
        ev = phi_k_star(group, g, extended, tau, k + 1, order=2)
        K = ev.hess[last, last]
        b = ev.grad_s[-1]
        if omega_margin(group, tau, k) > 0:
            level = phi_k_star(group, g, base, tau, k, order=0).value
            reduced = ev.value - 0.5 * float(b @ np.linalg.solve(K, b))
            agrees = abs(reduced - level) <= rtol * max(1.0, abs(level))
            checks.append(MinimaxCheck(tau, True, level, reduced, agrees, None))
            continue

        eig, vec = scipy.linalg.eigh(K)
        direction = vec[:, 0]
        if b @ direction > 0:
            direction = -direction
        diverges = False
        radius = 1.0
        for _ in range(16):
            trial = extended.copy()
            trial[-1] = radius * direction
            if phi_k_star(group, g, trial, tau, k + 1, order=0).value < -1e6 * scale:
                diverges = True
                break
            radius *= 10.0
        checks.append(MinimaxCheck(tau, False, None, None, None, diverges))
    return checks


def _geodesic_for(
    group: StepTwoGroup, g: GroupPoint, outer: OuterResult, k: int
) -> Optional[Covector]:
    """Covector of the critical point, refined by shooting when it misses g."""
    guess = Covector.of(g.x, 2.0 * outer.theta_star)
    try:
        guess = covector_from_critical_point(
            group, g, outer.s_star, outer.theta_star, k
        )
        if endpoint_residual(group, guess, g) <= ENDPOINT_RTOL * point_scale(g):
            return guess
    except (DomainViolation, np.linalg.LinAlgError) as e:
        logger.debug(f"covector recovery failed: {e}")
    return shoot(group, g, guess)


def _oracle_upper(
    group: StepTwoGroup, g: GroupPoint, config: SolverConfig
) -> Tuple[float, Optional[Covector]]:
    """Upper bound from multi-start shooting, then from the direct oracle."""
    oracle = OracleConfig(seed=config.seed, threads=config.threads)
    try:
        energy, covectors = shooting_distance(group, g, config=oracle)
        return energy, covectors[0]
    except (NoneFound, NumericalBreakdown) as e:
        logger.warning(f"shooting oracle found no upper bound: {e}")
    try:
        energy, _ = direct_distance(group, g, config=oracle)
        return energy, None
    except (Unconverged, NumericalBreakdown) as e:
        logger.error(f"direct oracle found no upper bound: {e}")
    return np.inf, None


def distance(
    group: StepTwoGroup, g: GroupPoint, config: SolverConfig = SolverConfig()
) -> DistanceCertificate:
    """
    Squared CC distance from the identity to g by the level loop k = 0, 1, ...

    Stops at the first level whose minimax is attained. The upper bound is the energy
    of the geodesic recovered from the critical point, or of a shooting refinement of
    it when the recovered covector misses g. When both fail, multi-start shooting and
    then the direct oracle supply the upper bound, so it is finite whenever an oracle
    reaches g.

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target point
    config (SolverConfig): solver knobs

    Returns:
    DistanceCertificate: the distance with its bracket

    """
    started = time.perf_counter()
    if g.is_identity():
        zero = Covector.of(np.zeros(group.q), np.zeros(group.m))
        s_star, theta_star = np.zeros((0, group.q)), np.zeros(group.m)
        return DistanceCertificate(
            0.0, 0, s_star, theta_star, True, 0.0, 0.0, zero, {"levels": []}
        )

    levels = []
    previous: Optional[OuterResult] = None
    stable = False
    for k in range(config.max_k + 1):
        warm = previous.s_star if previous is not None else None
        outer = outer_inf(group, g, k, config, warm)
        levels.append(
            {
                "k": k,
                "value": outer.value,
                "status": outer.status.value,
                "attained": outer.attained,
                "grad_norm": outer.grad_norm,
                "spread": outer.spread,
            }
        )
        if outer.attained:
            break
        if (
            previous is not None
            and config.accept_stable_levels > 0
            and abs(outer.value - previous.value)
            <= config.accept_stable_levels * max(1.0, abs(outer.value))
        ):
            stable = True
            break
        previous = outer

    covector = _geodesic_for(group, g, outer, k)
    if covector is not None:
        upper = float(covector.zeta @ covector.zeta)
    else:
        upper, covector = _oracle_upper(group, g, config)
    attained = outer.attained or stable
    d2 = outer.value if attained or not np.isfinite(upper) else upper
    diagnostics = {
        "levels": levels,
        "stable_levels": stable,
        "wall_time": time.perf_counter() - started,
    }
    logger.info(f"distance: d2={d2} k_used={k} attained={attained} upper={upper}")
    return DistanceCertificate(
        d2=d2,
        k_used=k,
        s_star=outer.s_star,
        theta_star=outer.theta_star,
        attained=attained,
        lower=outer.value,
        upper=upper,
        covector=covector,
        diagnostics=diagnostics,
    )
