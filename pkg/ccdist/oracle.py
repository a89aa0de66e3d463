"""Brute-force distance estimators used to cross-check the minimax engine.

The direct oracle minimizes the energy of piecewise-constant horizontal controls with
a quadratic penalty on the endpoint; the shooting oracle solves exp(zeta, tau) = g for
normal covectors. The Heisenberg closed form is the exact reference on heisenberg(n).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize

from ccdist import settings
from ccdist.exceptions import DimensionMismatch, NoneFound, Unconverged
from ccdist.flow import exp_map, in_singular_set, x_component_closed_form
from ccdist.groups import Covector, GroupPoint, StepTwoGroup, point_scale, u_tilde
from ccdist.matfun import spectral

logger = logging.getLogger(__name__)

PENALTY_GROWTH = 10.0


@dataclass(frozen=True)
class OracleConfig:
    """
    Knobs of the brute-force oracles

    Args:
    segments (int): number N of constant-control segments
    restarts (int): random starts of the direct oracle
    shooting_starts (int): random starts of the shooting oracle
    stages (int): penalty continuation stages
    initial_penalty (float): penalty weight of the first stage
    feasibility (float): endpoint residual accepted, relative to 1 + |g|
    max_iter (int): iteration cap per quasi-Newton solve
    seed (int): seed of the start generator
    threads (int): worker threads

    """

    segments: int = 64
    restarts: int = 8
    shooting_starts: int = 32
    stages: int = 6
    initial_penalty: float = 10.0
    feasibility: float = 1e-6
    max_iter: int = 2000
    seed: int = settings.default_seed
    threads: int = settings.max_workers()


@dataclass(frozen=True, eq=False)
class ControlPath:
    u: np.ndarray
    endpoint: GroupPoint
    energy: float

    @property
    def N(self) -> int:
        return self.u.shape[0]

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.u, axis=1).mean())


def _partial_sums(u: np.ndarray) -> np.ndarray:
    """Start points x_i of the segments."""
    n = u.shape[0]
    return np.vstack([np.zeros((1, u.shape[1])), np.cumsum(u, axis=0)[:-1]]) / n


def _endpoint(group: StepTwoGroup, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    n = u.shape[0]
    starts = _partial_sums(u)
    x = u.sum(axis=0) / n
    t = np.einsum("ia,jab,ib->j", starts, group.U, u) / (2.0 * n)
    return x, t


def integrate_controls(group: StepTwoGroup, u: Sequence) -> GroupPoint:
    """
    Endpoint of the horizontal path with piecewise-constant controls on [0, 1]

    Each segment moves x by u_i / N along a straight line, which sweeps
    t by 1/2 <U x_i, u_i / N>.

    Args:
    group (StepTwoGroup): the group
    u (Sequence): N >= 1 control vectors of length q

    Returns:
    GroupPoint: the endpoint

    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] != group.q:
        raise DimensionMismatch(f"Controls must be an N x {group.q} array with N >= 1")
    return GroupPoint.of(*_endpoint(group, u))


def _constraint_jacobian(group: StepTwoGroup, u: np.ndarray) -> np.ndarray:
    n, q = u.shape
    starts = _partial_sums(u)
    tails = (u.sum(axis=0) - np.cumsum(u, axis=0)) / n
    jac = np.zeros((q + group.m, n, q))
    jac[:q] = np.eye(q)[:, None, :] / n
    jac[q:] = (
        np.einsum("jba,lb->jla", group.U, starts)
        + np.einsum("jab,lb->jla", group.U, tails)
    ) / (2.0 * n)
    return jac.reshape(q + group.m, n * q)


def _penalized(group: StepTwoGroup, g: GroupPoint, n: int, mu: float):
    q = group.q

    def fun(flat: np.ndarray):
        u = flat.reshape(n, q)
        x, t = _endpoint(group, u)
        rx, rt = x - g.x, t - g.t
        energy = float(np.sum(u * u)) / n
        value = energy + mu * (float(rx @ rx) + float(rt @ rt))

        starts = _partial_sums(u)
        tails = (u.sum(axis=0) - np.cumsum(u, axis=0)) / n
        ur = u_tilde(group, rt)
        grad_t = (starts @ ur + tails @ ur.T) / n
        grad = 2.0 * u / n + mu * (2.0 * rx[None, :] / n + grad_t)
        return value, grad.ravel()

    return fun


def _restore_feasibility(
    group: StepTwoGroup, g: GroupPoint, u: np.ndarray, iterations: int = 8
) -> np.ndarray:
    """Gauss-Newton minimal-norm corrections onto the endpoint constraint."""
    n, q = u.shape
    for _ in range(iterations):
        x, t = _endpoint(group, u)
        residual = np.concatenate([x - g.x, t - g.t])
        if np.linalg.norm(residual) < 1e-14 * point_scale(g):
            break
        jac = _constraint_jacobian(group, u)
        step, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        u = u + step.reshape(n, q)
    return u


def _direct_from(
    group: StepTwoGroup, g: GroupPoint, u0: np.ndarray, config: OracleConfig
) -> ControlPath:
    n, q = u0.shape
    flat = u0.ravel()
    mu = config.initial_penalty
    for _ in range(config.stages):
        res = scipy.optimize.minimize(
            _penalized(group, g, n, mu),
            flat,
            jac=True,
            method="BFGS",
            options={"maxiter": config.max_iter, "gtol": 1e-9},
        )
        flat = res.x
        mu *= PENALTY_GROWTH
    u = _restore_feasibility(group, g, flat.reshape(n, q))
    x, t = _endpoint(group, u)
    return ControlPath(u, GroupPoint.of(x, t), float(np.sum(u * u)) / n)


def _residual_norm(g: GroupPoint, end: GroupPoint) -> float:
    return float(np.sqrt(np.sum((end.x - g.x) ** 2) + np.sum((end.t - g.t) ** 2)))


def direct_distance(
    group: StepTwoGroup,
    g: GroupPoint,
    N: Optional[int] = None,
    restarts: Optional[int] = None,
    seed: Optional[int] = None,
    config: OracleConfig = OracleConfig(),
) -> Tuple[float, ControlPath]:
    """
    Minimal energy of N-segment piecewise-constant controls steering o to g

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target
    N (Optional[int]): number of segments, at least 8
    restarts (Optional[int]): random starts besides the straight line
    seed (Optional[int]): seed of the starts
    config (OracleConfig): remaining knobs

    Returns:
    Tuple[float, ControlPath]: the minimal energy found and its controls

    """
    n = config.segments if N is None else N
    if n < 8:
        raise ValueError("The direct oracle needs at least 8 segments")
    restarts = config.restarts if restarts is None else restarts
    rng = np.random.default_rng(config.seed if seed is None else seed)
    sigma = np.sqrt(point_scale(g))
    starts = [np.tile(g.x, (n, 1))] + [
        sigma * rng.standard_normal((n, group.q)) for _ in range(restarts)
    ]

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        paths = list(pool.map(lambda u0: _direct_from(group, g, u0, config), starts))

    tol = config.feasibility * (1.0 + np.sqrt(point_scale(g)))
    feasible = [p for p in paths if _residual_norm(g, p.endpoint) <= tol]
    if not feasible:
        best = min(paths, key=lambda p: _residual_norm(g, p.endpoint))
        raise Unconverged(
            f"No feasible control path found, best residual "
            f"{_residual_norm(g, best.endpoint):.3e} at energy {best.energy:.6g}"
        )
    best = min(feasible, key=lambda p: p.energy)
    logger.info(f"direct oracle: N={n} energy={best.energy} feasible={len(feasible)}")
    return best.energy, best


def shoot(
    group: StepTwoGroup,
    g: GroupPoint,
    guess: Covector,
    config: OracleConfig = OracleConfig(),
) -> Optional[Covector]:
    """
    Solves exp(zeta, tau) = g by least squares from an initial covector

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target
    guess (Covector): starting covector
    config (OracleConfig): feasibility tolerance

    Returns:
    Optional[Covector]: the converged covector, or None

    """
    q = group.q
    target = np.concatenate([g.x, g.t])

    def residual(z: np.ndarray) -> np.ndarray:
        end = exp_map(group, z[:q], z[q:])
        return np.concatenate([end.x, end.t]) - target

    z0 = np.concatenate([guess.zeta, guess.tau])
    try:
        res = scipy.optimize.least_squares(
            residual, z0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400
        )
    except (ValueError, np.linalg.LinAlgError) as e:
        logger.debug(f"shooting failed: {e}")
        return None
    if np.linalg.norm(res.fun) > config.feasibility * (1.0 + np.linalg.norm(target)):
        return None
    return Covector.of(res.x[:q], res.x[q:])


def _shooting_starts(
    group: StepTwoGroup, g: GroupPoint, count: int, seed: int
) -> List[Covector]:
    rng = np.random.default_rng(seed)
    starts = [Covector.of(g.x, np.zeros(group.m))]
    sigma = np.sqrt(point_scale(g))
    for _ in range(count):
        direction = rng.standard_normal(group.m)
        direction /= np.linalg.norm(direction)
        radius = np.pi / spectral(group, direction).norm * rng.uniform(0.0, 1.0)
        theta = radius * direction
        zeta = sigma * rng.standard_normal(group.q)
        if np.any(g.x) and not in_singular_set(group, theta):
            forward = np.column_stack(
                [x_component_closed_form(group, e, theta) for e in np.eye(group.q)]
            )
            inverted, *_ = np.linalg.lstsq(forward, g.x, rcond=None)
            zeta = inverted + 0.1 * zeta
        starts.append(Covector.of(zeta, 2.0 * theta))
    return starts


def shooting_distance(
    group: StepTwoGroup,
    g: GroupPoint,
    grid: Optional[int] = None,
    seed: Optional[int] = None,
    config: OracleConfig = OracleConfig(),
) -> Tuple[float, List[Covector]]:
    """
    Least squared speed |zeta|^2 of the normal geodesics reaching g, by shooting

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target, not the identity
    grid (Optional[int]): number of random starts
    seed (Optional[int]): seed of the starts
    config (OracleConfig): remaining knobs

    Returns:
    Tuple[float, List[Covector]]: the best energy and the distinct covectors found,
    sorted by energy

    """
    if g.is_identity():
        raise ValueError("Shooting needs a target different from the identity")
    count = config.shooting_starts if grid is None else grid
    starts = _shooting_starts(group, g, count, config.seed if seed is None else seed)

    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        found = list(pool.map(lambda c: shoot(group, g, c, config), starts))

    records: List[Covector] = []
    for cov in found:
        if cov is None:
            continue
        z = np.concatenate([cov.zeta, cov.tau])
        duplicate = any(
            np.linalg.norm(z - np.concatenate([r.zeta, r.tau]))
            <= 1e-6 * (1.0 + np.linalg.norm(z))
            for r in records
        )
        if not duplicate:
            records.append(cov)
    if not records:
        raise NoneFound("Shooting found no geodesic reaching the target")
    records.sort(key=lambda c: float(c.zeta @ c.zeta))
    best = float(records[0].zeta @ records[0].zeta)
    logger.info(f"shooting oracle: {len(records)} geodesics, best energy {best}")
    return best, records


def heisenberg_mu(theta: float) -> float:
    """mu(theta) = (2 theta - sin 2 theta) / (2 sin^2 theta), odd and increasing."""
    if abs(theta) < 1e-4:
        return 2.0 * theta / 3.0 + 4.0 * theta**3 / 45.0
    return (2.0 * theta - np.sin(2.0 * theta)) / (2.0 * np.sin(theta) ** 2)


def heisenberg_theta(x: Sequence[float], t: float) -> float:
    """Solves mu(theta) = 4 t / |x|^2 on (-pi, pi); x must be nonzero."""
    target = 4.0 * float(t) / float(np.dot(x, x))
    edge = np.pi * (1.0 - 1e-12)
    return scipy.optimize.brentq(
        lambda th: heisenberg_mu(th) - target, -edge, edge, xtol=1e-15, rtol=1e-15
    )


def heisenberg_closed_form(x: Sequence[float], t: float) -> float:
    """
    Squared CC distance of (x, t) in heisenberg(n)

    Args:
    x (Sequence[float]): horizontal part
    t (float): vertical part

    Returns:
    float: 4 pi |t| when x = 0, otherwise (theta / sin theta)^2 |x|^2

    """
    x = np.asarray(x, dtype=float)
    t = float(np.asarray(t, dtype=float).reshape(-1)[0])
    r2 = float(x @ x)
    if r2 == 0.0:
        return 4.0 * np.pi * abs(t)
    if t == 0.0:
        return r2
    theta = heisenberg_theta(x, t)
    return (theta / np.sin(theta)) ** 2 * r2
