"""Normal geodesics from the identity, the cut-locus test and the GM heuristic.

Critical points (s, theta) of the level-k objective with theta in Omega_k are in one
to one correspondence with the normal geodesics exp(zeta, 2 theta) reaching g, and
the objective value at a critical point equals the geodesic energy |zeta|^2.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ccdist.exceptions import (
    CCDistError,
    DomainViolation,
    NoneFound,
    NumericalBreakdown,
)
from ccdist.flow import (
    covector_from_critical_point,
    endpoint_residual,
    exp_map,
    in_singular_set,
    lift_covector,
    x_component_closed_form,
)
from ccdist.groups import Covector, GroupPoint, StepTwoGroup, point_scale
from ccdist.optimize import InnerStatus, SolverConfig, distance, inner_sup
from ccdist.oracle import OracleConfig, shoot, shooting_distance
from ccdist.reference import level_zero, phi_k_star

logger = logging.getLogger(__name__)

__all__ = [
    "CriticalPoint",
    "CutLocusVerdict",
    "GeodesicRecord",
    "LikelyGM",
    "NonGMEvidence",
    "classify_gm",
    "critical_points",
    "cut_locus_test",
    "exp_map",
    "in_singular_set",
    "lift_covector",
    "solve_geodesics",
    "x_component_closed_form",
]

NEWTON_ITERATIONS = 60
GRAD_RTOL = 1e-11
DEDUP_RTOL = 1e-8
ENDPOINT_RTOL = 1e-8
VALUE_RTOL = 1e-8
DET_RTOL = 1e-10
START_RADIUS = 0.9


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    s: np.ndarray
    theta: np.ndarray
    value: float
    hess: np.ndarray
    grad_norm: float

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate([self.s.ravel(), self.theta])

    def hessian_determinant(self) -> float:
        return float(np.linalg.det(self.hess))


@dataclass(frozen=True, eq=False)
class GeodesicRecord:
    """
    A normal geodesic from the identity to g

    Args:
    covector (Covector): initial covector (zeta, 2 theta)
    energy (float): |zeta|^2
    endpoint (GroupPoint): exp(zeta, 2 theta) from the integrator
    endpoint_residual (float): distance of the endpoint to g
    source (str): "CriticalPoint(k)" or "Shooting"
    theta (np.ndarray): the tau-part of the critical point
    value (float): the level-k objective at the critical point

    """

    covector: Covector
    energy: float
    endpoint: GroupPoint
    endpoint_residual: float
    source: str
    theta: np.ndarray
    value: float

    def to_row(self) -> Dict[str, Any]:
        return {
            "energy": self.energy,
            "value": self.value,
            "endpoint_residual": self.endpoint_residual,
            "source": self.source,
            "zeta": self.covector.zeta.tolist(),
            "tau": self.covector.tau.tolist(),
        }


@dataclass(frozen=True, eq=False)
class CutLocusVerdict:
    verdict: str
    witness: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"verdict": self.verdict, **self.witness}


@dataclass(frozen=True)
class LikelyGM:
    fraction: float
    samples: int


@dataclass(frozen=True, eq=False)
class NonGMEvidence:
    points: List[GroupPoint]
    fraction: float
    samples: int


def _starts(
    group: StepTwoGroup, g: GroupPoint, k: int, count: int, seed: int
) -> List[np.ndarray]:
    """The inner maximizer at s = 0 first, then seeded points of (R^q)^k x Omega_k."""
    rng = np.random.default_rng([seed, k, 7])
    z = level_zero(k)
    sigma = np.sqrt(point_scale(g) / (2 * k + 3))
    first = inner_sup(group, g, np.zeros((k, group.q)), k).theta
    starts = [np.concatenate([np.zeros(k * group.q), first])]
    for _ in range(count - 1):
        direction = rng.standard_normal(group.m)
        direction /= np.linalg.norm(direction)
        norm = np.linalg.norm(np.einsum("i,iab->ab", direction, group.U), 2)
        theta = START_RADIUS * z / norm * rng.uniform() ** (1.0 / group.m) * direction
        s = sigma * rng.standard_normal((k, group.q))
        if k and np.any(g.x) and not in_singular_set(group, theta):
            # seed s with the lift of the covector whose x-endpoint is g.x
            forward = np.column_stack(
                [x_component_closed_form(group, e, theta) for e in np.eye(group.q)]
            )
            zeta, *_ = np.linalg.lstsq(forward, g.x, rcond=None)
            s = lift_covector(group, zeta, theta, k)
        starts.append(np.concatenate([s.ravel(), theta]))
    return starts


def _newton(
    group: StepTwoGroup, g: GroupPoint, k: int, z0: np.ndarray
) -> Optional[CriticalPoint]:
    """Newton on the gradient of the level-k objective with a |grad|^2 line search."""
    n = k * group.q
    tol = GRAD_RTOL * (1.0 + point_scale(g))
    z = z0.copy()
    try:
        ev = phi_k_star(group, g, z[:n], z[n:], k, order=2)
    except DomainViolation:
        return None
    merit = float(ev.grad @ ev.grad)
    for _ in range(NEWTON_ITERATIONS):
        if np.sqrt(merit) <= tol:
            break
        step, *_ = np.linalg.lstsq(ev.hess, ev.grad, rcond=None)
        alpha = 1.0
        accepted = False
        while alpha > 1e-10:
            trial = z - alpha * step
            try:
                trial_ev = phi_k_star(group, g, trial[:n], trial[n:], k, order=2)
            except DomainViolation:
                alpha *= 0.5
                continue
            trial_merit = float(trial_ev.grad @ trial_ev.grad)
            if trial_merit < (1.0 - 1e-4 * alpha) * merit:
                z, ev, merit = trial, trial_ev, trial_merit
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
    if np.sqrt(merit) > 1e3 * tol:
        return None
    s, theta = z[:n].reshape(k, group.q), z[n:].copy()
    return CriticalPoint(s, theta, ev.value, ev.hess, float(np.sqrt(merit)))


def critical_points(
    group: StepTwoGroup,
    g: GroupPoint,
    k: int,
    config: SolverConfig = SolverConfig(),
) -> List[CriticalPoint]:
    """
    Distinct critical points of the level-k objective found from 8(kq + m) starts

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point, not the identity
    k (int): level
    config (SolverConfig): seed and thread count

    Returns:
    List[CriticalPoint]: deduplicated critical points, sorted by value

    """
    count = 8 * (k * group.q + group.m)
    starts = _starts(group, g, k, count, config.seed)
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        found = list(pool.map(lambda z0: _newton(group, g, k, z0), starts))

    distinct: List[CriticalPoint] = []
    for cp in found:
        if cp is None:
            continue
        z = cp.flat
        if any(
            np.linalg.norm(z - d.flat) <= DEDUP_RTOL * (1.0 + np.linalg.norm(z))
            for d in distinct
        ):
            continue
        distinct.append(cp)
    distinct.sort(key=lambda cp: cp.value)
    logger.debug(f"level {k}: {len(distinct)} critical points from {count} starts")
    return distinct


def solve_geodesics(
    group: StepTwoGroup,
    g: GroupPoint,
    k: int = 0,
    config: SolverConfig = SolverConfig(),
) -> List[GeodesicRecord]:
    """
    Normal geodesics from the identity to g through the critical points at level k

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target, not the identity
    k (int): level of the critical-point search
    config (SolverConfig): seed and thread count

    Returns:
    List[GeodesicRecord]: verified geodesics sorted by energy

    """
    if g.is_identity():
        raise NoneFound("Geodesic search needs a target different from the identity")
    scale = 1.0 + np.sqrt(point_scale(g))
    records: List[GeodesicRecord] = []
    for cp in critical_points(group, g, k, config):
        source = f"CriticalPoint({k})"
        try:
            covector = covector_from_critical_point(group, g, cp.s, cp.theta, k)
        except (CCDistError, np.linalg.LinAlgError) as e:
            logger.debug(f"covector recovery failed: {e}")
            continue
        residual = endpoint_residual(group, covector, g)
        if residual > ENDPOINT_RTOL * scale:
            refined = shoot(group, g, covector)
            if refined is None:
                logger.warning(f"dropping critical point, endpoint residual {residual}")
                continue
            covector, source = refined, "Shooting"
            residual = endpoint_residual(group, covector, g)
        energy = float(covector.zeta @ covector.zeta)
        if abs(energy - cp.value) > VALUE_RTOL * max(1.0, abs(cp.value)):
            logger.warning(f"energy {energy} differs from objective value {cp.value}")

        z = np.concatenate([covector.zeta, covector.tau])
        if any(
            np.linalg.norm(z - np.concatenate([r.covector.zeta, r.covector.tau]))
            <= DEDUP_RTOL * (1.0 + np.linalg.norm(z))
            for r in records
        ):
            continue
        records.append(
            GeodesicRecord(
                covector=covector,
                energy=energy,
                endpoint=exp_map(group, covector.zeta, covector.tau),
                endpoint_residual=residual,
                source=source,
                theta=cp.theta,
                value=cp.value,
            )
        )
    if not records:
        raise NoneFound(f"No geodesic found at level {k}")
    records.sort(key=lambda r: r.energy)
    return records


def cut_locus_test(
    group: StepTwoGroup, g: GroupPoint, config: SolverConfig = SolverConfig()
) -> CutLocusVerdict:
    """
    Decides g in Cut_o from the critical points at one level above the attained one

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point
    config (SolverConfig): solver knobs

    Returns:
    CutLocusVerdict: NotCut, Cut or Unknown with the critical-point witness

    """
    if g.is_identity():
        return CutLocusVerdict("Unknown", {"note": "the identity is excluded"})
    try:
        cert = distance(group, g, config)
    except CCDistError as e:
        return CutLocusVerdict("Unknown", {"note": f"distance failed: {e}"})
    if not cert.attained:
        return CutLocusVerdict(
            "Unknown", {"note": f"minimax not attained up to k={cert.k_used}"}
        )

    k = cert.k_used + 1
    d2 = cert.d2
    found = critical_points(group, g, k, config)
    minimal = [
        cp for cp in found if abs(cp.value - d2) <= VALUE_RTOL * max(1.0, abs(d2))
    ]
    witness: Dict[str, Any] = {
        "k_tested": k,
        "d2": d2,
        "critical_points": len(found),
        "minimal_critical_points": len(minimal),
        "classical_cut": False,
        "note": "k_* taken as the attained level plus one",
    }
    if not minimal:
        return CutLocusVerdict("Unknown", witness)
    if len(minimal) >= 2:
        witness["classical_cut"] = True
        return CutLocusVerdict("Cut", witness)

    hess = minimal[0].hess
    det = float(np.linalg.det(hess))
    witness["hessian_determinant"] = det
    threshold = DET_RTOL * np.linalg.norm(hess, 2) ** hess.shape[0]
    if abs(det) >= threshold:
        return CutLocusVerdict("NotCut", witness)
    return CutLocusVerdict("Cut", witness)


def classify_gm(
    group: StepTwoGroup,
    n_samples: int,
    seed: int,
    box: float = 1.0,
    max_evidence: int = 8,
    config: SolverConfig = SolverConfig(),
    oracle_config: OracleConfig = OracleConfig(shooting_starts=16),
) -> Union[LikelyGM, NonGMEvidence]:
    """
    Samples the box [-box, box]^(q+m) and measures how often g lies in M

    A sample is evidence against the GM property when the sup of phi(g; .) sits on
    the boundary of Omega and the shooting oracle finds d(g)^2 above that sup by more
    than 1e-3 of the point scale. This is a heuristic, not a decision procedure.

    Args:
    group (StepTwoGroup): the group
    n_samples (int): number of sampled points
    seed (int): seed of the sampler
    box (float): half-width of the sampling box
    max_evidence (int): oracle checks stop after this many witnesses
    config (SolverConfig): inner solver knobs
    oracle_config (OracleConfig): shooting oracle knobs

    Returns:
    Union[LikelyGM, NonGMEvidence]: the hit fraction, with witnesses if any

    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    hits = 0
    evidence: List[GroupPoint] = []
    for _ in range(n_samples):
        g = GroupPoint.of(
            rng.uniform(-box, box, group.q), rng.uniform(-box, box, group.m)
        )
        inner = inner_sup(group, g, None, 0, config)
        if inner.status is InnerStatus.INTERIOR and inner.nondegenerate:
            hits += 1
            continue
        if inner.status is not InnerStatus.BOUNDARY or len(evidence) >= max_evidence:
            continue
        try:
            best, _ = shooting_distance(group, g, config=oracle_config)
        except (NoneFound, NumericalBreakdown):
            continue
        if best > inner.value + 1e-3 * point_scale(g):
            evidence.append(g)

    fraction = hits / n_samples
    logger.info(f"classify {group.name}: fraction={fraction} evidence={len(evidence)}")
    if evidence:
        return NonGMEvidence(evidence, fraction, n_samples)
    return LikelyGM(fraction, n_samples)
