"""Normal geodesic flow and the correspondence between covectors and critical points.

A covector (zeta, tau) starts the normal geodesic with horizontal velocity zeta; the
velocity rotates as v' = -U~(tau) v, the horizontal position integrates v and the
vertical position integrates 1/2 <U x, v>. Critical points (s, theta) of the level-k
objective match the covectors (zeta, 2 theta) through

    s_j = sqrt(pi)/2 * exp(-U~(theta)) U~(theta)^j Q_j(-S(theta)) zeta,

with s_0 = x / sqrt(2).
"""
import logging
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg

from ccdist.exceptions import DimensionMismatch, SingularTheta
from ccdist.groups import Covector, GroupPoint, StepTwoGroup, u_tilde
from ccdist.matfun import QK, SINC, apply_even, spectral

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 256
SINGULAR_ATOL = 1e-10


def _flow_matrices(
    group: StepTwoGroup, tau: np.ndarray, steps: int
) -> Tuple[np.ndarray, np.ndarray]:
    """One RK4 step y -> P y for y = (x, v), and the quadratic forms of the t update."""
    q = group.q
    h = 1.0 / steps
    M = np.zeros((2 * q, 2 * q))
    M[:q, q:] = np.eye(q)
    M[q:, q:] = -u_tilde(group, tau)

    eye = np.eye(2 * q)
    hm = h * M
    hm2 = hm @ hm
    hm3 = hm2 @ hm
    stages = [
        eye,
        eye + 0.5 * hm,
        eye + 0.5 * hm + 0.25 * hm2,
        eye + hm + 0.5 * hm2 + 0.25 * hm3,
    ]
    P = eye + hm + hm2 / 2.0 + hm3 / 6.0 + hm3 @ hm / 24.0

    B = np.zeros((group.m, 2 * q, 2 * q))
    B[:, :q, q:] = group.U
    B = 0.5 * (B + np.transpose(B, (0, 2, 1)))
    weights = (1.0, 2.0, 2.0, 1.0)
    G = sum(w * np.einsum("ba,jbc,cd->jad", S, B, S) for w, S in zip(weights, stages))
    return P, 0.5 * h / 6.0 * G


def geodesic_path(
    group: StepTwoGroup,
    zeta: Sequence[float],
    tau: Sequence[float],
    steps: int = DEFAULT_STEPS,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Integrates the normal geodesic with the classical fourth-order Runge-Kutta rule

    Args:
    group (StepTwoGroup): the group
    zeta (Sequence[float]): horizontal covector, the initial velocity
    tau (Sequence[float]): vertical covector, constant along the flow
    steps (int): number of fixed steps on [0, 1]

    Returns:
    Tuple[np.ndarray, np.ndarray, np.ndarray]: positions x, t and velocities v at
    the steps + 1 grid times

    """
    zeta = np.asarray(zeta, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if zeta.shape != (group.q,) or tau.shape != (group.m,):
        raise DimensionMismatch("Covector does not match the group dimensions")

    P, G = _flow_matrices(group, tau, steps)
    ys = np.empty((steps + 1, 2 * group.q))
    ys[0] = np.concatenate([np.zeros(group.q), zeta])
    for n in range(steps):
        ys[n + 1] = P @ ys[n]

    increments = np.einsum("na,jab,nb->nj", ys[:-1], G, ys[:-1])
    ts = np.vstack([np.zeros(group.m), np.cumsum(increments, axis=0)])
    return ys[:, : group.q], ts, ys[:, group.q :]


def exp_map(
    group: StepTwoGroup,
    zeta: Sequence[float],
    tau: Sequence[float],
    steps: int = DEFAULT_STEPS,
) -> GroupPoint:
    xs, ts, _ = geodesic_path(group, zeta, tau, steps)
    return GroupPoint.of(xs[-1], ts[-1])


def in_singular_set(group: StepTwoGroup, theta: Sequence[float]) -> bool:
    """True when some singular value of U(theta) is a nonzero multiple of pi."""
    sd = spectral(group, theta)
    b = np.sqrt(sd.beta) / np.pi
    nearest = np.round(b)
    return bool(np.any((nearest >= 1) & (np.abs(b - nearest) * np.pi < SINGULAR_ATOL)))


def x_component_closed_form(
    group: StepTwoGroup, zeta: Sequence[float], theta: Sequence[float]
) -> np.ndarray:
    """
    Horizontal endpoint exp(-U~(theta)) (sin U / U)(theta) zeta of exp(zeta, 2 theta)

    Args:
    group (StepTwoGroup): the group
    zeta (Sequence[float]): horizontal covector
    theta (Sequence[float]): half the vertical covector, outside the singular set

    Returns:
    np.ndarray: the x-component of exp(zeta, 2 theta)

    """
    if in_singular_set(group, theta):
        raise SingularTheta()
    sd = spectral(group, theta)
    return scipy.linalg.expm(-sd.u) @ apply_even(SINC, sd) @ np.asarray(zeta, float)


def _segment_operators(
    group: StepTwoGroup, theta: Sequence[float], k: int
) -> np.ndarray:
    sd = spectral(group, theta)
    rotation = 0.5 * np.sqrt(np.pi) * scipy.linalg.expm(-sd.u)
    ops = []
    power = np.eye(group.q)
    for j in range(k + 1):
        ops.append(rotation @ power @ apply_even(QK(j), sd))
        power = power @ sd.u
    return np.stack(ops)


def lift_covector(
    group: StepTwoGroup, zeta: Sequence[float], theta: Sequence[float], k: int
) -> np.ndarray:
    """
    Segment vector s = (s_1, ..., s_k) of the critical point matching (zeta, 2 theta)

    Args:
    group (StepTwoGroup): the group
    zeta (Sequence[float]): horizontal covector
    theta (Sequence[float]): critical point in tau
    k (int): level

    Returns:
    np.ndarray: array of shape (k, q)

    """
    ops = _segment_operators(group, theta, k)
    return np.einsum("jab,b->ja", ops[1:], np.asarray(zeta, dtype=float))


def covector_from_critical_point(
    group: StepTwoGroup,
    g: GroupPoint,
    s: Sequence,
    theta: Sequence[float],
    k: int,
) -> Covector:
    """
    Recovers the covector (zeta, 2 theta) of a critical point by stacked least squares

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target point
    s (Sequence): k vectors of length q
    theta (Sequence[float]): the tau-part of the critical point
    k (int): level

    Returns:
    Covector: the initial covector of the matching normal geodesic

    """
    ops = _segment_operators(group, theta, k)
    segs = np.asarray(s, dtype=float).reshape(k, group.q)
    rhs = np.concatenate([g.x / np.sqrt(2.0), segs.ravel()])
    zeta, *_ = np.linalg.lstsq(ops.reshape(-1, group.q), rhs, rcond=None)
    return Covector.of(zeta, 2.0 * np.asarray(theta, dtype=float))


def endpoint_residual(group: StepTwoGroup, covector: Covector, g: GroupPoint) -> float:
    end = exp_map(group, covector.zeta, covector.tau)
    return float(
        np.sqrt(np.sum((end.x - g.x) ** 2) + np.sum((end.t - g.t) ** 2))
    )
