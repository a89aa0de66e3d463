"""Reference functions and the level-k objective.

Variables of the level-k objective are ordered as (s_1, ..., s_k, tau), each s_j in
R^q, so gradients and Hessians have kq + m entries. With s_0 := x / sqrt(2) the
objective reads

    |x|^2 + sum_j 2(2j+1)|s_j|^2 + 2 s_k^T R_k s_k + 4 t.tau + 4 sum_j s_{j-1}^T U~ s_j

where R_k is the RK kernel of U(tau) on the imaginary axis.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ccdist.bessel import DEFAULT_TABLE
from ccdist.exceptions import DimensionMismatch, DomainViolation
from ccdist.groups import GroupPoint, StepTwoGroup, bracket
from ccdist.matfun import (
    COT,
    RK,
    SpectralData,
    apply_even,
    derivative_matrices,
    evaluate_quadratic,
    spectral,
)

logger = logging.getLogger(__name__)

BOUNDARY_GUARD = 1e-10


@dataclass(frozen=True, eq=False)
class ReferenceEvaluation:
    """
    Value and derivatives of the level-k objective at (s, tau)

    Args:
    value (float): objective value
    grad_tau (np.ndarray): gradient in tau, length m
    grad_s (np.ndarray): gradient in s, shape (k, q)
    hess (np.ndarray): Hessian in (s, tau), or None when not requested
    boundary_margin (float): Z_{k,1} - ||U(tau)||

    """

    value: float
    grad_tau: Optional[np.ndarray]
    grad_s: Optional[np.ndarray]
    hess: Optional[np.ndarray]
    boundary_margin: float

    @property
    def grad(self) -> np.ndarray:
        return np.concatenate([self.grad_s.ravel(), self.grad_tau])


def level_zero(k: int) -> float:
    """First positive zero Z_{k,1} of J_{k+1/2}, the radius of Omega_k."""
    return DEFAULT_TABLE.first_zero(k)


def _margin(sd: SpectralData, k: int) -> float:
    return level_zero(k) - sd.norm


def omega_margin(group: StepTwoGroup, tau: Sequence[float], k: int) -> float:
    return _margin(spectral(group, tau), k)


def in_omega(group: StepTwoGroup, tau: Sequence[float], k: int) -> bool:
    return omega_margin(group, tau, k) > 0


def _as_segments(group: StepTwoGroup, s: Optional[Sequence], k: int) -> np.ndarray:
    if s is None:
        return np.zeros((k, group.q))
    arr = np.asarray(s, dtype=float)
    arr = arr.reshape(-1, group.q) if arr.size else np.zeros((0, group.q))
    if arr.shape != (k, group.q):
        raise DimensionMismatch(
            f"Segment vector must hold {k} vectors of length {group.q}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError("Segment vector entries must be finite")
    return arr


def _guard(sd: SpectralData, k: int) -> float:
    margin = _margin(sd, k)
    if margin < BOUNDARY_GUARD * level_zero(k):
        raise DomainViolation(
            int(np.argmax(sd.beta)), f"tau lies outside Omega_{k} (margin {margin:.3e})"
        )
    return margin


def phi(group: StepTwoGroup, g: GroupPoint, tau: Sequence[float]) -> float:
    """
    Computes phi(g; tau) = x^T (U cot U)(tau) x + 4 t.tau on Omega_0

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the point
    tau (Sequence[float]): point of Omega_0

    Returns:
    float: the reference function value

    """
    sd = spectral(group, tau)
    _guard(sd, 0)
    quad = evaluate_quadratic(group, COT, sd, g.x, order=0).value
    return quad + 4.0 * float(g.t @ sd.tau)


def f_k_map(
    group: StepTwoGroup, x: Sequence[float], t: Sequence[float], s: Sequence
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Lift map F_k(x, t, s) = (s_k, t + sum_j <U s_{j-1}, s_j>) with s_0 = x / sqrt(2)

    Args:
    group (StepTwoGroup): the group
    x (Sequence[float]): horizontal part, length q
    t (Sequence[float]): vertical part, length m
    s (Sequence): k >= 1 vectors of length q

    Returns:
    Tuple[np.ndarray, np.ndarray]: the level point (X, T)

    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.shape != (group.q,) or t.shape != (group.m,):
        raise DimensionMismatch()
    segs = np.asarray(s, dtype=float).reshape(-1, group.q)
    if segs.shape[0] < 1:
        raise DimensionMismatch("F_k needs at least one segment")
    chain = np.vstack([x / np.sqrt(2.0), segs])
    T = t + sum(bracket(group, chain[j - 1], chain[j]) for j in range(1, len(chain)))
    return segs[-1].copy(), T


def phi_k(
    group: StepTwoGroup,
    X: Sequence[float],
    T: Sequence[float],
    tau: Sequence[float],
    k: int,
) -> float:
    sd = spectral(group, tau)
    _guard(sd, k)
    X = np.asarray(X, dtype=float)
    quad = evaluate_quadratic(group, RK(k), sd, X, order=0).value
    return 2.0 * quad + 4.0 * float(np.asarray(T, dtype=float) @ sd.tau)


def phi_k_star(
    group: StepTwoGroup,
    g: GroupPoint,
    s: Optional[Sequence],
    tau: Sequence[float],
    k: int,
    order: int = 2,
) -> ReferenceEvaluation:
    """
    Evaluates the level-k objective with derivatives in (s, tau)

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target point
    s (Optional[Sequence]): k vectors of length q (None means zero)
    tau (Sequence[float]): point of Omega_k
    k (int): level
    order (int): 0 value only, 1 adds gradients, 2 adds the Hessian

    Returns:
    ReferenceEvaluation: the evaluation

    """
    segs = _as_segments(group, s, k)
    sd = spectral(group, tau)
    margin = _guard(sd, k)
    q, m = group.q, group.m

    if k == 0:
        ev = evaluate_quadratic(group, COT, sd, g.x, order=order)
        value = ev.value + 4.0 * float(g.t @ sd.tau)
        grad = None if order < 1 else ev.grad + 4.0 * g.t
        return ReferenceEvaluation(value, grad, np.zeros((0, q)), ev.hess, margin)

    A = sd.u
    chain = np.vstack([g.x / np.sqrt(2.0), segs])
    kernel = RK(k)
    ev = evaluate_quadratic(group, kernel, sd, segs[-1], order=order)

    weights = 2.0 * (2.0 * np.arange(1, k + 1) + 1.0)
    cross = np.einsum("ja,ab,jb->", chain[:-1], A, chain[1:])
    value = (
        float(g.x @ g.x)
        + float(np.sum(weights * np.sum(segs**2, axis=1)))
        + 2.0 * ev.value
        + 4.0 * float(g.t @ sd.tau)
        + 4.0 * cross
    )
    if order < 1:
        return ReferenceEvaluation(value, None, None, None, margin)

    R = apply_even(kernel, sd)
    grad_s = 2.0 * weights[:, None] * segs + 4.0 * chain[:-1] @ A
    grad_s[:-1] += 4.0 * segs[1:] @ A.T
    grad_s[-1] += 4.0 * R @ segs[-1]
    T = g.t + np.einsum("ja,iab,jb->i", chain[:-1], group.U, chain[1:])
    grad_tau = 2.0 * ev.grad + 4.0 * T
    if order < 2:
        return ReferenceEvaluation(value, grad_tau, grad_s, None, margin)

    n = k * q
    hess = np.zeros((n + m, n + m))
    for j in range(k):
        block = slice(j * q, (j + 1) * q)
        hess[block, block] = 2.0 * weights[j] * np.eye(q)
        if j + 1 < k:
            nxt = slice((j + 1) * q, (j + 2) * q)
            hess[block, nxt] = 4.0 * A
            hess[nxt, block] = 4.0 * A.T
        mixed = 4.0 * np.einsum("iba,b->ai", group.U, chain[j])
        if j + 1 < k:
            mixed += 4.0 * np.einsum("iab,b->ai", group.U, segs[j + 1])
        hess[block, n:] = mixed

    last = slice((k - 1) * q, n)
    hess[last, last] += 4.0 * R
    d_r = derivative_matrices(group, kernel, sd)
    hess[last, n:] += 4.0 * np.einsum("iab,b->ai", d_r, segs[-1])
    hess[n:, :n] = hess[:n, n:].T
    hess[n:, n:] = 2.0 * ev.hess
    return ReferenceEvaluation(value, grad_tau, grad_s, 0.5 * (hess + hess.T), margin)


def theta_to_t(
    group: StepTwoGroup, x: Sequence[float], theta: Sequence[float]
) -> GroupPoint:
    """
    Builds the point (x, t) whose phi(.; tau) is stationary at tau = theta

    Args:
    group (StepTwoGroup): the group
    x (Sequence[float]): horizontal part
    theta (Sequence[float]): prescribed maximizer inside Omega_0

    Returns:
    GroupPoint: the point (x, -1/4 grad_theta <U cot U x, x>)

    """
    x = np.asarray(x, dtype=float)
    sd = spectral(group, theta)
    _guard(sd, 0)
    grad = evaluate_quadratic(group, COT, sd, x, order=1).grad
    return GroupPoint.of(x, -0.25 * grad)
