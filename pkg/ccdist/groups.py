"""Step-two Carnot groups: the matrix tuple, the group law and named fixtures.

The group law is ``(x, t) * (x', t') = (x + x', t + t' + 1/2 <U x, x'>)`` with
``<U x, x'>_j = x^T U(j) x'``. Every other module reads the group only through
``StepTwoGroup.U`` and :func:`u_tilde`.
"""
import logging
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from ccdist.exceptions import (
    DimensionMismatch,
    LinearlyDependent,
    NonPositiveScale,
    NotSkewSymmetric,
    SpecParseError,
    UnknownFixture,
)

logger = logging.getLogger(__name__)

INDEPENDENCE_RTOL = 1e-10


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StepTwoGroup:
    """
    A step-two Carnot group on R^q x R^m

    Args:
    q (int): horizontal dimension
    m (int): vertical dimension
    U (np.ndarray): array of shape (m, q, q) holding U(1), ..., U(m)
    name (str): fixture name or "custom"

    """

    q: int
    m: int
    U: np.ndarray
    name: str = "custom"

    def __repr__(self) -> str:
        return f"<StepTwoGroup(name='{self.name}', q={self.q}, m={self.m})>"


@dataclass(frozen=True, eq=False)
class GroupPoint:
    x: np.ndarray
    t: np.ndarray

    @classmethod
    def of(cls, x: Sequence[float], t: Sequence[float]) -> "GroupPoint":
        x, t = _frozen(np.atleast_1d(x)), _frozen(np.atleast_1d(t))
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
            raise ValueError("Group point entries must be finite")
        return cls(x, t)

    def is_identity(self) -> bool:
        return not (np.any(self.x) or np.any(self.t))

    def __repr__(self) -> str:
        return f"<GroupPoint(x={self.x.tolist()}, t={self.t.tolist()})>"


@dataclass(frozen=True, eq=False)
class Covector:
    zeta: np.ndarray
    tau: np.ndarray

    @classmethod
    def of(cls, zeta: Sequence[float], tau: Sequence[float]) -> "Covector":
        zeta, tau = _frozen(np.atleast_1d(zeta)), _frozen(np.atleast_1d(tau))
        if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(tau))):
            raise ValueError("Covector entries must be finite")
        return cls(zeta, tau)


def validate_group(matrices: Sequence[Any], name: str = "custom") -> StepTwoGroup:
    """
    Validates a tuple of matrices and builds the group they define

    Args:
    matrices (Sequence): nonempty list of q x q real matrices
    name (str): label stored on the group

    Returns:
    StepTwoGroup: the validated group

    """
    if len(matrices) == 0:
        raise DimensionMismatch("At least one matrix is required")

    arrays = []
    for j, mat in enumerate(matrices, start=1):
        arr = np.array(mat, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch(f"Matrix {j} is not square")
        arrays.append(arr)

    q = arrays[0].shape[0]
    if any(arr.shape != (q, q) for arr in arrays):
        raise DimensionMismatch("All matrices must have the same size")

    for j, arr in enumerate(arrays, start=1):
        if not np.array_equal(arr.T, -arr):
            raise NotSkewSymmetric(j)

    stacked = np.stack(arrays)
    m = len(arrays)
    singular_values = np.linalg.svd(stacked.reshape(m, q * q), compute_uv=False)
    if singular_values[0] == 0.0 or (
        singular_values[-1] < INDEPENDENCE_RTOL * singular_values[0]
    ):
        raise LinearlyDependent()

    return StepTwoGroup(q=q, m=m, U=_frozen(stacked), name=name)


def _check_point(group: StepTwoGroup, g: GroupPoint) -> None:
    if g.x.shape != (group.q,) or g.t.shape != (group.m,):
        raise DimensionMismatch(
            f"Point has dimensions ({g.x.size}, {g.t.size}), "
            f"group expects ({group.q}, {group.m})"
        )


def bracket(group: StepTwoGroup, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Returns the vector <U a, b> with entries a^T U(j) b."""
    return np.einsum("i,jik,k->j", a, group.U, b)


def multiply(group: StepTwoGroup, g: GroupPoint, h: GroupPoint) -> GroupPoint:
    _check_point(group, g)
    _check_point(group, h)
    return GroupPoint.of(g.x + h.x, g.t + h.t + 0.5 * bracket(group, g.x, h.x))


def inverse(g: GroupPoint) -> GroupPoint:
    return GroupPoint.of(-g.x, -g.t)


def identity(group: StepTwoGroup) -> GroupPoint:
    return GroupPoint.of(np.zeros(group.q), np.zeros(group.m))


def dilate(g: GroupPoint, r: float) -> GroupPoint:
    if not r > 0:
        raise NonPositiveScale(r)
    return GroupPoint.of(r * g.x, r * r * g.t)


def u_tilde(group: StepTwoGroup, tau: Sequence[float]) -> np.ndarray:
    """
    Computes U~(tau) = sum_j tau_j U(j)

    Args:
    group (StepTwoGroup): the group
    tau (Sequence[float]): vector of length m (real or complex)

    Returns:
    np.ndarray: the q x q skew-symmetric matrix U~(tau)

    """
    tau = np.asarray(tau)
    if tau.shape != (group.m,):
        raise DimensionMismatch(f"tau must have length {group.m}")
    return np.tensordot(tau, group.U, axes=1)


def point_scale(g: GroupPoint) -> float:
    """Scale used by scale-relative tolerances: 1 + |x|^2 + sum |t_j|."""
    return 1.0 + float(g.x @ g.x) + float(np.abs(g.t).sum())


# fixtures

_J = np.array([[0.0, 1.0], [-1.0, 0.0]])

_QUATERNION_LEFT = [
    np.array([[0, -1, 0, 0], [1, 0, 0, 0], [0, 0, 0, -1], [0, 0, 1, 0]], float),
    np.array([[0, 0, -1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, -1, 0, 0]], float),
    np.array([[0, 0, 0, -1], [0, 0, -1, 0], [0, 1, 0, 0], [1, 0, 0, 0]], float),
]


def _elementary(q: int, a: int, b: int) -> np.ndarray:
    mat = np.zeros((q, q))
    mat[a, b], mat[b, a] = 1.0, -1.0
    return mat


def _heisenberg(n: int) -> List[np.ndarray]:
    return [np.kron(np.eye(n), _J)]


def _htype(q: int, m: int) -> List[np.ndarray]:
    if m == 1 and q % 2 == 0:
        return _heisenberg(q // 2)
    if 2 <= m <= 3 and q % 4 == 0:
        return [np.kron(np.eye(q // 4), L) for L in _QUATERNION_LEFT[:m]]
    raise ValueError


def _corank1(q: int) -> List[np.ndarray]:
    if q < 2:
        raise ValueError
    mat = np.zeros((q, q))
    for i in range(q // 2):
        mat[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = (i + 1) * _J
    return [mat]


def _n32() -> List[np.ndarray]:
    return [_elementary(3, 0, 1), _elementary(3, 0, 2), _elementary(3, 1, 2)]


def _kolmogorov(q: int) -> List[np.ndarray]:
    if q < 2:
        raise ValueError
    return [_elementary(q, 0, j) for j in range(1, q)]


_FIXTURES = {
    "heisenberg": (_heisenberg, 1),
    "htype": (_htype, 2),
    "corank1": (_corank1, 1),
    "n32": (_n32, 0),
    "kolmogorov": (_kolmogorov, 1),
}

_FIXTURE_PATTERN = re.compile(r"^\s*([a-z0-9]+)\s*(?:\(\s*([0-9,\s]*)\s*\))?\s*$")


def builtin_group(name: str) -> StepTwoGroup:
    """
    Builds a named fixture group

    Args:
    name (str): one of heisenberg(n), htype(q,m), corank1(q), n32, kolmogorov(q)

    Returns:
    StepTwoGroup: the fixture

    """
    match = _FIXTURE_PATTERN.match(str(name).lower())
    if match is None or match.group(1) not in _FIXTURES:
        raise UnknownFixture(name)

    builder, arity = _FIXTURES[match.group(1)]
    raw = match.group(2)
    args = [int(a) for a in raw.split(",") if a.strip()] if raw else []
    if len(args) != arity:
        raise UnknownFixture(name)

    try:
        matrices = builder(*args)
    except ValueError:
        raise UnknownFixture(name)

    canonical = match.group(1) + (f"({','.join(map(str, args))})" if args else "")
    return validate_group(matrices, name=canonical)


def fixture_names() -> List[str]:
    return ["heisenberg(1)", "htype(4,3)", "corank1(4)", "n32", "kolmogorov(3)"]


def group_from_dict(data: Dict[str, Any]) -> StepTwoGroup:
    """
    Builds a group from the Group-spec JSON structure {"q", "m", "U"}

    Args:
    data (Dict[str, Any]): the decoded JSON object

    Returns:
    StepTwoGroup: the validated group

    """
    if not isinstance(data, dict) or not {"q", "m", "U"} <= set(data):
        raise SpecParseError("Group spec must be an object with keys q, m and U")

    q, m, matrices = data["q"], data["m"], data["U"]
    if not isinstance(q, int) or not isinstance(m, int) or q < 1 or m < 1:
        raise SpecParseError("q and m must be positive integers")
    if not isinstance(matrices, list) or len(matrices) != m:
        raise SpecParseError(f"U must be a list of {m} matrices")

    for j, mat in enumerate(matrices, start=1):
        try:
            arr = np.array(mat, dtype=float)
        except (TypeError, ValueError):
            raise SpecParseError(f"U[{j}] is not a numeric matrix", index=j)
        if arr.shape != (q, q):
            raise SpecParseError(f"U[{j}] must be a {q}x{q} matrix", index=j)

    return validate_group(matrices, name=str(data.get("name", "custom")))


def group_to_dict(group: StepTwoGroup) -> Dict[str, Any]:
    return {
        "name": group.name,
        "q": group.q,
        "m": group.m,
        "U": [u.tolist() for u in group.U],
    }
