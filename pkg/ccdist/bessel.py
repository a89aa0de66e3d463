"""Zeros of J_{k+1/2} and the even entire functions Q_k, R_k.

Everything is parametrized by the even argument ``w = z**2``:

    Q_k(z) = z^-(k+1/2) I_{k+1/2}(z),    R_k(z) = z^2 Q_{k+1}(z) / Q_k(z).

``w > 0`` is the real axis (modified Bessel functions), ``w < 0`` the imaginary axis
(ordinary Bessel functions with ``b = sqrt(-w)``). Q_k vanishes at
``w = -Z_{k,l}^2``, so on the imaginary axis the natural domain is
``w > -Z_{k,1}^2``.
"""
import logging
import threading
from typing import Dict, NamedTuple, Union

import numpy as np
from scipy.special import gamma, ive, jv, jvp, polygamma

from ccdist.exceptions import ConvergenceFailure, DomainViolation, UnsupportedOrder

logger = logging.getLogger(__name__)

DEFAULT_K_MAX = 32
DEFAULT_ZEROS = 64
SERIES_SWITCH = 1e-4
SERIES_TERMS = 12

ArrayLike = Union[float, np.ndarray]


def _refine_zeros(nu: float, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """
    Safeguarded Newton on J_nu inside sign-changing brackets, all brackets at once

    Args:
    nu (float): Bessel order
    lo (np.ndarray): left ends of the brackets
    hi (np.ndarray): right ends of the brackets

    Returns:
    np.ndarray: one zero per bracket

    """
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    f_lo = jv(nu, lo)
    x = 0.5 * (lo + hi)
    done = np.zeros(x.shape, dtype=bool)

    for _ in range(200):
        fx = jv(nu, x)
        exact = fx == 0.0
        same_side = np.sign(fx) == np.sign(f_lo)
        lo = np.where(same_side & ~exact, x, lo)
        f_lo = np.where(same_side & ~exact, fx, f_lo)
        hi = np.where(~same_side & ~exact, x, hi)

        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - fx / jvp(nu, x)
        unsafe = ~np.isfinite(x_new) | (x_new <= lo) | (x_new >= hi)
        x_new = np.where(unsafe, 0.5 * (lo + hi), x_new)
        x_new = np.where(exact | done, x, x_new)

        done |= exact | (np.abs(x_new - x) <= 4e-16 * x) | (hi - lo <= 4e-16 * x)
        x = x_new
        if np.all(done):
            return x

    raise ConvergenceFailure(f"Zeros of J_{nu} did not converge")


class BesselTable:
    """
    Lazily grown table of the positive zeros Z_{k,l} of J_{k+1/2}

    Rows are built by interlacing: Z_{k,l} lies strictly between Z_{k-1,l} and
    Z_{k-1,l+1}, starting from Z_{0,l} = l*pi. Once a row is computed it is only
    ever extended, never changed.

    Args:
    k_max (int): largest supported order index
    default_count (int): zeros stored per row on first access

    """

    def __init__(self, k_max: int = DEFAULT_K_MAX, default_count: int = DEFAULT_ZEROS):
        self.k_max = k_max
        self.default_count = default_count
        self._rows: Dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def _row(self, k: int, count: int) -> np.ndarray:
        row = self._rows.get(k)
        if row is not None and row.size >= count:
            return row
        if k == 0:
            row = np.pi * np.arange(1, count + 1, dtype=float)
        else:
            prev = self._row(k - 1, count + 1)
            row = _refine_zeros(k + 0.5, prev[:count], prev[1 : count + 1])
        row.setflags(write=False)
        self._rows[k] = row
        logger.debug("Bessel zeros row k=%d extended to %d entries", k, count)
        return row

    def zeros(self, k: int, count: int = 0) -> np.ndarray:
        if k < 0 or k > self.k_max:
            raise UnsupportedOrder(k, self.k_max)
        if count <= 0:
            count = self.default_count
        with self._lock:
            return self._row(k, max(count, self.default_count))[:count]

    def first_zero(self, k: int) -> float:
        return float(self.zeros(k)[0])


DEFAULT_TABLE = BesselTable()


def bessel_zero(k: int, l: int, table: BesselTable = DEFAULT_TABLE) -> float:
    """
    Returns the l-th positive zero of J_{k+1/2}

    Args:
    k (int): order index, 0 <= k <= k_max
    l (int): zero index, l >= 1
    table (BesselTable): zero cache

    Returns:
    float: Z_{k,l}

    """
    if l < 1:
        raise ValueError("Zero index l must be at least 1")
    return float(table.zeros(k, l)[l - 1])


def _check_order(k: int, table: BesselTable) -> None:
    if k < 0 or k > table.k_max:
        raise UnsupportedOrder(k, table.k_max)


def _series_q(nu: float, w: np.ndarray) -> np.ndarray:
    term = np.full(w.shape, 2.0**-nu / gamma(nu + 1.0), dtype=w.dtype)
    total = term.copy()
    for n in range(1, SERIES_TERMS):
        term = term * (w / 4.0) / (n * (n + nu))
        total = total + term
    return total


def _q_unchecked(k: int, w: ArrayLike) -> np.ndarray:
    """Q_k at z**2 = w on the real line, no domain check."""
    w = np.asarray(w, dtype=float)
    nu = k + 0.5
    out = np.empty(w.shape)
    small = np.abs(w) < SERIES_SWITCH
    pos = (w > 0) & ~small
    neg = (w < 0) & ~small

    out[small] = _series_q(nu, w[small])
    z = np.sqrt(w[pos])
    with np.errstate(over="ignore"):
        out[pos] = ive(nu, z) * np.exp(z) * z**-nu
    b = np.sqrt(-w[neg])
    out[neg] = jv(nu, b) * b**-nu
    return out


def _r_unchecked(k: int, w: ArrayLike) -> np.ndarray:
    """R_k at z**2 = w on the real line, no domain check."""
    w = np.asarray(w, dtype=float)
    nu = k + 0.5
    out = np.empty(w.shape)
    small = np.abs(w) < SERIES_SWITCH
    pos = (w > 0) & ~small
    neg = (w < 0) & ~small

    ws = w[small]
    out[small] = ws * _series_q(nu + 1.0, ws) / _series_q(nu, ws)
    z = np.sqrt(w[pos])
    out[pos] = z * ive(nu + 1.0, z) / ive(nu, z)
    b = np.sqrt(-w[neg])
    with np.errstate(divide="ignore"):
        out[neg] = -b * jv(nu + 1.0, b) / jv(nu, b)
    return out


def _log_q_unchecked(k: int, w: ArrayLike) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    nu = k + 0.5
    out = np.empty(w.shape)
    big = w > 1.0
    z = np.sqrt(w[big])
    out[big] = np.log(ive(nu, z)) + z - nu * np.log(z)
    out[~big] = np.log(_q_unchecked(k, w[~big]))
    return out


def _check_domain(k: int, w: np.ndarray, table: BesselTable) -> None:
    _check_order(k, table)
    bound = -table.first_zero(k) ** 2
    bad = np.flatnonzero(~(w > bound))
    if bad.size:
        raise DomainViolation(
            int(bad[0]),
            f"w={float(w.flat[bad[0]])} is outside the domain w > -Z_{{{k},1}}^2",
        )


def _scalar_or_array(w_in: ArrayLike, out: np.ndarray) -> ArrayLike:
    return float(out) if np.ndim(w_in) == 0 else out


def q_k(k: int, w: ArrayLike, table: BesselTable = DEFAULT_TABLE) -> ArrayLike:
    """
    Evaluates Q_k at z**2 = w

    Args:
    k (int): order index
    w (float or np.ndarray): even argument, w > -Z_{k,1}^2
    table (BesselTable): zero cache used for the domain check

    Returns:
    float or np.ndarray: Q_k values, strictly positive on the domain

    """
    arr = np.asarray(w, dtype=float)
    _check_domain(k, arr, table)
    return _scalar_or_array(w, _q_unchecked(k, arr))


def log_q_k(k: int, w: ArrayLike, table: BesselTable = DEFAULT_TABLE) -> ArrayLike:
    arr = np.asarray(w, dtype=float)
    _check_domain(k, arr, table)
    return _scalar_or_array(w, _log_q_unchecked(k, arr))


def r_k(k: int, w: ArrayLike, table: BesselTable = DEFAULT_TABLE) -> ArrayLike:
    """
    Evaluates R_k = w Q_{k+1} / Q_k at z**2 = w

    Args:
    k (int): order index
    w (float or np.ndarray): even argument, w > -Z_{k,1}^2
    table (BesselTable): zero cache used for the domain check

    Returns:
    float or np.ndarray: R_k values, increasing in w with R_k(0) = 0

    """
    arr = np.asarray(w, dtype=float)
    _check_domain(k, arr, table)
    return _scalar_or_array(w, _r_unchecked(k, arr))


class SeriesResult(NamedTuple):
    value: float
    tail_bound: float
    corrected: float


def r_k_series(
    k: int, w: float, L: int, table: BesselTable = DEFAULT_TABLE
) -> SeriesResult:
    """
    Partial-fraction series 2 sum_l w / (Z_{k,l}^2 + w) truncated after L terms

    The tail bound uses Z_{k,l} >= l*pi (interlacing down to k=0). The corrected
    value adds the tail of the asymptotic zeros (l + k/2) pi in closed form.

    Args:
    k (int): order index
    w (float): even argument in the domain of R_k
    L (int): number of terms, L >= 1
    table (BesselTable): zero cache

    Returns:
    SeriesResult: truncated value, tail bound and tail-corrected value

    """
    if L < 1:
        raise ValueError("L must be at least 1")
    _check_domain(k, np.asarray(w, dtype=float), table)
    zeros = table.zeros(k, L + 1)
    z2 = zeros[:L] ** 2
    value = float(2.0 * np.sum(w / (z2 + w)))

    tail = 2.0 * abs(w) / (np.pi**2 * L)
    if w < 0:
        tail /= 1.0 - abs(w) / zeros[L] ** 2
    corrected = value + 2.0 * w / np.pi**2 * float(polygamma(1, L + 1 + k / 2.0))
    return SeriesResult(value=value, tail_bound=float(tail), corrected=corrected)


# complex arguments (shifted heat-kernel contours)


def _series_q_complex(nu: float, w: np.ndarray) -> np.ndarray:
    return _series_q(nu, w.astype(complex))


def log_q_k_complex(
    k: int, w: np.ndarray, table: BesselTable = DEFAULT_TABLE, terms: int = 48
) -> np.ndarray:
    """
    Logarithm of Q_k at complex z**2 = w, continuous away from the cuts w <= -Z_{k,1}^2

    The principal logarithm of the closed form is moved onto the branch picked by the
    truncated product log Q_k(0) + sum_l log(1 + w / Z_{k,l}^2).

    Args:
    k (int): order index
    w (np.ndarray): complex even arguments
    table (BesselTable): zero cache
    terms (int): minimum number of product terms used to pick the branch

    Returns:
    np.ndarray: complex logarithms

    """
    w = np.asarray(w, dtype=complex)
    nu = k + 0.5
    small = np.abs(w) < SERIES_SWITCH
    principal = np.empty(w.shape, dtype=complex)
    principal[small] = np.log(_series_q_complex(nu, w[small]))
    z = np.sqrt(w[~small])
    principal[~small] = np.log(ive(nu, z)) + z.real - nu * np.log(z)

    # the neglected tail is O(|w|^2 / terms^3); keep it far below one turn
    size = float(np.max(np.abs(w))) if w.size else 0.0
    terms = int(min(4096, max(terms, np.ceil(4.0 * np.sqrt(size)))))
    zeros = table.zeros(k, terms)[:terms]
    estimate = np.full(w.shape, np.log(2.0**-nu / gamma(nu + 1.0)), dtype=complex)
    for start in range(0, terms, 64):
        chunk = zeros[start : start + 64]
        estimate += np.sum(np.log1p(w[..., None] / chunk**2), axis=-1)
    estimate += w / np.pi**2 * float(polygamma(1, terms + 1 + k / 2.0))
    turns = np.round((estimate.imag - principal.imag) / (2.0 * np.pi))
    return principal + 2j * np.pi * turns


def r_k_complex(k: int, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=complex)
    nu = k + 0.5
    out = np.empty(w.shape, dtype=complex)
    small = np.abs(w) < SERIES_SWITCH
    ws = w[small]
    out[small] = ws * _series_q_complex(nu + 1.0, ws) / _series_q_complex(nu, ws)
    z = np.sqrt(w[~small])
    out[~small] = z * ive(nu + 1.0, z) / ive(nu, z)
    return out


def q_k_complex(
    k: int, w: np.ndarray, table: BesselTable = DEFAULT_TABLE
) -> np.ndarray:
    return np.exp(log_q_k_complex(k, w, table))
