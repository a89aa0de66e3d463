"""Named verification suites run by ``ccdist verify``.

Each suite returns a SuiteReport whose rows hold the measured quantity next to the
tolerance it is held to. Sample counts default to small values; the CLI raises them.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ccdist import settings
from ccdist.bessel import DEFAULT_TABLE, bessel_zero, q_k, r_k, r_k_series
from ccdist.exceptions import CCDistError, NoneFound, UnknownSuite
from ccdist.flow import exp_map, in_singular_set, x_component_closed_form
from ccdist.geodesics import cut_locus_test, solve_geodesics
from ccdist.groups import GroupPoint, StepTwoGroup, builtin_group, point_scale
from ccdist.heatkernel import (
    QuadConfig,
    heat_kernel,
    log_asymptotic_leading_term,
    p_k_h,
    varadhan_estimate,
    verify_relation_relPk,
)
from ccdist.optimize import SolverConfig, distance, outer_inf
from ccdist.oracle import (
    OracleConfig,
    direct_distance,
    heisenberg_closed_form,
    shooting_distance,
)
from ccdist.reference import level_zero, phi_k_star, theta_to_t

logger = logging.getLogger(__name__)

Z11 = 4.493409457909064
ORACLE_SEGMENTS = 128


@dataclass(frozen=True)
class Check:
    name: str
    group: str
    measured: float
    tolerance: float
    passed: bool


@dataclass
class SuiteReport:
    suite: str
    checks: List[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(
        self, name: str, group: str, measured: float, tolerance: float, passed: bool
    ) -> None:
        self.checks.append(
            Check(name, group, float(measured), float(tolerance), bool(passed))
        )

    def at_most(self, name: str, group: str, measured: float, tolerance: float):
        self.add(name, group, measured, tolerance, measured <= tolerance)


def _random_tau(
    rng: np.random.Generator, group: StepTwoGroup, k: int, fill: float = 0.95
) -> np.ndarray:
    direction = rng.standard_normal(group.m)
    direction /= np.linalg.norm(direction)
    norm = np.linalg.norm(np.einsum("i,iab->ab", direction, group.U), 2)
    return fill * level_zero(k) / norm * rng.uniform() * direction


def _random_point(rng: np.random.Generator, group: StepTwoGroup) -> GroupPoint:
    return GroupPoint.of(rng.uniform(-1, 1, group.q), rng.uniform(-1, 1, group.m))


def suite_bessel(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("bessel")
    rng = np.random.default_rng(seed)
    z0 = DEFAULT_TABLE.zeros(0, 64)
    l = np.arange(1, 65)
    report.at_most("Z_{0,l} = l pi", "-", np.max(np.abs(z0 / (l * np.pi) - 1)), 1e-12)
    report.at_most("Z_{1,1}", "-", abs(bessel_zero(1, 1) - Z11), 1e-9)

    interlacing, bounds = 0, 0
    for k in range(9):
        row, nxt = DEFAULT_TABLE.zeros(k, 64), DEFAULT_TABLE.zeros(k + 1, 64)
        interlacing += int(np.sum(~((row < nxt) & (nxt[:-1] < row[1:]))))
        lo, hi = l * np.pi, ((k + 1) / 2 + l) * np.pi
        bounds += int(np.sum((row < lo) | (row > hi)))
    report.add("interlacing violations", "-", interlacing, 0, interlacing == 0)
    report.add("zero bound violations", "-", bounds, 0, bounds == 0)

    worst = 0.0
    for k in range(6):
        for w in rng.uniform(-bessel_zero(k, 1) ** 2 + 0.1, 50.0, samples):
            lhs = q_k(k, w)
            rhs = (2 * k + 3) * q_k(k + 1, w) + w * q_k(k + 2, w)
            worst = max(worst, abs(lhs - rhs) / abs(lhs))
    report.at_most("recursion residual", "-", worst, 1e-11)

    for k, w in ((0, 1.0), (1, 4.0)):
        series = r_k_series(k, w, 10000)
        gap = abs(series.value - r_k(k, w))
        report.at_most(f"r_{k} series at w={w}", "-", gap, series.tail_bound)
    return report


def suite_concavity(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("concavity")
    rng = np.random.default_rng(seed)
    for group in groups:
        for k in range(3):
            worst = 0.0
            for _ in range(samples):
                g = _random_point(rng, group)
                s = rng.standard_normal((k, group.q))
                a, b = _random_tau(rng, group, k), _random_tau(rng, group, k)
                f = [
                    phi_k_star(group, g, s, tau, k, order=0).value
                    for tau in (a, b, 0.5 * (a + b))
                ]
                violation = 0.5 * (f[0] + f[1]) - f[2]
                worst = max(worst, violation / point_scale(g))
            report.at_most(f"midpoint concavity k={k}", group.name, worst, 1e-10)
    return report


def oracle_best(group: StepTwoGroup, g: GroupPoint, seed: int) -> float:
    """
    Smallest energy found by the direct oracle (ORACLE_SEGMENTS segments) and by
    shooting

    Args:
    group (StepTwoGroup): the group
    g (GroupPoint): the target, not the identity
    seed (int): seed of both oracles

    Returns:
    float: min of the two energies, skipping an oracle that found nothing

    """
    oracle = OracleConfig(restarts=2, seed=seed)
    energies = []
    try:
        energies.append(direct_distance(group, g, N=ORACLE_SEGMENTS, config=oracle)[0])
    except CCDistError as e:
        logger.warning(f"direct oracle failed at {g}: {e}")
    try:
        energies.append(shooting_distance(group, g, seed=seed)[0])
    except CCDistError as e:
        logger.warning(f"shooting oracle failed at {g}: {e}")
    if not energies:
        raise NoneFound(f"Neither oracle reached {g}")
    return min(energies)


def suite_bounds(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("bounds")
    rng = np.random.default_rng(seed)
    config = SolverConfig(restarts=4, seed=seed)
    oracle = OracleConfig(segments=ORACLE_SEGMENTS, restarts=2, seed=seed)
    for group in groups:
        excess, drop = 0.0, 0.0
        for _ in range(samples):
            g = _random_point(rng, group)
            scale = point_scale(g)
            values = [outer_inf(group, g, k, config).value for k in range(3)]
            energy, _ = direct_distance(group, g, config=oracle)
            excess = max(excess, (max(values) - energy) / scale)
            drop = max(drop, max(values[k] - values[k + 1] for k in range(2)) / scale)
        report.at_most("lower bound above oracle", group.name, excess, 1e-3)
        report.at_most("level monotonicity", group.name, drop, 1e-6)
    return report


def suite_relpk(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("relpk")
    heis = builtin_group("heisenberg(1)")
    quad = QuadConfig(hermite_order=12)
    for X, T in (((0.3, 0.0), (0.2,)), ((0.0, 0.5), (-0.4,)), ((0.6, -0.2), (0.0,))):
        rel = verify_relation_relPk(heis, 0, X, T, 1.0, quad)
        report.at_most(f"relation at X={X}, T={T}", heis.name, rel.discrepancy, 0.01)

    rng = np.random.default_rng(seed)
    for group in groups:
        negatives = 0
        for _ in range(samples):
            k = int(rng.integers(0, 3))
            X = rng.uniform(-1, 1, group.q)
            T = rng.uniform(-1, 1, group.m)
            h = float(rng.uniform(0.2, 2.0))
            negatives += int(not p_k_h(group, k, X, T, h).value > 0)
        report.add("positivity failures", group.name, negatives, 0, negatives == 0)
    return report


def suite_varadhan(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("varadhan")
    heis = builtin_group("heisenberg(1)")
    g = GroupPoint.of([1.0, 0.0], [np.pi / 8])
    result = varadhan_estimate(heis, g, [1e-1, 3e-2, 1e-2, 3e-3])
    target = np.pi**2 / 4
    report.add(
        "monotone sequence", heis.name, float(result.monotone), 1, result.monotone
    )
    report.at_most(
        "extrapolated d2", heis.name, abs(result.extrapolated - target) / target, 0.02
    )
    h = 1e-3
    for theta in np.linspace(0.3, 1.5, max(1, samples)):
        p = theta_to_t(heis, [1.0, 0.0], [theta])
        log_ratio = heat_kernel(heis, p, h).log_value - log_asymptotic_leading_term(
            heis, p, 0, h
        )
        ratio = float(np.exp(log_ratio))
        passed = abs(ratio - 1.0) <= 0.1
        label = f"asymptotic ratio at theta={theta:.3f}"
        report.add(label, heis.name, ratio, 0.1, passed)
    return report


def suite_geodesic(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("geodesic")
    rng = np.random.default_rng(seed)
    config = SolverConfig(restarts=4, seed=seed)
    for group in groups:
        worst = 0.0
        for _ in range(samples):
            theta = _random_tau(rng, group, 0, fill=0.9)
            if in_singular_set(group, theta):
                continue
            zeta = rng.standard_normal(group.q)
            closed = x_component_closed_form(group, zeta, theta)
            end = exp_map(group, zeta, 2 * theta).x
            worst = max(worst, float(np.max(np.abs(end - closed))))
        report.at_most("exp vs closed form", group.name, worst, 1e-8)

        residual, gap = 0.0, 0.0
        for _ in range(max(1, samples // 10)):
            g = _random_point(rng, group)
            cert = distance(group, g, config)
            records = solve_geodesics(group, g, cert.k_used, config)
            scale = 1.0 + np.sqrt(point_scale(g))
            residual = max(residual, max(r.endpoint_residual for r in records) / scale)
            if cert.attained:
                gap = max(gap, abs(records[0].energy - cert.d2) / max(1.0, cert.d2))
        report.at_most("endpoint residual", group.name, residual, 1e-8)
        report.at_most("minimal energy vs d2", group.name, gap, 1e-6)
    return report


def suite_cutlocus(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("cutlocus")
    heis = builtin_group("heisenberg(1)")
    config = SolverConfig(restarts=4, seed=seed)
    rng = np.random.default_rng(seed)
    wrong = 0
    for _ in range(samples):
        angle = rng.uniform(0, 2 * np.pi)
        g = GroupPoint.of([np.cos(angle), np.sin(angle)], [rng.uniform(-0.3, 0.3)])
        wrong += int(cut_locus_test(heis, g, config).verdict != "NotCut")
    for t in (0.5, -0.5, 1.0, -1.0, 2.0)[: max(1, samples)]:
        g = GroupPoint.of([0.0, 0.0], [t])
        wrong += int(cut_locus_test(heis, g, config).verdict != "Cut")
    report.add("misclassified points", heis.name, wrong, 0, wrong == 0)
    return report


def suite_oracle_xcheck(groups, samples, seed) -> SuiteReport:
    report = SuiteReport("oracle-xcheck")
    heis = builtin_group("heisenberg(1)")
    config = SolverConfig(restarts=4, seed=seed)
    worst = 0.0
    side = max(2, int(np.sqrt(samples)))
    for r in np.linspace(0.1, 2.0, side):
        for t in np.linspace(-1.0, 1.0, side):
            g = GroupPoint.of([r, 0.0], [t])
            exact = heisenberg_closed_form(g.x, t)
            worst = max(worst, abs(distance(heis, g, config).d2 - exact) / exact)
    report.at_most("heisenberg closed form", heis.name, worst, 1e-8)

    n32 = builtin_group("n32")
    rng = np.random.default_rng(seed)
    gap = 0.0
    for _ in range(samples):
        g = _random_point(rng, n32)
        cert = distance(n32, g, config)
        best = oracle_best(n32, g, seed)
        gap = max(gap, abs(cert.d2 - best) / max(1.0, best))
    report.at_most("n32 distance vs oracles", n32.name, gap, 1e-3)
    return report


SuiteRunner = Callable[[List[StepTwoGroup], int, int], SuiteReport]

SUITES: Dict[str, SuiteRunner] = {
    "bessel": suite_bessel,
    "concavity": suite_concavity,
    "bounds": suite_bounds,
    "relpk": suite_relpk,
    "varadhan": suite_varadhan,
    "geodesic": suite_geodesic,
    "cutlocus": suite_cutlocus,
    "oracle-xcheck": suite_oracle_xcheck,
}

DEFAULT_GROUPS = {
    "concavity": ["heisenberg(1)", "htype(4,3)", "corank1(4)", "n32"],
    "bounds": ["heisenberg(1)", "htype(4,3)", "corank1(4)", "n32"],
    "relpk": ["heisenberg(1)", "corank1(4)"],
    "geodesic": ["heisenberg(1)", "htype(4,3)", "corank1(4)", "n32"],
}

DEFAULT_SAMPLES = {
    "bessel": 100,
    "concavity": 100,
    "bounds": 3,
    "relpk": 10,
    "varadhan": 5,
    "geodesic": 20,
    "cutlocus": 5,
    "oracle-xcheck": 9,
}


def run_suite(
    name: str,
    groups: Optional[Sequence[StepTwoGroup]] = None,
    samples: Optional[int] = None,
    seed: int = settings.default_seed,
) -> SuiteReport:
    """
    Runs one named suite

    Args:
    name (str): suite name, one of SUITES
    groups (Optional[Sequence[StepTwoGroup]]): groups to run on (suite default if None)
    samples (Optional[int]): sample count (suite default if None)
    seed (int): seed of every sampler in the suite

    Returns:
    SuiteReport: the measured checks

    """
    if name not in SUITES:
        raise UnknownSuite(name, list(SUITES))
    if groups is None:
        groups = [builtin_group(n) for n in DEFAULT_GROUPS.get(name, ["heisenberg(1)"])]
    count = DEFAULT_SAMPLES[name] if samples is None else samples
    try:
        report = SUITES[name](list(groups), count, seed)
    except CCDistError as e:
        report = SuiteReport(name)
        report.add(f"suite raised: {e}", "-", float("nan"), 0, False)
    logger.info(f"suite {name}: passed={report.passed} checks={len(report.checks)}")
    return report
