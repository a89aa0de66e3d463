import csv
import io
import logging
import sys
import time
from typing import Any, Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from ccdist import __version__, settings
from ccdist.bessel import DEFAULT_TABLE
from ccdist.database import get_db
from ccdist.geodesics import (
    LikelyGM,
    classify_gm,
    cut_locus_test,
    solve_geodesics,
)
from ccdist.groups import GroupPoint, StepTwoGroup
from ccdist.heatkernel import (
    QuadConfig,
    heat_kernel,
    heat_kernel_via_level,
    p_k_h,
    varadhan_estimate,
)
from ccdist.logger_config import error_log_file_path, log_file_path
from ccdist.models import RunRecord
from ccdist.optimize import SolverConfig, distance
from ccdist.oracle import (
    OracleConfig,
    direct_distance,
    heisenberg_closed_form,
    shooting_distance,
)
from ccdist.utils import (
    dumps,
    format_float,
    format_point,
    format_vector,
    group_digest,
    parse_floats,
    parse_point,
    resolve_group,
)
from ccdist.verify import SUITES, run_suite

# set up logging
logging.basicConfig(
    filename=log_file_path,
    level=logging.INFO,
    format="%(asctime)s %(levelname)s %(name)s %(message)s",
)

error_logger = logging.getLogger("error_logger")
error_logger.setLevel(logging.ERROR)
error_handler = logging.FileHandler(error_log_file_path)
error_logger.addHandler(error_handler)

logger_handler = logging.FileHandler(log_file_path)
logger = logging.getLogger("logger")
logger.addHandler(logger_handler)

SCHEMA = 1
EXIT_OK = 0
EXIT_PARSE = 1
EXIT_SOLVER = 2
EXIT_BRACKET = 3


class _Run:
    """Manifest of one invocation: command, group digest, config echo, seed, timing."""

    def __init__(self, command: str, config: Dict[str, Any], seed: Optional[int]):
        self.command = command
        self.config = config
        self.seed = seed
        self.group: Optional[StepTwoGroup] = None
        self.started = time.perf_counter()

    def manifest(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "group": None if self.group is None else self.group.name,
            "group_digest": None if self.group is None else group_digest(self.group),
            "config": self.config,
            "seed": self.seed,
            "tool_version": __version__,
            "wall_time": time.perf_counter() - self.started,
        }

    def record(self, exit_code: int) -> None:
        """Stores the manifest in the run ledger; failures never reach the output."""
        manifest = self.manifest()
        try:
            with get_db() as db:
                db.add(
                    RunRecord(
                        command=self.command,
                        group_digest=manifest["group_digest"],
                        config_json=dumps(self.config),
                        seed=self.seed,
                        tool_version=__version__,
                        exit_code=exit_code,
                        wall_time=manifest["wall_time"],
                    )
                )
                db.commit()
        except Exception as e:
            error_logger.error(
                {"status": "error", "message": f"Run ledger unavailable: {str(e)}"}
            )

    def fail(self, message: str, exit_code: int) -> None:
        payload = {
            "status": "error",
            "schema": SCHEMA,
            "message": message,
            "manifest": self.manifest(),
        }
        click.echo(dumps(payload))
        error_logger.error(payload)
        self.record(exit_code)
        sys.exit(exit_code)

    def succeed(self, result: Dict[str, Any], exit_code: int = EXIT_OK) -> None:
        payload = {
            "status": "success",
            "schema": SCHEMA,
            "result": result,
            "manifest": self.manifest(),
        }
        click.echo(dumps(payload))
        logger.info(payload)
        self.record(exit_code)
        if exit_code:
            sys.exit(exit_code)

    def succeed_csv(
        self, header: Sequence[str], rows: List[Sequence[Any]], summary=None
    ) -> None:
        """CSV rows followed by a '# manifest:' comment line."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        click.echo(buffer.getvalue(), nl=False)
        if summary is not None:
            click.echo(f"# summary: {dumps(summary)}")
        click.echo(f"# manifest: {dumps(self.manifest())}")
        logger.info({"status": "success", "command": self.command, "rows": len(rows)})
        self.record(EXIT_OK)


def _load(
    run: _Run, group_name: str, point: Optional[str] = None
) -> Tuple[StepTwoGroup, Optional[GroupPoint]]:
    try:
        run.group = resolve_group(group_name)
        g = None if point is None else parse_point(run.group, point)
    except Exception as e:
        run.fail(f"Invalid input: {str(e)}", EXIT_PARSE)
    return run.group, g


def _fmt(value: float) -> str:
    return format_float(value) if np.isfinite(value) else ""


class _ExitCodeGroup(click.Group):
    """Reports click usage errors with the parse-error exit code."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_PARSE
            raise


@click.group(cls=_ExitCodeGroup)
def cli():

    pass


group_option = click.option(
    "--group",
    "group_name",
    required=True,
    help="Fixture name such as heisenberg(1), or path to a Group-spec JSON file",
)
point_option = click.option(
    "--point", required=True, help="Point as 'x1,...,xq;t1,...,tm'"
)
seed_option = click.option(
    "--seed", default=settings.default_seed, type=int, help="Seed of every sampler"
)


@cli.command("distance")
@group_option
@point_option
@click.option("--max-k", default=settings.default_max_k, type=int, help="Last level")
@click.option("--restarts", default=16, type=int, help="Outer restarts per level")
@seed_option
@click.option(
    "--json", "as_json", is_flag=True, help="JSON certificate (the default output)"
)
def cmd_distance(
    group_name: str, point: str, max_k: int, restarts: int, seed: int, as_json: bool
) -> None:
    """
    Computes the squared CC distance from the identity to a point

    Exits with 0 when the minimax is attained and 3 when only a bracket
    [lower, upper] is available.

    Args:
    group_name (str): fixture name or Group-spec path
    point (str): the point
    max_k (int): last level of the level loop
    restarts (int): outer restarts per level
    seed (int): restart seed
    as_json (bool): accepted for symmetry with the other commands

    Returns:
    None

    """
    run = _Run("distance", {"max_k": max_k, "restarts": restarts}, seed)
    group, g = _load(run, group_name, point)
    try:
        config = SolverConfig(max_k=max_k, restarts=restarts, seed=seed)
        cert = distance(group, g, config)
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    run.succeed(cert.to_dict(), EXIT_OK if cert.attained else EXIT_BRACKET)


@cli.command("geodesics")
@group_option
@point_option
@click.option("--k", default=0, type=int, help="Level of the critical-point search")
@seed_option
@click.option("--json", "as_json", is_flag=True, help="Print JSON instead of CSV")
def cmd_geodesics(
    group_name: str, point: str, k: int, seed: int, as_json: bool
) -> None:
    """
    Lists the normal geodesics from the identity to a point found at level k

    Args:
    group_name (str): fixture name or Group-spec path
    point (str): the target, not the identity
    k (int): level
    seed (int): start seed
    as_json (bool): JSON output

    Returns:
    None

    """
    run = _Run("geodesics", {"k": k}, seed)
    group, g = _load(run, group_name, point)
    try:
        records = solve_geodesics(group, g, k, SolverConfig(seed=seed))
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    if as_json:
        run.succeed({"geodesics": [r.to_row() for r in records]})
        return
    rows = [
        [
            _fmt(r.energy),
            _fmt(r.value),
            _fmt(r.endpoint_residual),
            r.source,
            format_vector(r.covector.zeta),
            format_vector(r.covector.tau),
        ]
        for r in records
    ]
    header = ["energy", "value", "endpoint_residual", "source", "zeta", "tau"]
    run.succeed_csv(header, rows)


@cli.command("cutlocus")
@group_option
@point_option
@seed_option
def cmd_cutlocus(group_name: str, point: str, seed: int) -> None:
    """Decides whether a point lies in the cut locus of the identity."""
    run = _Run("cutlocus", {}, seed)
    group, g = _load(run, group_name, point)
    try:
        verdict = cut_locus_test(group, g, SolverConfig(seed=seed))
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    run.succeed(verdict.to_dict())


@cli.command("classify")
@group_option
@click.option("--samples", default=200, type=int, help="Number of sampled points")
@click.option("--box", default=1.0, type=float, help="Half-width of the sampling box")
@seed_option
def cmd_classify(group_name: str, samples: int, box: float, seed: int) -> None:
    """
    Samples points and reports how often the reference sup is attained inside

    Args:
    group_name (str): fixture name or Group-spec path
    samples (int): number of samples
    box (float): half-width of the sampling box
    seed (int): sampler seed

    Returns:
    None

    """
    run = _Run("classify", {"samples": samples, "box": box}, seed)
    group, _ = _load(run, group_name)
    try:
        outcome = classify_gm(group, samples, seed, box=box)
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    if isinstance(outcome, LikelyGM):
        result = {"kind": "LikelyGM", "fraction": outcome.fraction, "points": []}
    else:
        result = {
            "kind": "NonGMEvidence",
            "fraction": outcome.fraction,
            "points": [format_point(p) for p in outcome.points],
        }
    run.succeed(result)


@cli.command("heat")
@group_option
@point_option
@click.option("--h", "h", required=True, type=float, help="Time")
@click.option("--k", default=None, type=int, help="Evaluate P_{k,h} at (X, T)")
@click.option("--via-level", default=None, type=int, help="p_h through level k")
@click.option("--order", default=32, type=int, help="Gauss-Legendre nodes per panel")
@click.option("--no-shift", is_flag=True, help="Integrate on the real line")
def cmd_heat(
    group_name: str,
    point: str,
    h: float,
    k: Optional[int],
    via_level: Optional[int],
    order: int,
    no_shift: bool,
) -> None:
    """
    Evaluates the heat kernel p_h, or the level kernel P_{k,h} when --k is given

    Args:
    group_name (str): fixture name or Group-spec path
    point (str): the point, read as (X, T) when --k is given
    h (float): time
    k (Optional[int]): level of P_{k,h}
    via_level (Optional[int]): compute p_h through the level-k representation
    order (int): quadrature order
    no_shift (bool): disable the saddle-line shift

    Returns:
    None

    """
    config = {"h": h, "k": k, "via_level": via_level, "order": order}
    config["shift"] = not no_shift
    run = _Run("heat", config, None)
    group, g = _load(run, group_name, point)
    try:
        quad = QuadConfig(order=order, shift=not no_shift)
        if k is not None:
            estimate = p_k_h(group, k, g.x, g.t, h, quad)
        elif via_level is not None:
            estimate = heat_kernel_via_level(group, g, h, via_level, quad)
        else:
            estimate = heat_kernel(group, g, h, quad)
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    run.succeed(estimate.to_dict())


@cli.command("varadhan")
@group_option
@point_option
@click.option(
    "--h-list",
    default="1e-1,3e-2,1e-2,3e-3",
    help="Comma-separated decreasing times",
)
def cmd_varadhan(group_name: str, point: str, h_list: str) -> None:
    """
    Estimates d(g)^2 from -4h ln p_h(g) along decreasing times

    Args:
    group_name (str): fixture name or Group-spec path
    point (str): the point
    h_list (str): times

    Returns:
    None

    """
    run = _Run("varadhan", {"h_list": h_list}, None)
    group, g = _load(run, group_name, point)
    try:
        hs = parse_floats(h_list)
    except Exception as e:
        run.fail(f"Invalid input: {str(e)}", EXIT_PARSE)
    try:
        result = varadhan_estimate(group, g, hs)
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    rows = [[_fmt(h), _fmt(e)] for h, e in zip(result.h, result.estimates)]
    summary = {"extrapolated": result.extrapolated, "monotone": result.monotone}
    run.succeed_csv(["h", "estimate"], rows, summary)


@cli.group("bessel")
def bessel_group():

    pass


@bessel_group.command("zeros")
@click.option("--k", required=True, type=int, help="Order index of J_{k+1/2}")
@click.option("--count", default=10, type=int, help="Number of zeros")
def cmd_bessel_zeros(k: int, count: int) -> None:
    """Prints the first positive zeros of J_{k+1/2} as CSV (k, l, zero)."""
    run = _Run("bessel zeros", {"k": k, "count": count}, None)
    try:
        if count < 1:
            raise ValueError("count must be at least 1")
        zeros = DEFAULT_TABLE.zeros(k, count)
    except Exception as e:
        run.fail(f"Invalid input: {str(e)}", EXIT_PARSE)
    rows = [[k, l, format_float(z)] for l, z in enumerate(zeros, start=1)]
    run.succeed_csv(["k", "l", "zero"], rows)


@cli.command("oracle")
@group_option
@point_option
@click.option(
    "--method", type=click.Choice(["direct", "shoot"]), default="shoot"
)
@click.option("--segments", default=64, type=int, help="Control segments (direct)")
@click.option("--restarts", default=8, type=int, help="Random starts")
@seed_option
def cmd_oracle(
    group_name: str, point: str, method: str, segments: int, restarts: int, seed: int
) -> None:
    """
    Brute-force squared distance by control optimization or covector shooting

    Args:
    group_name (str): fixture name or Group-spec path
    point (str): the target
    method (str): direct or shoot
    segments (int): number of control segments
    restarts (int): random starts
    seed (int): start seed

    Returns:
    None

    """
    config = {"method": method, "segments": segments, "restarts": restarts}
    run = _Run("oracle", config, seed)
    group, g = _load(run, group_name, point)
    try:
        oracle = OracleConfig(
            segments=segments, restarts=restarts, shooting_starts=restarts, seed=seed
        )
        if method == "direct":
            energy, path = direct_distance(group, g, config=oracle)
            result = {"method": method, "energy": energy, "length": path.length}
        else:
            energy, covectors = shooting_distance(group, g, config=oracle)
            result = {"method": method, "energy": energy, "geodesics": len(covectors)}
        if group.name == "heisenberg(1)":
            result["closed_form"] = heisenberg_closed_form(g.x, g.t)
    except Exception as e:
        run.fail(f"Solver failure: {str(e)}", EXIT_SOLVER)
    run.succeed(result)


@cli.command("verify")
@click.argument("suite")
@click.option("--group", "group_names", multiple=True, help="Groups to run on")
@click.option("--samples", default=None, type=int, help="Samples per check")
@seed_option
def cmd_verify(
    suite: str, group_names: Tuple[str, ...], samples: Optional[int], seed: int
) -> None:
    """
    Runs a named verification suite and prints its pass/fail table

    Args:
    suite (str): one of bessel, concavity, bounds, relpk, varadhan, geodesic,
    cutlocus, oracle-xcheck
    group_names (Tuple[str, ...]): groups, suite defaults when empty
    samples (Optional[int]): samples per check
    seed (int): seed

    Returns:
    None

    """
    run = _Run("verify", {"suite": suite, "samples": samples}, seed)
    if suite not in SUITES:
        run.fail(
            f"Unknown suite '{suite}'. Known suites: {', '.join(SUITES)}", EXIT_PARSE
        )
    try:
        groups = [resolve_group(n) for n in group_names] or None
    except Exception as e:
        run.fail(f"Invalid input: {str(e)}", EXIT_PARSE)

    report = run_suite(suite, groups, samples, seed)
    header = f"{'check':<44} {'group':<14} {'measured':>12} {'tolerance':>10}"
    click.echo(f"{header}  result")
    for c in report.checks:
        click.echo(
            f"{c.name:<44} {c.group:<14} {c.measured:>12.4g} {c.tolerance:>10.3g}  "
            f"{'pass' if c.passed else 'FAIL'}"
        )
    summary = {"status": "success" if report.passed else "error", "suite": suite}
    summary["passed"] = report.passed
    click.echo(f"# manifest: {dumps(run.manifest())}")
    if report.passed:
        logger.info(summary)
        run.record(EXIT_OK)
        return
    error_logger.error(summary)
    run.record(EXIT_SOLVER)
    sys.exit(EXIT_SOLVER)


def _lattice(
    corner: GroupPoint, edges: List[GroupPoint], steps: int
) -> List[GroupPoint]:
    if steps <= 0:
        return []
    weights = np.linspace(0.0, 1.0, steps) if steps > 1 else np.zeros(1)
    base = np.concatenate([corner.x, corner.t])
    vectors = [np.concatenate([e.x, e.t]) for e in edges] or [np.zeros_like(base)]
    q = corner.x.size
    points = []
    for index in np.ndindex(*([steps] * len(vectors))):
        z = base + sum(weights[i] * v for i, v in zip(index, vectors))
        points.append(GroupPoint.of(z[:q], z[q:]))
    return points


@cli.command("sweep")
@group_option
@click.option("--corner", default=None, help="First point of the lattice")
@click.option("--edge", multiple=True, help="Lattice edge vector, at most two")
@click.option("--steps", default=10, type=int, help="Points per edge")
@click.option("--point", default=None, help="Point of an h-sweep")
@click.option("--h-list", default=None, help="Times of an h-sweep")
@click.option("--max-k", default=settings.default_max_k, type=int, help="Last level")
@click.option("--restarts", default=8, type=int, help="Outer restarts per level")
@seed_option
def cmd_sweep(
    group_name: str,
    corner: Optional[str],
    edge: Tuple[str, ...],
    steps: int,
    point: Optional[str],
    h_list: Optional[str],
    max_k: int,
    restarts: int,
    seed: int,
) -> None:
    """
    Streams CSV rows of distances over a point lattice, or of -4h ln p_h over times

    A failing row carries its message in the error column; the sweep goes on.

    Args:
    group_name (str): fixture name or Group-spec path
    corner (Optional[str]): lattice corner
    edge (Tuple[str, ...]): one edge for a line, two for a grid
    steps (int): points per edge (0 gives an empty sweep)
    point (Optional[str]): point of an h-sweep
    h_list (Optional[str]): times of an h-sweep
    max_k (int): last level
    restarts (int): outer restarts per level
    seed (int): restart seed

    Returns:
    None

    """
    config = {"steps": steps, "edges": list(edge), "h_list": h_list}
    config.update({"corner": corner, "point": point, "max_k": max_k})
    run = _Run("sweep", config, seed)
    group, _ = _load(run, group_name)
    try:
        if h_list is not None:
            g = parse_point(group, point or "")
            hs = parse_floats(h_list)
        else:
            if len(edge) > 2:
                raise ValueError("At most two edges are allowed")
            origin = parse_point(group, corner or "")
            edges = [parse_point(group, e) for e in edge]
            points = _lattice(origin, edges, steps)
    except Exception as e:
        run.fail(f"Invalid input: {str(e)}", EXIT_PARSE)

    rows = []
    if h_list is not None:
        for h in hs:
            try:
                estimate = heat_kernel(group, g, h)
                rows.append([_fmt(h), _fmt(-4.0 * h * estimate.log_value), ""])
            except Exception as e:
                rows.append([_fmt(h), "", str(e)])
        run.succeed_csv(["h", "estimate", "error"], rows)
        return

    solver = SolverConfig(max_k=max_k, restarts=restarts, seed=seed)
    for p in points:
        try:
            cert = distance(group, p, solver)
            rows.append(
                [
                    format_point(p),
                    _fmt(cert.d2),
                    cert.k_used,
                    _fmt(cert.lower),
                    _fmt(cert.upper),
                    "",
                ]
            )
        except Exception as e:
            rows.append([format_point(p), "", "", "", "", str(e)])
    run.succeed_csv(["point", "d2", "k_used", "lower", "upper", "error"], rows)


@cli.command("history")
@click.option("--command", "command_name", default=None, help="Filter by command")
@click.option("--limit", default=20, type=int, help="Number of runs to list")
def cmd_history(command_name: Optional[str], limit: int) -> None:
    """
    Lists the most recent runs stored in the ledger

    Args:
    command_name (Optional[str]): command to filter on
    limit (int): number of runs

    Returns:
    None

    """
    try:

        with get_db() as db:

            query = db.query(RunRecord)
            if command_name:
                query = query.filter(RunRecord.command == command_name)
            runs = query.order_by(RunRecord.id.desc()).limit(limit).all()

            payload = {
                "status": "success",
                "runs": [
                    {
                        "id": r.id,
                        "command": r.command,
                        "group_digest": r.group_digest,
                        "seed": r.seed,
                        "exit_code": r.exit_code,
                        "wall_time": r.wall_time,
                        "created_at": str(r.created_at),
                    }
                    for r in runs
                ],
            }
            click.echo(dumps(payload))
            logger.info({"status": "success", "message": f"{len(runs)} runs listed"})

    except Exception as e:

        payload = {
            "status": "error",
            "message": f"Error occurred during database operation: {str(e)}",
        }
        click.echo(dumps(payload))
        error_logger.error(payload)
        sys.exit(EXIT_SOLVER)


if __name__ == "__main__":
    cli()
