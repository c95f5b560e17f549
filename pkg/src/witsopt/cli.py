"""
Command-Line Interface

witsopt curves      cost curves over a power grid (CSV or JSON)
witsopt verify      brute-force oracle against the closed-form optimum
witsopt simulate    Monte Carlo run of one strategy
witsopt eval        every closed form and log-det quantity at one point
witsopt thresholds  time-sharing window and guide-line costs

Exit codes: 0 success, 1 argument or configuration error, 2 verification failure.

Options can also come from a key = value file given with --config; flags
override file values. WITSOPT_THREADS (environment or .env) caps the worker
threads used by verify and simulate; 0 or unset means one per CPU.
"""

import argparse
import json
import logging
import math
import os
import sys
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass, replace

import numpy as np
import pandas as pd
from dotenv import dotenv_values, load_dotenv
from tqdm import tqdm

from witsopt.__version__ import __version__
from witsopt.costs import (
    best_linear_cost,
    figure_anchors,
    gaussian_thresholds,
    optimal_gaussian_cost,
    sweep_two_point,
)
from witsopt.gausscore import (
    CorrelationPoint,
    ModelParams,
    WitsenhausenError,
    build_joint_covariance,
    conditional_mi,
    gaussian_mi,
    nats_to_bits,
    schur_mmse,
)
from witsopt.optimizer import (
    analytic_optimum,
    brute_force_min,
    classify,
    estimation_cost,
    feedback_constraint_value,
    info_constraint_value,
    objective_terms,
)
from witsopt.simulator import (
    Affine,
    SimConfig,
    TimeShare,
    TwoPoint,
    simulate,
    theory_for,
)

logger = logging.getLogger(__name__)


# CLI Configuration Constants
DEFAULT_Q = 0.8
DEFAULT_N = 0.1
DEFAULT_GRID_STEP = 0.05
DEFAULT_RESOLUTION = 0.02
DEFAULT_SAMPLES = 100_000
DEFAULT_SEED = 0
DEFAULT_CHUNK = 65536
DEFAULT_TOLERANCE = 5e-3
UNDERCUT_TOLERANCE = 1e-6
GRID_ENDPOINT_TOLERANCE = 1e-12
CSV_FLOAT_FORMAT = "%#.9g"
THREADS_ENV_VAR = "WITSOPT_THREADS"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2

FORMATS = ("csv", "json", "table")
TABLE_COMMANDS = ("eval",)
STRATEGIES = ("affine", "timeshare", "twopoint")


class CLIError(ValueError):
    """Raised for invalid command-line arguments or configuration values."""

    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str):
        raise CLIError(message)


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one command invocation."""

    command: str
    Q: float = DEFAULT_Q
    N: float = DEFAULT_N
    grid: tuple[float, ...] | None = None
    P: float | None = None
    resolution: float = DEFAULT_RESOLUTION
    samples: int = DEFAULT_SAMPLES
    seed: int = DEFAULT_SEED
    chunk: int = DEFAULT_CHUNK
    out: str | None = None
    format: str | None = None
    strategy: str | None = None
    a: float | None = None
    tolerance: float = DEFAULT_TOLERANCE
    rho2: float = 0.0
    rho3: float = 0.0
    rho4: float = 0.0
    rho5: float = 0.0
    refine: bool = True
    threads: int = 1

    def __post_init__(self):
        if not (self.Q > 0 and math.isfinite(self.Q)):
            raise CLIError(f"Q must be a positive finite variance, got {self.Q}")
        if not (self.N > 0 and math.isfinite(self.N)):
            raise CLIError(f"N must be a positive finite variance, got {self.N}")
        if self.grid is not None and not self.grid:
            raise CLIError("P-grid is empty")
        if self.format is not None and self.format not in FORMATS:
            raise CLIError(f"format must be one of {', '.join(FORMATS)}, got {self.format}")
        if self.format == "table" and self.command not in TABLE_COMMANDS:
            raise CLIError(f"--format table is only available for eval, not {self.command}")
        if self.tolerance < 0:
            raise CLIError(f"tolerance must be >= 0, got {self.tolerance}")

    @property
    def params(self) -> ModelParams:
        return ModelParams(Q=self.Q, N=self.N)

    def powers(self) -> tuple[float, ...]:
        """The P-grid, or the single --P value."""
        if self.grid is not None:
            return self.grid
        if self.P is not None:
            return (self.P,)
        raise CLIError("a power grid (--grid) or a single power (--P) is required")


def parse_grid(grid: str) -> tuple[float, ...]:
    """
    Parse a P-grid: "start:stop:step" (stop included within 1e-12) or "p1,p2,...".

    Raises:
        CLIError: If the grid string is malformed, empty or contains negative powers
    """
    text = grid.strip()
    try:
        if ":" in text:
            parts = [float(part) for part in text.split(":")]
            if len(parts) != 3:
                raise CLIError(f"grid range must be start:stop:step, got {grid!r}")
            start, stop, step = parts
            if not step > 0:
                raise CLIError(f"grid step must be positive, got {step}")
            if stop < start:
                raise CLIError(f"grid stop {stop} is below start {start}")
            count = math.floor((stop - start + GRID_ENDPOINT_TOLERANCE) / step) + 1
            values = [start + k * step for k in range(count)]
            if abs(values[-1] - stop) <= GRID_ENDPOINT_TOLERANCE:
                values[-1] = stop
        else:
            values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        if isinstance(e, CLIError):
            raise
        raise CLIError(f"invalid grid {grid!r}: {e}") from e
    if not values:
        raise CLIError(f"grid {grid!r} is empty")
    if any(not (value >= 0 and math.isfinite(value)) for value in values):
        raise CLIError(f"grid {grid!r} contains a negative or non-finite power")
    return tuple(values)


# Config-file keys and their converters; keys mirror the long flag names
CONFIG_KEYS: dict[str, Callable[[str], object]] = {
    "Q": float,
    "N": float,
    "grid": parse_grid,
    "P": float,
    "resolution": float,
    "samples": int,
    "seed": int,
    "chunk": int,
    "out": str,
    "format": str,
    "strategy": str,
    "a": float,
    "tolerance": float,
    "rho2": float,
    "rho3": float,
    "rho4": float,
    "rho5": float,
}


def read_config_file(path: str) -> dict[str, object]:
    """
    Read a key = value configuration file.

    Raises:
        CLIError: If the file is missing, a key is unknown or a value is invalid
    """
    if not os.path.isfile(path):
        raise CLIError(f"config file not found: {path}")
    values: dict[str, object] = {}
    for key, raw in dotenv_values(path).items():
        if key not in CONFIG_KEYS:
            raise CLIError(f"unknown config key {key!r} in {path}")
        if raw is None or raw.strip() == "":
            raise CLIError(f"config key {key!r} in {path} has no value")
        try:
            values[key] = CONFIG_KEYS[key](raw.strip())
        except ValueError as e:
            raise CLIError(f"invalid value for {key!r} in {path}: {raw!r}") from e
    logger.debug(f"Loaded {len(values)} settings from {path}")
    return values


def resolve_threads(load_from_env: bool = True) -> int:
    """
    Worker-thread count from WITSOPT_THREADS.

    Args:
        load_from_env: If True, load a .env file first

    Raises:
        CLIError: If the variable is negative or not an integer
    """
    if load_from_env:
        load_dotenv()
    raw = os.getenv(THREADS_ENV_VAR)
    if raw is None or raw.strip() == "":
        threads = 0
    else:
        try:
            threads = int(raw.strip())
        except ValueError as e:
            raise CLIError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from e
        if threads < 0:
            raise CLIError(f"{THREADS_ENV_VAR} must be >= 0, got {threads}")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads


def build_parser() -> argparse.ArgumentParser:
    """Argument parser; every option defaults to None so file values can fill gaps."""
    common = _ArgumentParser(add_help=False)
    common.add_argument("--Q", type=float, help=f"source variance (default {DEFAULT_Q})")
    common.add_argument("--N", type=float, help=f"channel noise variance (default {DEFAULT_N})")
    common.add_argument("--config", help="key = value file with default options")
    common.add_argument("--out", help="write output to this file instead of stdout")
    common.add_argument("--format", choices=FORMATS, help="output format")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="errors only")

    parser = _ArgumentParser(prog="witsopt", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"witsopt {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    curves = commands.add_parser("curves", parents=[common], help="emit cost curves")
    curves.add_argument("--grid", type=parse_grid, help="start:stop:step or p1,p2,...")

    verify = commands.add_parser("verify", parents=[common], help="oracle verification")
    verify.add_argument("--grid", type=parse_grid, help="start:stop:step or p1,p2,...")
    verify.add_argument("--P", type=float, help="single power level")
    verify.add_argument("--resolution", type=float, help="oracle grid step")
    verify.add_argument("--tolerance", type=float, help="allowed |gap| (default 5e-3)")
    verify.add_argument("--no-refine", dest="refine", action="store_false", default=None)

    sim = commands.add_parser("simulate", parents=[common], help="Monte Carlo run")
    sim.add_argument("--strategy", choices=STRATEGIES)
    sim.add_argument("--P", type=float, help="target power (affine, timeshare)")
    sim.add_argument("--a", type=float, help="amplitude (twopoint)")
    sim.add_argument("--samples", type=int, help="number of channel uses")
    sim.add_argument("--seed", type=int, help="reproducibility seed")
    sim.add_argument("--chunk", type=int, help="samples per chunk")

    evaluate = commands.add_parser("eval", parents=[common], help="evaluate one point")
    evaluate.add_argument("--P", type=float, help="power level")
    for name in ("rho2", "rho3", "rho4", "rho5"):
        evaluate.add_argument(f"--{name}", type=float)

    commands.add_parser("thresholds", parents=[common], help="time-sharing window")
    return parser


def parse_run_config(argv: Sequence[str] | None = None) -> tuple[RunConfig, argparse.Namespace]:
    """
    Parse arguments and merge them over the config file and the defaults.

    Raises:
        CLIError: For any invalid argument or configuration value
    """
    args = build_parser().parse_args(argv)
    file_values = read_config_file(args.config) if args.config else {}

    fields = {"command": args.command}
    for key in CONFIG_KEYS:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            fields[key] = flag_value
        elif key in file_values:
            fields[key] = file_values[key]
    if getattr(args, "refine", None) is not None:
        fields["refine"] = args.refine
    if fields.get("format") is not None and fields["format"] not in FORMATS:
        raise CLIError(f"format must be one of {', '.join(FORMATS)}, got {fields['format']}")
    if fields.get("strategy") is not None and fields["strategy"] not in STRATEGIES:
        raise CLIError(f"strategy must be one of {', '.join(STRATEGIES)}")
    return RunConfig(**fields), args


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.WARNING
    if getattr(args, "verbose", False):
        level = logging.DEBUG
    elif getattr(args, "quiet", False):
        level = logging.ERROR
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _to_csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(
        float_format=CSV_FLOAT_FORMAT, lineterminator="\n", na_rep="", index=False
    )


def _to_json(payload: object) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _json_float(value: float | None) -> float | None:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def _information(value: float | None) -> dict[str, float | None]:
    """MI value in nats and bits."""
    if value is None:
        return {"nats": None, "bits": None}
    return {"nats": value, "bits": nats_to_bits(value)}


def cmd_curves(config: RunConfig) -> str:
    """Rows (P, S_linear, S_gauss, S_twopoint); S_twopoint is empty where unattainable."""
    params = config.params
    grid = config.grid
    if grid is None:
        grid = parse_grid(f"0:{params.Q!r}:{DEFAULT_GRID_STEP!r}")
    logger.info(f"Computing cost curves over {len(grid)} power levels")
    two_point = sweep_two_point(params, grid)
    frame = pd.DataFrame(
        {
            "P": list(grid),
            "S_linear": [best_linear_cost(P, params) for P in grid],
            "S_gauss": [optimal_gaussian_cost(P, params) for P in grid],
            "S_twopoint": [np.nan if s.S is None else s.S for s in two_point],
        }
    )
    if (config.format or "csv") == "json":
        records = [
            {key: _json_float(value) for key, value in row.items()}
            for row in frame.to_dict(orient="records")
        ]
        return _to_json({"params": {"Q": params.Q, "N": params.N}, "rows": records})
    return _to_csv(frame)


def _verify_point(P: float, config: RunConfig) -> dict:
    params = config.params
    theory = optimal_gaussian_cost(P, params)
    oracle = brute_force_min(
        P,
        params,
        resolution=config.resolution,
        refine=config.refine,
        max_workers=config.threads,
    )
    try:
        constraint = info_constraint_value(oracle.argmin, P, params)
    except WitsenhausenError as e:
        logger.warning(f"Constraint undefined at the oracle argmin for P={P}: {e}")
        constraint = None
    return {
        "P": P,
        "S_theory": theory,
        "S_oracle": oracle.S_min,
        "gap": oracle.S_min - theory,
        "argmin_point": oracle.argmin.to_dict(),
        "case": oracle.case.tag.value,
        "constraint_value_at_argmin": _information(constraint),
    }


def cmd_verify(config: RunConfig) -> tuple[str, bool]:
    """
    Compare the brute-force oracle with the closed-form optimum on a P-grid.

    Returns:
        tuple: (report text, pass flag)
    """
    params = config.params
    powers = config.powers()
    points = [
        _verify_point(P, config)
        for P in tqdm(powers, desc="Verifying", unit="P", disable=None, file=sys.stderr)
    ]
    max_gap = max(abs(point["gap"]) for point in points)
    passed = all(
        abs(point["gap"]) <= config.tolerance and point["gap"] >= -UNDERCUT_TOLERANCE
        for point in points
    )
    if not passed:
        logger.error(f"Verification failed: max |gap| = {max_gap} (tolerance {config.tolerance})")

    if (config.format or "json") == "csv":
        frame = pd.DataFrame(
            [
                {
                    "P": point["P"],
                    "S_theory": point["S_theory"],
                    "S_oracle": point["S_oracle"],
                    "gap": point["gap"],
                    **point["argmin_point"],
                    "case": point["case"],
                    "constraint_nats": point["constraint_value_at_argmin"]["nats"],
                    "constraint_bits": point["constraint_value_at_argmin"]["bits"],
                }
                for point in points
            ]
        )
        return _to_csv(frame), passed
    report = {
        "params": {"Q": params.Q, "N": params.N},
        "resolution": config.resolution,
        "tolerance": config.tolerance,
        "points": points,
        "max_gap": max_gap,
        "pass": passed,
    }
    return _to_json(report), passed


def _strategy_from(config: RunConfig):
    if config.strategy is None:
        raise CLIError("--strategy is required (affine, timeshare or twopoint)")
    if config.strategy == "twopoint":
        if config.a is None:
            raise CLIError("--a is required for the twopoint strategy")
        return TwoPoint(a=config.a)
    if config.P is None:
        raise CLIError(f"--P is required for the {config.strategy} strategy")
    if config.strategy == "affine":
        return Affine(P=config.P)
    return TimeShare(P=config.P)


def _z_score(estimate: float, theory: float, standard_error: float) -> float | None:
    difference = estimate - theory
    if difference == 0:
        return 0.0
    if standard_error == 0:
        return None
    return difference / standard_error


def cmd_simulate(config: RunConfig) -> str:
    """Run one strategy and report the empirical costs against theory."""
    params = config.params
    strategy = _strategy_from(config)
    sim_config = SimConfig(n=config.samples, seed=config.seed, chunk=config.chunk)
    result = simulate(strategy, params, sim_config, max_workers=config.threads)
    P_theory, S_theory = theory_for(strategy, params)
    row = {
        "strategy": config.strategy,
        "P_target": config.P if config.strategy != "twopoint" else None,
        "a": config.a if config.strategy == "twopoint" else None,
        "Q": params.Q,
        "N": params.N,
        **asdict(result),
        "chunk": config.chunk,
        "P_theory": P_theory,
        "S_theory": S_theory,
        "z_P": _z_score(result.P_hat, P_theory, result.P_se),
        "z_S": _z_score(result.S_hat, S_theory, result.S_se),
    }
    if (config.format or "json") == "csv":
        return _to_csv(pd.DataFrame([row]))
    return _to_json(row)


def _guarded(label: str, compute: Callable[[], float]) -> float | None:
    try:
        return compute()
    except WitsenhausenError as e:
        logger.warning(f"{label} is undefined at this point: {e}")
        return None


def cmd_eval(config: RunConfig) -> str:
    """Closed forms, log-det and Schur paths, classification and feedback value at one point."""
    params = config.params
    if config.P is None:
        raise CLIError("--P is required for eval")
    P = config.P
    if not (P >= 0 and math.isfinite(P)):
        raise CLIError(f"--P must be a nonnegative power, got {P}")
    point = CorrelationPoint(config.rho2, config.rho3, config.rho4, config.rho5)
    terms = objective_terms(point, P, params)
    case = classify(point, P, params)

    def info_logdet() -> float:
        cov = build_joint_covariance(point, P, params)
        return gaussian_mi(cov, {"W1", "W2"}, {"Y1"}) - conditional_mi(cov, {"W2"}, {"X0"}, {"W1"})

    def cost_schur() -> float:
        cov = build_joint_covariance(point, P, params)
        return schur_mmse(cov, "X1", ("W1", "W2", "Y1"))

    report = {
        "params": {"Q": params.Q, "N": params.N, "P": P},
        "point": point.to_dict(),
        "T1": terms.T1,
        "T2": terms.T2,
        "f1": terms.f1,
        "f": terms.f,
        "case": case.tag.value,
        "slacks": case.slacks,
        "holds": case.holds,
        "info_constraint_closed_form": _information(
            _guarded("closed-form constraint", lambda: info_constraint_value(point, P, params))
        ),
        "info_constraint_logdet": _information(_guarded("log-det constraint", info_logdet)),
        "estimation_cost_closed_form": _guarded(
            "closed-form cost", lambda: estimation_cost(point, P, params)
        ),
        "estimation_cost_schur": _guarded("Schur-complement cost", cost_schur),
        "feedback_constraint": _information(
            _guarded("feedback constraint", lambda: feedback_constraint_value(point, P, params))
        ),
    }

    output_format = config.format or "table"
    if output_format == "json":
        return _to_json(report)
    flat = _flatten(report)
    if output_format == "csv":
        return _to_csv(pd.DataFrame([flat]))
    table = pd.DataFrame({"quantity": list(flat), "value": [_cell(v) for v in flat.values()]})
    return table.to_string(index=False, justify="left") + "\n"


def _cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _flatten(report: dict, prefix: str = "") -> dict[str, object]:
    flat: dict[str, object] = {}
    for key, value in report.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{name}."))
        else:
            flat[name] = value
    return flat


def cmd_thresholds(config: RunConfig) -> str:
    """Time-sharing window P1, P2 and the guide-line costs, empty when Q <= 4N."""
    params = config.params
    anchors = figure_anchors(params)
    if gaussian_thresholds(params) is None:
        logger.warning(f"Time-sharing window is empty: Q={params.Q} <= 4N={4 * params.N}")
    optimum = {}
    if anchors["P2"] is not None:
        optimum = {
            "interior_at_P1": analytic_optimum(anchors["P1"], params).branch.value,
            "interior_at_P2": analytic_optimum(anchors["P2"], params).branch.value,
        }
    if (config.format or "json") == "csv":
        return _to_csv(pd.DataFrame([{"Q": params.Q, "N": params.N, **anchors}]))
    return _to_json({"params": {"Q": params.Q, "N": params.N}, **anchors, **optimum})


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(out, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)
    logger.info(f"Wrote {out}")


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the witsopt console script; returns the exit code."""
    try:
        config, args = parse_run_config(argv)
    except CLIError as e:
        sys.stderr.write(f"witsopt: error: {e}\n")
        return EXIT_USAGE

    _configure_logging(args)
    passed = True
    try:
        if config.command in ("verify", "simulate"):
            config = replace(config, threads=resolve_threads())
        if config.command == "curves":
            text = cmd_curves(config)
        elif config.command == "verify":
            text, passed = cmd_verify(config)
        elif config.command == "simulate":
            text = cmd_simulate(config)
        elif config.command == "eval":
            text = cmd_eval(config)
        else:
            text = cmd_thresholds(config)
        _emit(text, config.out)
    except (ValueError, WitsenhausenError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"Cannot write output: {e}")
        return EXIT_USAGE

    return EXIT_OK if passed else EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())
