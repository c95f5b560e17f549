"""
Optimizer Module

Optimization of the estimation cost over jointly Gaussian auxiliary variables.

Provides the closed forms of the information constraint and of the
conditional-variance objective as functions of the correlation coefficients,
the classification of a point into the two sign regimes of the constraints,
the analytic optimizer, an independent brute-force oracle (grid scan plus
Nelder-Mead refinement) and the channel-feedback constraint check.

Example:
    >>> from witsopt import ModelParams, analytic_optimum, brute_force_min
    >>> params = ModelParams(Q=0.8, N=0.1)
    >>> optimum = analytic_optimum(0.3, params)
    >>> optimum.branch, optimum.S
    (<Branch.INTERIOR: 'Interior'>, 0.05)
    >>> oracle = brute_force_min(0.3, params, resolution=0.05)
    >>> abs(oracle.S_min - optimum.S) < 1e-3
    True
"""

import logging
import math
from collections.abc import Iterator, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import optimize

from witsopt.costs import gaussian_thresholds
from witsopt.gausscore import (
    CorrelationPoint,
    ModelParams,
    SingularCovariance,
    WitsenhausenError,
    build_joint_covariance,
    conditional_mi,
    gaussian_mi,
    regression_coefficients,
)

# Configure module logger (library should not configure logging)
logger = logging.getLogger(__name__)


# Optimizer Configuration Constants
CLASSIFY_TOLERANCE = 1e-12
UNIT_RHO4_TOLERANCE = 1e-12  # |1 - rho4^2| below this counts as rho4^2 = 1
DEGENERATE_DENOMINATOR = 1e-14  # relative to Q + P + N
DEFAULT_RESOLUTION = 0.02
MAX_RESOLUTION = 0.1
REFINE_FATOL = 1e-10
REFINE_XATOL = 1e-10
REFINE_MAX_ITER = 2000
MAX_WORKERS_CAP = 64
FEEDBACK_ZERO_COEFFICIENT = 1e-12


class UndefinedLogArgument(WitsenhausenError):
    """Raised when the information-constraint ratio T1/(T1 - T2) is not positive."""

    pass


class DegenerateDenominator(WitsenhausenError):
    """Raised when the conditional-variance denominator vanishes off rho4^2 = 1."""

    pass


class EmptyFeasibleSet(WitsenhausenError):
    """Raised when no grid point satisfies either constraint regime."""

    pass


class CaseTag(str, Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"
    INFEASIBLE = "Infeasible"


class Branch(str, Enum):
    PGEQ = "PgeQ"
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    CASE1_LIMIT = "Case1Limit"


@dataclass(frozen=True)
class ObjectiveTerms:
    """
    Building blocks of the closed-form constraint and objective.

    f is None when rho4^2 = 1, where f1 / (1 - rho4^2) is undefined.
    """

    T1: float
    T2: float
    f1: float
    f: float | None


@dataclass(frozen=True)
class FeasibilityCase:
    """
    Sign regime of a point.

    slacks holds each constraint's value oriented so that a nonnegative slack
    means the constraint holds; holds records the same with the tolerance.
    """

    tag: CaseTag
    slacks: dict[str, float] = field(default_factory=dict)
    holds: dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class Optimum:
    """Analytic minimizer of the estimation cost at one power level."""

    point: CorrelationPoint
    S: float
    constraint_value: float
    branch: Branch


@dataclass(frozen=True)
class OracleResult:
    """
    Outcome of the brute-force scan.

    Unpacks as (S_min, argmin, case). case1_min is the smallest closed-form
    cost seen at a finite Case-1 point; the regime's infimum N is what enters
    S_min.
    """

    S_min: float
    argmin: CorrelationPoint
    case: FeasibilityCase
    grid_S_min: float
    grid_argmin: CorrelationPoint
    evaluated: int
    feasible: int
    case1_points: int
    case1_min: float | None
    case1_undercut: bool

    def __iter__(self) -> Iterator:
        return iter((self.S_min, self.argmin, self.case))


def _as_point(point) -> CorrelationPoint:
    if isinstance(point, CorrelationPoint):
        return point
    return CorrelationPoint(*point)


def objective_terms(point: CorrelationPoint, P: float, params: ModelParams) -> ObjectiveTerms:
    """
    Evaluate T1, T2, f1 and f at a point.

    T1 = (P + Q + N + 2 rho3 sqrt(QP)) (-1 + rho2^2 + rho4^2)
    T2 = N rho2^2 + P rho2^2 (1 - rho3^2) - P rho5^2 (1 - rho4^2)
    f1 = -P rho2^2 rho3^2 - (Q + 2 rho3 sqrt(PQ)) (-1 + rho2^2 + rho4^2)
         + P (1 - rho4^2)(1 - rho5^2)
    f  = f1 / (1 - rho4^2)
    """
    point = _as_point(point)
    Q, N = params.Q, params.N
    r2s, r3, r4s, r5s = point.rho2**2, point.rho3, point.rho4**2, point.rho5**2
    cross = 2.0 * r3 * math.sqrt(Q * P)
    excess = -1.0 + r2s + r4s
    T1 = (P + Q + N + cross) * excess
    T2 = N * r2s + P * r2s * (1.0 - r3 * r3) - P * r5s * (1.0 - r4s)
    f1 = -P * r2s * r3 * r3 - (Q + cross) * excess + P * (1.0 - r4s) * (1.0 - r5s)
    f = None if abs(1.0 - r4s) < UNIT_RHO4_TOLERANCE else f1 / (1.0 - r4s)
    return ObjectiveTerms(T1=T1, T2=T2, f1=f1, f=f)


def info_constraint_value(point: CorrelationPoint, P: float, params: ModelParams) -> float:
    """
    Information constraint I(W1, W2; Y1) - I(W2; X0 | W1) in nats.

    Evaluated in closed form as 1/2 ln(T1 / (T1 - T2)).

    Raises:
        UndefinedLogArgument: If T1 / (T1 - T2) is not a positive number
    """
    terms = objective_terms(point, P, params)
    denominator = terms.T1 - terms.T2
    if denominator == 0:
        raise UndefinedLogArgument(f"T1 - T2 vanishes (T1={terms.T1}, T2={terms.T2})")
    ratio = terms.T1 / denominator
    if not ratio > 0:
        raise UndefinedLogArgument(
            f"T1/(T1 - T2) = {ratio} is not positive (T1={terms.T1}, T2={terms.T2})"
        )
    return 0.5 * math.log(ratio)


def estimation_cost(point: CorrelationPoint, P: float, params: ModelParams) -> float:
    """
    Conditional variance Var(X1 | W1, W2, Y1) in closed form.

    N f1 / ((1 - rho4^2) N + f1), and exactly N when rho4^2 = 1.

    Raises:
        DegenerateDenominator: If the denominator vanishes with rho4^2 != 1
    """
    point = _as_point(point)
    N = params.N
    one_minus = 1.0 - point.rho4**2
    if abs(one_minus) < UNIT_RHO4_TOLERANCE:
        return N
    terms = objective_terms(point, P, params)
    denominator = one_minus * N + terms.f1
    if abs(denominator) < DEGENERATE_DENOMINATOR * (params.Q + P + N):
        raise DegenerateDenominator(
            f"Conditional-variance denominator vanishes at {point.as_tuple()}, P={P}"
        )
    return N * terms.f1 / denominator


def classify(point: CorrelationPoint, P: float, params: ModelParams) -> FeasibilityCase:
    """
    Classify a point into Case1, Case2 or Infeasible.

    Case1: -1 + rho2^2 + rho4^2 >= 0, -1 + rho3^2 + rho5^2 >= N/P, (D1) T2 >= 0
    Case2: -1 + rho2^2 + rho4^2 <= 0, -1 + rho3^2 + rho5^2 <= 0, (D2) T2 <= 0

    Each inequality is admitted within CLASSIFY_TOLERANCE. At P = 0 the
    Case-1 rate condition cannot hold.
    """
    point = _as_point(point)
    Q, N = params.Q, params.N
    tol = CLASSIFY_TOLERANCE
    terms = objective_terms(point, P, params)
    w_excess = -1.0 + point.rho2**2 + point.rho4**2
    u_excess = -1.0 + point.rho3**2 + point.rho5**2
    rate_gap = N / P if P > 0 else math.inf

    slacks = {
        "A": Q * P * w_excess * u_excess,
        "B": Q * w_excess * (P * u_excess - N),
        "C1": terms.T1 - terms.T2,
        "D1": terms.T2,
        "C2": terms.T2 - terms.T1,
        "D2": -terms.T2,
    }
    holds = {name: value >= -tol for name, value in slacks.items()}

    case1 = w_excess >= -tol and u_excess - rate_gap >= -tol and terms.T2 >= -tol
    case2 = w_excess <= tol and u_excess <= tol and terms.T2 <= tol
    if case2:
        tag = CaseTag.CASE2
    elif case1:
        tag = CaseTag.CASE1
    else:
        tag = CaseTag.INFEASIBLE
    return FeasibilityCase(tag=tag, slacks=slacks, holds=holds)


def analytic_optimum(P: float, params: ModelParams) -> Optimum:
    """
    Closed-form minimizer of the estimation cost.

    Branches:
        PgeQ (P >= Q): rho3 = -sqrt(Q/P), rho5^2 = 1 - rho3^2, rho4 = 0 and
            rho2^2 = (P - Q)/(N + P - Q) so the constraint binds; S = 0
        Interior (Q > 4N, P1 <= P <= P2): rho3 = -(P + N)/sqrt(QP),
            rho5^2 = 1 - rho3^2, rho4 = 0,
            rho2^2 = P(1 - rho3^2)/(N + P(1 - rho3^2)); S = N(Q - N - P)/Q
        Boundary (otherwise): rho3 = -1, rho2 = rho4 = rho5 = 0;
            S = N(sqrt(Q) - sqrt(P))^2 / (N + (sqrt(Q) - sqrt(P))^2)

    rho2 and rho5 are taken nonnegative.
    """
    if not (P >= 0 and math.isfinite(P)):
        raise ValueError(f"P must be a nonnegative power, got {P}")
    Q, N = params.Q, params.N
    thresholds = gaussian_thresholds(params)

    if P >= Q:
        rho3 = -math.sqrt(Q / P)
        excess = P - Q
        point = CorrelationPoint(
            rho2=math.sqrt(excess / (N + excess)),
            rho3=rho3,
            rho4=0.0,
            rho5=math.sqrt(max(0.0, 1.0 - rho3 * rho3)),
        )
        S, branch = 0.0, Branch.PGEQ
    elif thresholds is not None and thresholds.P1 <= P <= thresholds.P2:
        rho3 = max(-1.0, -(P + N) / math.sqrt(Q * P))
        residual = max(0.0, 1.0 - rho3 * rho3)
        point = CorrelationPoint(
            rho2=math.sqrt(P * residual / (N + P * residual)),
            rho3=rho3,
            rho4=0.0,
            rho5=math.sqrt(residual),
        )
        S, branch = N * (Q - N - P) / Q, Branch.INTERIOR
    else:
        point = CorrelationPoint(rho2=0.0, rho3=-1.0, rho4=0.0, rho5=0.0)
        gap = (math.sqrt(Q) - math.sqrt(P)) ** 2
        S, branch = N * gap / (N + gap), Branch.BOUNDARY

    return Optimum(
        point=point,
        S=S,
        constraint_value=info_constraint_value(point, P, params),
        branch=branch,
    )


def case1_optimal_rho5_squared(
    rho2: float, rho3: float, rho4: float, P: float, params: ModelParams
) -> float:
    """
    Largest rho5^2 allowed by (D1) in the Case-1 regime, clipped to [0, 1].

    (N rho2^2 + P rho2^2 (1 - rho3^2)) / (P (1 - rho4^2))
    """
    one_minus = 1.0 - rho4 * rho4
    if one_minus <= 0 or P <= 0:
        return 1.0
    value = (params.N * rho2 * rho2 + P * rho2 * rho2 * (1.0 - rho3 * rho3)) / (P * one_minus)
    return min(max(value, 0.0), 1.0)


def repair_to_case2(x: Sequence[float], P: float, params: ModelParams) -> CorrelationPoint:
    """
    Map an arbitrary coefficient vector onto the Case-2 region.

    Clips to [-1, 1], shrinks rho5 until rho3^2 + rho5^2 <= 1, shrinks rho2
    until rho2^2 + rho4^2 <= 1 and then until T2 <= 0. Signs are preserved.
    """
    rho2, rho3, rho4, rho5 = (float(v) for v in np.clip(np.asarray(x, dtype=float), -1.0, 1.0))
    if rho3 * rho3 + rho5 * rho5 > 1.0:
        rho5 = math.copysign(math.sqrt(max(0.0, 1.0 - rho3 * rho3)), rho5)
    if rho2 * rho2 + rho4 * rho4 > 1.0:
        rho2 = math.copysign(math.sqrt(max(0.0, 1.0 - rho4 * rho4)), rho2)
    capacity = params.N + P * (1.0 - rho3 * rho3)
    limit = P * rho5 * rho5 * (1.0 - rho4 * rho4) / capacity
    if rho2 * rho2 > limit:
        rho2 = math.copysign(math.sqrt(max(0.0, limit)), rho2)
    return CorrelationPoint(rho2=rho2, rho3=rho3, rho4=rho4, rho5=rho5)


@dataclass(frozen=True)
class _SlabBest:
    S: float
    point: tuple[float, float, float, float] | None
    feasible: int
    case1_points: int
    case1_min: float | None
    evaluated: int


def _scan_slab(
    rho3: float, half_axis: np.ndarray, P: float, params: ModelParams, tol: float
) -> _SlabBest:
    """Evaluate every (rho2, rho4, rho5) on the half-axis grid at one rho3."""
    Q, N = params.Q, params.N
    r2s = (half_axis**2)[:, None, None]
    r4s = (half_axis**2)[None, :, None]
    r5s = (half_axis**2)[None, None, :]
    r3s = rho3 * rho3
    cross = 2.0 * rho3 * math.sqrt(Q * P)

    w_excess = -1.0 + r2s + r4s
    u_excess = -1.0 + r3s + r5s
    T2 = N * r2s + P * r2s * (1.0 - r3s) - P * r5s * (1.0 - r4s)
    f1 = -P * r2s * r3s - (Q + cross) * w_excess + P * (1.0 - r4s) * (1.0 - r5s)
    one_minus = np.broadcast_to(1.0 - r4s, f1.shape)
    denominator = one_minus * N + f1

    case2 = (w_excess <= tol) & (u_excess <= tol) & (T2 <= tol)
    case1 = (w_excess >= -tol) & (u_excess - N / P >= -tol) & (T2 >= -tol)

    unit = np.abs(one_minus) < UNIT_RHO4_TOLERANCE
    regular = ~unit & (np.abs(denominator) >= DEGENERATE_DENOMINATOR * (Q + P + N))
    with np.errstate(divide="ignore", invalid="ignore"):
        closed_form = np.where(regular, N * f1 / np.where(regular, denominator, 1.0), np.nan)
    cost = np.where(unit, N, closed_form)

    values = np.where(case2 & ~np.isnan(cost), cost, np.inf)
    values = np.minimum(values, np.where(case1, N, np.inf))

    finite_case1 = case1 & regular
    case1_min = float(np.min(closed_form[finite_case1])) if np.any(finite_case1) else None

    best = float(np.min(values))
    point = None
    if math.isfinite(best):
        # first hit in C order is the lexicographically smallest (rho2, rho4, rho5)
        i2, i4, i5 = np.argwhere(values == best)[0]
        point = (float(half_axis[i2]), rho3, float(half_axis[i4]), float(half_axis[i5]))
    return _SlabBest(
        S=best,
        point=point,
        feasible=int(np.count_nonzero(case1 | case2)),
        case1_points=int(np.count_nonzero(case1)),
        case1_min=case1_min,
        evaluated=int(values.size),
    )


def _refine(start: CorrelationPoint, step: float, P: float, params: ModelParams):
    """Nelder-Mead refinement of the estimation cost over the repaired Case-2 region."""

    def objective(x: np.ndarray) -> float:
        try:
            return estimation_cost(repair_to_case2(x, P, params), P, params)
        except DegenerateDenominator:
            return math.inf

    x0 = np.array(start.as_tuple())
    simplex = np.vstack([x0] + [x0 + step * np.eye(4)[i] for i in range(4)])
    result = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": REFINE_XATOL,
            "fatol": REFINE_FATOL,
            "maxiter": REFINE_MAX_ITER,
        },
    )
    logger.debug(
        f"Nelder-Mead finished after {result.nit} iterations: {result.fun} ({result.message})"
    )
    return repair_to_case2(result.x, P, params)


def brute_force_min(
    P: float,
    params: ModelParams,
    resolution: float = DEFAULT_RESOLUTION,
    refine: bool = True,
    max_workers: int = 1,
) -> OracleResult:
    """
    Independent numerical minimization of the estimation cost.

    Scans rho3 over [-1, 1] and rho2, rho4, rho5 over [0, 1] (costs and
    constraints only see their squares) with round(1/resolution) + 1 nodes
    per half-axis, evaluates the closed-form cost at Case-2 points and the
    regime infimum N at Case-1 points, then refines the best grid point with
    Nelder-Mead over the repaired Case-2 region.

    Args:
        P: Power cost
        params: Model constants
        resolution: Grid step in (0, 0.1]
        refine: If True, run the local refinement
        max_workers: Threads used for the scan; slabs of constant rho3 are
            reduced in order so the result does not depend on this value

    Returns:
        OracleResult: Minimum, argmin and its feasibility case

    Raises:
        ValueError: If P or resolution is out of range
        EmptyFeasibleSet: If no grid point is feasible
    """
    if not (P >= 0 and math.isfinite(P)):
        raise ValueError(f"P must be a nonnegative power, got {P}")
    if not 0 < resolution <= MAX_RESOLUTION:
        raise ValueError(f"resolution must lie in (0, {MAX_RESOLUTION}], got {resolution}")
    if max_workers < 1:
        raise ValueError(f"max_workers must be >= 1, got {max_workers}")
    max_workers = min(max_workers, MAX_WORKERS_CAP)

    if P == 0:
        # U1 vanishes; its correlations are undefined and the affine cost at P = 0 is exact
        point = CorrelationPoint(0.0, 0.0, 0.0, 0.0)
        S = params.Q * params.N / (params.Q + params.N)
        return OracleResult(
            S_min=S,
            argmin=point,
            case=classify(point, P, params),
            grid_S_min=S,
            grid_argmin=point,
            evaluated=0,
            feasible=0,
            case1_points=0,
            case1_min=None,
            case1_undercut=False,
        )

    nodes = round(1.0 / resolution)
    half_axis = np.linspace(0.0, 1.0, nodes + 1)
    full_axis = np.linspace(-1.0, 1.0, 2 * nodes + 1)
    logger.info(
        f"Scanning {full_axis.size * half_axis.size**3} grid points at P={P} "
        f"(resolution={resolution}, workers={max_workers})..."
    )

    def scan(rho3: float) -> _SlabBest:
        return _scan_slab(float(rho3), half_axis, P, params, CLASSIFY_TOLERANCE)

    if max_workers == 1:
        slabs = [scan(rho3) for rho3 in full_axis]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            slabs = list(executor.map(scan, full_axis))

    candidates = [(slab.S, slab.point) for slab in slabs if slab.point is not None]
    if not candidates:
        raise EmptyFeasibleSet(f"No feasible grid point at P={P}, resolution={resolution}")
    grid_S, grid_tuple = min(candidates)
    grid_point = CorrelationPoint(*grid_tuple)

    case1_values = [slab.case1_min for slab in slabs if slab.case1_min is not None]
    case1_min = min(case1_values) if case1_values else None
    case1_undercut = case1_min is not None and case1_min < params.N
    if case1_undercut:
        logger.warning(f"A finite Case-1 point undercuts N at P={P}: {case1_min}")

    best_S, best_point = grid_S, grid_point
    if refine:
        refined = _refine(grid_point, resolution, P, params)
        refined_S = estimation_cost(refined, P, params)
        if refined_S < best_S:
            best_S, best_point = refined_S, refined

    logger.info(f"Oracle minimum at P={P}: {best_S} (grid {grid_S})")
    return OracleResult(
        S_min=best_S,
        argmin=best_point,
        case=classify(best_point, P, params),
        grid_S_min=grid_S,
        grid_argmin=grid_point,
        evaluated=sum(slab.evaluated for slab in slabs),
        feasible=sum(slab.feasible for slab in slabs),
        case1_points=sum(slab.case1_points for slab in slabs),
        case1_min=case1_min,
        case1_undercut=case1_undercut,
    )


def mmse_coefficients(
    point: CorrelationPoint, P: float, params: ModelParams
) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of E[X1 | W1, W2, Y1] = a W1 + b W2 + c Y1."""
    cov = build_joint_covariance(_as_point(point), P, params)
    a, b, c = regression_coefficients(cov, "X1", ("W1", "W2", "Y1"))
    return float(a), float(b), float(c)


def feedback_constraint_value(
    point: CorrelationPoint, P: float, params: ModelParams
) -> float:
    """
    Information constraint with channel feedback, I(W1; Y1) - I(U2; X0 | W1, Y1).

    U2 = a W1 + b W2 + c Y1 is the MMSE estimate of X1. When b = 0, U2 is a
    function of the conditioning variables and the second term vanishes.

    Raises:
        NotPSD: If the point is not a valid covariance
        SingularCovariance: If a required block cannot be regularized
    """
    point = _as_point(point)
    cov = build_joint_covariance(point, P, params)
    a, b, c = mmse_coefficients(point, P, params)
    with_u2 = cov.extended("U2", {"W1": a, "W2": b, "Y1": c})
    channel = gaussian_mi(with_u2, {"W1"}, {"Y1"})
    if abs(b) < FEEDBACK_ZERO_COEFFICIENT:
        logger.debug(f"W2 coefficient vanishes at {point.as_tuple()}; U2 is known given W1, Y1")
        return channel
    try:
        leak = conditional_mi(with_u2, {"U2"}, {"X0"}, {"W1", "Y1"})
    except SingularCovariance:
        logger.warning(f"Singular feedback covariance at {point.as_tuple()}, P={P}")
        raise
    return channel - leak
