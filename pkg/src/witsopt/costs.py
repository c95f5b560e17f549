"""
Cost Functions Module

Closed-form cost curves of the Witsenhausen problem with causal encoder and
non-causal decoder:

- best affine cost S_l(P)
- optimal Gaussian cost S_G(P), the convex envelope of S_l obtained by
  time-sharing between the two operating points P1 and P2
- power and estimation costs of Witsenhausen's two-point strategy

Example:
    >>> from witsopt import ModelParams, gaussian_thresholds, optimal_gaussian_cost
    >>> params = ModelParams(Q=0.8, N=0.1)
    >>> gaussian_thresholds(params)
    Thresholds(P1=0.01715728..., P2=0.58284271...)
    >>> optimal_gaussian_cost(0.3, params)
    0.05
"""

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.stats import norm

from witsopt.gausscore import ModelParams, WitsenhausenError

# Configure module logger (library should not configure logging)
logger = logging.getLogger(__name__)


# Quadrature configuration for the two-point estimation cost
QUADRATURE_HALF_WIDTH = 10.0  # integrate over |y| <= c*sqrt(N) + a
QUADRATURE_ABS_TOL = 1e-10
QUADRATURE_REL_TOL = 1e-10
QUADRATURE_LIMIT = 200
ORACLE_ABS_TOL = 1e-13
WINDOW_CLAMP_TOLERANCE = 1e-12  # relative to Q
ROOT_TOLERANCE = 1e-12


class OutOfWindow(WitsenhausenError):
    """Raised when a power level lies outside the time-sharing window [P1, P2]."""

    pass


class QuadratureNotConverged(WitsenhausenError):
    """Raised when adaptive quadrature cannot reach the requested tolerance."""

    pass


@dataclass(frozen=True)
class CostPoint:
    """An achievable pair of power cost P and estimation cost S."""

    P: float
    S: float

    def __post_init__(self):
        if self.P < 0 or self.S < 0:
            raise ValueError(f"Costs must be nonnegative, got P={self.P}, S={self.S}")


@dataclass(frozen=True)
class Thresholds:
    """Operating points P1 <= P2 of the time-sharing strategy."""

    P1: float
    P2: float


@dataclass(frozen=True)
class TwoPointSample:
    """
    Two-point cost at a requested power level.

    S and a are None when P is below the smallest power the strategy reaches.
    """

    P: float
    S: float | None
    a: float | None
    attainable: bool


def _check_power(P: float) -> None:
    if not (P >= 0 and math.isfinite(P)):
        raise ValueError(f"P must be a nonnegative power, got {P}")


def best_linear_cost(P: float, params: ModelParams) -> float:
    """
    Estimation cost S_l(P) of the best affine policy.

    U1 = -sqrt(P/Q) X0 when P <= Q, otherwise U1 = -X0 + sqrt(P - Q), which
    cancels the state and leaves nothing to estimate.

    Args:
        P: Power cost
        params: Model constants

    Returns:
        float: (sqrt(Q) - sqrt(P))^2 N / ((sqrt(Q) - sqrt(P))^2 + N) on [0, Q], else 0
    """
    _check_power(P)
    if P > params.Q:
        return 0.0
    residual = (math.sqrt(params.Q) - math.sqrt(P)) ** 2
    return residual * params.N / (residual + params.N)


def gaussian_thresholds(params: ModelParams) -> Thresholds | None:
    """
    Time-sharing operating points P1 and P2.

    Returns None when Q <= 4N, where the window is empty and S_G equals S_l.
    P1 is taken from the product identity P1 * P2 = N^2 to avoid cancellation.
    """
    Q, N = params.Q, params.N
    if Q <= 4 * N:
        return None
    discriminant = math.sqrt(Q * Q - 4 * Q * N)
    P2 = 0.5 * (Q - 2 * N + discriminant)
    P1 = N * N / P2
    return Thresholds(P1=P1, P2=P2)


def optimal_gaussian_cost(P: float, params: ModelParams) -> float:
    """
    Optimal Gaussian estimation cost S_G(P).

    Affine in P on [P1, P2] when Q > 4N, equal to S_l(P) elsewhere.
    """
    _check_power(P)
    thresholds = gaussian_thresholds(params)
    if thresholds is not None and thresholds.P1 <= P <= thresholds.P2:
        return params.N * (params.Q - params.N - P) / params.Q
    return best_linear_cost(P, params)


def time_share_weight(P: float, params: ModelParams) -> float:
    """
    Fraction of symbols spent at P1 so that the average power is P.

    Args:
        P: Target power inside [P1, P2]
        params: Model constants

    Returns:
        float: lambda in [0, 1] with lambda*P1 + (1 - lambda)*P2 = P

    Raises:
        OutOfWindow: If Q <= 4N or P lies outside [P1, P2]
    """
    thresholds = gaussian_thresholds(params)
    if thresholds is None:
        raise OutOfWindow(
            f"Time-sharing window is empty: Q={params.Q} <= 4N={4 * params.N}"
        )
    P1, P2 = thresholds.P1, thresholds.P2
    slack = WINDOW_CLAMP_TOLERANCE * params.Q
    if not (P1 - slack <= P <= P2 + slack):
        raise OutOfWindow(f"P={P} lies outside the time-sharing window [{P1}, {P2}]")
    if P < P1 or P > P2:
        logger.warning(f"Clamping P={P} into the time-sharing window [{P1}, {P2}]")
        P = min(max(P, P1), P2)
    return (P2 - P) / (P2 - P1)


def _sech(x: float) -> float:
    decay = np.exp(-abs(x))
    return float(2.0 * decay / (1.0 + decay * decay))


def _quad(integrand, lower: float, upper: float, **options) -> float:
    result = integrate.quad(integrand, lower, upper, full_output=1, **options)
    if len(result) > 3:
        raise QuadratureNotConverged(f"Adaptive quadrature failed: {result[3]}")
    return float(result[0])


def two_point_power(a: float, params: ModelParams) -> float:
    """Power cost Q + a(a - 2 sqrt(2Q/pi)) of the two-point strategy."""
    return params.Q + a * (a - 2.0 * math.sqrt(2.0 * params.Q / math.pi))


def two_point_costs(a: float, params: ModelParams) -> CostPoint:
    """
    Power and estimation costs of U1 = a sign(X0) - X0.

    The estimation cost integral is evaluated by adaptive Gauss-Kronrod
    quadrature over |y| <= QUADRATURE_HALF_WIDTH * sqrt(N) + a, where the
    Gaussian integrand has decayed below the tolerance.

    Args:
        a: Amplitude of the two-point interim state
        params: Model constants

    Returns:
        CostPoint: (P, S) with S in [0, a^2]

    Raises:
        ValueError: If a is negative
        QuadratureNotConverged: If the quadrature does not converge
    """
    if not (a >= 0 and math.isfinite(a)):
        raise ValueError(f"Amplitude a must be nonnegative, got {a}")
    power = two_point_power(a, params)
    if a == 0:
        return CostPoint(P=power, S=0.0)

    N = params.N
    sigma = math.sqrt(N)
    bound = QUADRATURE_HALF_WIDTH * sigma + a
    integral = _quad(
        lambda y: norm.pdf(y / sigma) * _sech(a * y / N),
        -bound,
        bound,
        epsabs=QUADRATURE_ABS_TOL,
        epsrel=QUADRATURE_REL_TOL,
        limit=QUADRATURE_LIMIT,
    )
    estimation = a * a * math.sqrt(2.0 * math.pi / N) * norm.pdf(a / sigma) * integral
    return CostPoint(P=power, S=min(max(estimation, 0.0), a * a))


def two_point_costs_oracle(a: float, params: ModelParams) -> float:
    """
    Two-point estimation cost from the receiver form, a^2 (1 - E[tanh^2(a Y1 / N)]).

    Y1 follows the two-component mixture of N(+a, N) and N(-a, N). This is an
    independent evaluation path for two_point_costs.
    """
    if not (a >= 0 and math.isfinite(a)):
        raise ValueError(f"Amplitude a must be nonnegative, got {a}")
    if a == 0:
        return 0.0
    N = params.N
    sigma = math.sqrt(N)
    bound = QUADRATURE_HALF_WIDTH * sigma + a

    def integrand(y: float) -> float:
        density = 0.5 * (norm.pdf(y, loc=a, scale=sigma) + norm.pdf(y, loc=-a, scale=sigma))
        return density * math.tanh(a * y / N) ** 2

    expectation = _quad(
        integrand,
        -bound,
        bound,
        points=(-a, a),
        epsabs=ORACLE_ABS_TOL,
        epsrel=QUADRATURE_REL_TOL,
        limit=QUADRATURE_LIMIT,
    )
    return a * a * (1.0 - expectation)


def two_point_receiver(y, a: float, N: float):
    """
    MMSE receiver E[X1 | Y1 = y] = a tanh(a y / N) of the two-point strategy.

    Accepts scalars or numpy arrays.
    """
    if not N > 0:
        raise ValueError(f"N must be positive, got {N}")
    if a < 0:
        raise ValueError(f"Amplitude a must be nonnegative, got {a}")
    return a * np.tanh(a * np.asarray(y) / N)


def two_point_amplitudes(P: float, params: ModelParams) -> list[float]:
    """
    Nonnegative roots a of Q + a(a - 2 sqrt(2Q/pi)) = P, smallest first.

    Empty when P is below the parabola's minimum Q - 2Q/pi.
    """
    center = math.sqrt(2.0 * params.Q / math.pi)
    discriminant = center * center - (params.Q - P)
    if discriminant < -ROOT_TOLERANCE * params.Q:
        return []
    spread = math.sqrt(max(discriminant, 0.0))
    roots = []
    for root in (center - spread, center + spread):
        if root < -ROOT_TOLERANCE:
            continue
        root = max(root, 0.0)
        if root not in roots:
            roots.append(root)
    return roots


def sweep_two_point(params: ModelParams, P_grid: Sequence[float]) -> list[TwoPointSample]:
    """
    Two-point estimation cost as a function of power.

    For each P, both amplitude roots are evaluated and the smaller S is kept.

    Args:
        params: Model constants
        P_grid: Power levels

    Returns:
        list[TwoPointSample]: One sample per grid point, in grid order

    Example:
        >>> samples = sweep_two_point(ModelParams(0.8, 0.1), [0.3, 0.8])
        >>> [round(s.S, 4) for s in samples]
    """
    if len(P_grid) == 0:
        raise ValueError("P_grid must contain at least one power level")

    logger.info(f"Sweeping two-point costs over {len(P_grid)} power levels...")
    samples = []
    for P in P_grid:
        _check_power(P)
        roots = two_point_amplitudes(P, params)
        if not roots:
            logger.debug(f"P={P} is below the two-point minimum power")
            samples.append(TwoPointSample(P=P, S=None, a=None, attainable=False))
            continue
        best_S, best_a = min((two_point_costs(a, params).S, a) for a in roots)
        samples.append(TwoPointSample(P=P, S=best_S, a=best_a, attainable=True))
    return samples


def lower_convex_envelope(P_grid: Iterable[float], S_values: Iterable[float]) -> np.ndarray:
    """
    Greatest convex minorant of sampled points, evaluated at the sample abscissae.

    Builds the lower hull with a monotone chain and interpolates linearly
    between hull vertices.
    """
    x = np.asarray(list(P_grid), dtype=float)
    y = np.asarray(list(S_values), dtype=float)
    if x.shape != y.shape or x.size == 0:
        raise ValueError("P_grid and S_values must be nonempty and of equal length")
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]

    hull: list[int] = []
    for i in range(xs.size):
        while len(hull) >= 2:
            j, k = hull[-2], hull[-1]
            cross = (xs[k] - xs[j]) * (ys[i] - ys[j]) - (ys[k] - ys[j]) * (xs[i] - xs[j])
            if cross > 0:
                break
            hull.pop()
        hull.append(i)

    envelope = np.interp(xs, xs[hull], ys[hull])
    result = np.empty_like(envelope)
    result[order] = envelope
    return result


def figure_anchors(params: ModelParams) -> dict[str, float | None]:
    """
    Guide-line values of the cost comparison plot.

    Returns P1, P2, S_l(P1), S_G(P1) and S_G(P2); all None when the
    time-sharing window is empty.
    """
    thresholds = gaussian_thresholds(params)
    if thresholds is None:
        return {"P1": None, "P2": None, "S_linear_P1": None, "S_gauss_P1": None, "S_gauss_P2": None}
    return {
        "P1": thresholds.P1,
        "P2": thresholds.P2,
        "S_linear_P1": best_linear_cost(thresholds.P1, params),
        "S_gauss_P1": optimal_gaussian_cost(thresholds.P1, params),
        "S_gauss_P2": optimal_gaussian_cost(thresholds.P2, params),
    }
