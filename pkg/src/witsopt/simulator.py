"""
Simulator Module

Seeded Monte Carlo simulation of concrete control designs over the i.i.d.
Gaussian channel: the best affine encoder, time-sharing between the two
affine operating points P1 and P2, and the two-point encoder.

Samples are drawn in fixed-size chunks. Chunk k uses its own Philox stream
keyed by (seed, k) and chunk statistics are merged in chunk order, so the
result for a given config is bit-identical however many threads run it.

Example:
    >>> from witsopt import Affine, ModelParams, SimConfig, simulate
    >>> result = simulate(Affine(P=0.2), ModelParams(Q=0.8, N=0.1), SimConfig(n=100_000, seed=7))
    >>> print(f"{result.S_hat:.3f} +/- {result.S_se:.3f}")
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from witsopt.costs import (
    OutOfWindow,
    best_linear_cost,
    gaussian_thresholds,
    optimal_gaussian_cost,
    time_share_weight,
    two_point_costs,
)
from witsopt.gausscore import ModelParams, WitsenhausenError

# Configure module logger (library should not configure logging)
logger = logging.getLogger(__name__)


# Simulation Configuration Constants
DEFAULT_CHUNK = 65536
MAX_WORKERS_CAP = 64
UNIFORM_BITS = 53
MAX_SEED = 2**64 - 1


class InvalidStrategy(WitsenhausenError, ValueError):
    """Raised when a strategy's parameters violate its preconditions."""

    pass


@dataclass(frozen=True)
class Affine:
    """Best affine encoder at target power P."""

    P: float

    def __post_init__(self):
        if not (self.P >= 0 and math.isfinite(self.P)):
            raise InvalidStrategy(f"Affine target power must be >= 0, got {self.P}")


@dataclass(frozen=True)
class TimeShare:
    """Deterministic time-sharing between the affine points P1 and P2."""

    P: float

    def __post_init__(self):
        if not (self.P >= 0 and math.isfinite(self.P)):
            raise InvalidStrategy(f"TimeShare target power must be >= 0, got {self.P}")


@dataclass(frozen=True)
class TwoPoint:
    """Two-point encoder U1 = a sign(X0) - X0."""

    a: float

    def __post_init__(self):
        if not (self.a >= 0 and math.isfinite(self.a)):
            raise InvalidStrategy(f"Two-point amplitude must be >= 0, got {self.a}")


Strategy = Affine | TimeShare | TwoPoint


@dataclass(frozen=True)
class SimConfig:
    """
    Sample count, seed and chunk size of a simulation run.

    Args:
        n: Number of channel uses (>= 1)
        seed: Reproducibility seed in [0, 2^64)
        chunk: Samples per chunk; part of the reproducibility key
    """

    n: int
    seed: int
    chunk: int = DEFAULT_CHUNK

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.chunk < 1:
            raise ValueError(f"chunk must be >= 1, got {self.chunk}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")


@dataclass(frozen=True)
class SimResult:
    """Empirical costs with their standard errors."""

    P_hat: float
    S_hat: float
    P_se: float
    S_se: float
    n: int
    seed: int


@dataclass(frozen=True)
class _Moments:
    count: int
    mean: float
    m2: float

    @classmethod
    def of(cls, values: np.ndarray) -> "_Moments":
        mean = float(np.mean(values))
        return cls(count=int(values.size), mean=mean, m2=float(np.sum((values - mean) ** 2)))

    def merge(self, other: "_Moments") -> "_Moments":
        # pairwise update of count, mean and sum of squared deviations
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return _Moments(count=count, mean=mean, m2=m2)

    def standard_error(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.m2 / (self.count - 1) / self.count)


def affine_receiver_coefficients(P: float, params: ModelParams) -> tuple[float, float]:
    """
    MMSE receiver gain and offset matched to the best affine encoder at power P.

    For P <= Q, X1 = (1 - sqrt(P/Q)) X0 and the receiver is linear with gain
    Var(X1)/(Var(X1) + N). For P > Q, X1 is the constant sqrt(P - Q).
    """
    if not (P >= 0 and math.isfinite(P)):
        raise ValueError(f"P must be a nonnegative power, got {P}")
    if P > params.Q:
        return 0.0, math.sqrt(P - params.Q)
    var_x1 = (math.sqrt(params.Q) - math.sqrt(P)) ** 2
    return var_x1 / (var_x1 + params.N), 0.0


def _affine_symbols(x0: np.ndarray, z: np.ndarray, P: float, params: ModelParams):
    gain, offset = affine_receiver_coefficients(P, params)
    if P > params.Q:
        u1 = offset - x0
        x1 = np.full_like(x0, offset)
    else:
        u1 = -math.sqrt(P / params.Q) * x0
        x1 = x0 + u1
    estimate = gain * (x1 + z) + offset
    return u1, x1, estimate


def theory_for(strategy: Strategy, params: ModelParams) -> tuple[float, float]:
    """Closed-form (P, S) targeted by a strategy."""
    if isinstance(strategy, Affine):
        return strategy.P, best_linear_cost(strategy.P, params)
    if isinstance(strategy, TimeShare):
        return strategy.P, optimal_gaussian_cost(strategy.P, params)
    if isinstance(strategy, TwoPoint):
        point = two_point_costs(strategy.a, params)
        return point.P, point.S
    raise InvalidStrategy(f"Unknown strategy: {strategy!r}")


def _time_share_split(strategy: TimeShare, params: ModelParams, n: int) -> tuple[int, float, float]:
    """Number of leading symbols at P1, and the two operating points."""
    try:
        weight = time_share_weight(strategy.P, params)
    except OutOfWindow as e:
        thresholds = gaussian_thresholds(params)
        window = (
            f"[{thresholds.P1}, {thresholds.P2}]" if thresholds is not None else "empty (Q <= 4N)"
        )
        raise InvalidStrategy(
            f"TimeShare target P={strategy.P} is not admissible; window is {window}"
        ) from e
    thresholds = gaussian_thresholds(params)
    return math.ceil(weight * n), thresholds.P1, thresholds.P2


def _standard_normals(seed: int, chunk_index: int, size: int) -> np.ndarray:
    """Two rows of standard normals from the (seed, chunk) substream via the inverse CDF."""
    generator = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, chunk_index])))
    counts = generator.integers(0, 1 << UNIFORM_BITS, size=(2, size), dtype=np.int64)
    return special.ndtri((counts.astype(np.float64) + 0.5) / float(1 << UNIFORM_BITS))


def simulate(
    strategy: Strategy,
    params: ModelParams,
    config: SimConfig,
    max_workers: int = 1,
) -> SimResult:
    """
    Estimate the power and estimation costs of a strategy by simulation.

    Args:
        strategy: Affine, TimeShare or TwoPoint
        params: Model constants
        config: Sample count, seed and chunk size
        max_workers: Threads used to simulate chunks (does not affect the result)

    Returns:
        SimResult: Sample means of U1^2 and (X1 - U2)^2 with standard errors

    Raises:
        InvalidStrategy: If the strategy is not admissible for these params
    """
    if max_workers < 1:
        raise ValueError(f"max_workers must be >= 1, got {max_workers}")
    max_workers = min(max_workers, MAX_WORKERS_CAP)

    switch, P_first, P_second = 0, 0.0, 0.0
    if isinstance(strategy, TimeShare):
        switch, P_first, P_second = _time_share_split(strategy, params, config.n)
        logger.debug(f"Time-sharing: {switch} symbols at P1={P_first}, rest at P2={P_second}")
    elif not isinstance(strategy, (Affine, TwoPoint)):
        raise InvalidStrategy(f"Unknown strategy: {strategy!r}")

    sqrt_Q, sqrt_N = math.sqrt(params.Q), math.sqrt(params.N)

    def run_chunk(chunk_index: int) -> tuple[_Moments, _Moments]:
        start = chunk_index * config.chunk
        size = min(config.chunk, config.n - start)
        normals = _standard_normals(config.seed, chunk_index, size)
        x0, z = sqrt_Q * normals[0], sqrt_N * normals[1]

        if isinstance(strategy, Affine):
            u1, x1, estimate = _affine_symbols(x0, z, strategy.P, params)
        elif isinstance(strategy, TimeShare):
            first = np.arange(start, start + size) < switch
            u1_a, x1_a, est_a = _affine_symbols(x0, z, P_first, params)
            u1_b, x1_b, est_b = _affine_symbols(x0, z, P_second, params)
            u1 = np.where(first, u1_a, u1_b)
            x1 = np.where(first, x1_a, x1_b)
            estimate = np.where(first, est_a, est_b)
        else:
            a = strategy.a
            x1 = np.where(x0 >= 0, a, -a)
            u1 = x1 - x0
            estimate = a * np.tanh(a * (x1 + z) / params.N)

        logger.debug(f"Simulated chunk {chunk_index} ({size} samples)")
        return _Moments.of(u1 * u1), _Moments.of((x1 - estimate) ** 2)

    chunks = range(math.ceil(config.n / config.chunk))
    logger.info(
        f"Simulating {config.n} samples of {strategy!r} in {len(chunks)} chunks "
        f"with {max_workers} workers..."
    )
    if max_workers == 1:
        partials = [run_chunk(k) for k in chunks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            partials = list(executor.map(run_chunk, chunks))

    power, estimation = partials[0]
    for chunk_power, chunk_estimation in partials[1:]:
        power = power.merge(chunk_power)
        estimation = estimation.merge(chunk_estimation)

    result = SimResult(
        P_hat=power.mean,
        S_hat=estimation.mean,
        P_se=power.standard_error(),
        S_se=estimation.standard_error(),
        n=config.n,
        seed=config.seed,
    )
    logger.info(f"Simulation finished: P_hat={result.P_hat}, S_hat={result.S_hat}")
    return result
