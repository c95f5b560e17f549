"""
Gaussian Core Module

This module builds the covariance matrices of the jointly Gaussian model
(X0, W1, W2, U1, X1, Y1) and evaluates the Gaussian information measures on
them: log-determinant mutual information, conditional mutual information and
the Schur-complement MMSE.

The auxiliary variables W1 and W2 have unit variance. Every cost and
constraint depends on the correlation coefficients only, so nothing is lost.

Example:
    >>> from witsopt import CorrelationPoint, ModelParams, build_joint_covariance, gaussian_mi
    >>> params = ModelParams(Q=0.8, N=0.1)
    >>> cov = build_joint_covariance(CorrelationPoint(0.0, 0.0, 0.0, 0.0), 0.3, params)
    >>> gaussian_mi(cov, {"X0"}, {"Y1"})
"""

import logging
import math
from collections.abc import Collection, Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

# Configure module logger (library should not configure logging)
logger = logging.getLogger(__name__)


# Numerical tolerances
PSD_TOLERANCE = 1e-9  # smallest eigenvalue may reach -PSD_TOLERANCE * trace
REGULARIZATION_THRESHOLD = 1e-12  # regularize below this * trace
REGULARIZATION_EPSILON = 1e-12
SYMMETRY_TOLERANCE = 1e-12

JOINT_LABELS = ("X0", "W1", "W2", "U1", "X1", "Y1")


class WitsenhausenError(Exception):
    """Base exception for witsopt errors."""

    pass


class InvalidPoint(WitsenhausenError, ValueError):
    """Raised when a correlation coefficient lies outside [-1, 1]."""

    pass


class NotPSD(WitsenhausenError):
    """Raised when a covariance matrix is not positive semidefinite."""

    pass


class SingularCovariance(WitsenhausenError):
    """Raised when a covariance block cannot be inverted or log-determined."""

    pass


@dataclass(frozen=True)
class ModelParams:
    """
    Problem constants of the vector-valued Witsenhausen model.

    Args:
        Q: Variance of the source X0
        N: Variance of the channel noise Z1
    """

    Q: float
    N: float

    def __post_init__(self):
        if not (self.Q > 0 and math.isfinite(self.Q)):
            raise ValueError(f"Q must be a positive finite variance, got {self.Q}")
        if not (self.N > 0 and math.isfinite(self.N)):
            raise ValueError(f"N must be a positive finite variance, got {self.N}")

    def scaled(self, factor: float) -> "ModelParams":
        """Return the parameters with both variances multiplied by factor."""
        return ModelParams(Q=self.Q * factor, N=self.N * factor)


@dataclass(frozen=True)
class CorrelationPoint:
    """
    Correlation coefficients of (X0, W1, W2, U1).

    rho1 = Corr(X0, W1) is always 0 since the source is independent of W1, and
    rho6 = Corr(W2, U1) is fixed by the Markov chain U1 - (X0, W1) - W2.

    Args:
        rho2: Corr(X0, W2)
        rho3: Corr(X0, U1)
        rho4: Corr(W1, W2)
        rho5: Corr(W1, U1)

    Raises:
        InvalidPoint: If any coefficient lies outside [-1, 1]
    """

    rho2: float
    rho3: float
    rho4: float
    rho5: float

    def __post_init__(self):
        for name in ("rho2", "rho3", "rho4", "rho5"):
            value = getattr(self, name)
            if not (math.isfinite(value) and -1.0 <= value <= 1.0):
                raise InvalidPoint(f"{name} must lie in [-1, 1], got {value}")

    @property
    def rho1(self) -> float:
        return 0.0

    @property
    def rho6(self) -> float:
        return self.rho2 * self.rho3 + self.rho4 * self.rho5

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.rho2, self.rho3, self.rho4, self.rho5)

    def to_dict(self) -> dict[str, float]:
        return {
            "rho2": self.rho2,
            "rho3": self.rho3,
            "rho4": self.rho4,
            "rho5": self.rho5,
            "rho6": self.rho6,
        }


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """
    Labelled symmetric covariance matrix.

    The entries array is made read-only on construction so instances can be
    shared freely between threads.

    Args:
        labels: Variable names, one per row/column
        entries: Square symmetric matrix of covariances

    Raises:
        ValueError: If the shape, symmetry or diagonal is invalid
    """

    labels: tuple[str, ...]
    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        entries = np.array(self.entries, dtype=float)
        if len(set(labels)) != len(labels):
            raise ValueError(f"Duplicate labels: {labels}")
        if entries.shape != (len(labels), len(labels)):
            raise ValueError(
                f"entries must be {len(labels)}x{len(labels)}, got shape {entries.shape}"
            )
        scale = max(1.0, float(np.max(np.abs(entries)))) if entries.size else 1.0
        if not np.allclose(entries, entries.T, rtol=0.0, atol=SYMMETRY_TOLERANCE * scale):
            raise ValueError("Covariance matrix must be symmetric")
        if np.any(np.diag(entries) < 0):
            raise ValueError("Covariance matrix must have a nonnegative diagonal")
        entries = 0.5 * (entries + entries.T)
        entries.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "entries", entries)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"Unknown variable {label!r}; available: {self.labels}") from None

    def indices(self, labels: Iterable[str]) -> list[int]:
        """Row indices of labels, in the matrix's own label order."""
        wanted = {self.index(label) for label in labels}
        return sorted(wanted)

    def submatrix(self, labels: Iterable[str]) -> np.ndarray:
        idx = self.indices(labels)
        return self.entries[np.ix_(idx, idx)]

    def variance(self, label: str) -> float:
        i = self.index(label)
        return float(self.entries[i, i])

    def cov(self, first: str, second: str) -> float:
        return float(self.entries[self.index(first), self.index(second)])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.entries)[0])

    def is_psd(self, tolerance: float = PSD_TOLERANCE) -> bool:
        """Check the smallest eigenvalue against -tolerance * trace."""
        trace = float(np.trace(self.entries))
        return self.min_eigenvalue() >= -tolerance * max(trace, 0.0)

    def extended(self, label: str, coefficients: Mapping[str, float]) -> "CovMatrix":
        """
        Append a new variable defined as a linear combination of existing ones.

        Args:
            label: Name of the new variable
            coefficients: Mapping from existing label to its weight

        Returns:
            CovMatrix: The enlarged covariance
        """
        if label in self.labels:
            raise ValueError(f"Variable {label!r} already present")
        weights = np.zeros(len(self.labels))
        for name, weight in coefficients.items():
            weights[self.index(name)] = weight
        cross = self.entries @ weights
        size = len(self.labels)
        enlarged = np.empty((size + 1, size + 1))
        enlarged[:size, :size] = self.entries
        enlarged[:size, size] = cross
        enlarged[size, :size] = cross
        enlarged[size, size] = float(weights @ self.entries @ weights)
        return CovMatrix(self.labels + (label,), enlarged)


def _regularized(matrix: np.ndarray) -> np.ndarray:
    """
    Return matrix, jittered when it sits on the PSD boundary.

    Raises:
        SingularCovariance: If the matrix is clearly indefinite or all-zero
    """
    trace = float(np.trace(matrix))
    if trace <= 0:
        raise SingularCovariance("Covariance block has zero trace")
    smallest = float(np.linalg.eigvalsh(matrix)[0])
    if smallest < -PSD_TOLERANCE * trace:
        raise SingularCovariance(
            f"Covariance block is indefinite (smallest eigenvalue {smallest:.3e})"
        )
    if smallest < REGULARIZATION_THRESHOLD * trace:
        logger.debug(f"Regularizing covariance block (smallest eigenvalue {smallest:.3e})")
        return matrix + REGULARIZATION_EPSILON * trace * np.eye(matrix.shape[0])
    return matrix


def _logdet(cov: CovMatrix, labels: Collection[str]) -> float:
    if not labels:
        return 0.0
    block = _regularized(cov.submatrix(labels))
    sign, value = np.linalg.slogdet(block)
    if sign <= 0:
        raise SingularCovariance(f"Non-positive determinant for block {sorted(labels)}")
    return float(value)


def _check_sets(cov: CovMatrix, *sets: Collection[str]) -> None:
    seen: set[str] = set()
    for labels in sets:
        for label in labels:
            cov.index(label)
            if label in seen:
                raise ValueError(f"Variable sets must be disjoint; {label!r} repeats")
            seen.add(label)


def nats_to_bits(value: float) -> float:
    return value / math.log(2.0)


def build_joint_covariance(
    point: CorrelationPoint, P: float, params: ModelParams
) -> CovMatrix:
    """
    Build the 6x6 covariance of (X0, W1, W2, U1, X1, Y1).

    The 4x4 block over (X0, W1, W2, U1) is the covariance K of the encoder
    variables; X1 = X0 + U1 and Y1 = X1 + Z1 with Z1 ~ N(0, N) independent.

    Args:
        point: Correlation coefficients
        P: Power cost E[U1^2]
        params: Model constants

    Returns:
        CovMatrix: Labelled covariance over JOINT_LABELS

    Raises:
        ValueError: If P is negative
        InvalidPoint: If a coefficient lies outside [-1, 1]
        NotPSD: If the coefficients do not describe a valid covariance
    """
    if not (P >= 0 and math.isfinite(P)):
        raise ValueError(f"P must be a nonnegative power, got {P}")
    if not isinstance(point, CorrelationPoint):
        point = CorrelationPoint(*point)

    Q, N = params.Q, params.N
    sq_q, sq_p = math.sqrt(Q), math.sqrt(P)
    # base variables: X0, W1, W2, U1, Z1
    base = np.array(
        [
            [Q, 0.0, point.rho2 * sq_q, point.rho3 * sq_q * sq_p, 0.0],
            [0.0, 1.0, point.rho4, point.rho5 * sq_p, 0.0],
            [point.rho2 * sq_q, point.rho4, 1.0, point.rho6 * sq_p, 0.0],
            [point.rho3 * sq_q * sq_p, point.rho5 * sq_p, point.rho6 * sq_p, P, 0.0],
            [0.0, 0.0, 0.0, 0.0, N],
        ]
    )
    mixing = np.array(
        [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 1.0, 1.0],
        ]
    )
    cov = CovMatrix(JOINT_LABELS, mixing @ base @ mixing.T)
    if not cov.is_psd():
        raise NotPSD(
            f"Coefficients {point.as_tuple()} do not form a valid covariance at P={P} "
            f"(smallest eigenvalue {cov.min_eigenvalue():.3e})"
        )
    return cov


def gaussian_mi(cov: CovMatrix, set_a: Collection[str], set_b: Collection[str]) -> float:
    """
    Mutual information I(A; B) in nats between two disjoint Gaussian blocks.

    I(A; B) = 1/2 * ln(det S_A * det S_B / det S_AB)

    Raises:
        ValueError: If the sets are empty or overlap
        SingularCovariance: If a determinant vanishes after regularization
    """
    if not set_a or not set_b:
        raise ValueError("Both variable sets must be nonempty")
    _check_sets(cov, set_a, set_b)
    union = set(set_a) | set(set_b)
    value = 0.5 * (_logdet(cov, set_a) + _logdet(cov, set_b) - _logdet(cov, union))
    return max(value, 0.0)


def conditional_mi(
    cov: CovMatrix,
    set_a: Collection[str],
    set_b: Collection[str],
    set_c: Collection[str] = (),
) -> float:
    """
    Conditional mutual information I(A; B | C) in nats.

    I(A; B | C) = 1/2 * ln(det S_AC * det S_BC / (det S_C * det S_ABC))

    With an empty conditioning set this is gaussian_mi.

    Raises:
        ValueError: If A or B is empty or the sets overlap
        SingularCovariance: If a determinant vanishes after regularization
    """
    if not set_a or not set_b:
        raise ValueError("Both variable sets must be nonempty")
    _check_sets(cov, set_a, set_b, set_c)
    a, b, c = set(set_a), set(set_b), set(set_c)
    value = 0.5 * (
        _logdet(cov, a | c) + _logdet(cov, b | c) - _logdet(cov, c) - _logdet(cov, a | b | c)
    )
    return max(value, 0.0)


def regression_coefficients(
    cov: CovMatrix, target: str, conditioners: Iterable[str]
) -> np.ndarray:
    """
    Coefficients of the linear MMSE estimator E[target | conditioners].

    Coefficients follow the order of conditioners as given.

    Raises:
        SingularCovariance: If the conditioners' covariance is not invertible
    """
    names = list(conditioners)
    if target in names:
        raise ValueError(f"Target {target!r} cannot be among the conditioners")
    idx = [cov.index(name) for name in names]
    sigma_ww = _regularized(cov.entries[np.ix_(idx, idx)])
    sigma_tw = cov.entries[cov.index(target), idx]
    try:
        return np.linalg.solve(sigma_ww, sigma_tw)
    except np.linalg.LinAlgError as e:
        raise SingularCovariance(f"Cannot invert covariance of {names}") from e


def schur_mmse(cov: CovMatrix, target: str, conditioners: Collection[str]) -> float:
    """
    Conditional variance Var(target | conditioners) via the Schur complement.

    Equals the minimum mean-square error of estimating target from the
    conditioners.

    Raises:
        SingularCovariance: If the conditioners' covariance is not invertible
    """
    variance = cov.variance(target)
    if not conditioners:
        return variance
    names = list(conditioners)
    weights = regression_coefficients(cov, target, names)
    sigma_tw = np.array([cov.cov(target, name) for name in names])
    return max(variance - float(sigma_tw @ weights), 0.0)


def markov_triple_covariance(
    var_x: float, var_y: float, var_z: float, rho1: float, rho3: float
) -> CovMatrix:
    """
    Covariance of a jointly Gaussian Markov chain X - Y - Z.

    Corr(X, Y) = rho1 and Corr(Y, Z) = rho3 force Corr(X, Z) = rho1 * rho3.

    Args:
        var_x: Variance of X
        var_y: Variance of Y
        var_z: Variance of Z
        rho1: Corr(X, Y)
        rho3: Corr(Y, Z)

    Returns:
        CovMatrix: Labelled ("X", "Y", "Z")
    """
    for name, value in (("var_x", var_x), ("var_y", var_y), ("var_z", var_z)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    for name, value in (("rho1", rho1), ("rho3", rho3)):
        if not -1.0 <= value <= 1.0:
            raise InvalidPoint(f"{name} must lie in [-1, 1], got {value}")
    c_xy = rho1 * math.sqrt(var_x * var_y)
    c_yz = rho3 * math.sqrt(var_y * var_z)
    c_xz = rho1 * rho3 * math.sqrt(var_x * var_z)
    entries = np.array(
        [
            [var_x, c_xy, c_xz],
            [c_xy, var_y, c_yz],
            [c_xz, c_yz, var_z],
        ]
    )
    return CovMatrix(("X", "Y", "Z"), entries)


def markov_chain_residuals(cov: CovMatrix) -> dict[str, float]:
    """
    Evaluate the Markov chains implied by the joint law at a 6-variable covariance.

    Keys:
        x0_w1: I(X0; W1), the source is independent of W1
        u1_w2: I(U1; W2 | X0, W1)
        y1_w:  I(Y1; W1, W2 | X0, U1); X1 is a function of the conditioners
        u2_x:  Var(U2 | W1, W2, Y1) for the MMSE estimator U2 of X1

    All four vanish for a valid joint covariance.
    """
    weights = regression_coefficients(cov, "X1", ("W1", "W2", "Y1"))
    with_u2 = cov.extended("U2", dict(zip(("W1", "W2", "Y1"), weights, strict=True)))
    return {
        "x0_w1": gaussian_mi(cov, {"X0"}, {"W1"}),
        "u1_w2": conditional_mi(cov, {"U1"}, {"W2"}, {"X0", "W1"}),
        "y1_w": conditional_mi(cov, {"Y1"}, {"W1", "W2"}, {"X0", "U1"}),
        "u2_x": schur_mmse(with_u2, "U2", ("W1", "W2", "Y1")),
    }
