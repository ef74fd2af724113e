import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .constants import CI_Z, PIVOT_RTOL
from .errors import ConfigurationError, EmptyInputError, InsufficientSamplesError, SingularMatrixError

logger = logging.getLogger(__name__)

Bits = Union[int, float]
"""Bit count, or math.inf for the unquantized limit."""

_UINT64_LIMIT = 2**64


@dataclass
class RngStream:
    """
    Counter-based random stream addressed by (seed, index).

    Streams are Philox generators keyed through a SeedSequence spawned at `index`, so stream t is
    the same no matter which worker draws it or in which order.
    """

    seed: int
    index: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed < _UINT64_LIMIT:
            raise ConfigurationError(f"Seed must be a 64-bit unsigned integer, got {self.seed}")
        if not 0 <= self.index < _UINT64_LIMIT:
            raise ConfigurationError(f"Stream index must be a 64-bit unsigned integer, got {self.index}")
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.index,))
        self.generator = np.random.Generator(np.random.Philox(sequence))

    @property
    def counter(self) -> int:
        state = self.generator.bit_generator.state["state"]
        return int(state["counter"][0])

    def normal(self, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
        return self.generator.standard_normal(shape)

    def uniform(self, low: float, high: float, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
        return self.generator.uniform(low, high, shape)

    def cgauss(self, shape: Union[int, Tuple[int, ...]]) -> np.ndarray:
        """CN(0, 1) entries of the given shape."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        parts = self.generator.standard_normal((*shape, 2))
        return (parts[..., 0] + 1j * parts[..., 1]) * math.sqrt(0.5)


def sample_cgauss(stream: RngStream, n: int) -> np.ndarray:
    """Draw n i.i.d. circularly-symmetric complex Gaussians with unit variance."""
    if n < 1:
        raise EmptyInputError(f"Need at least one sample, got n={n}")
    return stream.cgauss(n)


def as_cvec(values: Sequence[complex], size: Optional[int] = None) -> np.ndarray:
    vec = np.asarray(values, dtype=complex)
    if vec.ndim != 1:
        raise ConfigurationError(f"Expected a vector, got shape {vec.shape}")
    if size is not None and vec.shape[0] != size:
        raise ConfigurationError(f"Expected a vector of length {size}, got {vec.shape[0]}")
    return vec


def as_cmat(values: Sequence[Sequence[complex]], shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    mat = np.asarray(values, dtype=complex)
    if mat.ndim != 2:
        raise ConfigurationError(f"Expected a matrix, got shape {mat.shape}")
    if shape is not None and mat.shape != tuple(shape):
        raise ConfigurationError(f"Expected a {shape[0]}x{shape[1]} matrix, got {mat.shape[0]}x{mat.shape[1]}")
    return mat


def hermitian(matrix: np.ndarray) -> np.ndarray:
    """Conjugate transpose of a matrix."""
    mat = np.asarray(matrix)
    if mat.ndim != 2:
        raise ConfigurationError(f"Hermitian transpose needs a matrix, got shape {mat.shape}")
    return mat.conj().T


def hermitian_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """
    Solve M X = B by Gaussian elimination with partial pivoting.

    A pivot smaller than PIVOT_RTOL times the largest initial entry of M raises SingularMatrixError.
    """
    a = as_cmat(matrix).copy()
    n = a.shape[0]
    if a.shape[1] != n:
        raise ConfigurationError(f"Solve needs a square matrix, got {a.shape[0]}x{a.shape[1]}")
    b = np.asarray(rhs, dtype=complex)
    vector_rhs = b.ndim == 1
    b = b.reshape(n, -1).copy() if vector_rhs else b.copy()
    if b.shape[0] != n:
        raise ConfigurationError(f"Right-hand side has {b.shape[0]} rows, matrix has {n}")

    scale = float(np.max(np.abs(a))) if a.size else 0.0
    tol = PIVOT_RTOL * scale
    if scale == 0.0:
        raise SingularMatrixError("Matrix is zero")

    for k in range(n):
        p = int(np.argmax(np.abs(a[k:, k]))) + k
        if abs(a[p, k]) <= tol:
            raise SingularMatrixError(f"Pivot {abs(a[p, k]):.3e} below tolerance {tol:.3e} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        factors = a[k + 1 :, k] / a[k, k]
        a[k + 1 :, k:] -= np.outer(factors, a[k, k:])
        b[k + 1 :] -= np.outer(factors, b[k])

    # Back substitution
    x = np.zeros_like(b)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x[:, 0] if vector_rhs else x


@dataclass(frozen=True)
class MeanCI:
    mean: float
    half_width: float
    count: int


def mean_ci(samples: Sequence[float]) -> MeanCI:
    """Sample mean with a 95% normal-approximation half-width."""
    values = np.asarray(samples, dtype=float).ravel()
    if values.size < 2:
        raise InsufficientSamplesError(f"Need at least 2 samples for a confidence interval, got {values.size}")
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    return MeanCI(mean=mean, half_width=CI_Z * std / math.sqrt(values.size), count=int(values.size))


def sinc(x: float) -> float:
    """Unnormalized sinc, sin(x)/x, equal to 1 at 0."""
    if x == 0.0:
        return 1.0
    return math.sin(x) / x


def phase_halfwidth(b1: Bits) -> float:
    """Largest phase-quantization error pi / 2^B1, 0 when unquantized."""
    if math.isinf(b1):
        return 0.0
    return math.pi / 2.0 ** int(b1)


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)
