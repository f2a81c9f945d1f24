"""Finite measures on a type alphabet and the rate functionals built on them.

Everything here is a pure function of small immutable arrays.  Pair measures,
kernels and test functions all live on the symmetric subspace of k x k arrays;
symmetry is enforced when the objects are constructed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SYMMETRY_TOL = 1e-9
NORMALIZATION_TOL = 1e-12
ZERO_TOL = 1e-12


class MeasureError(ValueError):
    """Raised when an input violates a measure invariant."""


class PotentialOverflow(RuntimeWarning):
    """The exponential inside the spectral potential overflowed to +inf."""


def _as_square(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise MeasureError(f"{name} must be a non-empty square table, got shape {arr.shape}")
    return arr


def _symmetrized(arr: np.ndarray, name: str) -> np.ndarray:
    asym = np.max(np.abs(arr - arr.T))
    if not asym <= SYMMETRY_TOL:
        raise MeasureError(f"{name} is not symmetric (max |x - x^T| = {asym:.3g})")
    out = 0.5 * (arr + arr.T)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TypeAlphabet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if not labels:
            raise MeasureError("type alphabet must contain at least one label")
        if len(set(labels)) != len(labels):
            raise MeasureError(f"type labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def k(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True, eq=False)
class TypeLaw:
    """Probability vector over the k types."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 0:
            raise MeasureError("type law must have at least one entry")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise MeasureError(f"type law entries must be finite and >= 0: {w}")
        if abs(math.fsum(w) - 1.0) > NORMALIZATION_TOL:
            raise MeasureError(f"type law must sum to 1 (sum = {math.fsum(w)!r})")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.weights.size

    @classmethod
    def coerce(cls, x) -> "TypeLaw":
        return x if isinstance(x, cls) else cls(x)

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "TypeLaw":
        c = np.asarray(counts, dtype=float)
        return cls(c / c.sum())

    def __eq__(self, other):
        return isinstance(other, TypeLaw) and np.array_equal(self.weights, other.weights)

    def __repr__(self):
        return f"TypeLaw({self.weights.tolist()})"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Symmetric nonnegative table of limiting edge intensities."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.values, "kernel")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise MeasureError("kernel entries must be finite and >= 0")
        if not np.any(arr > 0):
            raise MeasureError("kernel must have at least one positive entry")
        object.__setattr__(self, "values", _symmetrized(arr, "kernel"))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @classmethod
    def coerce(cls, x) -> "Kernel":
        return x if isinstance(x, cls) else cls(x)

    def __repr__(self):
        return f"Kernel({self.values.tolist()})"


@dataclass(frozen=True, eq=False)
class PairMeasure:
    """Symmetric finite nonnegative measure on ordered type pairs."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.values, "pair measure")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise MeasureError("pair measure entries must be finite and >= 0")
        object.__setattr__(self, "values", _symmetrized(arr, "pair measure"))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def total_mass(self) -> float:
        return total_mass(self)

    @classmethod
    def coerce(cls, x) -> "PairMeasure":
        return x if isinstance(x, cls) else cls(x)

    @classmethod
    def zeros(cls, k: int) -> "PairMeasure":
        return cls(np.zeros((k, k)))

    def __mul__(self, c: float) -> "PairMeasure":
        return PairMeasure(self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other: "PairMeasure") -> "PairMeasure":
        return PairMeasure(self.values + PairMeasure.coerce(other).values)

    def __eq__(self, other):
        return isinstance(other, PairMeasure) and np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"PairMeasure({self.values.tolist()})"


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Symmetric finite real function on type pairs."""

    __test__ = False  # keep pytest from collecting this class

    values: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.values, "test function")
        if not np.all(np.isfinite(arr)):
            raise MeasureError("test function entries must be finite")
        object.__setattr__(self, "values", _symmetrized(arr, "test function"))

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @classmethod
    def coerce(cls, x) -> "TestFunction":
        return x if isinstance(x, cls) else cls(x)

    @classmethod
    def constant(cls, k: int, c: float) -> "TestFunction":
        return cls(np.full((k, k), float(c)))

    def __repr__(self):
        return f"TestFunction({self.values.tolist()})"


def _check_dims(*objs) -> int:
    ks = {o.k for o in objs}
    if len(ks) != 1:
        raise MeasureError(f"dimension mismatch between inputs: {sorted(ks)}")
    return ks.pop()


def product_measure(lam, mu) -> PairMeasure:
    """Return the measure (a, b) -> lam(a, b) mu(a) mu(b)."""
    lam, mu = Kernel.coerce(lam), TypeLaw.coerce(mu)
    _check_dims(lam, mu)
    w = mu.weights
    return PairMeasure(lam.values * np.outer(w, w))


def total_mass(pi) -> float:
    return math.fsum(PairMeasure.coerce(pi).values.ravel())


def pairing(g, pi) -> float:
    """<g, pi> summed over all k*k ordered cells."""
    g, pi = TestFunction.coerce(g), PairMeasure.coerce(pi)
    _check_dims(g, pi)
    return math.fsum((g.values * pi.values).ravel())


def spectral_potential(g, lam, mu, *, with_flag: bool = False):
    """-1/2 * sum (1 - e^g) m over cells, with m = lam mu x mu.

    Cells where m vanishes contribute nothing, whatever g is.  If e^g overflows
    on a charged cell the result is +inf and a ``PotentialOverflow`` warning is
    issued, unless ``with_flag=True``, which returns ``(value, overflowed)``.
    """
    g = TestFunction.coerce(g)
    m = product_measure(lam, mu).values
    _check_dims(g, Kernel.coerce(lam))
    charged = m > 0
    with np.errstate(over="ignore"):
        eg = np.exp(g.values[charged])
    overflowed = bool(np.any(np.isinf(eg)))
    if overflowed:
        if not with_flag:
            warnings.warn("exp(g) overflowed in the spectral potential", PotentialOverflow, stacklevel=2)
        value = math.inf
    else:
        value = 0.5 * math.fsum(((eg - 1.0) * m[charged]).ravel())
    return (value, overflowed) if with_flag else value


def _cell_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Cellwise p log(p/q) + q - p with 0 log 0 = 0 and +inf off the support of q."""
    out = np.empty_like(p)
    pos = p > 0
    both = pos & (q > 0)
    out[~pos] = q[~pos]
    out[both] = p[both] * np.log(p[both] / q[both]) + q[both] - p[both]
    out[pos & ~(q > 0)] = math.inf
    return out


def relative_entropy_extended(pi, sigma) -> float:
    """<pi, log pi/sigma> + ||sigma|| - ||pi|| for finite (unnormalized) measures."""
    pi, sigma = PairMeasure.coerce(pi), PairMeasure.coerce(sigma)
    _check_dims(pi, sigma)
    cells = _cell_divergence(pi.values, sigma.values).ravel()
    if np.any(np.isinf(cells)):
        return math.inf
    # each cell is >= 0 analytically; clip rounding noise below zero
    return max(math.fsum(cells), 0.0)


def kullback_action(pi, lam, mu) -> float:
    """Rate function of the empirical link measure.

    Half the extended relative entropy of ``pi`` with respect to
    ``lam mu x mu``; +inf when ``pi`` charges a cell where that measure vanishes.
    """
    return 0.5 * relative_entropy_extended(pi, product_measure(lam, mu))


def mcmillan_entropy(rho, lam, mu) -> float:
    """(||rho|| - ||m|| - <rho, log rho/||m||>) / 2, with 0 log 0 = 0."""
    rho = PairMeasure.coerce(rho)
    m = product_measure(lam, mu)
    _check_dims(rho, m)
    mass_m = total_mass(m)
    r = rho.values.ravel()
    r = r[r > 0]
    terms = np.concatenate([r, [-mass_m], -r * np.log(r / mass_m)])
    return 0.5 * math.fsum(terms)


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    p = p[p > 0]
    return -math.fsum(p * np.log(p))


def is_absolutely_continuous(pi, sigma) -> bool:
    pi, sigma = PairMeasure.coerce(pi), PairMeasure.coerce(sigma)
    return not bool(np.any((pi.values > 0) & (sigma.values <= 0)))
