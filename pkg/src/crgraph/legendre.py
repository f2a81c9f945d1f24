"""Variational (Legendre) form of the Kullback action.

The dual objective  1/2 <g, pi> - rho(g)  is separable over type pairs, so the
supremum is a collection of independent one-dimensional concave problems

    maximize  (g p + (1 - e^g) q) / 2        p = pi(a, b),  q = m(a, b),

whose solution is g = log(p / q).  The solver below does not rely on that:
it runs a bracketed Newton iteration per cell and only uses the closed form
as an (optional) warm start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import (
    MeasureError,
    PairMeasure,
    TestFunction,
    kullback_action,
    pairing,
    product_measure,
    spectral_potential,
)

# smallest argument whose exponential is still a positive double
NEG_CAP = -745.0
# slope probe for unbounded cells
POS_PROBE = 700.0


class AbsoluteContinuityError(MeasureError):
    """pi charges a cell where the reference measure vanishes."""


class NoWitnessError(MeasureError):
    """pi is absolutely continuous, so no divergence witness exists."""


@dataclass(frozen=True)
class DualSolveReport:
    value: float
    maximizer: TestFunction
    iterations: int
    converged: bool
    diverging: bool


def optimal_tilt(pi, m) -> TestFunction:
    """log(pi / m) on the support of pi, NEG_CAP on pi-null cells."""
    pi, m = PairMeasure.coerce(pi), PairMeasure.coerce(m)
    p, q = pi.values, m.values
    bad = (p > 0) & ~(q > 0)
    if np.any(bad):
        cells = [tuple(int(i) for i in c) for c in np.argwhere(bad)]
        raise AbsoluteContinuityError(f"pi is not absolutely continuous w.r.t. m on cells {cells}")
    g = np.full(p.shape, NEG_CAP)
    pos = p > 0
    g[pos] = np.log(p[pos] / q[pos])
    return TestFunction(g)


def dual_value(g, pi, lam, mu) -> float:
    """1/2 <g, pi> - rho(g); -inf when the spectral potential overflows."""
    pot, overflowed = spectral_potential(g, lam, mu, with_flag=True)
    if overflowed:
        return -math.inf
    return 0.5 * pairing(g, pi) - pot


def _cell_objective(g: float, p: float, q: float) -> float:
    return 0.5 * (g * p - math.expm1(g) * q)


def _maximize_cell(p: float, q: float, tol: float, start: float, max_iter: int = 200):
    """Return (argmax, value, iterations, converged, diverging) for one cell."""
    if p > 0 and 0.5 * (p - math.exp(POS_PROBE) * q) > 0:
        return POS_PROBE, math.inf, 0, False, True
    if p == 0:
        if q == 0:
            return 0.0, 0.0, 0, True, False
        # supremum approached as g -> -inf
        return NEG_CAP, _cell_objective(NEG_CAP, p, q), 0, True, False

    def slope(x):
        return 0.5 * (p - math.exp(x) * q)

    lo, hi = NEG_CAP, POS_PROBE
    x = min(max(start, lo), hi)
    for it in range(1, max_iter + 1):
        s = slope(x)
        if abs(s) <= 1e-3 * tol * p:
            return x, _cell_objective(x, p, q), it, True, False
        if s > 0:
            lo = x
        else:
            hi = x
        x_new = x + s / (0.5 * math.exp(x) * q)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 4e-16 * max(1.0, abs(x)):
            return x_new, _cell_objective(x_new, p, q), it, True, False
        x = x_new
    return x, _cell_objective(x, p, q), max_iter, False, False


def legendre_sup(pi, lam, mu, tol: float = 1e-10, *, warm_start: bool = True) -> DualSolveReport:
    """Numerically evaluate sup_g { 1/2 <g, pi> - rho(g) } cell by cell."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    pi = PairMeasure.coerce(pi)
    m = product_measure(lam, mu)
    if pi.k != m.k:
        raise MeasureError(f"dimension mismatch between inputs: {[pi.k, m.k]}")
    k = pi.k
    g = np.zeros((k, k))
    values = []
    iterations = 0
    converged = True
    diverging = False
    for a in range(k):
        for b in range(a, k):
            p, q = float(pi.values[a, b]), float(m.values[a, b])
            if warm_start and p > 0 and q > 0:
                start = math.log(p / q)
            else:
                start = 0.0
            x, val, its, ok, div = _maximize_cell(p, q, tol, start)
            g[a, b] = g[b, a] = x
            values.extend([val] if a == b else [val, val])
            iterations += its
            converged &= ok
            diverging |= div
    value = math.inf if diverging else math.fsum(values)
    return DualSolveReport(value, TestFunction(g), iterations, converged and not diverging, diverging)


def truncate_test_function(g, t: float) -> TestFunction:
    """Clip g entrywise to [-t, t]."""
    if not t > 0:
        raise ValueError("truncation level t must be positive")
    g = TestFunction.coerce(g)
    return TestFunction(np.clip(g.values, -t, t))


def truncation_gap(pi, lam, mu, t: float) -> float:
    """kullback_action(pi) - dual_value(clip(optimal_tilt(pi), t), pi).

    Evaluated cell by cell as  q/2 * (e^y - e^x - e^x (y - x))  with
    x = log(p/q) and y its clipped value, which is the same difference written
    so that every term is visibly nonnegative (convexity of exp).
    """
    pi = PairMeasure.coerce(pi)
    m = product_measure(lam, mu)
    x = optimal_tilt(pi, m).values
    y = truncate_test_function(x, t).values
    p, q = pi.values, m.values
    d = y - x
    cells = np.where(
        p > 0,
        0.5 * p * (np.expm1(d) - d),
        0.5 * q * (np.exp(y) - np.exp(x) * (1.0 + d)),
    )
    return math.fsum(np.maximum(cells, 0.0).ravel())


def truncation_gap_direct(pi, lam, mu, t: float) -> float:
    """The same gap as a literal difference of the two functionals."""
    m = product_measure(lam, mu)
    g_t = truncate_test_function(optimal_tilt(pi, m), t)
    return kullback_action(pi, lam, mu) - dual_value(g_t, pi, lam, mu)


def witness_set(pi, m) -> list[tuple[int, int]]:
    """Cells charged by pi but not by m."""
    pi, m = PairMeasure.coerce(pi), PairMeasure.coerce(m)
    bad = (pi.values > 0) & ~(m.values > 0)
    return [tuple(int(i) for i in c) for c in np.argwhere(bad)]


def divergence_witness(pi, m, eta: float) -> TestFunction:
    """Test function equal to -log(eta) on the witness set and 0 elsewhere.

    Along eta -> 0 its dual value grows without bound, certifying an infinite
    Kullback action.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    pi, m = PairMeasure.coerce(pi), PairMeasure.coerce(m)
    cells = witness_set(pi, m)
    if not cells:
        raise NoWitnessError("pi is absolutely continuous w.r.t. m; no witness set")
    g = np.zeros((pi.k, pi.k))
    for a, b in cells:
        g[a, b] = -math.log(eta)
    return TestFunction(g)
