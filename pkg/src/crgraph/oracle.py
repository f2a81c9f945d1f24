"""Exact counting and exact probabilities for coloured random graphs.

The law of the empirical link measure only depends on the type counts and on
the number of edges in each type-pair class, so every computation here
enumerates the lattice of (counts, edge counts) instead of graphs.  Within a
class of N node pairs with link probability p the edge count is Binomial(N, p)
and, for fixed counts, different classes are independent.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .measures import (
    Kernel,
    PairMeasure,
    TypeLaw,
    kullback_action,
    mcmillan_entropy,
    product_measure,
)
from .process import (
    ConnectionSchedule,
    Event,
    class_budgets,
    class_pairs,
    class_probs,
    configs_to_values,
    cell_scale,
    counts_from_law,
)

DEFAULT_BUDGET = 50_000_000
NAIVE_BUDGET = 100_000_000
EXACT_COUNT_LIMIT = 40
_CHUNK = 1 << 19


class EnumerationBudgetExceeded(RuntimeError):
    def __init__(self, needed: int, budget: int):
        super().__init__(f"enumeration needs {needed} configurations, budget is {budget}")
        self.needed = needed
        self.budget = budget


class ConfigError(ValueError):
    """Edge counts violate the class budgets for the given type counts."""


# ---------------------------------------------------------------------------
# single configurations


def _validated(counts, config) -> tuple[np.ndarray, np.ndarray]:
    counts = np.asarray(counts, dtype=np.int64).reshape(-1)
    config = np.asarray(config, dtype=np.int64).reshape(-1)
    k = counts.size
    if config.size != k * (k + 1) // 2:
        raise ConfigError(f"expected {k * (k + 1) // 2} class edge counts for k = {k}, got {config.size}")
    if np.any(counts < 0):
        raise ConfigError("type counts must be nonnegative")
    budgets = class_budgets(counts)
    if np.any(config < 0) or np.any(config > budgets):
        raise ConfigError(f"edge counts {config.tolist()} outside class budgets {budgets.tolist()}")
    return counts, config


def config_to_pair_measure(counts, config, schedule: ConnectionSchedule) -> PairMeasure:
    counts, config = _validated(counts, config)
    n = int(counts.sum())
    return PairMeasure(configs_to_values(config[None, :], counts.size, schedule.normalizer(n))[0])


def pair_measure_to_config(counts, pi, schedule: ConnectionSchedule) -> np.ndarray:
    """Nearest feasible integer edge counts for a target link measure.

    Cross classes carry e = a_n n^2 pi(a, b), monochromatic ones
    e = a_n n^2 pi(a, a) / 2.
    """
    counts = np.asarray(counts, dtype=np.int64)
    pi = PairMeasure.coerce(pi)
    norm = schedule.normalizer(int(counts.sum()))
    budgets = class_budgets(counts)
    target = np.array([pi.values[a, b] * norm / (2.0 if a == b else 1.0) for a, b in class_pairs(counts.size)])
    return np.clip(np.rint(target).astype(np.int64), 0, budgets)


def _log_multinomial(counts: np.ndarray) -> float:
    return float(gammaln(counts.sum() + 1) - gammaln(counts + 1).sum())


def count_graphs(counts, config) -> int:
    """Number of coloured graphs (labelled nodes) with these type and class edge counts."""
    counts, config = _validated(counts, config)
    total = math.factorial(int(counts.sum()))
    for c in counts:
        total //= math.factorial(int(c))
    for N, e in zip(class_budgets(counts), config):
        total *= math.comb(int(N), int(e))
    return total


def log_count_graphs(counts, config) -> float:
    """log count_graphs; exact integer arithmetic below n = 40, log-gamma above."""
    counts, config = _validated(counts, config)
    if counts.sum() < EXACT_COUNT_LIMIT:
        return math.log(count_graphs(counts, config))
    return _log_count_lgamma(counts, config)


def _log_count_lgamma(counts: np.ndarray, config: np.ndarray) -> float:
    N = class_budgets(counts)
    return _log_multinomial(counts) + float(np.sum(_log_binom(N, config)))


def _log_binom(N, e):
    N = np.asarray(N, dtype=float)
    e = np.asarray(e, dtype=float)
    return gammaln(N + 1) - gammaln(e + 1) - gammaln(N - e + 1)


def _binom_logpmf(N: int, p: float, e: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    out = _log_binom(N, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        if p <= 0:
            out = np.where(e == 0, 0.0, -np.inf)
        elif p >= 1:
            out = np.where(e == N, 0.0, -np.inf)
        else:
            out = out + e * math.log(p) + (N - e) * math.log1p(-p)
    return out


def log_type_probability(counts, mu) -> float:
    """log of the multinomial probability of the type counts under mu."""
    counts = np.asarray(counts, dtype=np.int64)
    w = TypeLaw.coerce(mu).weights
    if np.any((counts > 0) & (w == 0)):
        return -math.inf
    pos = counts > 0
    return _log_multinomial(counts) + float(np.sum(counts[pos] * np.log(w[pos])))


def config_log_probability(counts, config, lam, schedule: ConnectionSchedule,
                           conditional: bool = True, mu=None) -> float:
    """log P(edge counts = config [, type counts = counts]).

    With ``conditional=True`` the type counts are given; otherwise the
    multinomial probability of the counts under ``mu`` is included.
    """
    counts, config = _validated(counts, config)
    n = int(counts.sum())
    pc = class_probs(lam, schedule, n)
    N = class_budgets(counts)
    total = 0.0
    for Nc, e, p in zip(N, config, pc):
        total += float(_binom_logpmf(int(Nc), float(p), np.array([e]))[0])
    if not conditional:
        if mu is None:
            raise ValueError("unconditional probabilities need the type law mu")
        total += log_type_probability(counts, mu)
    return total


# ---------------------------------------------------------------------------
# lattice enumeration


@dataclass
class Enumeration:
    """Outcome of a lattice sum."""

    log_value: float
    configs: int
    neglected_bound: float = 0.0


def compositions(n: int, k: int) -> Iterator[tuple[int, ...]]:
    """All k-tuples of nonnegative integers summing to n."""
    if k == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, k - 1):
            yield (first, *rest)


def _class_ranges(counts: np.ndarray, normalizer: float, event: Event) -> list[np.ndarray]:
    budgets = class_budgets(counts)
    scale = cell_scale(counts.size, normalizer)
    box = event.box()
    ranges = []
    for c, (a, b) in enumerate(class_pairs(counts.size)):
        lo, hi = 0, int(budgets[c])
        if box is not None:
            lo = max(lo, math.ceil(box[0][a, b] / scale[c] - 1e-9))
            hi = min(hi, math.floor(box[1][a, b] / scale[c] + 1e-9))
        ranges.append(np.arange(lo, hi + 1, dtype=np.int64) if hi >= lo else np.empty(0, dtype=np.int64))
    return ranges


def _trim_tails(rng_e: np.ndarray, logw: np.ndarray, cutoff: float | None):
    """Keep entries whose weight is within ``cutoff`` nats of the class maximum."""
    if cutoff is None or rng_e.size == 0:
        return rng_e, logw, 0.0
    top = np.max(logw)
    keep = logw >= top - cutoff
    dropped = rng_e.size - int(keep.sum())
    # every dropped term is below top - cutoff <= -cutoff (a pmf is <= 1)
    bound = dropped * math.exp(min(top, 0.0) - cutoff) if dropped else 0.0
    return rng_e[keep], logw[keep], bound


def _lattice_sum(ranges: list[np.ndarray], logw: list[np.ndarray], counts: np.ndarray,
                 normalizer: float, event: Event) -> tuple[float, int]:
    """log sum over the product lattice of exp(sum_c logw[c]) restricted to the event."""
    sizes = [r.size for r in ranges]
    total = int(np.prod(sizes, dtype=np.int64)) if sizes else 0
    if total == 0:
        return -math.inf, 0
    k = counts.size
    acc = []
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(total, start + _CHUNK))
        idx = np.unravel_index(flat, sizes)
        configs = np.stack([r[i] for r, i in zip(ranges, idx)], axis=1)
        members = event.contains_values(configs_to_values(configs, k, normalizer))
        if not np.any(members):
            continue
        lw = sum(w[i[members]] for w, i in zip(logw, idx))
        acc.append(float(logsumexp(lw)))
    return (float(logsumexp(acc)) if acc else -math.inf), total


def _count_vectors(n: int, mu, conditional: bool, counts=None) -> list[np.ndarray]:
    k = TypeLaw.coerce(mu).k
    if conditional:
        c = counts_from_law(n, mu) if counts is None else np.asarray(counts, dtype=np.int64)
        if int(c.sum()) != n:
            raise ValueError(f"type counts {c.tolist()} do not sum to n = {n}")
        return [c]
    return [np.array(c, dtype=np.int64) for c in compositions(n, k)]


def event_enumeration(n: int, event: Event, lam, mu, schedule: ConnectionSchedule,
                      conditional: bool = True, *, counts=None, tail_cutoff: float | None = None,
                      budget: int = DEFAULT_BUDGET) -> Enumeration:
    """log P(L2 in event) with bookkeeping.

    ``tail_cutoff`` (nats) drops, per class, edge counts whose probability is
    more than that far below the class mode, and drops type-count vectors the
    same way; ``neglected_bound`` then bounds the discarded probability.
    With ``tail_cutoff=None`` the sum is exact.
    """
    lam, mu = Kernel.coerce(lam), TypeLaw.coerce(mu)
    if event.kind == "entire" and tail_cutoff is None:
        return Enumeration(0.0, 0)
    norm = schedule.normalizer(n)
    pc = class_probs(lam, schedule, n)
    plans = []
    neglected = 0.0
    for counts_vec in _count_vectors(n, mu, conditional, counts):
        base = 0.0 if conditional else log_type_probability(counts_vec, mu)
        if base == -math.inf:
            continue
        if tail_cutoff is not None and base < -tail_cutoff:
            neglected += math.exp(base)
            continue
        budgets = class_budgets(counts_vec)
        ranges, logw = [], []
        for r, Nc, p in zip(_class_ranges(counts_vec, norm, event), budgets, pc):
            lw = _binom_logpmf(int(Nc), float(p), r)
            r, lw, nb = _trim_tails(r, lw, tail_cutoff)
            ranges.append(r)
            logw.append(lw)
            neglected += nb * math.exp(base)
        plans.append((base, counts_vec, ranges, logw))
    needed = sum(int(np.prod([r.size for r in plan[2]], dtype=np.int64)) for plan in plans)
    if needed > budget:
        raise EnumerationBudgetExceeded(needed, budget)
    parts = []
    total = 0
    for base, counts_vec, ranges, logw in plans:
        val, m = _lattice_sum(ranges, logw, counts_vec, norm, event)
        total += m
        if val > -math.inf:
            parts.append(base + val)
    log_value = float(logsumexp(parts)) if parts else -math.inf
    return Enumeration(min(log_value, 0.0), total, neglected)


def event_log_probability(n: int, event: Event, lam, mu, schedule: ConnectionSchedule,
                          conditional: bool = True, **kwargs) -> float:
    """log P_mu{ L2 in event } by exact lattice enumeration (see ``event_enumeration``)."""
    return event_enumeration(n, event, lam, mu, schedule, conditional, **kwargs).log_value


def log_card(n: int, event: Event, schedule: ConnectionSchedule, k: int,
             *, budget: int = DEFAULT_BUDGET) -> Enumeration:
    """log #{coloured graphs on n nodes with k colours : L2 in event}."""
    if event.kind == "entire":
        return Enumeration(n * math.log(k) + math.comb(n, 2) * math.log(2), 0)
    norm = schedule.normalizer(n)
    plans = []
    for counts_vec in compositions(n, k):
        counts_vec = np.array(counts_vec, dtype=np.int64)
        budgets = class_budgets(counts_vec)
        ranges = _class_ranges(counts_vec, norm, event)
        logw = [_log_binom(int(Nc), r) for r, Nc in zip(ranges, budgets)]
        plans.append((_log_multinomial(counts_vec), counts_vec, ranges, logw))
    needed = sum(int(np.prod([r.size for r in plan[2]], dtype=np.int64)) for plan in plans)
    if needed > budget:
        raise EnumerationBudgetExceeded(needed, budget)
    parts, total = [], 0
    for base, counts_vec, ranges, logw in plans:
        val, m = _lattice_sum(ranges, logw, counts_vec, norm, event)
        total += m
        if val > -math.inf:
            parts.append(base + val)
    return Enumeration(float(logsumexp(parts)) if parts else -math.inf, total)


def exact_card(n: int, event: Event, schedule: ConnectionSchedule, k: int) -> int:
    """Exact big-integer version of ``log_card`` for small n."""
    norm = schedule.normalizer(n)
    total = 0
    for counts_vec in compositions(n, k):
        counts_vec = np.array(counts_vec, dtype=np.int64)
        ranges = _class_ranges(counts_vec, norm, event)
        for config in itertools.product(*[r.tolist() for r in ranges]):
            config = np.array(config, dtype=np.int64)
            if event.contains_values(configs_to_values(config[None, :], k, norm))[0]:
                total += count_graphs(counts_vec, config)
    return total


# ---------------------------------------------------------------------------
# rate functions over events


def rate_infimum(event: Event, lam, mu) -> float:
    """inf of the Kullback action over the closure of the event."""
    m = product_measure(lam, mu)
    if event.kind == "entire":
        return 0.0
    if event.kind == "ball":
        # separable convex objective: the cellwise projection of m is optimal
        lo = np.maximum(event.center.values - event.radius, 0.0)
        hi = event.center.values + event.radius
        if np.any(hi < 0):
            return math.inf
        return kullback_action(np.clip(m.values, lo, hi), lam, mu)
    if event.kind == "half_space":
        g, q = event.g.values, m.values

        def excess(theta):
            return float(np.sum(g * q * np.exp(theta * g))) - event.level

        if excess(0.0) >= 0:
            return 0.0
        if not np.any((g > 0) & (q > 0)):
            return math.inf
        hi = 1.0
        while excess(hi) < 0:
            hi *= 2.0
        theta = brentq(excess, 0.0, hi, xtol=1e-14, rtol=1e-14)
        return kullback_action(q * np.exp(theta * g), lam, mu)
    raise ValueError("rate infimum is only available for ball, half-space and entire events")


def rate_infimum_grid(event: Event, lam, mu, points: int = 81) -> float:
    """Brute-force grid minimum of the Kullback action over a ball (any k)."""
    if event.kind != "ball":
        raise ValueError("grid infimum is implemented for ball events")
    k = event.center.k
    pairs = class_pairs(k)
    axes = [np.linspace(max(event.center.values[a, b] - event.radius, 0.0),
                        event.center.values[a, b] + event.radius, points) for a, b in pairs]
    m = product_measure(lam, mu).values
    best = math.inf
    grids = np.meshgrid(*axes, indexing="ij")
    total = np.zeros(grids[0].shape)
    for grid, (a, b) in zip(grids, pairs):
        q = m[a, b]
        with np.errstate(divide="ignore", invalid="ignore"):
            cell = np.where(grid > 0, grid * np.log(grid / q) + q - grid, q) if q > 0 else np.where(grid > 0, np.inf, 0.0)
        total = total + (cell if a == b else 2 * cell)
    best = float(0.5 * total.min())
    return best


@dataclass
class RateSequence:
    points: list[tuple[int, float]]
    extrapolated: float
    fit_intercept: float
    monotone: bool
    details: list[Enumeration] = field(default_factory=list)


def richardson(points: Sequence[tuple[int, float]]) -> float:
    """Eliminate the 1/n term using the two largest n."""
    (n1, r1), (n2, r2) = sorted(points)[-2:]
    return (n2 * r2 - n1 * r1) / (n2 - n1)


def _fit_intercept(points) -> float:
    n = np.array([p[0] for p in points], dtype=float)
    r = np.array([p[1] for p in points])
    A = np.stack([np.ones_like(n), 1.0 / n], axis=1)
    return float(np.linalg.lstsq(A, r, rcond=None)[0][0])


def rate_sequence(event_family: Callable[[int], Event], n_list: Sequence[int], lam, mu,
                  schedule: ConnectionSchedule, conditional: bool = True, **kwargs) -> RateSequence:
    """-(1/n) log P(L2 in event_n) over n, with extrapolation in 1/n."""
    points, details = [], []
    for n in n_list:
        res = event_enumeration(n, event_family(n), lam, mu, schedule, conditional, **kwargs)
        rate = -res.log_value / n
        points.append((int(n), rate + 0.0))
        details.append(res)
    if len(points) >= 2:
        extrap = richardson(points)
        fit = _fit_intercept(points)
        diffs = np.diff([r for _, r in sorted(points)])
        monotone = bool(np.all(diffs >= 0) or np.all(diffs <= 0))
    else:
        extrap = fit = points[0][1]
        monotone = True
    return RateSequence(points, extrap, fit, monotone, details)


# ---------------------------------------------------------------------------
# brute force over graphs


@dataclass
class NaiveTable:
    n: int
    k: int
    graphs: int
    counts: dict  # (counts, config) -> exact number of graphs
    prob: dict  # (counts, config) -> unconditional probability
    cond_prob: dict  # (counts, config) -> probability given the type counts


@lru_cache(maxsize=16)
def _edge_masks(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    iu, iv = np.triu_indices(n, k=1)
    P = iu.size
    bits = (np.arange(2 ** P)[:, None] >> np.arange(P)[None, :]) & 1
    return bits.astype(bool), iu, iv


def naive_enumerate(n: int, k: int, lam, mu, schedule: ConnectionSchedule,
                    budget: int = NAIVE_BUDGET) -> NaiveTable:
    """Visit every colouring and every edge set, graph by graph."""
    pairs_total = n * (n - 1) // 2
    needed = k ** n * 2 ** pairs_total
    if needed > budget:
        raise EnumerationBudgetExceeded(needed, budget)
    lam, mu = Kernel.coerce(lam), TypeLaw.coerce(mu)
    masks, iu, iv = _edge_masks(n)
    p = schedule.connection_probs(lam, n)
    cls_index = np.full((k, k), -1, dtype=np.int64)
    for c, (a, b) in enumerate(class_pairs(k)):
        cls_index[a, b] = cls_index[b, a] = c
    C = len(class_pairs(k))
    counts_tbl: dict = {}
    prob_tbl: dict = {}
    cond_tbl: dict = {}
    arrangements: dict = {}
    for colouring in itertools.product(range(k), repeat=n):
        col = np.array(colouring, dtype=np.int64)
        cnt = tuple(int(x) for x in np.bincount(col, minlength=k))
        arrangements[cnt] = arrangements.get(cnt, 0) + 1
        type_prob = float(np.prod(mu.weights[col])) if n else 1.0
        pair_p = p[col[iu], col[iv]]
        graph_prob = np.prod(np.where(masks, pair_p, 1.0 - pair_p), axis=1)
        pair_cls = cls_index[col[iu], col[iv]]
        onehot = (pair_cls[:, None] == np.arange(C)[None, :]).astype(np.int64)
        configs = masks.astype(np.int64) @ onehot
        # mixed-radix code of each config row, so grouping is a 1-d sort
        code = configs @ ((pairs_total + 1) ** np.arange(C, dtype=np.int64))
        uniq, first, inverse, freq = np.unique(code, return_index=True, return_inverse=True, return_counts=True)
        sums = np.bincount(inverse.reshape(-1), weights=graph_prob, minlength=uniq.size)
        for row, f, s in zip(configs[first], freq, sums):
            key = (cnt, tuple(int(x) for x in row))
            counts_tbl[key] = counts_tbl.get(key, 0) + int(f)
            prob_tbl[key] = prob_tbl.get(key, 0.0) + type_prob * float(s)
            cond_tbl[key] = cond_tbl.get(key, 0.0) + float(s)
    for key in cond_tbl:
        cond_tbl[key] /= arrangements[key[0]]
    return NaiveTable(n, k, needed, counts_tbl, prob_tbl, cond_tbl)


def naive_event_probability(table: NaiveTable, event: Event, schedule: ConnectionSchedule,
                            conditional: bool = False, counts=None) -> float:
    norm = schedule.normalizer(table.n)
    total = 0.0
    for (cnt, config), prob in (table.cond_prob if conditional else table.prob).items():
        if conditional and tuple(cnt) != tuple(int(c) for c in counts):
            continue
        w = configs_to_values(np.array([config]), table.k, norm)
        if event.contains_values(w)[0]:
            total += prob
    return total


def naive_card(table: NaiveTable, event: Event, schedule: ConnectionSchedule) -> int:
    norm = schedule.normalizer(table.n)
    total = 0
    for (_, config), cnt in table.counts.items():
        if event.contains_values(configs_to_values(np.array([config]), table.k, norm))[0]:
            total += cnt
    return total


# ---------------------------------------------------------------------------
# counting diagnostic


@dataclass
class McMillanRow:
    n: int
    log_card: float
    entropy_term: float
    gap: float
    configs: int


def mcmillan_count_report(n: int, ball_event: Event, lam, mu, schedule: ConnectionSchedule,
                          *, budget: int = DEFAULT_BUDGET) -> McMillanRow:
    """Exact log Card{y : L2_y in B} next to n times the McMillan entropy of the centre.

    No judgement is made about the difference; it is reported as ``gap``.
    """
    k = TypeLaw.coerce(mu).k
    res = log_card(n, ball_event, schedule, k, budget=budget)
    if ball_event.center is not None:
        h = mcmillan_entropy(ball_event.center, lam, mu)
    else:
        h = mcmillan_entropy(product_measure(lam, mu), lam, mu)
    entropy_term = n * h
    return McMillanRow(n, res.log_value, entropy_term, res.log_value - entropy_term, res.configs)
