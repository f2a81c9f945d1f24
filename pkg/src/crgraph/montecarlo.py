"""Sampling estimators of event probabilities and decay rates.

Two estimators are provided: plain frequency counting under the graph law,
and importance sampling under the odds-tilted law with exact likelihood
ratios.  Events are sets of empirical link measures, so by default the
samplers draw the sufficient statistic (type counts and per-class edge
counts, which are independent binomials given the counts) instead of whole
graphs; ``method="graph"`` draws complete graphs for cross-checking.

Reproducibility: the master seed is split into one substream per worker with
``SeedSequence(seed, spawn_key=(w,))``, sample indices are pre-partitioned
into contiguous blocks, and the per-worker (sum, sum of squares, count)
triples are reduced pairwise in worker order.  The result is a deterministic
function of (seed, workers).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .legendre import optimal_tilt
from .measures import Kernel, TestFunction, TypeLaw, product_measure
from .process import (
    ConnectionSchedule,
    Event,
    _log_ratio_terms,
    _tilt_probs,
    class_budgets,
    class_pairs,
    configs_to_values,
    counts_from_law,
    edge_class_counts,
    sample_graph,
    sample_graph_conditional,
)

BATCH = 1 << 16


class TiltError(ValueError):
    """The tilted law does not dominate the original one."""


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    samples: int
    effective_sample_size: float
    seed: int
    workers: int = 1
    hits: int = 0
    upper_bound: float | None = None  # one-sided 95% bound when no hits

    @property
    def relative_error(self) -> float:
        return self.std_error / self.value if self.value > 0 else math.inf


@dataclass(frozen=True)
class _Moments:
    total: float
    total_sq: float
    count: int
    hits: int

    def __add__(self, other: "_Moments") -> "_Moments":
        return _Moments(self.total + other.total, self.total_sq + other.total_sq,
                        self.count + other.count, self.hits + other.hits)


def _pairwise_sum(parts: list[_Moments]) -> _Moments:
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _blocks(samples: int, workers: int) -> list[int]:
    base, extra = divmod(samples, workers)
    return [base + (1 if w < extra else 0) for w in range(workers)]


def worker_rng(seed: int, worker: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(worker,))))


@dataclass(frozen=True)
class _Plan:
    n: int
    k: int
    conditional: bool
    counts: np.ndarray | None
    mu: np.ndarray
    probs: np.ndarray  # per class, sampling law
    present: np.ndarray  # per class log(p / p~)
    absent: np.ndarray  # per class log((1 - p) / (1 - p~))
    tilted: bool
    event: Event
    normalizer: float
    method: str
    lam: Kernel
    schedule: ConnectionSchedule
    tilt_table: np.ndarray | None


def _make_plan(n, event, mu, lam, schedule, conditional, counts, g_tilt, method) -> _Plan:
    mu, lam = TypeLaw.coerce(mu), Kernel.coerce(lam)
    k = mu.k
    if conditional:
        counts = counts_from_law(n, mu) if counts is None else np.asarray(counts, dtype=np.int64)
        if int(counts.sum()) != n:
            raise ValueError(f"type counts {counts.tolist()} do not sum to n = {n}")
    p = schedule.connection_probs(lam, n)
    pc = np.array([p[a, b] for a, b in class_pairs(k)])
    if g_tilt is None:
        ptc = pc
        table = None
    else:
        g = TestFunction.coerce(g_tilt)
        table = _tilt_probs(g.values, p)
        ptc = np.array([table[a, b] for a, b in class_pairs(k)])
        if np.any((pc > 0) & (ptc <= 0)) or np.any((pc < 1) & (ptc >= 1)):
            raise TiltError("degenerate tilt: the tilted law misses outcomes of the original law")
    present, absent = _log_ratio_terms(pc, ptc)
    if method not in {"statistic", "graph"}:
        raise ValueError(f"unknown sampling method {method!r}")
    return _Plan(n, k, conditional, counts, mu.weights, ptc, present, absent, g_tilt is not None,
                 event, schedule.normalizer(n), method, lam, schedule, table)


def _budgets_batch(counts: np.ndarray) -> np.ndarray:
    """class_budgets for each row of an (M, k) array of type counts."""
    counts = np.asarray(counts, dtype=np.int64)
    cols = [counts[:, a] * (counts[:, a] - 1) // 2 if a == b else counts[:, a] * counts[:, b]
            for a, b in class_pairs(counts.shape[1])]
    return np.stack(cols, axis=1)


def _draw_statistics(plan: _Plan, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if plan.conditional:
        counts = np.broadcast_to(plan.counts, (size, plan.k))
        budgets = np.broadcast_to(class_budgets(plan.counts), (size, len(plan.probs)))
    else:
        counts = rng.multinomial(plan.n, plan.mu, size=size)
        budgets = _budgets_batch(counts)
    configs = rng.binomial(budgets, plan.probs)
    return counts, configs.reshape(size, -1)


def _draw_graphs(plan: _Plan, size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    counts, configs = [], []
    for _ in range(size):
        if plan.conditional:
            graph = sample_graph_conditional(plan.counts, plan.lam, plan.schedule, rng, probs=plan.tilt_table)
        elif plan.tilt_table is None:
            graph = sample_graph(plan.n, plan.mu, plan.lam, plan.schedule, rng)
        else:
            draw = rng.multinomial(plan.n, plan.mu)
            graph = sample_graph_conditional(draw, plan.lam, plan.schedule, rng, probs=plan.tilt_table)
        counts.append(graph.type_counts())
        configs.append(edge_class_counts(graph))
    return np.array(counts).reshape(size, plan.k), np.array(configs).reshape(size, -1)


def _run_block(plan: _Plan, size: int, rng: np.random.Generator) -> _Moments:
    acc = _Moments(0.0, 0.0, 0, 0)
    done = 0
    while done < size:
        m = min(BATCH, size - done)
        draw = _draw_graphs if plan.method == "graph" else _draw_statistics
        counts, configs = draw(plan, m, rng)
        inside = plan.event.contains_values(configs_to_values(configs, plan.k, plan.normalizer))
        if plan.tilted:
            budgets = _budgets_batch(counts)
            logw = configs @ plan.present + (budgets - configs) @ plan.absent
            y = np.where(inside, np.exp(logw), 0.0)
        else:
            y = inside.astype(float)
        acc = acc + _Moments(math.fsum(y), math.fsum(y * y), m, int(inside.sum()))
        done += m
    return acc


def _estimate(plan: _Plan, samples: int, seed: int, workers: int) -> Estimate:
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    sizes = _blocks(samples, workers)
    jobs = [(plan, size, worker_rng(seed, w)) for w, size in enumerate(sizes)]
    if workers == 1:
        parts = [_run_block(*jobs[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _run_block(*job), jobs))
    mom = _pairwise_sum(parts)
    mean = mom.total / mom.count
    if plan.tilted:
        var = max(mom.total_sq / mom.count - mean * mean, 0.0) * mom.count / max(mom.count - 1, 1)
        se = math.sqrt(var / mom.count)
    else:
        se = math.sqrt(mean * (1.0 - mean) / mom.count)
    ess = mom.total ** 2 / mom.total_sq if mom.total_sq > 0 else 0.0
    upper = 3.0 / mom.count if mom.hits == 0 else None
    return Estimate(mean, se, mom.count, min(ess, float(mom.count)), seed, workers, mom.hits, upper)


def mc_event_probability(n: int, event: Event, mu, lam, schedule: ConnectionSchedule, samples: int,
                         seed: int, conditional: bool = True, *, workers: int = 1, counts=None,
                         method: str = "statistic") -> Estimate:
    """Frequency of the event over iid draws of the graph law."""
    plan = _make_plan(n, event, mu, lam, schedule, conditional, counts, None, method)
    return _estimate(plan, samples, seed, workers)


def is_event_probability(n: int, event: Event, mu, lam, schedule: ConnectionSchedule, g_tilt,
                         samples: int, seed: int, conditional: bool = True, *, workers: int = 1,
                         counts=None, method: str = "statistic") -> Estimate:
    """Mean of (dP/dP~) 1{event} over draws from the odds-tilted law P~."""
    plan = _make_plan(n, event, mu, lam, schedule, conditional, counts, g_tilt, method)
    return _estimate(plan, samples, seed, workers)


def default_tilt(event: Event, lam, mu) -> TestFunction:
    """optimal_tilt(target, lam mu x mu) for the event's target measure."""
    if event.target is None:
        raise ValueError("event has no target measure; supply a tilt explicitly")
    return optimal_tilt(event.target, product_measure(lam, mu))


@dataclass(frozen=True)
class EstimatorConfig:
    method: str  # "mc" or "is"
    mu: object
    lam: object
    schedule: ConnectionSchedule
    samples: int
    seed: int
    conditional: bool = True
    workers: int = 1
    tilt: TestFunction | Callable[[int], TestFunction] | None = None
    z: float = 1.96


@dataclass(frozen=True)
class RateEstimate:
    n: int
    rate: float | None
    ci_low: float | None
    ci_high: float | None
    estimate: Estimate
    flagged: bool = False


def rate_estimate(n_list: Sequence[int], event_family: Callable[[int], Event],
                  config: EstimatorConfig) -> list[RateEstimate]:
    """-(1/n) log p_hat with a delta-method interval  rate +- z SE / (n p_hat).

    A zero estimate is flagged and carries no rate.
    """
    out = []
    for n in n_list:
        event = event_family(n)
        if config.method == "mc":
            est = mc_event_probability(n, event, config.mu, config.lam, config.schedule, config.samples,
                                       config.seed, config.conditional, workers=config.workers)
        elif config.method == "is":
            tilt = config.tilt(n) if callable(config.tilt) else config.tilt
            if tilt is None:
                tilt = default_tilt(event, config.lam, config.mu)
            est = is_event_probability(n, event, config.mu, config.lam, config.schedule, tilt,
                                       config.samples, config.seed, config.conditional, workers=config.workers)
        else:
            raise ValueError(f"unknown estimator method {config.method!r}")
        if est.value <= 0:
            out.append(RateEstimate(n, None, None, None, est, flagged=True))
            continue
        rate = -math.log(est.value) / n + 0.0
        half = config.z * est.std_error / (n * est.value)
        out.append(RateEstimate(n, rate, rate - half, rate + half, est))
    return out
