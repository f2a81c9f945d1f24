"""Coloured random graph sampler, empirical measures and the tilted law.

Nodes receive iid colours from a type law; given the colours every pair
{u, v} is linked independently with probability p_n(colour u, colour v),
where p_n = min(a_n * lam, 1).  The empirical link measure is normalized by
a_n n^2, so that a_n n^2 * ||L2|| = 2 |E|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit, logit

from .measures import (
    Kernel,
    MeasureError,
    PairMeasure,
    TestFunction,
    TypeLaw,
    pairing,
)

BALL_TOL = 1e-12


# ---------------------------------------------------------------------------
# connection schedule


@dataclass(frozen=True)
class ConnectionSchedule:
    """Sequence a_n of edge-probability scales.

    kinds:
      near_critical   a_n = 1/n
      scaled          a_n = c/n          (n a_n -> c)
      power           a_n = c n^-alpha   (alpha < 1 supercritical, > 1 subcritical)
      explicit        a_n = table[n]
    All values are capped to (0, 1].
    """

    kind: str = "near_critical"
    c: float = 1.0
    alpha: float = 1.0
    table: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in {"near_critical", "scaled", "power", "explicit"}:
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError("schedule constant c must be positive")
        for n, a in dict(self.table).items():
            if not 0 < a <= 1:
                raise ValueError(f"explicit schedule value a({n}) = {a} outside (0, 1]")

    @classmethod
    def near_critical(cls) -> "ConnectionSchedule":
        return cls("near_critical")

    @classmethod
    def scaled(cls, c: float) -> "ConnectionSchedule":
        return cls("scaled", c=c)

    def a(self, n: int) -> float:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "near_critical":
            val = 1.0 / n
        elif self.kind == "scaled":
            val = self.c / n
        elif self.kind == "power":
            val = self.c * n ** (-self.alpha)
        else:
            try:
                val = float(self.table[n])
            except KeyError:
                raise ValueError(f"explicit schedule has no entry for n = {n}") from None
        return min(val, 1.0)

    def regime(self) -> str:
        """Classification by the limit of n a_n."""
        if self.kind == "near_critical" or (self.kind == "scaled" and self.c == 1.0):
            return "sparse"
        if self.kind == "scaled":
            return "sparse-scaled"
        if self.kind == "power":
            if self.alpha > 1:
                return "subcritical"
            if self.alpha < 1:
                return "supercritical"
            return "sparse" if self.c == 1.0 else "sparse-scaled"
        return "explicit"

    def normalizer(self, n: int) -> float:
        """a_n n^2, the normalization of the empirical link measure."""
        return self.a(n) * n * n

    def connection_probs(self, lam, n: int) -> np.ndarray:
        lam = Kernel.coerce(lam)
        return np.minimum(self.a(n) * lam.values, 1.0)


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True, eq=False)
class ColouredGraph:
    n: int
    k: int
    colours: np.ndarray
    edges: np.ndarray  # shape (E, 2), u < v, sorted lexicographically

    def __post_init__(self):
        colours = np.asarray(self.colours, dtype=np.int64).reshape(-1)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if colours.size != self.n:
            raise ValueError(f"expected {self.n} colours, got {colours.size}")
        if self.n and (colours.min() < 0 or colours.max() >= self.k):
            raise ValueError("colour index out of range")
        if edges.size:
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loops are not allowed")
            if edges.min() < 0 or edges.max() >= self.n:
                raise ValueError("edge endpoint out of range")
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise ValueError("duplicate edges are not allowed")
        colours.setflags(write=False)
        edges.setflags(write=False)
        object.__setattr__(self, "colours", colours)
        object.__setattr__(self, "edges", edges)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def type_counts(self) -> np.ndarray:
        return np.bincount(self.colours, minlength=self.k)

    def __eq__(self, other):
        return (
            isinstance(other, ColouredGraph)
            and (self.n, self.k) == (other.n, other.k)
            and np.array_equal(self.colours, other.colours)
            and np.array_equal(self.edges, other.edges)
        )


def dumps_graph(graph: ColouredGraph) -> str:
    lines = [f"{graph.n} {graph.k}", " ".join(str(int(c)) for c in graph.colours)]
    lines.extend(f"{int(u)} {int(v)}" for u, v in graph.edges)
    return "\n".join(lines) + "\n"


def loads_graph(text: str) -> ColouredGraph:
    lines = text.splitlines()
    if len(lines) < 2:
        raise ValueError("graph text needs a header line and a colour line")
    try:
        n, k = (int(x) for x in lines[0].split())
        colours = [int(x) for x in lines[1].split()]
        edges = [tuple(int(x) for x in ln.split()) for ln in lines[2:] if ln.strip()]
    except ValueError as exc:
        raise ValueError(f"malformed graph text: {exc}") from None
    if any(len(e) != 2 for e in edges):
        raise ValueError("edge lines must hold exactly two node indices")
    return ColouredGraph(n, k, np.array(colours, dtype=np.int64), np.array(edges, dtype=np.int64).reshape(-1, 2))


def write_graph(graph: ColouredGraph, path) -> None:
    Path(path).write_text(dumps_graph(graph))


def read_graph(path) -> ColouredGraph:
    return loads_graph(Path(path).read_text())


# ---------------------------------------------------------------------------
# type-pair classes


def class_pairs(k: int) -> list[tuple[int, int]]:
    """Unordered type pairs (a, b), a <= b, in canonical order."""
    return [(a, b) for a in range(k) for b in range(a, k)]


def class_budgets(counts) -> np.ndarray:
    """Number of node pairs available to each class for the given type counts."""
    counts = [int(c) for c in counts]
    return np.array(
        [counts[a] * (counts[a] - 1) // 2 if a == b else counts[a] * counts[b] for a, b in class_pairs(len(counts))],
        dtype=np.int64,
    )


def cell_scale(k: int, normalizer: float) -> np.ndarray:
    """L2 mass put on cell (a, b) by one edge of class (a, b)."""
    return np.array([(2.0 if a == b else 1.0) / normalizer for a, b in class_pairs(k)])


def configs_to_values(configs: np.ndarray, k: int, normalizer: float) -> np.ndarray:
    """(M, C) class edge counts -> (M, k, k) empirical link measures."""
    configs = np.asarray(configs)
    scale = cell_scale(k, normalizer)
    out = np.zeros((configs.shape[0], k, k))
    for c, (a, b) in enumerate(class_pairs(k)):
        col = configs[:, c] * scale[c]
        out[:, a, b] = col
        out[:, b, a] = col
    return out


def class_probs(lam, schedule: ConnectionSchedule, n: int) -> np.ndarray:
    p = schedule.connection_probs(lam, n)
    return np.array([p[a, b] for a, b in class_pairs(p.shape[0])])


def counts_from_law(n: int, mu) -> np.ndarray:
    """Integer type counts summing to n, by largest-remainder rounding of n mu."""
    mu = TypeLaw.coerce(mu)
    target = n * mu.weights
    base = np.floor(target).astype(np.int64)
    rem = n - int(base.sum())
    if rem:
        order = np.argsort(-(target - base), kind="stable")
        base[order[:rem]] += 1
    return base


# ---------------------------------------------------------------------------
# sampling


def _geometric_positions(N: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Indices in [0, N) kept by independent Bernoulli(p) trials, via geometric skips."""
    if N <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(N, dtype=np.int64)
    chunks = []
    pos = -1
    batch = max(16, int(N * p * 1.1 + 4 * math.sqrt(N * p + 1)))
    while True:
        gaps = rng.geometric(p, size=batch)
        idx = pos + np.cumsum(gaps)
        keep = idx[idx < N]
        chunks.append(keep)
        if keep.size < idx.size:
            break
        pos = int(idx[-1])
    return np.concatenate(chunks).astype(np.int64)


def _triangle_decode(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map idx = j (j - 1) / 2 + i (0 <= i < j) back to (i, j)."""
    j = np.floor((1.0 + np.sqrt(1.0 + 8.0 * idx)) / 2.0).astype(np.int64)
    j -= (j * (j - 1) // 2 > idx).astype(np.int64)
    j += ((j + 1) * j // 2 <= idx).astype(np.int64)
    i = idx - j * (j - 1) // 2
    return i, j


def _sample_edges(colours: np.ndarray, k: int, p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    groups = [np.flatnonzero(colours == a) for a in range(k)]
    parts = []
    for a, b in class_pairs(k):
        ga, gb = groups[a], groups[b]
        if a == b:
            N = ga.size * (ga.size - 1) // 2
            idx = _geometric_positions(N, float(p[a, b]), rng)
            i, j = _triangle_decode(idx)
            u, v = ga[i], ga[j]
        else:
            N = ga.size * gb.size
            idx = _geometric_positions(N, float(p[a, b]), rng)
            u, v = ga[idx // gb.size], gb[idx % gb.size]
        parts.append(np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1))
    return np.concatenate(parts) if parts else np.empty((0, 2), dtype=np.int64)


def sample_graph(n: int, mu, lam, schedule: ConnectionSchedule, rng: np.random.Generator) -> ColouredGraph:
    """Draw a coloured random graph: iid colours, then independent links."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mu, lam = TypeLaw.coerce(mu), Kernel.coerce(lam)
    if mu.k != lam.k:
        raise MeasureError("dimension mismatch between type law and kernel")
    colours = rng.choice(mu.k, size=n, p=mu.weights)
    edges = _sample_edges(colours, mu.k, schedule.connection_probs(lam, n), rng)
    return ColouredGraph(n, mu.k, colours, edges)


def sample_graph_conditional(type_counts, lam, schedule: ConnectionSchedule, rng: np.random.Generator,
                             *, n: int | None = None, probs: np.ndarray | None = None) -> ColouredGraph:
    """Draw a graph whose colour counts are exactly ``type_counts``.

    Colours form a uniformly random arrangement of the multiset; links are
    drawn as in ``sample_graph`` (or with the override table ``probs``).
    """
    counts = np.asarray(type_counts, dtype=np.int64)
    total = int(counts.sum())
    if np.any(counts < 0) or (n is not None and n != total) or total < 1:
        raise ValueError(f"type counts {counts.tolist()} inconsistent with n = {n}")
    lam = Kernel.coerce(lam)
    if lam.k != counts.size:
        raise MeasureError("dimension mismatch between type counts and kernel")
    colours = rng.permutation(np.repeat(np.arange(counts.size), counts))
    p = schedule.connection_probs(lam, total) if probs is None else probs
    edges = _sample_edges(colours, counts.size, p, rng)
    return ColouredGraph(total, counts.size, colours, edges)


def sample_graph_direct(n: int, mu, lam, schedule: ConnectionSchedule, rng: np.random.Generator,
                        *, colours=None) -> ColouredGraph:
    """Reference O(n^2) sampler: one uniform draw per node pair."""
    mu, lam = TypeLaw.coerce(mu), Kernel.coerce(lam)
    if colours is None:
        colours = rng.choice(mu.k, size=n, p=mu.weights)
    colours = np.asarray(colours, dtype=np.int64)
    p = schedule.connection_probs(lam, n)
    iu, iv = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p[colours[iu], colours[iv]]
    return ColouredGraph(n, mu.k, colours, np.stack([iu[keep], iv[keep]], axis=1))


# ---------------------------------------------------------------------------
# empirical measures


def empirical_type_measure(graph: ColouredGraph) -> TypeLaw:
    return TypeLaw(graph.type_counts() / graph.n)


def edge_class_counts(graph: ColouredGraph) -> np.ndarray:
    """Edge counts e(a, b), a <= b, in ``class_pairs`` order."""
    k = graph.k
    index = {pair: i for i, pair in enumerate(class_pairs(k))}
    out = np.zeros(len(index), dtype=np.int64)
    if graph.num_edges:
        cu = graph.colours[graph.edges[:, 0]]
        cv = graph.colours[graph.edges[:, 1]]
        lo, hi = np.minimum(cu, cv), np.maximum(cu, cv)
        flat = np.array([[index.get((a, b), -1) for b in range(k)] for a in range(k)])
        np.add.at(out, flat[lo, hi], 1)
    return out


def empirical_pair_measure(graph: ColouredGraph, schedule: ConnectionSchedule) -> PairMeasure:
    """L2(a, b) = sum over edges of [1{(c_u,c_v)=(a,b)} + 1{(c_v,c_u)=(a,b)}] / (a_n n^2)."""
    M = np.zeros((graph.k, graph.k))
    if graph.num_edges:
        cu = graph.colours[graph.edges[:, 0]]
        cv = graph.colours[graph.edges[:, 1]]
        np.add.at(M, (cu, cv), 1.0)
        np.add.at(M, (cv, cu), 1.0)
    return PairMeasure(M / schedule.normalizer(graph.n))


# ---------------------------------------------------------------------------
# tilted law and importance weights


def _tilt_probs(g: np.ndarray, p: np.ndarray) -> np.ndarray:
    if np.any((p >= 1) & (g != 0)):
        raise ValueError("cannot tilt a connection probability equal to 1 with a nonzero g")
    # untilted cells keep p bit-for-bit, so a zero tilt has weight exactly 1
    out = np.array(p, dtype=float)
    mid = (p > 0) & (p < 1) & (g != 0)
    out[mid] = expit(g[mid] + logit(p[mid]))
    return out


def tilted_connection_probs(g, lam, schedule: ConnectionSchedule, n: int) -> np.ndarray:
    """Odds tilt: p~ / (1 - p~) = e^g p / (1 - p)."""
    g = TestFunction.coerce(g)
    return _tilt_probs(g.values, schedule.connection_probs(lam, n))


def _log_ratio_terms(p: np.ndarray, pt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class log(p/p~) for present edges and log((1-p)/(1-p~)) for absent ones."""
    with np.errstate(divide="ignore"):
        present = np.where(p == pt, 0.0, np.log(p) - np.log(pt))
        absent = np.where(p == pt, 0.0, np.log1p(-p) - np.log1p(-pt))
    return present, absent


def log_weight_from_config(counts, config, g, lam, schedule: ConnectionSchedule) -> np.ndarray:
    """log dP/dP~ given type counts and per-class edge counts (vectorized over configs)."""
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    g = TestFunction.coerce(g)
    k = counts.size
    p = schedule.connection_probs(lam, n)
    pt = _tilt_probs(g.values, p)
    pairs = class_pairs(k)
    pc = np.array([p[a, b] for a, b in pairs])
    ptc = np.array([pt[a, b] for a, b in pairs])
    present, absent = _log_ratio_terms(pc, ptc)
    e = np.asarray(config, dtype=float)
    N = class_budgets(counts).astype(float)
    return e @ present + (N - e) @ absent


def importance_weight(graph: ColouredGraph, g, lam, schedule: ConnectionSchedule) -> float:
    """Exact log Radon-Nikodym factor dP/dP~ of the edge set, colours held fixed."""
    return float(log_weight_from_config(graph.type_counts(), edge_class_counts(graph), g, lam, schedule))


# ---------------------------------------------------------------------------
# events on the empirical link measure


@dataclass(frozen=True, eq=False)
class Event:
    """A set of pair measures.

    half_space: <g, w> > level
    ball:       max_ab |w(a,b) - center(a,b)| <= radius
    predicate:  fn(w) is true
    entire:     every measure

    ``target`` is the measure the event was built around (ball centre or the
    pi of a half-space neighbourhood); samplers use it to choose a tilt.
    """

    kind: str
    g: TestFunction | None = None
    level: float = 0.0
    center: PairMeasure | None = None
    radius: float = 0.0
    fn: Callable[[PairMeasure], bool] | None = None
    target: PairMeasure | None = None

    def __post_init__(self):
        if self.kind == "half_space":
            if self.g is None:
                raise ValueError("half_space event needs g")
        elif self.kind == "ball":
            if self.center is None or not self.radius >= 0:
                raise ValueError("ball event needs a center and a nonnegative radius")
        elif self.kind == "predicate":
            if self.fn is None:
                raise ValueError("predicate event needs fn")
        elif self.kind != "entire":
            raise ValueError(f"unknown event kind {self.kind!r}")

    @classmethod
    def half_space(cls, g, level: float) -> "Event":
        return cls("half_space", g=TestFunction.coerce(g), level=float(level))

    @classmethod
    def neighbourhood(cls, g, pi, eps: float) -> "Event":
        """{w : <g, w> > <g, pi> - eps/2}."""
        if not eps > 0:
            raise ValueError("eps must be positive")
        pi = PairMeasure.coerce(pi)
        g = TestFunction.coerce(g)
        return cls("half_space", g=g, level=pairing(g, pi) - eps / 2, target=pi)

    @classmethod
    def ball(cls, center, radius: float) -> "Event":
        center = PairMeasure.coerce(center)
        return cls("ball", center=center, radius=float(radius), target=center)

    @classmethod
    def predicate(cls, fn: Callable[[PairMeasure], bool]) -> "Event":
        return cls("predicate", fn=fn)

    @classmethod
    def entire(cls) -> "Event":
        return cls("entire")

    def contains_values(self, w: np.ndarray) -> np.ndarray:
        """Vectorized membership for an array of shape (..., k, k)."""
        w = np.asarray(w, dtype=float)
        if self.kind == "entire":
            return np.ones(w.shape[:-2], dtype=bool)
        if self.kind == "half_space":
            return np.einsum("...ab,ab->...", w, self.g.values) > self.level
        if self.kind == "ball":
            dist = np.max(np.abs(w - self.center.values), axis=(-2, -1))
            return dist <= self.radius + BALL_TOL * max(1.0, self.radius)
        flat = w.reshape(-1, *w.shape[-2:])
        return np.array([bool(self.fn(PairMeasure(x))) for x in flat], dtype=bool).reshape(w.shape[:-2])

    def box(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Cellwise bounds (lo, hi) implied by the event, if any."""
        if self.kind == "ball":
            pad = self.radius + BALL_TOL * max(1.0, self.radius)
            return self.center.values - pad, self.center.values + pad
        return None


def event_membership(event: Event, w) -> bool:
    return bool(event.contains_values(PairMeasure.coerce(w).values))
