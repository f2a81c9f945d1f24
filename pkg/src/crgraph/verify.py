"""Release checks: acceptance criteria and the invariant suite.

Each check is a zero-argument function returning a ``CheckResult``.  The
``verify`` command runs them all and prints one line per check followed by a
traceability table mapping every documented invariant to the check that
exercises it.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import legendre as lg
from . import measures as ms
from . import montecarlo as mc
from . import oracle as orc
from . import process as pr

NEAR_CRITICAL = pr.ConnectionSchedule.near_critical()


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    budget: float | None = None

    @property
    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        budget = f" (budget {self.budget:g}s)" if self.budget else ""
        return f"[{status}] {self.name}: {self.detail} [{self.seconds:.2f}s{budget}]"


def _timed(name: str, budget: float | None = None):
    def wrap(fn: Callable[[], tuple[bool, str]]) -> Callable[[], CheckResult]:
        def run() -> CheckResult:
            t0 = time.perf_counter()
            ok, detail = fn()
            dt = time.perf_counter() - t0
            if budget is not None and dt > budget:
                ok, detail = False, detail + f"; exceeded runtime budget {budget:g}s"
            return CheckResult(name, bool(ok), detail, dt, budget)

        run.__name__ = fn.__name__
        run.check_name = name
        return run

    return wrap


# ---------------------------------------------------------------------------
# random instances


def random_instance(rng: np.random.Generator, k: int, *, null_cells: bool = False):
    """Random (lam, mu, pi) with pi absolutely continuous w.r.t. lam mu x mu."""
    A = rng.uniform(0.2, 3.0, size=(k, k))
    lam = ms.Kernel(0.5 * (A + A.T))
    mu = ms.TypeLaw(rng.dirichlet(np.ones(k)))
    m = ms.product_measure(lam, mu).values
    B = rng.normal(0.0, 1.0, size=(k, k))
    pi = m * np.exp(0.5 * (B + B.T))
    if null_cells and k > 1:
        a, b = rng.choice(k, size=2, replace=False)
        pi[a, b] = pi[b, a] = 0.0
    return lam, mu, ms.PairMeasure(pi)


def random_symmetric(rng: np.random.Generator, k: int, scale: float = 1.0) -> np.ndarray:
    B = rng.normal(0.0, scale, size=(k, k))
    return 0.5 * (B + B.T)


# ---------------------------------------------------------------------------
# acceptance criteria


@_timed("C1 duality (legendre_sup vs closed form)", budget=10)
def criterion_1():
    rng = np.random.default_rng(101)
    worst_val = worst_arg = 0.0
    for i in range(100):
        k = (2, 3, 4)[i % 3]
        lam, mu, pi = random_instance(rng, k, null_cells=(i % 5 == 0))
        rep = lg.legendre_sup(pi, lam, mu, tol=1e-10, warm_start=(i % 2 == 0))
        if not rep.converged or rep.diverging:
            return False, f"instance {i} did not converge"
        closed = ms.kullback_action(pi, lam, mu)
        worst_val = max(worst_val, abs(rep.value - closed))
        supp = pi.values > 0
        m = ms.product_measure(lam, mu).values
        worst_arg = max(worst_arg, float(np.max(np.abs(rep.maximizer.values[supp] - np.log(pi.values[supp] / m[supp])))))
    ok = worst_val <= 1e-8 and worst_arg <= 1e-6
    return ok, f"max |sup - H| = {worst_val:.2e} (tol 1e-8), max maximizer deviation = {worst_arg:.2e} (tol 1e-6)"


@_timed("C2 zero at typical measure, positive elsewhere", budget=1)
def criterion_2():
    rng = np.random.default_rng(102)
    worst_zero = 0.0
    min_pos = math.inf
    for i in range(200):
        k = int(rng.integers(1, 5))
        lam, mu, pi = random_instance(rng, k)
        m = ms.product_measure(lam, mu)
        worst_zero = max(worst_zero, abs(ms.kullback_action(m, lam, mu)))
        if np.array_equal(pi.values, m.values):
            continue
        min_pos = min(min_pos, ms.kullback_action(pi, lam, mu))
    ok = worst_zero <= 1e-12 and min_pos > 0
    return ok, f"max |H(m)| = {worst_zero:.1e} (tol 1e-12), min H(pi != m) = {min_pos:.3e} (> 0)"


def _random_events(rng: np.random.Generator, lam, mu) -> list[pr.Event]:
    m = ms.product_measure(lam, mu)
    g = ms.TestFunction(random_symmetric(rng, 2))
    center = m * float(rng.uniform(0.3, 2.5))
    return [
        pr.Event.ball(center, float(rng.uniform(0.1, 1.5))),
        pr.Event.half_space(g, float(rng.normal(0.0, 0.5))),
        pr.Event.ball(m, 1e9),
    ]


def _close_log(a: float, b: float, tol: float) -> bool:
    if a == -math.inf or b == -math.inf:
        return a == b
    return abs(a - b) <= tol


@_timed("C3 oracle closure (naive enumeration, n <= 6, k = 2)", budget=120)
def criterion_3():
    rng = np.random.default_rng(103)
    compared = 0
    worst = 0.0
    for inst in range(20):
        lam = ms.Kernel(random_symmetric(rng, 2, 1.0) ** 2 + 0.1)
        mu = ms.TypeLaw(rng.dirichlet([2.0, 2.0]))
        for n in range(1, 7):
            table = orc.naive_enumerate(n, 2, lam, mu, NEAR_CRITICAL)
            for (cnt, config), c in table.counts.items():
                if c != orc.count_graphs(cnt, config):
                    return False, f"count mismatch at n={n}, counts={cnt}, config={config}"
                lp = orc.config_log_probability(cnt, config, lam, NEAR_CRITICAL, conditional=True)
                ref = table.cond_prob[(cnt, config)]
                if not _close_log(lp, math.log(ref) if ref > 0 else -math.inf, 1e-10):
                    return False, f"config probability mismatch at n={n}, {cnt}, {config}"
            counts = tuple(int(c) for c in pr.counts_from_law(n, mu))
            for event in _random_events(rng, lam, mu):
                for conditional in (False, True):
                    naive = orc.naive_event_probability(table, event, NEAR_CRITICAL, conditional, counts)
                    exact = orc.event_log_probability(n, event, lam, mu, NEAR_CRITICAL, conditional, counts=counts)
                    naive_log = math.log(naive) if naive > 0 else -math.inf
                    if not _close_log(naive_log, exact, 1e-10):
                        return False, f"event probability mismatch at n={n}: {naive_log} vs {exact}"
                    if exact > -math.inf:
                        worst = max(worst, abs(naive_log - exact))
                    compared += 1
    return True, f"{compared} event probabilities and all config counts agree; max |dlog P| = {worst:.1e} (tol 1e-10)"


LLDP_N = (100, 200, 400, 800)


def lldp_setup():
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    m = ms.product_measure(lam, mu)
    event = pr.Event.ball(1.5 * m, 0.02)
    return lam, mu, event


@_timed("C4 LLDP rate on a ball around 1.5 m", budget=60)
def criterion_4():
    lam, mu, event = lldp_setup()
    seq = orc.rate_sequence(lambda n: event, LLDP_N, lam, mu, NEAR_CRITICAL, conditional=True)
    grid = orc.rate_infimum_grid(event, lam, mu, points=161)
    rel = abs(seq.extrapolated - grid) / grid
    rates = ", ".join(f"{n}:{r:.5f}" for n, r in seq.points)
    return rel <= 0.10, (f"rates {rates}; extrapolated {seq.extrapolated:.5f} vs grid infimum {grid:.5f} "
                         f"(rel err {rel:.3f}, tol 0.10); point value H(1.5m) = "
                         f"{ms.kullback_action(event.center, lam, mu):.6f}")


def rare_event_setup():
    lam = ms.Kernel([[1.0, 0.5], [0.5, 2.0]])
    mu = ms.TypeLaw([0.6, 0.4])
    m = ms.product_measure(lam, mu)
    pi = ms.PairMeasure(np.array([[1.8, 1.5], [1.5, 1.6]]) * m.values)
    g = lg.optimal_tilt(pi, m)
    return lam, mu, pi, g, pr.Event.neighbourhood(g, pi, 0.05)


@_timed("C5 change of measure on a rare event (n = 200)", budget=60)
def criterion_5():
    lam, mu, pi, g, event = rare_event_setup()
    n, samples = 200, 100_000
    exact = orc.event_enumeration(n, event, lam, mu, NEAR_CRITICAL, conditional=True, tail_cutoff=80.0)
    p_true = math.exp(exact.log_value)
    est = mc.is_event_probability(n, event, mu, lam, NEAR_CRITICAL, g, samples, seed=5)
    naive = mc.mc_event_probability(n, event, mu, lam, NEAR_CRITICAL, samples, seed=5)
    whole = mc.is_event_probability(n, pr.Event.entire(), mu, lam, NEAR_CRITICAL, g, samples, seed=6)
    in_range = 1e-8 <= p_true <= 1e-6
    z = abs(est.value - p_true) / est.std_error
    zw = abs(whole.value - 1.0) / whole.std_error
    ok = in_range and z <= 3 and est.relative_error < 0.10 and naive.value == 0.0 and zw <= 3
    return ok, (f"oracle P = {p_true:.4e} (neglected <= {exact.neglected_bound:.1e}); IS = {est.value:.4e} "
                f"+- {est.std_error:.1e} (|z| = {z:.2f}, rel SE = {est.relative_error:.3f}); naive = {naive.value}; "
                f"mean weight = {whole.value:.4f} +- {whole.std_error:.4f} (|z| = {zw:.2f})")


@_timed("C6 truncation scheme", budget=5)
def criterion_6():
    rng = np.random.default_rng(106)
    worst_neg = 0.0
    worst_tail = 0.0
    for i in range(50):
        lam, mu, pi = random_instance(rng, (2, 3, 4)[i % 3])
        m = ms.product_measure(lam, mu).values
        tmax = float(np.max(np.abs(np.log(pi.values / m))))
        for t in (0.01, 0.1, 0.5, 1.0, 2.0, 0.5 * tmax + 0.01):
            worst_neg = min(worst_neg, lg.truncation_gap(pi, lam, mu, t))
        for t in (tmax + 1.0, tmax + 2.0, tmax + 10.0):
            gap = lg.truncation_gap(pi, lam, mu, t)
            worst_neg = min(worst_neg, gap)
            worst_tail = max(worst_tail, gap)
    ok = worst_neg >= 0 and worst_tail <= 1e-6
    return ok, f"min gap = {worst_neg:.2e} (>= 0), max gap for t >= max|g*| + 1 = {worst_tail:.2e} (tol 1e-6)"


MCMILLAN_N = (50, 100, 200, 400)


def mcmillan_rows(radius: float = 0.05):
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    event = pr.Event.ball(ms.product_measure(lam, mu), radius)
    return [orc.mcmillan_count_report(n, event, lam, mu, NEAR_CRITICAL) for n in MCMILLAN_N]


@_timed("C7 McMillan counting diagnostic", budget=60)
def criterion_7():
    rng = np.random.default_rng(107)
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    m = ms.product_measure(lam, mu)
    for n in range(1, 7):
        table = orc.naive_enumerate(n, 2, lam, mu, NEAR_CRITICAL)
        events = [pr.Event.entire(), pr.Event.ball(m, float(rng.uniform(0.2, 1.0))),
                  pr.Event.ball(m * float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.2, 1.0)))]
        for event in events:
            naive = orc.naive_card(table, event, NEAR_CRITICAL)
            exact = orc.exact_card(n, event, NEAR_CRITICAL, 2) if event.kind != "entire" else 2 ** n * 2 ** math.comb(n, 2)
            row = orc.mcmillan_count_report(n, event, lam, mu, NEAR_CRITICAL)
            if naive != exact or (naive and abs(row.log_card - math.log(naive)) > 1e-9):
                return False, f"log Card mismatch at n={n}: naive {naive}, lattice {exact}, log {row.log_card}"
    rows = mcmillan_rows()
    if not all(math.isfinite(r.log_card) for r in rows):
        return False, "non-finite log Card in report"
    n = np.array([r.n for r in rows], dtype=float)
    gap = np.array([r.gap for r in rows])
    slope = np.linalg.lstsq(np.stack([n * np.log(n), n], 1), gap, rcond=None)[0]
    report = "; ".join(f"n={r.n}: logCard={r.log_card:.1f}, n*h={r.entropy_term:.1f}, gap={r.gap:.1f}" for r in rows)
    return True, (f"n <= 6 matches naive enumeration; {report}; gap ~ {slope[0]:.3f} n log n + {slope[1]:.3f} n "
                  "(equality with n times the entropy is not asserted)")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7]


# ---------------------------------------------------------------------------
# invariant suite


@_timed("core: H >= 0, zero only at m")
def inv_kullback_nonneg():
    rng = np.random.default_rng(201)
    for _ in range(200):
        lam, mu, pi = random_instance(rng, int(rng.integers(1, 5)))
        h = ms.kullback_action(pi, lam, mu)
        if h < 0 or (h == 0 and not np.array_equal(pi.values, ms.product_measure(lam, mu).values)):
            return False, f"H = {h}"
    return True, "200 random instances"


@_timed("core: H convex in pi")
def inv_kullback_convex():
    rng = np.random.default_rng(202)
    worst = -math.inf
    for _ in range(200):
        k = int(rng.integers(1, 5))
        lam, mu, p1 = random_instance(rng, k)
        p2 = ms.PairMeasure(p1.values * np.exp(random_symmetric(rng, k)))
        mid = ms.kullback_action(0.5 * (p1 + p2), lam, mu)
        avg = 0.5 * ms.kullback_action(p1, lam, mu) + 0.5 * ms.kullback_action(p2, lam, mu)
        worst = max(worst, mid - avg)
    return worst <= 1e-10, f"max H(mid) - avg = {worst:.2e}"


@_timed("core: spectral potential monotone and convex")
def inv_potential():
    rng = np.random.default_rng(203)
    for _ in range(200):
        k = int(rng.integers(1, 5))
        lam, mu, _ = random_instance(rng, k)
        g1 = random_symmetric(rng, k)
        g2 = g1 + np.abs(random_symmetric(rng, k))
        r1, r2 = ms.spectral_potential(g1, lam, mu), ms.spectral_potential(g2, lam, mu)
        if r1 > r2 + 1e-12:
            return False, "monotonicity violated"
        mid = ms.spectral_potential(0.5 * (g1 + g2), lam, mu)
        if mid > 0.5 * (r1 + r2) + 1e-12:
            return False, "convexity violated"
    return True, "200 random pairs g1 <= g2"


@_timed("core: McMillan entropy at m equals half mass times Shannon entropy")
def inv_mcmillan_identity():
    rng = np.random.default_rng(204)
    worst = 0.0
    for _ in range(100):
        lam, mu, _ = random_instance(rng, int(rng.integers(1, 5)))
        m = ms.product_measure(lam, mu)
        mass = m.total_mass
        lhs = ms.mcmillan_entropy(m, lam, mu)
        rhs = 0.5 * mass * ms.shannon_entropy(m.values / mass)
        worst = max(worst, abs(lhs - rhs))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


@_timed("core: sublevel sets bounded in mass")
def inv_sublevel_bound():
    # every pi lies in the sublevel set of its own action, so c = H(pi) is the sharpest test
    rng = np.random.default_rng(205)
    worst = -math.inf
    for _ in range(500):
        lam, mu, shape = random_instance(rng, int(rng.integers(1, 5)))
        pi = shape * float(np.exp(rng.uniform(-4.0, 4.0)))
        c = ms.kullback_action(pi, lam, mu)
        mass, mm = pi.total_mass, ms.product_measure(lam, mu).total_mass
        worst = max(worst, mass * math.log(mass / (math.e * mm)) - (2 * c + mm))
    return worst <= 1e-9, f"max ||pi|| log(||pi||/e||m||) - (2c + ||m||) = {worst:.3f} (<= 0)"


@_timed("legendre: weak duality for random g")
def inv_weak_duality():
    rng = np.random.default_rng(206)
    worst = -math.inf
    lam, mu, pi = random_instance(rng, 3)
    h = ms.kullback_action(pi, lam, mu)
    for _ in range(1000):
        g = random_symmetric(rng, 3, float(rng.uniform(0.1, 5.0)))
        worst = max(worst, lg.dual_value(g, pi, lam, mu) - h)
    return worst <= 1e-12, f"max dual - H = {worst:.2e} over 1000 g"


@_timed("legendre: gradient matches finite differences")
def inv_gradient():
    rng = np.random.default_rng(207)
    worst = 0.0
    h = 1e-5
    for _ in range(50):
        lam, mu, pi = random_instance(rng, 3)
        m = ms.product_measure(lam, mu).values
        g = random_symmetric(rng, 3)
        for a in range(3):
            for b in range(3):
                analytic = 0.5 * pi.values[a, b] - 0.5 * math.exp(g[a, b]) * m[a, b]
                fp = lg._cell_objective(g[a, b] + h, pi.values[a, b], m[a, b])
                fm = lg._cell_objective(g[a, b] - h, pi.values[a, b], m[a, b])
                worst = max(worst, abs((fp - fm) / (2 * h) - analytic))
    return worst <= 1e-6, f"max |fd - analytic| = {worst:.1e}"


@_timed("process: mass identity and symmetry of L2")
def inv_mass_identity():
    rng = np.random.default_rng(208)
    for i in range(200):
        k = int(rng.integers(1, 4))
        lam, mu, _ = random_instance(rng, k)
        n = int(rng.integers(1, 60))
        sched = pr.ConnectionSchedule.scaled(float(rng.uniform(0.5, 20)))
        graph = pr.sample_graph(n, mu, lam, sched, rng)
        L2 = pr.empirical_pair_measure(graph, sched)
        if round(sched.normalizer(n) * L2.total_mass) != 2 * graph.num_edges:
            return False, f"mass identity fails on graph {i}"
        if not np.array_equal(L2.values, L2.values.T):
            return False, "asymmetric L2"
    return True, "200 random graphs"


@_timed("process: law of large numbers under the tilted law (n = 2000)", budget=120)
def inv_lln():
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    m = ms.product_measure(lam, mu)
    pi = 1.5 * m
    g = lg.optimal_tilt(pi, m)
    n, reps = 2000, 10_000
    probs = pr.tilted_connection_probs(g, lam, NEAR_CRITICAL, n)
    rng = np.random.default_rng(12345)
    vals = np.empty((reps, 2, 2))
    for i in range(reps):
        graph = pr.sample_graph_conditional([1000, 1000], lam, NEAR_CRITICAL, rng, probs=probs)
        vals[i] = pr.empirical_pair_measure(graph, NEAR_CRITICAL).values
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(reps)
    z = (mean - pi.values) / se
    return bool(np.all(np.abs(z) <= 3)), f"z-scores vs pi: {np.round(z, 2).tolist()}"


@_timed("process: importance weights are unbiased")
def inv_unbiased_weights():
    lam = ms.Kernel([[1.0, 2.0], [2.0, 0.5]])
    mu = ms.TypeLaw([0.5, 0.5])
    g = ms.TestFunction([[0.7, -0.4], [-0.4, 1.1]])
    n = 12
    whole = mc.is_event_probability(n, pr.Event.entire(), mu, lam, NEAR_CRITICAL, g, 100_000, seed=19,
                                    conditional=False)
    m = ms.product_measure(lam, mu)
    event = pr.Event.ball(m * 1.4, 0.5)
    est = mc.is_event_probability(n, event, mu, lam, NEAR_CRITICAL, g, 100_000, seed=20, conditional=False)
    exact = math.exp(orc.event_log_probability(n, event, lam, mu, NEAR_CRITICAL, conditional=False))
    z1 = abs(whole.value - 1) / whole.std_error
    z2 = abs(est.value - exact) / est.std_error
    return z1 <= 3 and z2 <= 3, f"mean weight {whole.value:.4f} (|z| {z1:.2f}); event {est.value:.4e} vs {exact:.4e} (|z| {z2:.2f})"


@_timed("process: conditional sampler has exact type counts")
def inv_conditional_counts():
    rng = np.random.default_rng(210)
    for _ in range(200):
        counts = rng.integers(0, 30, size=3)
        counts[0] += 1
        lam, _, _ = random_instance(rng, 3)
        graph = pr.sample_graph_conditional(counts, lam, NEAR_CRITICAL, rng)
        if not np.array_equal(graph.type_counts(), counts):
            return False, "type counts differ"
    return True, "200 draws"


@_timed("oracle: single-configuration exponent equals H (Stirling-corrected)")
def inv_exact_lldp():
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    pi = 1.5 * ms.product_measure(lam, mu)
    ns = [100, 200, 400, 800, 1600]
    excess = []
    for n in ns:
        counts = pr.counts_from_law(n, mu)
        config = orc.pair_measure_to_config(counts, pi, NEAR_CRITICAL)
        realized = orc.config_to_pair_measure(counts, config, NEAR_CRITICAL)
        rate = -orc.config_log_probability(counts, config, lam, NEAR_CRITICAL) / n
        excess.append(rate - ms.kullback_action(realized, lam, ms.TypeLaw.from_counts(counts)))
    n = np.array(ns, dtype=float)
    A = np.stack([np.ones_like(n), np.log(n) / n, 1 / n], axis=1)
    coef = np.linalg.lstsq(A, np.array(excess), rcond=None)[0]
    h = ms.kullback_action(pi, lam, mu)
    residual = abs(excess[3] - coef[1] * math.log(800) / 800 - coef[2] / 800) / h
    return residual <= 0.01, f"residual at n=800 after removing fitted log n/n, 1/n terms = {100 * residual:.3f}% of H (log-term coefficient {coef[1]:.3f})"


@_timed("oracle: event probability monotone in the event")
def inv_event_monotone():
    lam = ms.Kernel([[1.0, 0.5], [0.5, 2.0]])
    mu = ms.TypeLaw([0.6, 0.4])
    m = ms.product_measure(lam, mu)
    prev = -math.inf
    for radius in (0.0, 0.05, 0.1, 0.2, 0.4, 0.8, 2.0):
        lp = orc.event_log_probability(30, pr.Event.ball(m * 1.2, radius), lam, mu, NEAR_CRITICAL)
        if lp < prev - 1e-12:
            return False, f"log P decreased at radius {radius}"
        prev = lp
    g = ms.TestFunction([[1.0, 0.3], [0.3, 0.5]])
    prev = 0.0
    for level in (-1.0, 0.0, 0.3, 0.6, 1.0, 2.0):
        lp = orc.event_log_probability(30, pr.Event.half_space(g, level), lam, mu, NEAR_CRITICAL, tail_cutoff=60.0)
        if lp > prev + 1e-12:
            return False, f"log P increased at level {level}"
        prev = lp
    return True, "nested balls and half-spaces at n = 30"


@_timed("oracle: half-space rates approach the infimum of H", budget=120)
def inv_halfspace_rate():
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    m = ms.product_measure(lam, mu)
    pi = 1.3 * m
    g = lg.optimal_tilt(pi, m)
    event = pr.Event.neighbourhood(g, pi, 0.02)
    seq = orc.rate_sequence(lambda n: event, LLDP_N, lam, mu, NEAR_CRITICAL, tail_cutoff=60.0)
    ref = orc.rate_infimum(event, lam, mu)
    rel = abs(seq.extrapolated - ref) / ref
    return rel <= 0.10, f"extrapolated {seq.extrapolated:.5f} vs infimum {ref:.5f} (rel {rel:.3f}, tol 0.10)"


@_timed("montecarlo: determinism per (seed, workers)")
def inv_mc_determinism():
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    event = pr.Event.ball(ms.product_measure(lam, mu), 0.1)
    a = mc.mc_event_probability(60, event, mu, lam, NEAR_CRITICAL, 20_000, seed=3, workers=2)
    b = mc.mc_event_probability(60, event, mu, lam, NEAR_CRITICAL, 20_000, seed=3, workers=2)
    c = mc.mc_event_probability(60, event, mu, lam, NEAR_CRITICAL, 20_000, seed=3, workers=4)
    z = abs(a.value - c.value) / math.hypot(a.std_error, c.std_error)
    return a == b and z <= 3, f"repeat identical: {a == b}; workers 2 vs 4 differ by {z:.2f} combined SE"


@_timed("montecarlo: tilting reduces variance on rare half-space events")
def inv_variance_reduction():
    lam = ms.Kernel(np.ones((2, 2)))
    mu = ms.TypeLaw([0.5, 0.5])
    m = ms.product_measure(lam, mu)
    parts = []
    ok = True
    for scale in (1.5, 1.6):
        pi = scale * m
        g = lg.optimal_tilt(pi, m)
        event = pr.Event.neighbourhood(g, pi, 0.05)
        exact = math.exp(orc.event_log_probability(200, event, lam, mu, NEAR_CRITICAL, tail_cutoff=80.0))
        est = mc.is_event_probability(200, event, mu, lam, NEAR_CRITICAL, g, 50_000, seed=8)
        # per-sample variance: Bernoulli for naive, empirical for the weighted estimator
        factor = exact * (1 - exact) / (est.std_error ** 2 * est.samples)
        ok &= exact <= 1e-4 and factor >= 10
        parts.append(f"pi = {scale} m: P = {exact:.3e}, variance ratio naive/IS = {factor:.3g}")
    return ok, "; ".join(parts) + " (>= 10)"


@_timed("montecarlo: naive and tilted estimators agree")
def inv_naive_vs_is():
    lam = ms.Kernel([[1.0, 0.5], [0.5, 2.0]])
    mu = ms.TypeLaw([0.6, 0.4])
    m = ms.product_measure(lam, mu)
    compared = 0
    for scale, eps, n in ((1.2, 0.1, 50), (1.1, 0.05, 100), (1.3, 0.2, 40)):
        pi = scale * m
        g = lg.optimal_tilt(pi, m)
        event = pr.Event.neighbourhood(g, pi, eps)
        a = mc.mc_event_probability(n, event, mu, lam, NEAR_CRITICAL, 50_000, seed=11)
        b = mc.is_event_probability(n, event, mu, lam, NEAR_CRITICAL, g, 50_000, seed=12)
        if min(a.effective_sample_size, b.effective_sample_size) < 100:
            continue
        compared += 1
        z = abs(a.value - b.value) / math.hypot(a.std_error, b.std_error)
        if z > 3:
            return False, f"disagreement of {z:.2f} combined SE"
    return compared > 0, f"{compared} events compared"


@_timed("cli: byte-identical output for fixed config")
def inv_cli_determinism():
    from .cli import run_to_string

    out1 = run_to_string(["rate-mc", "--config", "-"], stdin=_SMOKE_CONFIG)
    out2 = run_to_string(["rate-mc", "--config", "-"], stdin=_SMOKE_CONFIG)
    strip = lambda s: [ln.rsplit(",", 1)[0] for ln in s.splitlines()]  # noqa: E731
    return strip(out1) == strip(out2), "rate-mc smoke config run twice"


@_timed("cli: config validation")
def inv_cli_validation():
    from .config import ConfigError, parse_config

    bad = {
        "asymmetric lambda": _SMOKE_CONFIG.replace("    1.0 1.0\n    1.0 1.0", "    1.0 2.0\n    1.0 1.0"),
        "unnormalized mu": _SMOKE_CONFIG.replace("mu = 0.5 0.5", "mu = 0.5 0.6"),
        "negative radius": _SMOKE_CONFIG.replace("radius = 0.1", "radius = -0.1"),
    }
    for label, text in bad.items():
        try:
            parse_config(text)
        except ConfigError:
            continue
        return False, f"{label} accepted"
    return True, "asymmetric lambda, unnormalized mu and infeasible ball rejected"


_SMOKE_CONFIG = """\
[model]
mu = 0.5 0.5
lambda =
    1.0 1.0
    1.0 1.0
schedule = near_critical

[event]
kind = ball
center_scale = 1.0
radius = 0.1

[run]
n_list = 20 40
estimator = mc
samples = 2000
seed = 4
"""


INVARIANTS = [
    inv_kullback_nonneg, inv_kullback_convex, inv_potential, inv_mcmillan_identity, inv_sublevel_bound,
    inv_weak_duality, inv_gradient, inv_mass_identity, inv_lln, inv_unbiased_weights, inv_conditional_counts,
    inv_exact_lldp, inv_event_monotone, inv_halfspace_rate, inv_mc_determinism, inv_variance_reduction,
    inv_naive_vs_is, inv_cli_determinism, inv_cli_validation,
]

# documented invariant -> check(s) exercising it
TRACEABILITY = [
    ("core_measures", "H >= 0, zero iff pi = m", ["inv_kullback_nonneg", "criterion_2"]),
    ("core_measures", "H convex in pi", ["inv_kullback_convex"]),
    ("core_measures", "spectral potential monotone and convex", ["inv_potential"]),
    ("core_measures", "McMillan entropy identity at m", ["inv_mcmillan_identity"]),
    ("core_measures", "sublevel sets bounded in mass", ["inv_sublevel_bound"]),
    ("legendre", "duality within tol", ["criterion_1"]),
    ("legendre", "maximizer recovery", ["criterion_1"]),
    ("legendre", "weak duality for every g", ["inv_weak_duality"]),
    ("legendre", "truncation gap >= 0 and vanishing", ["criterion_6"]),
    ("legendre", "gradient check", ["inv_gradient"]),
    ("graph_process", "mass identity", ["inv_mass_identity"]),
    ("graph_process", "L2 symmetric", ["inv_mass_identity"]),
    ("graph_process", "law of large numbers under the tilted law", ["inv_lln"]),
    ("graph_process", "unbiased importance weights", ["inv_unbiased_weights", "criterion_5"]),
    ("graph_process", "conditional sampler exact counts", ["inv_conditional_counts"]),
    ("exact_oracle", "oracle closure", ["criterion_3"]),
    ("exact_oracle", "exact single-config exponent", ["inv_exact_lldp"]),
    ("exact_oracle", "monotone in the event", ["inv_event_monotone"]),
    ("exact_oracle", "half-space rates vs infimum", ["inv_halfspace_rate"]),
    ("montecarlo", "determinism per (seed, workers)", ["inv_mc_determinism"]),
    ("montecarlo", "variance reduction >= 10", ["inv_variance_reduction"]),
    ("montecarlo", "naive and IS agree", ["inv_naive_vs_is"]),
    ("cli", "deterministic output", ["inv_cli_determinism"]),
    ("cli", "config validation", ["inv_cli_validation"]),
]


def run_all(echo: Callable[[str], None] = print) -> list[CheckResult]:
    results = []
    for check in CRITERIA + INVARIANTS:
        res = check()
        echo(res.line)
        results.append(res)
    echo("")
    echo("traceability:")
    status = {check.__name__: res.passed for check, res in zip(CRITERIA + INVARIANTS, results)}
    for module, text, checks in TRACEABILITY:
        mark = "PASS" if all(status[c] for c in checks) else "FAIL"
        echo(f"  {mark}  {module:<14} {text:<45} <- {', '.join(checks)}")
    return results
