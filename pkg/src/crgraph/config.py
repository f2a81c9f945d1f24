"""Experiment configuration files.

INI syntax (``configparser``) with k x k tables written one row per line::

    [model]
    labels = a b
    mu = 0.5 0.5
    lambda =
        1.0 1.0
        1.0 1.0
    schedule = near_critical        ; or "scaled 2.0", "power 0.5"

    [event]
    kind = ball                     ; ball | half_space | entire
    center_scale = 1.5              ; or center = <table>
    radius = 0.02

    ; half_space: target/target_scale + epsilon, or g + level; optional tilt table

    [run]
    n_list = 100 200 400 800
    estimator = exact               ; any of exact mc is
    samples = 100000
    seed = 7

Every value is validated before anything runs; problems raise ``ConfigError``
with a message naming the section and key.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .legendre import optimal_tilt
from .measures import Kernel, MeasureError, PairMeasure, TestFunction, TypeAlphabet, TypeLaw, product_measure
from .process import ConnectionSchedule, Event

ESTIMATORS = ("exact", "mc", "is")
EVENT_KINDS = ("ball", "half_space", "entire")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class LegendreSpec:
    target: PairMeasure | None
    t_values: tuple[float, ...]
    etas: tuple[float, ...]


@dataclass(frozen=True)
class SampleSpec:
    n: int
    count: int
    conditional: bool


@dataclass(frozen=True)
class ExperimentConfig:
    alphabet: TypeAlphabet
    mu: TypeLaw
    lam: Kernel
    schedule: ConnectionSchedule
    n_list: tuple[int, ...] = ()
    conditional: bool = True
    estimators: tuple[str, ...] = ("exact",)
    samples: int = 10_000
    seed: int = 0
    workers: int = 1
    tail_cutoff: float | None = None
    budget: int = 50_000_000
    event: Event | None = None
    tilt: TestFunction | None = None
    legendre: LegendreSpec | None = None
    sample: SampleSpec | None = None
    extra: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.mu.k

    @property
    def m(self) -> PairMeasure:
        return product_measure(self.lam, self.mu)


def _floats(text: str, where: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{where}: expected numbers, got {text!r}") from exc


def _ints(text: str, where: str) -> list[int]:
    vals = []
    for x in text.replace(",", " ").split():
        try:
            vals.append(int(x))
        except ValueError as exc:
            raise ConfigError(f"{where}: expected integers, got {x!r}") from exc
    return vals


def _table(text: str, k: int, where: str) -> np.ndarray:
    rows = [_floats(line, where) for line in text.strip().splitlines() if line.strip()]
    if len(rows) != k or any(len(r) != k for r in rows):
        raise ConfigError(f"{where}: expected a {k}x{k} table written one row per line, got {rows}")
    return np.array(rows)


def _bool(section: configparser.SectionProxy, key: str, default: bool) -> bool:
    try:
        return section.getboolean(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: expected true/false") from exc


def _schedule(text: str) -> ConnectionSchedule:
    parts = text.split()
    if not parts:
        raise ConfigError("[model] schedule: empty value")
    kind, args = parts[0], parts[1:]
    try:
        if kind == "near_critical" and not args:
            return ConnectionSchedule.near_critical()
        if kind == "scaled" and len(args) == 1:
            return ConnectionSchedule.scaled(float(args[0]))
        if kind == "power" and len(args) in (1, 2):
            c = float(args[1]) if len(args) == 2 else 1.0
            return ConnectionSchedule(kind="power", c=c, alpha=float(args[0]))
    except ValueError as exc:
        raise ConfigError(f"[model] schedule: {exc}") from exc
    raise ConfigError(f"[model] schedule: expected 'near_critical', 'scaled C' or 'power ALPHA [C]', got {text!r}")


def _measure_from(section: configparser.SectionProxy, stem: str, m: PairMeasure, k: int) -> PairMeasure | None:
    """``<stem>`` as a table or ``<stem>_scale`` as a multiple of m."""
    where = f"[{section.name}] {stem}"
    if stem in section and f"{stem}_scale" in section:
        raise ConfigError(f"{where}: give either {stem} or {stem}_scale, not both")
    if stem in section:
        table = _table(section[stem], k, where)
        if np.any(table < 0):
            raise ConfigError(f"{where}: measures must be nonnegative")
        try:
            return PairMeasure(table)
        except MeasureError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    if f"{stem}_scale" in section:
        scale = _floats(section[f"{stem}_scale"], where + "_scale")
        if len(scale) != 1 or scale[0] < 0:
            raise ConfigError(f"{where}_scale: expected one nonnegative number")
        return m * scale[0]
    return None


def _event(section: configparser.SectionProxy, m: PairMeasure, k: int) -> tuple[Event, TestFunction | None]:
    kind = section.get("kind", "").strip()
    if kind not in EVENT_KINDS:
        raise ConfigError(f"[event] kind: expected one of {', '.join(EVENT_KINDS)}, got {kind!r}")
    if kind == "entire":
        return Event.entire(), None
    if kind == "ball":
        center = _measure_from(section, "center", m, k)
        if center is None:
            raise ConfigError("[event] ball events need center (table) or center_scale")
        radius = _floats(section.get("radius", ""), "[event] radius")
        if len(radius) != 1:
            raise ConfigError("[event] radius: expected one number")
        if radius[0] < 0:
            raise ConfigError(f"[event] radius: must be >= 0, got {radius[0]}")
        return Event.ball(center, radius[0]), None
    # half_space: either g + level, or a target with epsilon (g defaults to log(target / m))
    target = _measure_from(section, "target", m, k)
    g = TestFunction(_table(section["g"], k, "[event] g")) if "g" in section else None
    if target is not None:
        eps = _floats(section.get("epsilon", ""), "[event] epsilon")
        if len(eps) != 1 or not eps[0] > 0:
            raise ConfigError("[event] epsilon: half-space neighbourhoods need one epsilon > 0")
        if g is None:
            try:
                g = optimal_tilt(target, m)
            except MeasureError as exc:
                raise ConfigError(f"[event] target: {exc}; give g explicitly") from exc
        return Event.neighbourhood(g, target, eps[0]), g
    if g is None or "level" not in section:
        raise ConfigError("[event] half_space events need target + epsilon, or g + level")
    level = _floats(section["level"], "[event] level")
    if len(level) != 1:
        raise ConfigError("[event] level: expected one number")
    if level[0] >= 0 and not np.any(g.values > 0):
        raise ConfigError("[event] half-space is empty: g <= 0 everywhere and level >= 0 "
                          "(no nonnegative measure satisfies <g, pi> > level)")
    return Event.half_space(g, level[0]), None


def _check_event_feasible(event: Event) -> None:
    if event.kind == "ball" and np.any(event.center.values + event.radius < 0):
        raise ConfigError("[event] ball lies outside the nonnegative measures; move the center or widen the radius")
    if event.kind == "half_space" and event.level >= 0 and not np.any(event.g.values > 0):
        raise ConfigError("[event] half-space is empty: g <= 0 everywhere and level >= 0")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    if "model" not in parser:
        raise ConfigError("missing [model] section")
    model = parser["model"]
    if "mu" not in model or "lambda" not in model:
        raise ConfigError("[model] needs mu and lambda")
    mu_vals = _floats(model["mu"], "[model] mu")
    k = len(mu_vals)
    if k == 0:
        raise ConfigError("[model] mu: empty")
    if abs(math.fsum(mu_vals) - 1.0) > 1e-12:
        raise ConfigError(f"[model] mu: weights must sum to 1, got {math.fsum(mu_vals)!r}; "
                          "rescale the entries")
    labels = model.get("labels", " ".join(str(i) for i in range(k))).split()
    try:
        alphabet = TypeAlphabet(tuple(labels))
        mu = TypeLaw(mu_vals)
        lam_table = _table(model["lambda"], k, "[model] lambda")
        if np.max(np.abs(lam_table - lam_table.T)) > 1e-9:
            raise ConfigError("[model] lambda: kernel must be symmetric (lambda[a][b] == lambda[b][a]); "
                              f"got {lam_table.tolist()}")
        lam = Kernel(lam_table)
    except MeasureError as exc:
        raise ConfigError(f"[model] {exc}") from exc
    if alphabet.k != k:
        raise ConfigError(f"[model] labels: {alphabet.k} labels for {k} types")
    schedule = _schedule(model.get("schedule", "near_critical"))
    m = product_measure(lam, mu)

    kw: dict = {}
    if "run" in parser:
        run = parser["run"]
        if "n_list" in run:
            n_list = _ints(run["n_list"], "[run] n_list")
            if not n_list or min(n_list) < 1:
                raise ConfigError("[run] n_list: need positive integers")
            kw["n_list"] = tuple(n_list)
        kw["conditional"] = _bool(run, "conditional", True)
        if "estimator" in run:
            est = tuple(run["estimator"].replace(",", " ").split())
            bad = [e for e in est if e not in ESTIMATORS]
            if bad or not est:
                raise ConfigError(f"[run] estimator: expected some of {', '.join(ESTIMATORS)}, got {run['estimator']!r}")
            kw["estimators"] = est
        for key in ("samples", "seed", "workers", "budget"):
            if key in run:
                vals = _ints(run[key], f"[run] {key}")
                lowest = 0 if key == "seed" else 1
                if len(vals) != 1 or vals[0] < lowest:
                    raise ConfigError(f"[run] {key}: expected one integer >= {lowest}")
                kw[key] = vals[0]
        if "tail_cutoff" in run:
            cut = _floats(run["tail_cutoff"], "[run] tail_cutoff")
            if len(cut) != 1 or not cut[0] > 0:
                raise ConfigError("[run] tail_cutoff: expected one positive number of nats")
            kw["tail_cutoff"] = cut[0]
    if "event" in parser:
        try:
            event, tilt = _event(parser["event"], m, k)
        except MeasureError as exc:
            raise ConfigError(f"[event] {exc}") from exc
        _check_event_feasible(event)
        if "tilt" in parser["event"]:
            tilt = TestFunction(_table(parser["event"]["tilt"], k, "[event] tilt"))
        kw["event"], kw["tilt"] = event, tilt
    if "legendre" in parser:
        sec = parser["legendre"]
        target = _measure_from(sec, "target", m, k)
        t_values = tuple(_floats(sec.get("t_values", "0.5 1 2 4 8"), "[legendre] t_values"))
        if any(t <= 0 for t in t_values):
            raise ConfigError("[legendre] t_values: truncation levels must be positive")
        etas = tuple(_floats(sec.get("eta", "0.1 0.01 0.001"), "[legendre] eta"))
        if any(not 0 < e < 1 for e in etas):
            raise ConfigError("[legendre] eta: values must lie in (0, 1)")
        kw["legendre"] = LegendreSpec(target, t_values, etas)
    if "sample" in parser:
        sec = parser["sample"]
        n = _ints(sec.get("n", ""), "[sample] n")
        count = _ints(sec.get("count", "1"), "[sample] count")
        if len(n) != 1 or n[0] < 1 or len(count) != 1 or count[0] < 1:
            raise ConfigError("[sample] n and count must be positive integers")
        kw["sample"] = SampleSpec(n[0], count[0], _bool(sec, "conditional", False))
    return ExperimentConfig(alphabet, mu, lam, schedule, **kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
