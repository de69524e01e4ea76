"""Micro-benchmark: the same intent workload with and without the
enforcement stages.

Three modes:

``compile``
    tag + compile against plain compile.
``submit``
    the full pipeline (tag, compile, monitor, sealed NIB execution) against
    compile followed by unauthenticated NIB execution.
``submit_withdraw``
    ``submit`` followed by withdrawing the same intent.

Both arms run on their own instance of a generated grid topology, are
interleaved run by run, and are timed with the wall clock.
"""

from __future__ import annotations

import csv
import gc
import logging
import statistics
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable

from naca.controller.compiler import compile_intent
from naca.controller.intents import Intent, IntentKind
from naca.controller.mock import MockController
from naca.nib import Nib, grid_topology, load_topology
from naca.pipeline import Pipeline
from naca.policy.model import (
    AccessModel,
    AccessModelVariant,
    Action,
    AttributeConstraint,
    DeploymentManifest,
    ManifestEntry,
    ResourceAccessRule,
)
from naca.tagger import AppRequest, ForwardedRequest

logger = logging.getLogger(__name__)

APP = "bench"
# Overhead falls as compile cost (graph size) grows relative to path length;
# see the README for measurements at smaller sizes.
DEFAULT_GRID = 128


class BenchMode(Enum):
    COMPILE = "compile"
    SUBMIT = "submit"
    SUBMIT_WITHDRAW = "submit_withdraw"

    @classmethod
    def parse(cls, raw: str) -> "BenchMode":
        return cls(raw.replace("-", "_"))


@dataclass(frozen=True)
class Stats:
    n: int
    min: float
    max: float
    mean: float
    median: float
    stddev: float

    @classmethod
    def of(cls, samples: list[float]) -> "Stats":
        return cls(
            len(samples), min(samples), max(samples), statistics.fmean(samples),
            statistics.median(samples), statistics.stdev(samples) if len(samples) > 1 else 0.0,
        )


@dataclass
class BenchResult:
    mode: BenchMode
    grid: int
    naca: list[float]
    baseline: list[float]

    @property
    def naca_stats(self) -> Stats:
        return Stats.of(self.naca)

    @property
    def baseline_stats(self) -> Stats:
        return Stats.of(self.baseline)

    @property
    def overhead(self) -> float:
        """Mean overhead of the enforced arm, as a fraction of the baseline mean."""
        return self.naca_stats.mean / self.baseline_stats.mean - 1.0

    def lines(self) -> list[str]:
        out = [f"mode {self.mode.value} on a {self.grid}x{self.grid} grid, {len(self.naca)} runs (ms)"]
        for label, s in (("naca", self.naca_stats), ("baseline", self.baseline_stats)):
            out.append(
                f"  {label:<8} min {s.min:8.3f} max {s.max:8.3f} mean {s.mean:8.3f} "
                f"median {s.median:8.3f} stddev {s.stddev:8.3f}"
            )
        out.append(f"  mean overhead {self.overhead * 100:.2f}%")
        return out


def _bench_manifest() -> DeploymentManifest:
    return DeploymentManifest(APP, (ManifestEntry("flow", frozenset({Action.CONFIG_MOD})),))


def _bench_rules() -> list[ResourceAccessRule]:
    # A real constraint, so the monitor resolves attributes for every query.
    return [ResourceAccessRule("flow", (AttributeConstraint.one_of("jurisdiction", ["region-A", "region-B"]),), "bench-flow")]


def _intent(i: int) -> Intent:
    return Intent.make(
        IntentKind.CONNECTIVITY, src_host="hsrc", dst_host="hdst", protocol="udp",
        src_port=10000 + i, dst_port=20000 + i,
    )


class _Enforced:
    def __init__(self, topology: dict[str, Any], seed: int) -> None:
        self.p = Pipeline(load_topology(topology), seed=seed, mitigation="log")
        self.p.enroll(APP, _bench_manifest(), AccessModel(AccessModelVariant.DIRECT_EXPLICIT), _bench_rules())
        self.view = self.p.nib.read_view()

    def compile(self, i: int) -> None:
        req = AppRequest(APP, self.p.credential(APP), _intent(i))
        _, fwd = self.p.tagger.tag_request(req)
        compile_intent(fwd.intent, APP, fwd.request_id, fwd.mask, self.view)

    def submit(self, i: int) -> str:
        rid = self.p.request(APP, _intent(i))
        if rid is None or self.p.verdict_for(rid) is None or not self.p.verdict_for(rid).value == "accept":
            raise RuntimeError(f"bench request {i} was not accepted")
        return rid

    def submit_withdraw(self, i: int) -> None:
        rid = self.submit(i)
        wid = self.p.request(APP, Intent.make(IntentKind.WITHDRAW, request_id=rid))
        if wid is None or self.p.verdict_for(wid).value != "accept":
            raise RuntimeError(f"bench withdrawal {i} was not accepted")


class _Baseline:
    """The same controller and NIB with the enforcement stages removed."""

    def __init__(self, topology: dict[str, Any]) -> None:
        self.nib = Nib(load_topology(topology))
        self.controller = MockController(self.nib.read_view, topology_version=lambda: self.nib.topology_version)
        self.view = self.nib.read_view()
        self._n = 0

    def compile(self, i: int) -> None:
        self._n += 1
        compile_intent(_intent(i), APP, f"{APP}/{self._n}", None, self.view)

    def _run(self, intent: Intent) -> str:
        self._n += 1
        rid = f"{APP}/{self._n}"
        self.controller.submit(ForwardedRequest(APP, rid, intent, intent.resources, None))
        self.controller.process()
        while self.controller.outbox:
            _, request_id, batch = self.controller.outbox.popleft()
            results = [self.nib.execute_plain(q) for q in batch]
            self.controller.on_verdict(request_id, True)
            self.controller.on_result(request_id, results)
        return rid

    def submit(self, i: int) -> str:
        return self._run(_intent(i))

    def submit_withdraw(self, i: int) -> None:
        rid = self.submit(i)
        self._run(Intent.make(IntentKind.WITHDRAW, request_id=rid))


def _time(fn: Callable[[int], Any], i: int) -> float:
    start = time.perf_counter()
    fn(i)
    return (time.perf_counter() - start) * 1000.0


def bench(mode: BenchMode | str, n: int = 40, grid: int = DEFAULT_GRID, seed: int = 0, warmup: int = 3) -> BenchResult:
    mode = BenchMode.parse(mode) if isinstance(mode, str) else mode
    topology = grid_topology(grid, grid)
    enforced, baseline = _Enforced(topology, seed), _Baseline(topology)
    fn_e = getattr(enforced, mode.value)
    fn_b = getattr(baseline, mode.value)
    for i in range(warmup):
        fn_e(i)
        fn_b(i)
    naca: list[float] = []
    base: list[float] = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for i in range(warmup, warmup + n):
            # Alternate which arm goes first to cancel drift.
            if i % 2:
                naca.append(_time(fn_e, i))
                base.append(_time(fn_b, i))
            else:
                base.append(_time(fn_b, i))
                naca.append(_time(fn_e, i))
            gc.collect()
    finally:
        if gc_was_enabled:
            gc.enable()
    return BenchResult(mode, grid, naca, base)


CSV_FIELDS = ["mode", "grid", "arm", "n", "min_ms", "max_ms", "mean_ms", "median_ms", "stddev_ms", "mean_overhead_pct"]


def write_csv(results: list[BenchResult], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in results:
            for arm, s in (("naca", r.naca_stats), ("baseline", r.baseline_stats)):
                writer.writerow([
                    r.mode.value, r.grid, arm, s.n, f"{s.min:.4f}", f"{s.max:.4f}", f"{s.mean:.4f}",
                    f"{s.median:.4f}", f"{s.stddev:.4f}", f"{r.overhead * 100:.2f}" if arm == "naca" else "",
                ])
    return path
