import os
from pathlib import Path

import structlog
from prometheus_client import (
    CollectorRegistry,
    Counter,
    Gauge,
    Histogram,
    multiprocess,
    write_to_textfile,
)

from trimer import config

log = structlog.get_logger(__name__)


def registry() -> CollectorRegistry:
    reg = CollectorRegistry()
    if os.getenv("PROMETHEUS_MULTIPROC_DIR", None):
        multiprocess.MultiProcessCollector(reg)
    return reg


REGISTRY = registry()

Gauge(
    name="build_info",
    documentation="build information",
    multiprocess_mode="livemin",
    labelnames=["version"],
    registry=REGISTRY,
).labels(version=config.VERSION).set(1)

SOLVER_DURATION = Histogram(
    name="trimer_solver_duration_seconds",
    documentation="Wall time spent in numerical solvers",
    labelnames=["solver", "outcome"],
    buckets=(0.001, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 30.0, 120.0, 600.0),
    registry=REGISTRY,
)

SOLVER_FAILURES = Counter(
    name="trimer_solver_failures_total",
    documentation="Solver runs that ended without a converged result",
    labelnames=["solver", "reason"],
    registry=REGISTRY,
)


def write_metrics(path: Path) -> None:
    write_to_textfile(str(path), REGISTRY)
    log.info("wrote metrics", path=str(path))


def init():
    return


def shutdown():
    if os.getenv("PROMETHEUS_MULTIPROC_DIR", None):
        log.info("shutdown prometheus multiprocess_mode")
        multiprocess.mark_process_dead(os.getpid())  # type: ignore
