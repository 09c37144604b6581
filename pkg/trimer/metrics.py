from functools import wraps
from time import perf_counter
from typing import Any, Callable, TypeVar

from prometheus_client import Histogram

F = TypeVar("F", bound=Callable[..., Any])


def time(histogram: Histogram, **label_values: str) -> Callable[[F], F]:
    """Observe the duration of each call, labelled with an ok/error outcome."""

    def decorator(func: F) -> F:
        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            outcome = "ok"
            start = perf_counter()
            try:
                return func(*args, **kwargs)
            except Exception:
                outcome = "error"
                raise
            finally:
                histogram.labels(outcome=outcome, **label_values).observe(perf_counter() - start)

        return wrapper  # type: ignore[return-value]

    return decorator
