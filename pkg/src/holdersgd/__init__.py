"""SGD with Hölder-continuous gradients: schedules, objectives, runners and checkers."""
__version__ = "0.1.0"

from .core import (  # noqa: E402
    AggregateTrace,
    Checkpoint,
    Dataset,
    Objective,
    PLSpec,
    Sample,
    SmoothnessSpec,
    Trace,
    index_stream,
)
from .engine import RunConfig, aggregate, run, run_multi  # noqa: E402
from .schedules import const_schedule, log_schedule, pl_schedule, poly_schedule  # noqa: E402

__all__ = [
    "AggregateTrace", "Checkpoint", "Dataset", "Objective", "PLSpec", "Sample", "SmoothnessSpec",
    "Trace", "index_stream", "RunConfig", "aggregate", "run", "run_multi", "const_schedule",
    "log_schedule", "pl_schedule", "poly_schedule",
]
