"""Fastest-k distributed SGD under random stragglers: simulation, bounds and schedules."""

from .bounds import (
    BoundParams,
    SwitchSchedule,
    confidence_level,
    error_bound_iterations,
    error_bound_time,
    piecewise_bound_curve,
    switching_schedule,
)
from .cluster import (
    OrderStatSummary,
    ResponseTimeModel,
    kth_order_statistic,
    mean_order_statistic,
    order_stat_summary,
    sample_response_times,
    var_order_statistic,
)
from .datagen import Dataset, Shard, generate_synthetic, shard
from .engine import (
    AdaptiveMode,
    AsyncMode,
    FixedMode,
    PflugState,
    Problem,
    RunConfig,
    ScheduledMode,
    TraceRecord,
    pflug_update,
    run,
    run_async,
    step_fastest_k,
)
from .model import full_gradient, loss, partial_gradient, solve_optimum

__version__ = "0.1.0"
