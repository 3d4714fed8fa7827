"""Query engines, certified repair and the levelled dynamic wrapper."""
from .dynamic import DynamicIndex, OpResult, ReplayReport, dyn_delete, dyn_insert, dyn_query, replay_random
from .engines import (ENGINE_FAMILIES, BatchMetrics, IntegrityError, LookupMetrics, RoutedIndex,
                      build_binary, build_engine, build_epsilon_pla, build_radix_spline, build_shadow,
                      lookup, plan_shadow, repair_bound, repair_search)
from .pieces import Pieces, control_arrays, segment_cover

__all__ = [
    "BatchMetrics", "DynamicIndex", "ENGINE_FAMILIES", "IntegrityError", "LookupMetrics", "OpResult",
    "ReplayReport", "replay_random",
    "Pieces", "RoutedIndex", "build_binary", "build_engine", "build_epsilon_pla", "build_radix_spline",
    "build_shadow", "control_arrays", "dyn_delete", "dyn_insert", "dyn_query", "lookup", "plan_shadow",
    "repair_bound", "repair_search", "segment_cover",
]
