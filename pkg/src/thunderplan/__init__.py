"""Experience-based motion planning: race recall against scratch.

The library plans paths by running two workers per query - a
plan-from-scratch RRT-Connect and a retrieve-and-repair recall from an
experience database - and returning whichever finishes first. The main
database is a sparse roadmap spanner that stays near-constant in size
once a space is saturated; a path-store baseline with DTW similarity
filtering is included for comparison, along with a benchmark harness.
"""

from .budget import (VIRTUAL_CHECK_RATE, BudgetExhausted, PlannerBudget,
                     PlanningInterrupted)
from .cspace import (GeometricPath, SpaceDefinition, check_motion,
                     discretize_path, distance, interpolate)
from .environments import (ArmEnvironment, Box, Disc, Environment,
                           PlanningProblem, PointEnvironment,
                           builtin_environment_set, canonical_start,
                           environment_by_id, load_env_file, random_problem)
from .lightning import (DTW_THRESHOLD, LightningPlanner, PathStore,
                        dtw_distance, load_store, pscore, save_store)
from .retrieve_repair import (RECALL_EXACT, RECALL_REPAIRED, RetrievalResult,
                       RetrieveRepairPlanner, connect_endpoints, lazy_search,
                       retrieve)
from .scratch import PlanOutcome, ScratchPlanner, rrt_connect, smooth_path
from .sparsdb import (COVERAGE, CONNECTIVITY, INTERFACE, QUALITY,
                      InsertionReport, RoadmapFormatError, SparseRoadmap,
                      load_roadmap, save_roadmap, serialized_size)
from .thunder import SCRATCH, PlanResult, ThunderConfig, ThunderPlanner

__version__ = "0.1.0"

__all__ = [
    "VIRTUAL_CHECK_RATE", "BudgetExhausted", "PlannerBudget", "PlanningInterrupted",
    "GeometricPath", "SpaceDefinition", "check_motion", "discretize_path",
    "distance", "interpolate",
    "ArmEnvironment", "Box", "Disc", "Environment", "PlanningProblem",
    "PointEnvironment", "builtin_environment_set", "canonical_start",
    "environment_by_id", "load_env_file", "random_problem",
    "DTW_THRESHOLD", "LightningPlanner", "PathStore", "dtw_distance",
    "load_store", "pscore", "save_store",
    "RECALL_EXACT", "RECALL_REPAIRED", "RetrievalResult", "RetrieveRepairPlanner",
    "connect_endpoints", "lazy_search", "retrieve",
    "PlanOutcome", "ScratchPlanner", "rrt_connect", "smooth_path",
    "COVERAGE", "CONNECTIVITY", "INTERFACE", "QUALITY", "InsertionReport",
    "RoadmapFormatError", "SparseRoadmap", "load_roadmap", "save_roadmap",
    "serialized_size",
    "SCRATCH", "PlanResult", "ThunderConfig", "ThunderPlanner",
]
