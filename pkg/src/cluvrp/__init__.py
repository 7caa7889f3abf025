"""Clustered vehicle routing: instances, exact intra-cluster paths, and three metaheuristics."""

from .bench import RunRecord, percent_dev, run_experiment, summarize
from .concat import Engine, Subsequence, evaluate_move_concat
from .hampath import PathCostTable, cached_path_table, cluster_ham_paths, compute_path_table
from .hgs import HgsConfig, run_uhgs
from .ils import IlsConfig, run_ils
from .instance import (
    Instance,
    InstanceError,
    generate_clustered,
    parse_instance,
    random_cvrp,
    read_instance,
    write_instance,
)
from .solution import Solution, check_solution

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "HgsConfig",
    "IlsConfig",
    "Instance",
    "InstanceError",
    "PathCostTable",
    "RunRecord",
    "Solution",
    "Subsequence",
    "cached_path_table",
    "check_solution",
    "cluster_ham_paths",
    "compute_path_table",
    "evaluate_move_concat",
    "generate_clustered",
    "parse_instance",
    "percent_dev",
    "random_cvrp",
    "read_instance",
    "run_experiment",
    "run_ils",
    "run_uhgs",
    "summarize",
    "write_instance",
]
