"""Scheduling simulator for pipeline-parallel LLM training across regions."""

from .cost_model import ComputeProfile, JobSpec, ModelConfig, iter_time, optimal_gpu_count
from .harness import SweepSpec, emit_report, run_sweep
from .placement import PlacementPlan, cost_min_allocate, find_path
from .scenario import Scenario, load_scenario
from .simulator import POLICIES, SimReport, objectives, run, verify_invariants
from .topology import ClusterState, RegionState

__version__ = "0.1.0"
