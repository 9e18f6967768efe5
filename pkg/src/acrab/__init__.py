"""Pessimistic offline actor-critic on tabular MDPs with finite hypothesis classes.

Three algorithms share one loop: A-Crab (importance-weighted average Bellman
regularizer), its robust-policy-improvement variant (unweighted average
Bellman regularizer) and ATAC (squared Bellman regularizer).
"""
from .classes import AuditPolicySet, ValueClass, WeightClass
from .data import OfflineDataset, make_rng, sample_dataset
from .errors import AcrabError, CoverageError, DegenerateClassError, NumericalError, ValidationError
from .instances import InstanceFile, build_appendix_d_instance, build_example_27_instance, build_realizable_family
from .io import load_instance, save_instance
from .mdp import TabularMdp, compute_occupancy, compute_q, j_value
from .objectives import RegularizerKind
from .solvers import RunRecord, SolverConfig, run_acrab, run_acrab_rpi, run_atac, solve_best_response

__version__ = "0.1.0"

__all__ = [
    "AcrabError", "AuditPolicySet", "CoverageError", "DegenerateClassError", "InstanceFile",
    "NumericalError", "OfflineDataset", "RegularizerKind", "RunRecord", "SolverConfig",
    "TabularMdp", "ValidationError", "ValueClass", "WeightClass", "build_appendix_d_instance",
    "build_example_27_instance", "build_realizable_family", "compute_occupancy", "compute_q",
    "j_value", "load_instance", "make_rng", "run_acrab", "run_acrab_rpi", "run_atac",
    "sample_dataset", "save_instance", "solve_best_response",
]
