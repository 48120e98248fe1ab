"""Chorin-Temam projection scheme for the unsteady Stokes problem on P2/P1
Taylor-Hood elements, with a posteriori time-error estimators and a
manufactured-solution effectivity harness."""
from .estimators import EstimatorLedger, ErrorEvaluator, interval_terms
from .experiment import ExperimentConfig, parse_config, run_experiment, write_csv
from .fem import FemSystem, assemble_system
from .manufactured import AnalyticStokes
from .mesh import Mesh, Rect, build_structured_mesh
from .scheme import ChorinTemam, TimeGrid, run_scheme

__all__ = [
    "AnalyticStokes", "ChorinTemam", "ErrorEvaluator", "EstimatorLedger",
    "ExperimentConfig", "FemSystem", "Mesh", "Rect", "TimeGrid",
    "assemble_system", "build_structured_mesh", "interval_terms",
    "parse_config", "run_experiment", "run_scheme", "write_csv",
]
