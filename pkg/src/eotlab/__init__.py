"""Numerical lab for convergence rates of entropic optimal transport."""
from importlib.metadata import PackageNotFoundError, version as _version

from .costs import CostModel, cosh_cost, cost_from_label, quadratic_cost, twist_certificate
from .geometry import (build_charts, check_minty_trick, entropy_lower_bound_local,
                       entropy_lower_bound_quadratic, estimate_contact_set, minty_transform,
                       w2_atoms)
from .instances import PRESETS, Instance, make_instance
from .measures import GridMeasure, entropy_lebesgue, from_density, from_weights, make_gaussian_grid
from .quantities import QuantityRecord, duality_gap_field, envelope_residual, suboptimality
from .rates import (EpsSweepResult, RateFit, SweepOptions, Verdict, VerdictReport, all_fits,
                    run_sweep, theorem_verdicts)
from .solvers import Plan, Potentials, exact_plan, kantorovich_potentials, sinkhorn

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

__all__ = [
    "CostModel", "cosh_cost", "cost_from_label", "quadratic_cost", "twist_certificate",
    "build_charts", "check_minty_trick", "entropy_lower_bound_local",
    "entropy_lower_bound_quadratic", "estimate_contact_set", "minty_transform", "w2_atoms",
    "PRESETS", "Instance", "make_instance",
    "GridMeasure", "entropy_lebesgue", "from_density", "from_weights", "make_gaussian_grid",
    "QuantityRecord", "duality_gap_field", "envelope_residual", "suboptimality",
    "EpsSweepResult", "RateFit", "SweepOptions", "Verdict", "VerdictReport", "all_fits",
    "run_sweep", "theorem_verdicts",
    "Plan", "Potentials", "exact_plan", "kantorovich_potentials", "sinkhorn",
]
